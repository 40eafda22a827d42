"""Boolean formulas over named variables.

Formulas are immutable trees of constants, literals, conjunctions and
disjunctions. Nodes hash structurally and cache their variable sets, so they
can be used as memo keys by the exact solvers.

Text syntax (see README for the full grammar)::

    x1 z1 y1 | x2 z2 y1        juxtaposition is AND
    (x | A)(x | B)             parentheses, juxtaposed groups
    !x & (y ∨ ¬z)              unicode and ascii operators both accepted
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import networkx as nx

VarId = str
Valuation = Mapping[VarId, int | bool]
ProbMap = Mapping[VarId, float]
Literal = tuple[VarId, bool]

DISJOINT_SUM_TOL = 1e-12


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class MissingVariableError(KeyError):
    pass


class ExpansionLimitError(RuntimeError):
    """Raised when normal-form expansion would exceed its clause budget."""


class Formula:
    __slots__ = ("_hash", "vars")

    def __and__(self, other: "Formula") -> "Formula":
        return conj(self, other)

    def __or__(self, other: "Formula") -> "Formula":
        return disj(self, other)

    def __invert__(self) -> "Formula":
        return negate(self)

    def __hash__(self) -> int:
        return self._hash

    def __setattr__(self, name, value):
        raise AttributeError("formulas are immutable")

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        return f"parse_formula({to_string(self)!r})"

    @property
    def is_monotone(self) -> bool:
        return all(lit.positive for lit in iter_literals(self))


class Const(Formula):
    __slots__ = ("value",)

    def __init__(self, value: bool):
        object.__setattr__(self, "value", bool(value))
        object.__setattr__(self, "vars", frozenset())
        object.__setattr__(self, "_hash", hash(("const", self.value)))

    def __eq__(self, other):
        return isinstance(other, Const) and other.value == self.value

    __hash__ = Formula.__hash__


class Lit(Formula):
    __slots__ = ("var", "positive")

    def __init__(self, var: VarId, positive: bool = True):
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "positive", bool(positive))
        object.__setattr__(self, "vars", frozenset((var,)))
        object.__setattr__(self, "_hash", hash(("lit", var, self.positive)))

    def __eq__(self, other):
        return (
            isinstance(other, Lit)
            and other.var == self.var
            and other.positive == self.positive
        )

    __hash__ = Formula.__hash__


class _Gate(Formula):
    __slots__ = ("children",)
    _tag = ""

    def __init__(self, children: Iterable[Formula]):
        kids = tuple(children)
        if not kids:
            raise ValueError(f"{type(self).__name__} needs at least one child")
        for k in kids:
            if not isinstance(k, Formula):
                raise TypeError(f"not a formula: {k!r}")
        object.__setattr__(self, "children", kids)
        object.__setattr__(self, "vars", frozenset().union(*(k.vars for k in kids)))
        object.__setattr__(self, "_hash", hash((self._tag, kids)))

    def __eq__(self, other):
        return type(other) is type(self) and other.children == self.children

    __hash__ = Formula.__hash__


class And(_Gate):
    __slots__ = ()
    _tag = "and"


class Or(_Gate):
    __slots__ = ()
    _tag = "or"


TRUE = Const(True)
FALSE = Const(False)


def var(name: VarId) -> Lit:
    return Lit(name, True)


def conj(*parts: Formula) -> Formula:
    """Simplifying AND: flattens, drops TRUE, short-circuits on FALSE."""
    kids: list[Formula] = []
    for f in parts:
        if isinstance(f, Const):
            if not f.value:
                return FALSE
            continue
        if isinstance(f, And):
            kids.extend(f.children)
        else:
            kids.append(f)
    if not kids:
        return TRUE
    if len(kids) == 1:
        return kids[0]
    return And(kids)


def disj(*parts: Formula) -> Formula:
    """Simplifying OR: flattens, drops FALSE, short-circuits on TRUE."""
    kids: list[Formula] = []
    for f in parts:
        if isinstance(f, Const):
            if f.value:
                return TRUE
            continue
        if isinstance(f, Or):
            kids.extend(f.children)
        else:
            kids.append(f)
    if not kids:
        return FALSE
    if len(kids) == 1:
        return kids[0]
    return Or(kids)


def negate(f: Formula) -> Formula:
    """Complement, pushed down to the literals (De Morgan)."""
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Lit):
        return Lit(f.var, not f.positive)
    if isinstance(f, And):
        return disj(*(negate(c) for c in f.children))
    return conj(*(negate(c) for c in f.children))


def iter_literals(f: Formula) -> Iterator[Lit]:
    """Literal nodes in pre-order, left to right (the occurrence order)."""
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Lit):
            yield node
        elif isinstance(node, _Gate):
            stack.extend(reversed(node.children))


def occurrence_count(f: Formula, x: VarId) -> int:
    return sum(1 for lit in iter_literals(f) if lit.var == x)


def occurrence_counts(f: Formula) -> dict[VarId, int]:
    counts: dict[VarId, int] = {}
    for lit in iter_literals(f):
        counts[lit.var] = counts.get(lit.var, 0) + 1
    return counts


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<ident>[A-Za-z_À-ɏͰ-Ͽ][\w'′]*)
  | (?P<const>[01⊤⊥])
  | (?P<and>[&∧*])
  | (?P<or>[|∨+])
  | (?P<not>[!¬~])
  | (?P<lpar>\()
  | (?P<rpar>\))
    """,
    re.VERBOSE,
)

_WORD_CONSTS = {"true": True, "false": False}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "ident" and value.lower() in _WORD_CONSTS:
                kind = "const"
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str):
        tok = self.tokens[self.i]
        if tok[0] != kind:
            what = tok[1] or "end of input"
            raise FormulaSyntaxError(f"expected {kind}, found {what!r}", tok[2])
        self.i += 1
        return tok

    def expr(self) -> Formula:
        parts = [self.term()]
        while self.peek()[0] == "or":
            self.i += 1
            parts.append(self.term())
        return parts[0] if len(parts) == 1 else _flat(Or, parts)

    def term(self) -> Formula:
        parts = [self.factor()]
        while True:
            kind = self.peek()[0]
            if kind == "and":
                self.i += 1
                parts.append(self.factor())
            elif kind in ("ident", "const", "not", "lpar"):
                parts.append(self.factor())
            else:
                break
        return parts[0] if len(parts) == 1 else _flat(And, parts)

    def factor(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "not":
            self.i += 1
            return negate(self.factor())
        if kind == "lpar":
            self.i += 1
            inner = self.expr()
            self.take("rpar")
            return inner
        if kind == "ident":
            self.i += 1
            return Lit(value)
        if kind == "const":
            self.i += 1
            if value.lower() in _WORD_CONSTS:
                return TRUE if _WORD_CONSTS[value.lower()] else FALSE
            return TRUE if value in ("1", "⊤") else FALSE
        what = value or "end of input"
        raise FormulaSyntaxError(f"expected a variable, constant or '(' but found {what!r}", pos)


def _flat(kind, parts: list[Formula]) -> Formula:
    kids: list[Formula] = []
    for p in parts:
        if isinstance(p, kind):
            kids.extend(p.children)
        else:
            kids.append(p)
    return kind(kids)


def parse_formula(text: str) -> Formula:
    if not text or not text.strip():
        raise FormulaSyntaxError("empty formula", 0)
    parser = _Parser(text)
    f = parser.expr()
    kind, value, pos = parser.peek()
    if kind != "end":
        raise FormulaSyntaxError(f"unexpected {value!r}", pos)
    return f


def to_string(f: Formula) -> str:
    """Juxtaposition-style printer; parse_formula(to_string(f)) == f."""
    if isinstance(f, Const):
        return "1" if f.value else "0"
    if isinstance(f, Lit):
        return f.var if f.positive else "!" + f.var
    if isinstance(f, And):
        return " ".join(
            f"({to_string(c)})" if isinstance(c, _Gate) else to_string(c)
            for c in f.children
        )
    return " | ".join(
        f"({to_string(c)})" if isinstance(c, Or) else to_string(c) for c in f.children
    )


# ------------------------------------------------------------- semantics


def evaluate(f: Formula, w: Valuation) -> bool:
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Lit):
        try:
            value = w[f.var]
        except KeyError:
            raise MissingVariableError(f.var) from None
        return bool(value) == f.positive
    if isinstance(f, And):
        return all(evaluate(c, w) for c in f.children)
    return any(evaluate(c, w) for c in f.children)


def restrict(f: Formula, nu: Valuation) -> Formula:
    """Substitute constants for the variables in ``nu`` and simplify."""
    if not (f.vars & nu.keys()):
        return f
    if isinstance(f, Lit):
        return TRUE if bool(nu[f.var]) == f.positive else FALSE
    if isinstance(f, And):
        return conj(*(restrict(c, nu) for c in f.children))
    return disj(*(restrict(c, nu) for c in f.children))


def conj_valuation_function(gs: Sequence[Formula], nu: Sequence[int | bool]) -> Formula:
    """The conjunction of the g_j, complemented where nu_j is 0."""
    if len(gs) != len(nu):
        raise ValueError(f"{len(gs)} functions but valuation of length {len(nu)}")
    return conj(*(g if bit else negate(g) for g, bit in zip(gs, nu)))


def substitute(f: Formula, theta: Mapping[VarId, VarId | Formula]) -> Formula:
    """Rename variables (or replace them by formulas) without simplifying."""
    if not (f.vars & theta.keys()):
        return f
    if isinstance(f, Lit):
        target = theta[f.var]
        if isinstance(target, Formula):
            return target if f.positive else negate(target)
        return Lit(target, f.positive)
    return type(f)(substitute(c, theta) for c in f.children)


# ----------------------------------------------------------- normal forms


@dataclass(frozen=True)
class NormalForm:
    kind: str  # "DNF" or "CNF"
    clauses: frozenset[frozenset[Literal]]

    def __post_init__(self):
        if self.kind not in ("DNF", "CNF"):
            raise ValueError(f"unknown normal form kind {self.kind!r}")
        for clause in self.clauses:
            names = [v for v, _ in clause]
            if len(names) != len(set(names)):
                raise ValueError(f"clause mixes polarities: {sorted(clause)}")

    @classmethod
    def monotone(cls, kind: str, clauses: Iterable[Iterable[VarId]]) -> "NormalForm":
        return cls(kind, frozenset(frozenset((v, True) for v in c) for c in clauses))

    @property
    def variables(self) -> frozenset[VarId]:
        return frozenset(v for c in self.clauses for v, _ in c)

    @property
    def is_monotone(self) -> bool:
        return all(pos for c in self.clauses for _, pos in c)

    def var_sets(self) -> list[frozenset[VarId]]:
        return [frozenset(v for v, _ in c) for c in self.clauses]

    def sorted_clauses(self) -> list[list[Literal]]:
        return sorted((sorted(c) for c in self.clauses), key=lambda c: (len(c), c))

    def to_formula(self) -> Formula:
        inner, outer = (conj, disj) if self.kind == "DNF" else (disj, conj)
        return outer(
            *(inner(*(Lit(v, pos) for v, pos in c)) for c in self.sorted_clauses())
        )


def absorb(clauses: Iterable[frozenset]) -> set[frozenset]:
    """Drop every clause that is a proper superset of another."""
    kept: list[frozenset] = []
    for c in sorted(set(clauses), key=len):
        if not any(k <= c for k in kept):
            kept.append(c)
    return set(kept)


def _monotone_clauses(f: Formula, combine, limit: int) -> set[frozenset[VarId]]:
    # combine is the gate whose children multiply out (And for DNF, Or for CNF)
    if isinstance(f, Const):
        unit = f.value if combine is And else not f.value
        return {frozenset()} if unit else set()
    if isinstance(f, Lit):
        if not f.positive:
            raise ValueError(f"formula is not monotone in {f.var}")
        return {frozenset((f.var,))}
    parts = [_monotone_clauses(c, combine, limit) for c in f.children]
    if isinstance(f, combine):
        acc: set[frozenset] = {frozenset()}
        for part in parts:
            if len(acc) * len(part) > limit:
                raise ExpansionLimitError(
                    f"expansion exceeds {limit} clauses; formula too large to minimise"
                )
            acc = absorb(a | b for a in acc for b in part)
        return acc
    return absorb(itertools.chain.from_iterable(parts))


def minimize_monotone_dnf(f: Formula, limit: int = 2**16) -> NormalForm:
    """Prime implicants of a monotone formula (expansion + absorption)."""
    return NormalForm.monotone("DNF", _monotone_clauses(f, And, limit))


def minimize_monotone_cnf(f: Formula, limit: int = 2**16) -> NormalForm:
    return NormalForm.monotone("CNF", _monotone_clauses(f, Or, limit))


def _flat_clauses(f: Formula, outer, inner) -> list[frozenset[VarId]] | None:
    kids = f.children if isinstance(f, outer) else (f,)
    out = []
    for k in kids:
        lits = k.children if isinstance(k, inner) else (k,)
        if not all(isinstance(x, Lit) and x.positive for x in lits):
            return None
        out.append(frozenset(x.var for x in lits))
    return out


def to_normal_form(f: Formula, limit: int = 2**16) -> NormalForm:
    """Absorption-free monotone normal form, keeping CNF input as CNF."""
    if isinstance(f, And):
        clauses = _flat_clauses(f, And, Or)
        if clauses is not None:
            return NormalForm.monotone("CNF", absorb(clauses))
    clauses = _flat_clauses(f, Or, And)
    if clauses is not None:
        return NormalForm.monotone("DNF", absorb(clauses))
    return minimize_monotone_dnf(f, limit)


def primal_graph(nf: NormalForm | Formula) -> nx.Graph:
    """Variables as nodes, an edge whenever two share a clause."""
    if isinstance(nf, Formula):
        nf = to_normal_form(nf)
    g = nx.Graph()
    g.add_nodes_from(sorted(nf.variables))
    for clause in nf.var_sets():
        g.add_edges_from(itertools.combinations(sorted(clause), 2))
    return g


# ---------------------------------------------------------- probabilities


def ior(ps: Iterable[float]) -> float:
    """Independent-or: probability that at least one independent event occurs."""
    miss = 1.0
    for p in ps:
        miss = miss * (1.0 - p)
    return 1.0 - miss


def check_probmap(p: ProbMap, needed: Iterable[VarId] = ()) -> None:
    for v in needed:
        if v not in p:
            raise MissingVariableError(v)
    for v, value in p.items():
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probability of {v} outside [0,1]: {value}")


@dataclass(frozen=True)
class DisjointDeclaration:
    values: tuple
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.probs:
            raise ValueError("need one probability per value, at least one value")
        if any(q < 0 for q in self.probs):
            raise ValueError("negative probability in disjoint declaration")
        if abs(math.fsum(self.probs) - 1.0) > DISJOINT_SUM_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)}, not 1")


@dataclass(frozen=True)
class DisjointEncoding:
    z_vars: tuple[VarId, ...]
    z_probs: dict[VarId, float]
    events: tuple[Formula, ...]


def encode_disjoint_declaration(
    decl: DisjointDeclaration | Sequence[float], prefix: str = "z"
) -> DisjointEncoding:
    """Encode k mutually exclusive outcomes with k-1 independent variables.

    Outcome i holds when z_1..z_{i-1} are false and z_i is true; the last
    outcome is the all-false world.
    """
    if not isinstance(decl, DisjointDeclaration):
        decl = DisjointDeclaration(tuple(range(1, len(decl) + 1)), tuple(decl))
    k = len(decl.probs)
    names = tuple(f"{prefix}{i}" for i in range(1, k))
    z_probs: dict[VarId, float] = {}
    consumed = 0.0
    for name, q in zip(names, decl.probs):
        remaining = 1.0 - consumed
        z_probs[name] = 0.0 if remaining <= 0.0 else min(1.0, q / remaining)
        consumed += q
    events = []
    for i in range(k):
        lits = [Lit(z, False) for z in names[:i]]
        if i < k - 1:
            lits.append(Lit(names[i]))
        events.append(conj(*lits))
    return DisjointEncoding(names, z_probs, tuple(events))


def fresh_names(base: VarId, count: int, taken: Iterable[VarId]) -> list[VarId]:
    """``base'1 .. base'count``, skipping any name already in use."""
    used = set(taken)
    out = []
    j = 1
    while len(out) < count:
        name = f"{base}'{j}"
        if name not in used:
            out.append(name)
            used.add(name)
        j += 1
    return out
