"""Dissociation: split repeated variables into independent copies and bound.

A dissociation replaces the occurrences of a variable ``x`` by fresh copies
``x'1 .. x'd`` (one per cell of an occurrence partition). With suitable copy
probabilities the dissociated formula's probability is a guaranteed upper or
lower bound of the original, whatever the probabilities of the other
variables:

============  ===========================  ===========================
kind          upper bound iff              lower bound iff
============  ===========================  ===========================
conjunctive   prod(p'_j) >= p              every p'_j <= p
disjunctive   every p'_j >= p              prod(1 - p'_j) >= 1 - p
============  ===========================  ===========================

Occurrences are numbered 0.. in pre-order (left to right in the printed
formula); a partition is a list of cells, each a list of occurrence numbers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exact import (
    cofactor_table,
    conditional_prob,
    readonce_factorize,
    readonce_prob,
    truth_table,
    world_weights,
)
from .formula import (
    And,
    Formula,
    Lit,
    Or,
    ProbMap,
    VarId,
    _Gate,
    conj,
    disj,
    fresh_names,
    iter_literals,
    minimize_monotone_cnf,
    minimize_monotone_dnf,
    negate,
    substitute,
    to_normal_form,
)

INVARIANT_SLACK = 1e-12
VERIFY_TOL = 1e-9
CLASSIFY_SEMANTIC_LIMIT = 16
VERIFY_Y_LIMIT = 16
COVER_Y_LIMIT = 20


class Kind(str, Enum):
    CONJUNCTIVE = "conjunctive"
    DISJUNCTIVE = "disjunctive"
    NEITHER = "neither"


class Direction(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


class Style(str, Enum):
    OPTIMAL_SYMMETRIC = "optimal-symmetric"
    OPTIMAL_WEIGHTED = "optimal-weighted"
    COMPENSATION = "compensation"
    MODEL_DEGENERATE = "model-degenerate"


class NotReadOnceError(ValueError):
    pass


@dataclass(frozen=True)
class DissociationSpec:
    """Which fresh variables replace which original, and from which occurrences."""

    theta: Mapping[VarId, VarId]
    cells: Mapping[VarId, tuple[tuple[int, ...], ...]]
    copies: Mapping[VarId, tuple[VarId, ...]]

    def __post_init__(self):
        for x, names in self.copies.items():
            cells = self.cells[x]
            if len(cells) != len(names):
                raise ValueError(f"{x}: {len(cells)} cells but {len(names)} copies")
            flat = [i for c in cells for i in c]
            if any(not c for c in cells) or len(flat) != len(set(flat)):
                raise ValueError(f"{x}: partition cells must be non-empty and disjoint")
            for name in names:
                if name != x and self.theta.get(name) != x:
                    raise ValueError(f"copy {name} does not map back to {x}")

    @property
    def originals(self) -> tuple[VarId, ...]:
        return tuple(self.copies)

    @property
    def is_unary(self) -> bool:
        return len(self.copies) == 1

    def d(self, x: VarId | None = None) -> int:
        if x is None:
            (x,) = self.originals
        return len(self.copies[x])

    def all_copies(self) -> tuple[VarId, ...]:
        return tuple(c for names in self.copies.values() for c in names)

    def merged(self, other: "DissociationSpec") -> "DissociationSpec":
        overlap = set(self.copies) & set(other.copies)
        if overlap:
            raise ValueError(f"variables dissociated twice: {sorted(overlap)}")
        return DissociationSpec(
            {**self.theta, **other.theta},
            {**self.cells, **other.cells},
            {**self.copies, **other.copies},
        )


EMPTY_SPEC = DissociationSpec({}, {}, {})


def _rename_occurrences(f: Formula, x: VarId, names_by_index: Mapping[int, VarId]) -> Formula:
    counter = 0

    def rec(g: Formula) -> Formula:
        nonlocal counter
        if isinstance(g, Lit):
            if g.var != x:
                return g
            name = names_by_index[counter]
            counter += 1
            return Lit(name, g.positive)
        if isinstance(g, _Gate):
            if x not in g.vars:
                return g
            return type(g)(rec(c) for c in g.children)
        return g

    return rec(f)


def dissociate(
    f: Formula, x: VarId, partition: Sequence[Sequence[int]]
) -> tuple[Formula, DissociationSpec]:
    """Replace the occurrences of ``x`` cell by cell with fresh copies."""
    occurrences = [lit for lit in iter_literals(f) if lit.var == x]
    if not occurrences:
        raise ValueError(f"variable {x} does not occur in the formula")
    if any(not lit.positive for lit in occurrences):
        raise ValueError(f"formula is not monotone in {x}")
    cells = tuple(tuple(sorted(int(i) for i in cell)) for cell in partition)
    flat = sorted(i for c in cells for i in c)
    if any(not c for c in cells):
        raise ValueError("partition has an empty cell")
    if flat != list(range(len(occurrences))):
        raise ValueError(
            f"partition must cover occurrences 0..{len(occurrences) - 1} of {x} exactly once"
        )
    names = fresh_names(x, len(cells), f.vars)
    index_to_name = {i: names[j] for j, cell in enumerate(cells) for i in cell}
    f_prime = _rename_occurrences(f, x, index_to_name)
    spec = DissociationSpec({n: x for n in names}, {x: cells}, {x: tuple(names)})
    return f_prime, spec


def eager_dissociate(f: Formula, xs: Iterable[VarId]) -> tuple[Formula, DissociationSpec]:
    """Give every occurrence of every variable in ``xs`` its own copy.

    Variables occurring once are left as they are (their spec entry maps the
    variable to itself).
    """
    spec = EMPTY_SPEC
    out = f
    for x in sorted(set(xs)):
        k = sum(1 for lit in iter_literals(out) if lit.var == x)
        if k == 0:
            raise ValueError(f"variable {x} does not occur in the formula")
        if k == 1:
            lit = next(lit for lit in iter_literals(out) if lit.var == x)
            if not lit.positive:
                raise ValueError(f"formula is not monotone in {x}")
            spec = spec.merged(DissociationSpec({}, {x: ((0,),)}, {x: (x,)}))
            continue
        out, step = dissociate(out, x, [[i] for i in range(k)])
        spec = spec.merged(step)
    return out, spec


# ------------------------------------------------------------ classification


@dataclass(frozen=True)
class DissociationKind:
    kind: Kind
    d: int
    factors: tuple[Formula, ...] = ()
    verified: bool = False


def _group_factors(children: Sequence[Formula], copies: Sequence[VarId]):
    groups: list[list[Formula]] = [[] for _ in copies]
    rest: list[Formula] = []
    for child in children:
        present = [j for j, c in enumerate(copies) if c in child.vars]
        if len(present) > 1:
            return None
        if present:
            groups[present[0]].append(child)
        else:
            rest.append(child)
    if any(not g for g in groups):
        return None
    groups[0].extend(rest)
    return groups


def _decompose(f_prime: Formula, copies: Sequence[VarId]):
    for kind, gate, join in ((Kind.CONJUNCTIVE, And, conj), (Kind.DISJUNCTIVE, Or, disj)):
        if isinstance(f_prime, gate):
            groups = _group_factors(f_prime.children, copies)
            if groups is not None:
                return kind, tuple(join(*g) for g in groups)
    return None


def _equivalent(f: Formula, g: Formula) -> bool:
    order = sorted(f.vars | g.vars)
    return bool(np.array_equal(truth_table(f, order), truth_table(g, order)))


def classify(f_prime: Formula, spec: DissociationSpec) -> DissociationKind:
    """Conjunctive, disjunctive or neither, with the per-copy factors."""
    if not spec.is_unary:
        raise ValueError("classify needs a dissociation of a single variable")
    (x,) = spec.originals
    copies = spec.copies[x]
    d = len(copies)
    small = len(f_prime.vars) <= CLASSIFY_SEMANTIC_LIMIT
    if d == 1:
        kind = Kind.DISJUNCTIVE if isinstance(f_prime, Or) else Kind.CONJUNCTIVE
        return DissociationKind(kind, 1, (f_prime,), verified=True)
    found = _decompose(f_prime, copies)
    if found is None and small and f_prime.is_monotone:
        # the expression may hide the structure; look at both normal forms
        for nf in (minimize_monotone_dnf(f_prime), minimize_monotone_cnf(f_prime)):
            found = _decompose(nf.to_formula(), copies)
            if found is not None:
                break
    if found is None:
        return DissociationKind(Kind.NEITHER, d)
    kind, factors = found
    verified = False
    if small:
        whole = conj(*factors) if kind is Kind.CONJUNCTIVE else disj(*factors)
        verified = _equivalent(whole, f_prime)
        if not verified:
            return DissociationKind(Kind.NEITHER, d)
    return DissociationKind(kind, d, factors, verified)


def _y_vars(f_prime: Formula, spec: DissociationSpec, *others: Formula) -> list[VarId]:
    names = set(f_prime.vars)
    for g in others:
        names |= g.vars
    return sorted(names - set(spec.all_copies()) - set(spec.originals))


def _pattern(kind: Kind, s: frozenset[int], d: int) -> np.ndarray:
    idx = np.arange(1 << d)
    bits = [(idx >> j) & 1 for j in range(d)]
    if kind is Kind.CONJUNCTIVE:
        out = np.ones(1 << d, dtype=bool)
        for j in s:
            out &= bits[j].astype(bool)
    else:
        out = np.zeros(1 << d, dtype=bool)
        for j in s:
            out |= bits[j].astype(bool)
    return out


def covered_sets(
    f_prime: Formula, spec: DissociationSpec, kind: DissociationKind | None = None
) -> set[frozenset[int]]:
    """Every index set s (1-based copy numbers) that f' covers."""
    kind = kind or classify(f_prime, spec)
    if kind.kind is Kind.NEITHER:
        raise ValueError("covers is defined for conjunctive or disjunctive dissociations")
    copies = spec.copies[spec.originals[0]]
    d = len(copies)
    ys = _y_vars(f_prime, spec)
    if len(ys) > COVER_Y_LIMIT:
        raise ValueError(f"{len(ys)} y-variables exceeds cover limit {COVER_Y_LIMIT}")
    rows = np.unique(cofactor_table(f_prime, ys, copies), axis=0)
    lookup = {}
    for mask in range(1 << d):
        s = frozenset(j for j in range(d) if mask >> j & 1)
        lookup[_pattern(kind.kind, s, d).tobytes()] = frozenset(j + 1 for j in s)
    found = set()
    for row in rows:
        hit = lookup.get(np.ascontiguousarray(row).tobytes())
        if hit is not None:
            found.add(hit)
    return found


def covers(
    f_prime: Formula,
    spec: DissociationSpec,
    s: Iterable[int],
    kind: DissociationKind | None = None,
) -> bool:
    return frozenset(s) in covered_sets(f_prime, spec, kind)


def is_non_degenerate(
    f_prime: Formula, spec: DissociationSpec, kind: DissociationKind | None = None
) -> bool:
    d = spec.d()
    got = covered_sets(f_prime, spec, kind)
    needed = [frozenset((j,)) for j in range(1, d + 1)] + [frozenset(range(1, d + 1))]
    return all(s in got for s in needed)


# ------------------------------------------------------------ assignments


@dataclass(frozen=True)
class BoundAssignment:
    kind: Kind
    direction: Direction
    p: float
    probs: tuple[float, ...]
    style: Style
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.style is not Style.COMPENSATION and not satisfies_condition(
            self.kind, self.direction, self.p, self.probs, INVARIANT_SLACK
        ):
            raise ValueError(
                f"{self.kind.value} {self.direction.value} condition fails for {self.probs} at p={self.p}"
            )


def satisfies_condition(
    kind: Kind, direction: Direction, p: float, probs: Sequence[float], slack: float = 0.0
) -> bool:
    kind, direction = Kind(kind), Direction(direction)
    if kind is Kind.CONJUNCTIVE and direction is Direction.UPPER:
        return math.prod(probs) >= p - slack
    if kind is Kind.CONJUNCTIVE:
        return all(q <= p + slack for q in probs)
    if direction is Direction.UPPER:
        return all(q >= p - slack for q in probs)
    return math.prod(1.0 - q for q in probs) >= (1.0 - p) - slack


def _kind_of(kind: DissociationKind | Kind | str) -> Kind:
    return kind.kind if isinstance(kind, DissociationKind) else Kind(kind)


def oblivious_assignment(
    kind: DissociationKind | Kind | str,
    direction: Direction | str,
    p: float,
    d: int,
    weights: Sequence[float] | None = None,
) -> BoundAssignment:
    """Optimal copy probabilities for the given kind and direction."""
    kind, direction = _kind_of(kind), Direction(direction)
    if kind is Kind.NEITHER:
        raise ValueError("no oblivious guarantee for a dissociation that is neither conjunctive nor disjunctive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0,1]")
    if d < 1:
        raise ValueError("need at least one copy")
    if weights is not None:
        weights = tuple(float(w) for w in weights)
        if len(weights) != d or any(w <= 0 for w in weights) or abs(math.fsum(weights) - 1) > 1e-9:
            raise ValueError(f"weights must be {d} positive numbers summing to 1")
        style, ws = Style.OPTIMAL_WEIGHTED, weights
    else:
        style, ws = Style.OPTIMAL_SYMMETRIC, (1.0 / d,) * d
    if kind is Kind.CONJUNCTIVE and direction is Direction.UPPER:
        probs = tuple(p**w for w in ws)
    elif kind is Kind.DISJUNCTIVE and direction is Direction.LOWER:
        probs = tuple(1.0 - (1.0 - p) ** w for w in ws)
    else:
        probs = (p,) * d
    return BoundAssignment(kind, direction, p, probs, style, weights)


def model_degenerate_assignment(
    kind: DissociationKind | Kind | str, direction: Direction | str, p: float, d: int
) -> BoundAssignment:
    """The 0/1 assignments that turn a dissociation into a model-based bound."""
    kind, direction = _kind_of(kind), Direction(direction)
    if kind is Kind.NEITHER:
        raise ValueError("no model bound for a dissociation that is neither kind")
    if d < 1:
        raise ValueError("need at least one copy")
    fill = 1.0 if direction is Direction.UPPER else 0.0
    return BoundAssignment(kind, direction, p, (p,) + (fill,) * (d - 1), Style.MODEL_DEGENERATE)


def compensation_assignment(
    f1: Formula, f2: Formula, x: VarId, mode: Kind | str, p: ProbMap
) -> tuple[float, float]:
    """Copy probabilities making f1[x'1/x] op f2[x'2/x] exact when x is the only shared variable.

    Conjunctive: (p_x, P[x | f1]); disjunctive: (p_x, P[x | not f1]).
    """
    mode = Kind(mode)
    if x not in f1.vars or x not in f2.vars:
        raise ValueError(f"{x} must occur in both formulas")
    if mode is Kind.CONJUNCTIVE:
        second = conditional_prob(x, f1, p)
    elif mode is Kind.DISJUNCTIVE:
        second = conditional_prob(x, negate(f1), p)
    else:
        raise ValueError("mode must be conjunctive or disjunctive")
    return p[x], second


def relax(f1: Formula, f2: Formula, x: VarId, mode: Kind | str) -> tuple[Formula, VarId, VarId]:
    """Dissociate the shared ``x`` of ``f1 op f2`` into one copy per side."""
    mode = Kind(mode)
    a, b = fresh_names(x, 2, f1.vars | f2.vars)
    left, right = substitute(f1, {x: a}), substitute(f2, {x: b})
    joined = And((left, right)) if mode is Kind.CONJUNCTIVE else Or((left, right))
    return joined, a, b


# ------------------------------------------------------------ verification


def verify_dissociation_bound(
    f: Formula,
    f_prime: Formula,
    spec: DissociationSpec,
    p_original: ProbMap,
    p_copies: ProbMap,
    direction: Direction | str,
    tol: float = VERIFY_TOL,
) -> bool:
    """Check the bound separately for every valuation of the other variables."""
    direction = Direction(direction)
    xs = list(spec.originals)
    copies = list(spec.all_copies())
    ys = _y_vars(f_prime, spec, f)
    if len(ys) > VERIFY_Y_LIMIT:
        raise ValueError(f"{len(ys)} y-variables exceeds verification limit {VERIFY_Y_LIMIT}")
    lhs = cofactor_table(f, ys, xs) @ world_weights([p_original[v] for v in xs])
    rhs = cofactor_table(f_prime, ys, copies) @ world_weights([p_copies[v] for v in copies])
    if direction is Direction.UPPER:
        return bool(np.all(rhs >= lhs - tol))
    return bool(np.all(rhs <= lhs + tol))


def verify_oblivious_bound(
    f: Formula,
    f_prime: Formula,
    spec: DissociationSpec,
    p: float,
    assignment: BoundAssignment | Sequence[float],
    direction: Direction | str | None = None,
    tol: float = VERIFY_TOL,
) -> bool:
    """True iff the copy probabilities bound f for every valuation of the rest."""
    if not spec.is_unary:
        raise ValueError("verify_oblivious_bound needs a single dissociated variable")
    if isinstance(assignment, BoundAssignment):
        direction = assignment.direction
        probs = assignment.probs
    else:
        if direction is None:
            raise ValueError("direction required for a raw probability vector")
        probs = tuple(assignment)
    (x,) = spec.originals
    copies = spec.copies[x]
    if len(probs) != len(copies):
        raise ValueError(f"{len(probs)} probabilities for {len(copies)} copies")
    return verify_dissociation_bound(
        f, f_prime, spec, {x: p}, dict(zip(copies, probs)), direction, tol
    )


# ------------------------------------------------------------ pipeline


def _occurrence_paths(f: Formula, x: VarId) -> list[tuple[int, ...]]:
    paths = []

    def rec(g: Formula, path: tuple[int, ...]):
        if isinstance(g, Lit):
            if g.var == x:
                paths.append(path)
        elif isinstance(g, _Gate) and x in g.vars:
            for i, c in enumerate(g.children):
                rec(c, path + (i,))

    rec(f, ())
    return paths


def occurrence_kind(f: Formula, x: VarId) -> Kind:
    """Kind of the eager dissociation of ``x``, read off the lowest common ancestor.

    Under any valuation of the other variables, every branch outside the
    ancestor is constant, so the ancestor's gate decides the kind. Two
    occurrences under the same child of the ancestor give neither kind.
    """
    paths = _occurrence_paths(f, x)
    if len(paths) < 2:
        return Kind.CONJUNCTIVE
    depth = 0
    while all(len(pth) > depth for pth in paths) and len({pth[depth] for pth in paths}) == 1:
        depth += 1
    node = f
    for i in paths[0][:depth]:
        node = node.children[i]
    branches = [pth[depth] for pth in paths]
    if len(branches) != len(set(branches)):
        return Kind.NEITHER
    return Kind.CONJUNCTIVE if isinstance(node, And) else Kind.DISJUNCTIVE


@dataclass(frozen=True)
class ReportRow:
    variable: VarId
    occurrences: int
    copies: int
    kind: Kind
    assignment: tuple[float, ...]


@dataclass(frozen=True)
class BoundReport:
    direction: Direction
    bound: float
    rows: tuple[ReportRow, ...]
    condition: str  # "read-once", "single-variable" or "sufficient-condition"
    f_prime: Formula = field(compare=False)
    tree: Formula = field(compare=False)

    def to_text(self) -> str:
        lines = [f"{self.direction.value} bound {self.bound:.12g} ({self.condition})"]
        for r in self.rows:
            probs = ", ".join(f"{q:.6g}" for q in r.assignment)
            lines.append(
                f"  {r.variable}: k={r.occurrences} d={r.copies} {r.kind.value} p'=({probs})"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable", "occurrences", "copies", "kind", "assignment", "bound"])
        for r in self.rows:
            w.writerow(
                [r.variable, r.occurrences, r.copies, r.kind.value,
                 " ".join(repr(q) for q in r.assignment), repr(self.bound)]
            )
        return buf.getvalue()


def bound_pipeline(
    f: Formula, p: ProbMap, xs: Iterable[VarId], direction: Direction | str
) -> BoundReport:
    """Dissociate ``xs`` eagerly, assign optimal symmetric probabilities, evaluate read-once."""
    direction = Direction(direction)
    xs = sorted(set(xs))
    kinds = {}
    counts = {}
    for x in xs:
        counts[x] = sum(1 for lit in iter_literals(f) if lit.var == x)
        kinds[x] = occurrence_kind(f, x)
        if kinds[x] is Kind.NEITHER:
            raise ValueError(
                f"occurrences of {x} are nested under one branch; "
                "dissociate with an explicit partition instead"
            )
    f_prime, spec = eager_dissociate(f, xs)
    probs = {v: p[v] for v in f_prime.vars if v in p}
    rows = []
    for x in xs:
        names = spec.copies[x]
        assignment = oblivious_assignment(kinds[x], direction, p[x], len(names))
        probs.update(zip(names, assignment.probs))
        rows.append(ReportRow(x, counts[x], len(names), kinds[x], assignment.probs))
    tree = readonce_factorize(to_normal_form(f_prime))
    if tree is None:
        raise NotReadOnceError(
            f"dissociated formula is not read-once: {f_prime}; dissociate more variables"
        )
    bound = float(readonce_prob(tree, probs))
    dissociated = sum(1 for r in rows if r.copies > 1)
    if dissociated == 0:
        condition = "read-once"
    else:
        condition = "sufficient-condition" if dissociated > 1 else "single-variable"
    return BoundReport(direction, bound, tuple(rows), condition, f_prime, tree)
