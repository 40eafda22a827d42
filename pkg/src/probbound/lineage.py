"""Tuple-independent relations, conjunctive queries, lineage and chain plans.

A database directory holds one CSV per relation. Columns are the relation's
attributes, plus an optional ``id`` column (tuple variable name; default
``<relation><row number>``) and a ``p`` column (tuple probability; omitted
for deterministic relations). An optional ``manifest.json`` refines this::

    {"relations": {"S": {"deterministic": true},
                   "P": {"file": "part.csv", "table": "Part"}}}

Queries are datalog-style without self-joins::

    Q(a) :- S(s,a), PS(s,u), P(u,n), s <= $1, n like $2
"""

from __future__ import annotations

import csv
import json
import math
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .exact import BudgetExceededError, shannon_prob
from .formula import TRUE, And, Formula, Lit, NormalForm, Or

MANIFEST = "manifest.json"
EXACT_TUPLE_LIMIT = 20


class SchemaError(ValueError):
    pass


class QuerySyntaxError(ValueError):
    pass


class PatternMismatchError(ValueError):
    pass


# ---------------------------------------------------------------- data


@dataclass(frozen=True)
class Row:
    values: tuple
    tid: str
    p: float


@dataclass(frozen=True)
class Relation:
    name: str
    attributes: tuple[str, ...]
    rows: tuple[Row, ...]
    deterministic: bool = False
    table: str | None = None  # name used when emitting SQL

    def __post_init__(self):
        seen_ids, seen_values = set(), set()
        for r in self.rows:
            if len(r.values) != len(self.attributes):
                raise SchemaError(f"{self.name}: row {r.tid} has {len(r.values)} values")
            if not 0.0 <= r.p <= 1.0:
                raise SchemaError(f"{self.name}: probability {r.p} of {r.tid} outside [0,1]")
            if self.deterministic and r.p != 1.0:
                raise SchemaError(f"{self.name}: deterministic relation with p={r.p}")
            if r.tid in seen_ids:
                raise SchemaError(f"{self.name}: duplicate tuple id {r.tid}")
            if r.values in seen_values:
                raise SchemaError(f"{self.name}: duplicate row {r.values}")
            seen_ids.add(r.tid)
            seen_values.add(r.values)

    @property
    def sql_table(self) -> str:
        return self.table or self.name


@dataclass(frozen=True)
class TupleDB:
    relations: Mapping[str, Relation]

    def __post_init__(self):
        owner = {}
        for rel in self.relations.values():
            if rel.deterministic:
                continue
            for r in rel.rows:
                if r.tid in owner:
                    raise SchemaError(f"tuple id {r.tid} used by {owner[r.tid]} and {rel.name}")
                owner[r.tid] = rel.name

    def __getitem__(self, name: str) -> Relation:
        try:
            return self.relations[name]
        except KeyError:
            raise SchemaError(f"no relation named {name}") from None

    def probabilities(self) -> dict[str, float]:
        return {
            r.tid: r.p
            for rel in self.relations.values()
            if not rel.deterministic
            for r in rel.rows
        }

    def with_relation(self, rel: Relation, dropping: str | None = None) -> "TupleDB":
        rels = {k: v for k, v in self.relations.items() if k != dropping}
        rels[rel.name] = rel
        return TupleDB(rels)

    def with_probabilities(self, probs: Mapping[str, float]) -> "TupleDB":
        rels = {}
        for name, rel in self.relations.items():
            if rel.deterministic:
                rels[name] = rel
            else:
                rows = tuple(replace(r, p=probs.get(r.tid, r.p)) for r in rel.rows)
                rels[name] = replace(rel, rows=rows)
        return TupleDB(rels)


def coerce(text: str):
    """CSV cell to int, float or the stripped string."""
    s = text.strip()
    for kind in (int, float):
        try:
            return kind(s)
        except ValueError:
            pass
    return s


def load_db(directory: str | Path) -> TupleDB:
    directory = Path(directory)
    if not directory.is_dir():
        raise SchemaError(f"{directory} is not a directory")
    manifest = {}
    if (directory / MANIFEST).exists():
        manifest = json.loads((directory / MANIFEST).read_text()).get("relations", {})
    files = {p.stem: p for p in sorted(directory.glob("*.csv"))}
    for name, entry in manifest.items():
        if "file" in entry:
            files.pop(Path(entry["file"]).stem, None)
            files[name] = directory / entry["file"]
    relations = {}
    for name, path in files.items():
        entry = manifest.get(name, {})
        relations[name] = _read_relation(
            name, path, bool(entry.get("deterministic", False)), entry.get("table"),
            entry.get("attributes"),
        )
    return TupleDB(relations)


def _read_relation(name, path, deterministic, table, declared) -> Relation:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header") from None
        body = [row for row in reader if any(cell.strip() for cell in row)]
    has_id = "id" in header
    has_p = header[-1] == "p"
    if not deterministic and not has_p:
        raise SchemaError(f"{path}: last column must be 'p' for a probabilistic relation")
    attrs = [h for h in header if h != "id" and not (h == "p" and has_p)]
    if declared is not None and list(declared) != attrs:
        raise SchemaError(f"{path}: header {attrs} does not match manifest {declared}")
    rows = []
    for i, cells in enumerate(body, start=1):
        if len(cells) != len(header):
            raise SchemaError(f"{path}: line {i + 1} has {len(cells)} cells, expected {len(header)}")
        rec = dict(zip(header, cells))
        try:
            p = float(rec["p"]) if has_p else 1.0
        except ValueError:
            raise SchemaError(f"{path}: line {i + 1}: bad probability {rec['p']!r}") from None
        if not 0.0 <= p <= 1.0:
            raise SchemaError(f"{path}: line {i + 1}: probability {p} outside [0,1]")
        tid = rec["id"].strip() if has_id else f"{name}{i}"
        rows.append(Row(tuple(coerce(rec[a]) for a in attrs), tid, p))
    return Relation(name, tuple(attrs), tuple(rows), deterministic, table)


# ---------------------------------------------------------------- queries


@dataclass(frozen=True)
class Param:
    index: int

    def __str__(self):
        return f"${self.index}"


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple  # Var or constant

    @property
    def variables(self) -> tuple[str, ...]:
        out = []
        for a in self.args:
            if isinstance(a, Var) and a.name not in out:
                out.append(a.name)
        return tuple(out)

    def __str__(self):
        return f"{self.relation}({','.join(_term_text(a) for a in self.args)})"


@dataclass(frozen=True)
class Predicate:
    var: str
    op: str  # <=, <, >=, >, =, !=, like
    value: object  # constant or Param

    def holds(self, value, params: Mapping[int, object]) -> bool:
        target = self.value
        if isinstance(target, Param):
            if target.index not in params:
                raise QuerySyntaxError(f"no value supplied for parameter {target}")
            target = params[target.index]
        if self.op == "like":
            return _like(str(target)).fullmatch(str(value)) is not None
        a, b = value, target
        if isinstance(a, str) != isinstance(b, str):
            a, b = coerce(str(a)), coerce(str(b))
        try:
            return {
                "<=": a <= b, "<": a < b, ">=": a >= b, ">": a > b,
                "=": a == b, "!=": a != b,
            }[self.op]
        except TypeError:
            return False

    def __str__(self):
        return f"{self.var} {self.op} {_term_text(self.value)}"


def _term_text(t) -> str:
    if isinstance(t, (Var, Param)):
        return str(t)
    if isinstance(t, str):
        return "'" + t.replace("'", "''") + "'"
    return repr(t)


def _like(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        out.append(".*" if ch == "%" else "." if ch == "_" else re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


@dataclass(frozen=True)
class ConjQuery:
    name: str
    head: tuple[str, ...]
    atoms: tuple[Atom, ...]
    predicates: tuple[Predicate, ...] = ()
    params: Mapping[int, object] = field(default_factory=dict)

    def __post_init__(self):
        names = [a.relation for a in self.atoms]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise QuerySyntaxError(f"self-join on {sorted(dup)} is not supported")
        bound = {v for a in self.atoms for v in a.variables}
        for h in self.head:
            if h not in bound:
                raise QuerySyntaxError(f"head variable {h} does not occur in the body")
        for pr in self.predicates:
            if pr.var not in bound:
                raise QuerySyntaxError(f"predicate variable {pr.var} does not occur in an atom")

    def bind(self, params: Mapping[int, object] | Sequence) -> "ConjQuery":
        if not isinstance(params, Mapping):
            params = {i + 1: v for i, v in enumerate(params)}
        return replace(self, params={**self.params, **params})

    def atom(self, relation: str) -> Atom:
        for a in self.atoms:
            if a.relation == relation:
                return a
        raise KeyError(relation)

    def predicates_on(self, variables: Iterable[str]) -> tuple[Predicate, ...]:
        vs = set(variables)
        return tuple(p for p in self.predicates if p.var in vs)

    def __str__(self):
        body = [str(a) for a in self.atoms] + [str(p) for p in self.predicates]
        return f"{self.name}({','.join(self.head)}) :- {', '.join(body)}"


_QTOKEN = re.compile(
    r"""\s*(?:
      (?P<arrow>:-)
    | (?P<op><=|>=|!=|<>|<|>|=)
    | (?P<param>\$\d+)
    | (?P<num>-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)
    | (?P<str>'(?:[^']|'')*'|"[^"]*")
    | (?P<ident>[A-Za-z_][\w]*)
    | (?P<punct>[(),.])
    )""",
    re.VERBOSE,
)


def _qtokens(text: str):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _QTOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise QuerySyntaxError(f"unexpected {text[pos:pos + 10]!r} at position {pos}")
        out.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    return out


def parse_query(text: str, params: Mapping[int, object] | Sequence | None = None) -> ConjQuery:
    toks = _qtokens(text)
    i = 0

    def peek(k=0):
        return toks[i + k] if i + k < len(toks) else ("end", "", len(text))

    def take(kind, value=None):
        nonlocal i
        tok = peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            raise QuerySyntaxError(f"expected {value or kind} at position {tok[2]}, found {tok[1]!r}")
        i += 1
        return tok[1]

    def term():
        kind, value, pos = peek()
        if kind == "ident":
            take("ident")
            return Var(value)
        if kind == "num":
            take("num")
            return coerce(value)
        if kind == "str":
            take("str")
            return value[1:-1].replace("''", "'") if value[0] == "'" else value[1:-1]
        if kind == "param":
            take("param")
            return Param(int(value[1:]))
        raise QuerySyntaxError(f"expected a term at position {pos}, found {value!r}")

    name = take("ident")
    head: list[str] = []
    if peek()[0] == "punct" and peek()[1] == "(":
        take("punct", "(")
        while not (peek()[0] == "punct" and peek()[1] == ")"):
            t = term()
            if not isinstance(t, Var):
                raise QuerySyntaxError("head arguments must be variables")
            head.append(t.name)
            if peek()[1] == ",":
                take("punct", ",")
        take("punct", ")")
    take("arrow")
    atoms, preds = [], []
    while True:
        kind, value, pos = peek()
        if kind != "ident":
            raise QuerySyntaxError(f"expected an atom or predicate at position {pos}")
        if peek(1)[0] == "punct" and peek(1)[1] == "(":
            take("ident")
            take("punct", "(")
            args = []
            while not (peek()[0] == "punct" and peek()[1] == ")"):
                args.append(term())
                if peek()[1] == ",":
                    take("punct", ",")
            take("punct", ")")
            atoms.append(Atom(value, tuple(args)))
        else:
            take("ident")
            nxt = peek()
            if nxt[0] == "op":
                op = take("op")
                op = "!=" if op == "<>" else op
            elif nxt[0] == "ident" and nxt[1].lower() == "like":
                take("ident")
                op = "like"
            else:
                raise QuerySyntaxError(f"expected a comparison after {value} at position {nxt[2]}")
            preds.append(Predicate(value, op, term()))
        if peek()[1] == ",":
            take("punct", ",")
            continue
        if peek()[1] == ".":
            take("punct", ".")
        break
    if peek()[0] != "end":
        raise QuerySyntaxError(f"trailing input at position {peek()[2]}")
    if not atoms:
        raise QuerySyntaxError("query has no atoms")
    q = ConjQuery(name, tuple(head), tuple(atoms), tuple(preds))
    return q.bind(params) if params else q


# ---------------------------------------------------------------- lineage


def _matches(atom: Atom, row: Row, binding: dict, preds: Sequence[Predicate], params) -> dict | None:
    new = dict(binding)
    for arg, value in zip(atom.args, row.values):
        if isinstance(arg, Var):
            if arg.name in new:
                if new[arg.name] != value:
                    return None
            else:
                new[arg.name] = value
        elif arg != value:
            return None
    for pr in preds:
        if not pr.holds(new[pr.var], params):
            return None
    return new


def _check_schema(q: ConjQuery, db: TupleDB) -> None:
    for a in q.atoms:
        rel = db[a.relation]
        if len(a.args) != len(rel.attributes):
            raise SchemaError(
                f"{a.relation} has {len(rel.attributes)} attributes, query uses {len(a.args)}"
            )


def witnesses(q: ConjQuery, db: TupleDB) -> Iterable[tuple[dict, tuple[Row, ...]]]:
    """Every satisfying assignment of the body, with the rows that witness it."""
    _check_schema(q, db)
    atoms = q.atoms
    seen: set[str] = set()
    plan = []
    for a in atoms:
        keys = tuple(i for i, arg in enumerate(a.args) if isinstance(arg, Var) and arg.name in seen)
        index: dict[tuple, list[Row]] = {}
        for r in db[a.relation].rows:
            index.setdefault(tuple(r.values[i] for i in keys), []).append(r)
        new_vars = set(a.variables) - seen
        plan.append((a, keys, index, q.predicates_on(new_vars)))
        seen |= set(a.variables)

    def rec(level: int, binding: dict, rows: tuple):
        if level == len(plan):
            yield binding, rows
            return
        a, keys, index, preds = plan[level]
        key = tuple(binding[a.args[i].name] for i in keys)
        for r in index.get(key, ()):
            nb = _matches(a, r, binding, preds, q.params)
            if nb is not None:
                yield from rec(level + 1, nb, rows + (r,))

    yield from rec(0, {}, ())


def lineage(q: ConjQuery, db: TupleDB) -> dict[tuple, NormalForm]:
    """Per answer, the DNF over probabilistic tuple ids of its join witnesses."""
    clauses: dict[tuple, set[frozenset]] = {}
    det = {a.relation: db[a.relation].deterministic for a in q.atoms} if q.atoms else {}
    for binding, rows in witnesses(q, db):
        answer = tuple(binding[h] for h in q.head)
        clause = frozenset(
            r.tid for a, r in zip(q.atoms, rows) if not det[a.relation]
        )
        clauses.setdefault(answer, set()).add(clause)
    return {a: NormalForm.monotone("DNF", cs) for a, cs in sorted(clauses.items(), key=lambda kv: _sort_key(kv[0]))}


def _sort_key(answer: tuple):
    return tuple((0, v) if isinstance(v, (int, float)) else (1, str(v)) for v in answer)


# ---------------------------------------------------------------- plans


@dataclass(frozen=True)
class Scan:
    atom: Atom
    predicates: tuple[Predicate, ...] = ()

    @property
    def schema(self) -> tuple[str, ...]:
        return self.atom.variables

    def __str__(self):
        return str(self.atom)


@dataclass(frozen=True)
class Join:
    left: "Plan"
    right: "Plan"

    @property
    def on(self) -> tuple[str, ...]:
        rs = set(self.right.schema)
        return tuple(v for v in self.left.schema if v in rs)

    @property
    def schema(self) -> tuple[str, ...]:
        out = list(self.left.schema)
        out += [v for v in self.right.schema if v not in out]
        return tuple(out)

    def __str__(self):
        return f"⋈[{','.join(self.on)}]({self.left}, {self.right})"


@dataclass(frozen=True)
class Project:
    child: "Plan"
    onto: tuple[str, ...]

    def __post_init__(self):
        missing = set(self.onto) - set(self.child.schema)
        if missing:
            raise SchemaError(f"projection onto unknown variables {sorted(missing)}")

    @property
    def schema(self) -> tuple[str, ...]:
        return self.onto

    def __str__(self):
        return f"π[{','.join(self.onto)}]({self.child})"


Plan = Scan | Join | Project


@dataclass
class _Cell:
    prob: object
    expr: Formula | None


def _run(plan: Plan, db: TupleDB, params, track: bool) -> dict[tuple, _Cell]:
    if isinstance(plan, Scan):
        rel = db[plan.atom.relation]
        if len(plan.atom.args) != len(rel.attributes):
            raise SchemaError(f"{rel.name}: arity mismatch in scan")
        out = {}
        for r in rel.rows:
            binding = _matches(plan.atom, r, {}, plan.predicates, params)
            if binding is None:
                continue
            key = tuple(binding[v] for v in plan.schema)
            if rel.deterministic:
                out[key] = _Cell(1.0, TRUE if track else None)
            else:
                out[key] = _Cell(r.p, Lit(r.tid) if track else None)
        return out
    if isinstance(plan, Join):
        left = _run(plan.left, db, params, track)
        right = _run(plan.right, db, params, track)
        ls, rs = plan.left.schema, plan.right.schema
        on = plan.on
        li = [ls.index(v) for v in on]
        ri = [rs.index(v) for v in on]
        extra = [i for i, v in enumerate(rs) if v not in ls]
        index: dict[tuple, list] = {}
        for k, cell in right.items():
            index.setdefault(tuple(k[i] for i in ri), []).append((k, cell))
        out = {}
        for lk, lc in left.items():
            for rk, rc in index.get(tuple(lk[i] for i in li), ()):
                key = lk + tuple(rk[i] for i in extra)
                expr = _and(lc.expr, rc.expr) if track else None
                out[key] = _Cell(lc.prob * rc.prob, expr)
        return out
    child = _run(plan.child, db, params, track)
    cs = plan.child.schema
    pos = [cs.index(v) for v in plan.onto]
    groups: dict[tuple, list[_Cell]] = {}
    for k, cell in child.items():
        groups.setdefault(tuple(k[i] for i in pos), []).append(cell)
    out = {}
    for key, cells in groups.items():
        miss = 1.0
        for c in cells:
            miss *= 1.0 - c.prob
        expr = _or([c.expr for c in cells]) if track else None
        out[key] = _Cell(1.0 - miss, expr)
    return out


def _and(a: Formula, b: Formula) -> Formula:
    parts = [x for x in (a, b) if x != TRUE]
    if not parts:
        return TRUE
    kids = []
    for x in parts:
        kids.extend(x.children if isinstance(x, And) else (x,))
    return kids[0] if len(kids) == 1 else And(kids)


def _or(exprs: list[Formula]) -> Formula:
    if any(e == TRUE for e in exprs):
        return TRUE
    if len(exprs) == 1:
        return exprs[0]
    kids = []
    for x in exprs:
        kids.extend(x.children if isinstance(x, Or) else (x,))
    return Or(kids)


def plan_eval(plan: Plan, db: TupleDB, params: Mapping[int, object] | None = None) -> dict[tuple, float]:
    """Probability per answer: joins multiply, projections combine by independent-or."""
    res = _run(plan, db, params or {}, track=False)
    return {k: float(c.prob) for k, c in sorted(res.items(), key=lambda kv: _sort_key(kv[0]))}


def plan_expressions(plan: Plan, db: TupleDB, params: Mapping[int, object] | None = None) -> dict[tuple, Formula]:
    """Per answer, the tree the plan computes; repeated leaves are dissociated copies."""
    res = _run(plan, db, params or {}, track=True)
    return {k: c.expr for k, c in sorted(res.items(), key=lambda kv: _sort_key(kv[0]))}


@dataclass(frozen=True)
class Chain:
    left: Atom
    middle: Atom
    right: Atom
    left_keys: tuple[str, ...]  # shared by left and middle
    right_keys: tuple[str, ...]  # shared by middle and right


def chain_shape(q: ConjQuery) -> Chain:
    if len(q.atoms) != 3:
        raise PatternMismatchError(f"chain plans need exactly 3 atoms, got {len(q.atoms)}")
    vs = [set(a.variables) for a in q.atoms]
    for mid in range(3):
        ends = [i for i in range(3) if i != mid]
        a, b = ends
        if vs[a] & vs[b]:
            continue
        if vs[a] & vs[mid] and vs[b] & vs[mid]:
            left, right = q.atoms[a], q.atoms[b]
            middle = q.atoms[mid]
            lk = tuple(v for v in middle.variables if v in vs[a])
            rk = tuple(v for v in middle.variables if v in vs[b])
            return Chain(left, middle, right, lk, rk)
    raise PatternMismatchError("query is not a chain R(X), S(X,Y), T(Y)")


def _scan(q: ConjQuery, atom: Atom, needed: Iterable[str]) -> Plan:
    s = Scan(atom, q.predicates_on(atom.variables))
    keep = tuple(v for v in atom.variables if v in set(needed))
    return s if keep == atom.variables else Project(s, keep)


def _end_plan(q: ConjQuery, chain: Chain, side: str, end_atom: Atom | None = None) -> Plan:
    head = set(q.head)
    if side == "left":
        inner_end, outer_end = chain.left, chain.right
        inner_keys, outer_keys = chain.left_keys, chain.right_keys
    else:
        inner_end, outer_end = chain.right, chain.left
        inner_keys, outer_keys = chain.right_keys, chain.left_keys
    end = end_atom or inner_end
    mid = chain.middle
    inner = Join(
        _scan(q, end, set(inner_keys) | head),
        _scan(q, mid, set(inner_keys) | set(outer_keys) | head),
    )
    if side == "right":
        inner = Join(inner.right, inner.left)
    carry = tuple(v for v in inner.schema if v in set(outer_keys) | head)
    upper = Project(inner, carry)
    outer = _scan(q, outer_end, set(outer_keys) | head)
    top = Join(upper, outer) if side == "left" else Join(outer, upper)
    return Project(top, tuple(q.head))


def chain_plans(q: ConjQuery) -> tuple[Plan, Plan]:
    """The two plans dissociating the left and the right end relation."""
    chain = chain_shape(q)
    return _end_plan(q, chain, "left"), _end_plan(q, chain, "right")


def _occurrences(expr: Formula) -> dict[str, int]:
    counts: dict[str, int] = {}
    stack = [expr]
    while stack:
        g = stack.pop()
        if isinstance(g, Lit):
            counts[g.var] = counts.get(g.var, 0) + 1
        elif isinstance(g, (And, Or)):
            stack.extend(g.children)
    return counts


def view_name(relation: str) -> str:
    return "V" + relation


def lower_bound_view(db: TupleDB, q: ConjQuery, side: str) -> Relation:
    """Per-answer copies of the dissociated relation with p -> 1-(1-p)^(1/d)."""
    chain = chain_shape(q)
    end = chain.left if side == "left" else chain.right
    keys = chain.left_keys if side == "left" else chain.right_keys
    rel = db[end.relation]
    plan = _end_plan(q, chain, side)
    exprs = plan_expressions(plan, db, q.params)
    own = [v for v in end.variables if v in set(keys) | set(q.head)]
    extra = [h for h in q.head if h not in own]
    by_tid = {r.tid: r for r in rel.rows}
    rows = []
    for answer, expr in exprs.items():
        ans = dict(zip(q.head, answer))
        for tid, d in sorted(_occurrences(expr).items()):
            r = by_tid.get(tid)
            if r is None:
                continue
            binding = _matches(end, r, {}, (), {})
            values = tuple(binding[v] for v in own) + tuple(ans[h] for h in extra)
            p = 1.0 - (1.0 - r.p) ** (1.0 / d)
            new_id = tid if not extra else f"{tid}@{','.join(str(a) for a in answer)}"
            rows.append(Row(values, new_id, p))
    if rel.deterministic:
        # deterministic tuples never show up in the expressions; nothing to
        # dissociate, so the view is the projection of the joining rows
        values = {}
        for binding, _ in witnesses(q, db):
            values.setdefault(tuple(binding[v] for v in own + extra), None)
        rows = [Row(v, f"{view_name(end.relation)}{i}", 1.0) for i, v in enumerate(values, start=1)]
    return Relation(view_name(end.relation), tuple(own + extra), tuple(rows), rel.deterministic)


def lower_plan(q: ConjQuery, side: str) -> Plan:
    """Plan reading the lower-bound view in place of the dissociated relation."""
    chain = chain_shape(q)
    end = chain.left if side == "left" else chain.right
    keys = chain.left_keys if side == "left" else chain.right_keys
    own = [v for v in end.variables if v in set(keys) | set(q.head)]
    extra = [h for h in q.head if h not in own]
    view_atom = Atom(view_name(end.relation), tuple(Var(v) for v in own + extra))
    return _end_plan(q, chain, side, view_atom)


@dataclass(frozen=True)
class AnswerBounds:
    answer: tuple
    lower: float
    upper: float
    method_lower: str
    method_upper: str
    exact: float | None


def query_bounds(
    q: ConjQuery, db: TupleDB, exact_limit: int = EXACT_TUPLE_LIMIT
) -> list[AnswerBounds]:
    """Per-answer [lower, upper] from the two chain plans, ranked by upper bound."""
    chain = chain_shape(q)
    names = {"left": chain.left.relation, "right": chain.right.relation}
    uppers, lowers = {}, {}
    for side, plan in zip(("left", "right"), chain_plans(q)):
        uppers[side] = plan_eval(plan, db, q.params)
        view = lower_bound_view(db, q, side)
        viewed = db.with_relation(view, dropping=names[side])
        lowers[side] = plan_eval(lower_plan(q, side), viewed, q.params)
    lin = lineage(q, db)
    probs = db.probabilities()
    out = []
    for answer, nf in lin.items():
        up_side = min(("left", "right"), key=lambda s: (uppers[s].get(answer, math.inf), s))
        lo_side = max(("left", "right"), key=lambda s: (lowers[s].get(answer, -math.inf), s == "left"))
        exact = None
        if len(nf.variables) <= exact_limit:
            try:
                exact = float(shannon_prob(nf.to_formula(), probs))
            except BudgetExceededError:
                exact = None
        out.append(
            AnswerBounds(
                answer,
                lowers[lo_side][answer],
                uppers[up_side][answer],
                f"P_{names[lo_side]}*",
                f"P_{names[up_side]}",
                exact,
            )
        )
    out.sort(key=lambda b: (-b.upper, _sort_key(b.answer)))
    return out


def write_answers_csv(bounds: Sequence[AnswerBounds], dest) -> None:
    """CSV of ranked answers to a path or an open text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_answers_csv(bounds, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["answer", "lower", "upper", "method_lower", "method_upper", "exact"])
    for b in bounds:
        w.writerow([
            " ".join(str(v) for v in b.answer),
            repr(b.lower), repr(b.upper), b.method_lower, b.method_upper,
            "" if b.exact is None else repr(b.exact),
        ])


# ---------------------------------------------------------------- synthetic data


def synthetic_chain_db(
    seed: int,
    n_left: int = 4,
    n_right: int = 4,
    density: float = 0.5,
    p_range: tuple[float, float] = (0.05, 0.95),
    answers: int = 0,
) -> TupleDB:
    """Random instance for ``Q(..) :- R(x[,a]), S(x,y), T(y)``.

    R holds values 1..n_left, T holds 1..n_right, and S relates each pair with
    probability ``density``. With ``answers > 0`` R gets a second attribute
    drawn from 1..answers, so ``Q(a) :- R(x,a), S(x,y), T(y)`` has several
    answers. Tuple ids follow r1.., s1.., t1...
    """
    rng = random.Random(seed)
    lo, hi = p_range

    def prob():
        return round(rng.uniform(lo, hi), 6)

    if answers:
        r_rows = tuple(Row((i, rng.randint(1, answers)), f"r{i}", prob()) for i in range(1, n_left + 1))
        r = Relation("R", ("A", "C"), r_rows)
    else:
        r = Relation("R", ("A",), tuple(Row((i,), f"r{i}", prob()) for i in range(1, n_left + 1)))
    t = Relation("T", ("B",), tuple(Row((j,), f"t{j}", prob()) for j in range(1, n_right + 1)))
    s_rows = []
    for i in range(1, n_left + 1):
        for j in range(1, n_right + 1):
            if rng.random() < density:
                s_rows.append(Row((i, j), f"s{len(s_rows) + 1}", prob()))
    s = Relation("S", ("A", "B"), tuple(s_rows))
    return TupleDB({"R": r, "S": s, "T": t})


def write_db(db: TupleDB, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for rel in db.relations.values():
        with open(directory / f"{rel.name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", *rel.attributes] + ([] if rel.deterministic else ["p"]))
            for r in rel.rows:
                w.writerow([r.tid, *r.values] + ([] if rel.deterministic else [repr(r.p)]))
        entry = {}
        if rel.deterministic:
            entry["deterministic"] = True
        if rel.table:
            entry["table"] = rel.table
        if entry:
            manifest[rel.name] = entry
    if manifest:
        (directory / MANIFEST).write_text(json.dumps({"relations": manifest}, indent=2) + "\n")
