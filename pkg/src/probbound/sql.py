"""SQL text for the chain-query bound plans and the independent-or aggregate.

Nothing here talks to a database; the output is meant to be pasted into
PostgreSQL (which needs the ``ior`` aggregate from ``variant="uda"`` first).

Two naming styles:

``qualified``
    every column reference carries its table alias (``R.A = S.A``) and each
    derived table keeps all columns of the relations it reads. Suits schemas
    with short, shared attribute names.
``prefixed``
    for schemas whose column names are globally unique (``ps_suppkey``):
    base columns are referenced bare, only the columns later steps need are
    kept, and aliases are spelled out only where they are used.
``prefixed-loose``
    ``prefixed`` without the answer join in the last step of a lower-bound
    query. This is the commonly published layout; it is only right when each
    dissociated tuple contributes to a single answer, since otherwise the
    per-answer view rows of other answers leak in.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .lineage import Atom, ConjQuery, TupleDB, chain_shape, view_name

VARIANTS = ("upper-left", "upper-right", "lower-left", "lower-right", "uda")

IOR_AGGREGATE = """\
create or replace function ior_sfunc(float, float) returns float as
   'select $1 * (1.0 - $2)'
   language SQL;

create or replace function ior_finalfunc(float) returns float as
   'select 1.0 - $1'
   language SQL;

create aggregate ior (float)(
   sfunc = ior_sfunc,
   stype = float,
   finalfunc = ior_finalfunc,
   initcond = '1.0');
"""


@dataclass(frozen=True)
class SqlStyle:
    qualify: bool
    prune: bool
    join_answers: bool = True


QUALIFIED = SqlStyle(qualify=True, prune=False)
PREFIXED = SqlStyle(qualify=False, prune=True)
PREFIXED_LOOSE = SqlStyle(qualify=False, prune=True, join_answers=False)
STYLES = {"qualified": QUALIFIED, "prefixed": PREFIXED, "prefixed-loose": PREFIXED_LOOSE}


@dataclass(frozen=True)
class TableInfo:
    table: str
    columns: tuple[str, ...]
    deterministic: bool = False


def schema_from_db(db: TupleDB) -> dict[str, TableInfo]:
    return {
        name: TableInfo(rel.sql_table, rel.attributes, rel.deterministic)
        for name, rel in db.relations.items()
    }


@dataclass
class _Source:
    """A relation (or view) as seen from SQL: alias, table, column per variable."""

    alias: str
    table: str
    cols: dict[str, str]
    order: int
    deterministic: bool = False

    def render(self, referenced: bool) -> str:
        if referenced and self.alias != self.table:
            return f"{self.table} {self.alias}"
        return self.table

    @property
    def prob(self) -> str | None:
        return None if self.deterministic else f"{self.alias}.P"


def _source(atom: Atom, info: TableInfo, order: int) -> _Source:
    if len(info.columns) != len(atom.args):
        raise ValueError(f"{atom.relation}: {len(info.columns)} columns, query uses {len(atom.args)}")
    cols = {}
    for arg, col in zip(atom.args, info.columns):
        name = getattr(arg, "name", None)
        if name is not None and name not in cols:
            cols[name] = col
    return _Source(atom.relation, info.table, cols, order, info.deterministic)


def _ref(alias: str, col: str, qualify: bool) -> str:
    return f"{alias}.{col}" if qualify else col


def _product(*sources: _Source) -> str:
    parts = [s.prob for s in sources if s.prob]
    return ("*".join(parts) if parts else "1.0") + " as P"


def _indent(text: str, pad: str) -> str:
    return "\n".join(pad + line for line in text.splitlines())


def _predicate_sql(pred, col: str) -> str:
    value = pred.value
    if hasattr(value, "index"):
        rendered = f"${value.index}"
    elif isinstance(value, str):
        rendered = "'" + value.replace("'", "''") + "'"
    else:
        rendered = repr(value)
    return f"{col} {pred.op} {rendered}"


def _first_owner(sources: list[_Source], var: str) -> _Source:
    return min((s for s in sources if var in s.cols), key=lambda s: s.order)


class _Emitter:
    def __init__(self, q: ConjQuery, schema: Mapping[str, TableInfo], side: str, style: SqlStyle):
        chain = chain_shape(q)
        self.q, self.style = q, style
        order = {a.relation: i for i, a in enumerate(q.atoms)}
        src = {a.relation: _source(a, schema[a.relation], order[a.relation]) for a in q.atoms}
        if side == "left":
            end, other = chain.left, chain.right
            self.inner_keys, self.outer_keys = chain.left_keys, chain.right_keys
        else:
            end, other = chain.right, chain.left
            self.inner_keys, self.outer_keys = chain.right_keys, chain.left_keys
        self.end = src[end.relation]
        self.mid = src[chain.middle.relation]
        self.out = src[other.relation]
        self.all = [self.end, self.mid, self.out]
        self.head = list(q.head)
        keep = set(self.inner_keys) | set(self.head)
        self.own = [v for v in end.variables if v in keep]
        self.extra = [h for h in self.head if h not in self.own]

    def view_source(self) -> _Source:
        cols = {v: self.end.cols[v] for v in self.own}
        for h in self.extra:
            cols[h] = _first_owner(self.all, h).cols[h]
        name = view_name(self.end.alias)
        return _Source(name, name, cols, self.end.order, self.end.deterministic)

    def view(self) -> str:
        qf = self.style.qualify
        d, m, o = self.end, self.mid, self.out
        keys = [_ref(d.alias, d.cols[v], qf) for v in self.own]
        keys += [_ref(_first_owner(self.all, h).alias, _first_owner(self.all, h).cols[h], qf) for h in self.extra]
        prob = d.prob or "1.0"
        select = ", ".join(keys)
        lines = [f"create view {view_name(d.alias)} as", f"select {select},"]
        lines.append(f"  1-power(1-{prob},1e0/count(*)) as P")
        lines.append(f"from {d.render(True)}, {m.render(qf)}, {o.render(qf)}")
        conds = [f"{_ref(d.alias, d.cols[v], qf)}={_ref(m.alias, m.cols[v], qf)}" for v in self.inner_keys]
        conds += [f"{_ref(m.alias, m.cols[v], qf)}={_ref(o.alias, o.cols[v], qf)}" for v in self.outer_keys]
        for pred in self.q.predicates:
            owner = _first_owner(self.all, pred.var)
            conds.append(_predicate_sql(pred, _ref(owner.alias, owner.cols[pred.var], qf)))
        lines.append("where " + conds[0])
        lines += ["and " + c for c in conds[1:]]
        lines.append(f"group by {', '.join(keys + [prob])}")
        return "\n".join(lines)

    def query(self, lower: bool) -> str:
        qf, prune = self.style.qualify, self.style.prune
        d = self.view_source() if lower else self.end
        m, o = self.mid, self.out
        inner_scope = [d, m]

        # Q1: the dissociated end joined with the middle relation
        q1_cols: dict[str, str] = {}
        items = []
        wanted = list(self.outer_keys) if prune else list(m.cols)
        for v in wanted:
            items.append(_ref(m.alias, m.cols[v], qf))
            q1_cols[v] = m.cols[v]
        for h in self.head:
            if h in q1_cols:
                continue
            owner = m if h in m.cols else d if h in d.cols else None
            if owner is None:
                continue
            items.append(_ref(owner.alias, owner.cols[h], qf))
            q1_cols[h] = owner.cols[h]
        items.append(_product(m, d))
        first, second = sorted(inner_scope, key=lambda s: s.order)
        conds = [
            f"{_ref(first.alias, first.cols[v], qf)} = {_ref(second.alias, second.cols[v], qf)}"
            for v in self.inner_keys
        ]
        handled = set(d.cols) if lower else set()
        scope_vars = set(d.cols) | set(m.cols)
        for pred in self.q.predicates:
            if pred.var in scope_vars and pred.var not in handled:
                owner = _first_owner(inner_scope, pred.var)
                conds.append(_predicate_sql(pred, _ref(owner.alias, owner.cols[pred.var], qf)))
        q1 = [f"select {', '.join(items)}", f"from {first.render(True)}, {second.render(True)}"]
        if conds:
            q1.append("where " + conds[0])
            q1 += ["and " + c for c in conds[1:]]

        # Q2: independent projection onto the keys towards the other end
        group = [f"Q1.{q1_cols[v]}" for v in self.outer_keys]
        group += [_ref("Q1", q1_cols[h], qf) for h in self.head if h in q1_cols]
        q2 = [
            f"select {', '.join(group + ['IOR(Q1.P) as P'])}",
            "from (" + "\n".join(q1).replace("\n", "\n      ") + ") as Q1",
            f"group by {', '.join(group)}",
        ]

        # Q3: join with the other end
        q3_cols: dict[str, str] = {}
        items = []
        carried = [v for v in o.cols if not prune or v in self.head]
        for v in carried:
            items.append(f"{o.alias}.{o.cols[v]}")
            q3_cols[v] = o.cols[v]
        for h in self.head:
            if h not in q3_cols and h in q1_cols:
                items.append(_ref("Q2", q1_cols[h], qf))
                q3_cols[h] = q1_cols[h]
        items.append(f"{o.prob}*Q2.P as P" if o.prob else "Q2.P as P")
        conds = [f"{_ref(o.alias, o.cols[v], qf)} = Q2.{q1_cols[v]}" for v in self.outer_keys]
        if lower and self.style.join_answers:
            # view rows are per answer; keep each with its own answer
            # (qualified in every style: both sides carry the same column name)
            conds += [
                f"{o.alias}.{o.cols[h]} = Q2.{q1_cols[h]}"
                for h in self.extra if h in o.cols and h in q1_cols
            ]
        for pred in self.q.predicates:
            if pred.var in o.cols and pred.var not in scope_vars:
                conds.append(_predicate_sql(pred, _ref(o.alias, o.cols[pred.var], qf)))
        q3 = [
            f"select {', '.join(items)}",
            f"from {o.render(True)},",
            "  (" + "\n".join(q2).replace("\n", "\n   ") + ") as Q2",
            "where " + conds[0],
        ] + ["and " + c for c in conds[1:]]

        # outer: independent projection onto the head
        heads = [q3_cols[h] for h in self.head]
        top = [f"select {', '.join([_ref('Q3', c, qf) for c in heads] + ['IOR(Q3.P) as P'])}"]
        top.append("from")
        top.append(_indent("(" + "\n".join(q3).replace("\n", "\n ") + ") as Q3", "  "))
        if heads:
            top.append(f"group by {', '.join('Q3.' + c for c in heads)}")
        return "\n".join(top)


def emit_sql_statements(
    q: ConjQuery,
    variant: str,
    schema: Mapping[str, TableInfo] | TupleDB,
    style: SqlStyle | str = QUALIFIED,
) -> list[str]:
    """The statements of one variant, without terminating semicolons."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown SQL variant {variant!r}; choose from {', '.join(VARIANTS)}")
    if variant == "uda":
        return [IOR_AGGREGATE]
    if isinstance(schema, TupleDB):
        schema = schema_from_db(schema)
    if isinstance(style, str):
        style = STYLES[style]
    bound, side = variant.split("-")
    em = _Emitter(q, schema, side, style)
    if bound == "upper":
        return [em.query(lower=False)]
    return [em.view(), em.query(lower=True)]


def emit_sql(
    q: ConjQuery,
    variant: str,
    schema: Mapping[str, TableInfo] | TupleDB,
    style: SqlStyle | str = QUALIFIED,
) -> str:
    stmts = emit_sql_statements(q, variant, schema, style)
    if variant == "uda":
        return stmts[0]
    return "".join(s + ";\n\n" for s in stmts).rstrip("\n") + "\n"


_SQL_TOKEN = re.compile(r"\$\d+|\d+(?:\.\d+)?(?:e\d+)?|\w+|'[^']*'|<=|>=|<>|!=|\S")


def sql_tokens(text: str) -> list[str]:
    """Token sequence used to compare SQL texts regardless of layout."""
    return _SQL_TOKEN.findall(text)
