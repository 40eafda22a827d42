"""Exact probability of Boolean formulas over independent variables.

Three routes, kept deliberately independent so they can check each other:

* ``brute_force_prob`` sums over every possible world (numpy-vectorised).
* ``shannon_prob`` expands on one variable at a time, memoising cofactors and
  splitting variable-disjoint sub-formulas.
* ``readonce_prob`` evaluates a read-once tree bottom-up in linear time.

Probability maps may hold numpy arrays instead of floats in ``shannon_prob``
and ``readonce_prob``; the arithmetic then runs element-wise, which is how the
experiment grids are evaluated.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Mapping, Sequence

import numpy as np

from .formula import (
    FALSE,
    TRUE,
    And,
    Const,
    Formula,
    Lit,
    MissingVariableError,
    NormalForm,
    Or,
    absorb,
    ProbMap,
    VarId,
    conj,
    disj,
    iter_literals,
    restrict,
)

ORACLE_VAR_LIMIT = 24
SHANNON_BUDGET = 2_000_000
EXPANSION_Y_LIMIT = 20
_CHUNK_BITS = 16


class TooManyVariablesError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    pass


class ZeroProbabilityConditionError(ValueError):
    """Conditioning on an event of probability zero."""


# ------------------------------------------------------------ enumeration


def eval_array(f: Formula, columns: Mapping[VarId, np.ndarray], size: int) -> np.ndarray:
    """Evaluate ``f`` on many worlds at once; ``columns`` holds one bool array per variable."""
    if isinstance(f, Const):
        return np.full(size, f.value, dtype=bool)
    if isinstance(f, Lit):
        try:
            col = columns[f.var]
        except KeyError:
            raise MissingVariableError(f.var) from None
        return col if f.positive else ~col
    parts = [eval_array(c, columns, size) for c in f.children]
    if isinstance(f, And):
        return np.logical_and.reduce(parts)
    return np.logical_or.reduce(parts)


def world_bits(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows are worlds ``start..stop-1``; column i is bit i (variable i, lsb first)."""
    stop = (1 << n) if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def truth_table(f: Formula, order: Sequence[VarId]) -> np.ndarray:
    """Value of ``f`` in every world over ``order`` (world index = bit vector, lsb first)."""
    n = len(order)
    bits = world_bits(n)
    columns = {v: bits[:, i] for i, v in enumerate(order)}
    return eval_array(f, columns, 1 << n)


def cofactor_table(f: Formula, outer: Sequence[VarId], inner: Sequence[VarId]) -> np.ndarray:
    """Array ``[2^|outer|, 2^|inner|]``: row = valuation of ``outer``, column = of ``inner``."""
    order = list(inner) + list(outer)
    table = truth_table(f, order)
    return table.reshape(1 << len(outer), 1 << len(inner))


def world_weights(probs: Sequence[float]) -> np.ndarray:
    """Probability of each world over independent variables with the given marginals."""
    w = np.ones(1, dtype=float)
    for p in probs:
        # new bit is the most significant so far
        w = np.concatenate([w * (1.0 - p), w * p])
    return w


def _sorted_vars(f: Formula) -> list[VarId]:
    return sorted(f.vars)


def brute_force_prob(f: Formula, p: ProbMap, limit: int = ORACLE_VAR_LIMIT) -> float:
    """Sum of world probabilities over the satisfying worlds (the oracle)."""
    order = _sorted_vars(f)
    n = len(order)
    if n > limit:
        raise TooManyVariablesError(f"{n} variables exceeds oracle limit {limit}")
    probs = []
    for v in order:
        if v not in p:
            raise MissingVariableError(v)
        probs.append(float(p[v]))
    if n <= _CHUNK_BITS:
        return float(np.dot(truth_table(f, order), world_weights(probs)))
    low = world_weights(probs[:_CHUNK_BITS])
    high = world_weights(probs[_CHUNK_BITS:])
    total = 0.0
    chunk = 1 << _CHUNK_BITS
    low_bits = world_bits(_CHUNK_BITS)
    for hi_index in range(1 << (n - _CHUNK_BITS)):
        if high[hi_index] == 0.0:
            continue
        columns = {v: low_bits[:, i] for i, v in enumerate(order[:_CHUNK_BITS])}
        for j, v in enumerate(order[_CHUNK_BITS:]):
            columns[v] = np.full(chunk, bool((hi_index >> j) & 1))
        sat = eval_array(f, columns, chunk)
        total += high[hi_index] * float(np.dot(sat, low))
    return total


def brute_force_probs(f: Formula, probmaps: Sequence[ProbMap], limit: int = ORACLE_VAR_LIMIT) -> np.ndarray:
    """Oracle for many probability maps at once (shares the truth table)."""
    order = _sorted_vars(f)
    if len(order) > limit:
        raise TooManyVariablesError(f"{len(order)} variables exceeds oracle limit {limit}")
    table = truth_table(f, order)
    sat = world_bits(len(order))[table]
    if not probmaps:
        return np.zeros(0)
    P = np.array([[pm[v] for v in order] for pm in probmaps], dtype=float)
    if sat.shape[0] == 0:
        return np.zeros(len(probmaps))
    weights = np.ones((len(probmaps), sat.shape[0]))
    for i in range(len(order)):
        weights *= np.where(sat[:, i][None, :], P[:, i][:, None], 1.0 - P[:, i][:, None])
    return weights.sum(axis=1)


# ------------------------------------------------------------ Shannon


def _components(children: Sequence[Formula]) -> list[list[Formula]]:
    """Group children into classes connected by shared variables."""
    groups: list[tuple[set, list[Formula]]] = []
    for c in children:
        merged_vars = set(c.vars)
        merged_kids = [c]
        rest = []
        for gv, gk in groups:
            if gv & merged_vars:
                merged_vars |= gv
                merged_kids = gk + merged_kids
            else:
                rest.append((gv, gk))
        groups = rest + [(merged_vars, merged_kids)]
    return [kids for _, kids in groups]


def _pivot(f: Formula) -> VarId:
    counts: dict[VarId, int] = {}
    for lit in iter_literals(f):
        counts[lit.var] = counts.get(lit.var, 0) + 1
    return min(counts, key=lambda v: (-counts[v], v))


def shannon_prob(f: Formula, p: ProbMap, budget: int = SHANNON_BUDGET):
    """Exact probability by recursive Shannon expansion.

    Pivot is the most frequent variable (ties: smallest name). Sub-formulas
    over disjoint variables are multiplied (AND) or combined by
    independent-or (OR) instead of being expanded.
    """
    for v in f.vars:
        if v not in p:
            raise MissingVariableError(v)
    memo: dict[Formula, object] = {}
    nodes = 0

    def rec(g: Formula):
        nonlocal nodes
        if isinstance(g, Const):
            return 1.0 if g.value else 0.0
        if isinstance(g, Lit):
            return p[g.var] if g.positive else 1.0 - p[g.var]
        hit = memo.get(g)
        if hit is not None:
            return hit
        nodes += 1
        if nodes > budget:
            raise BudgetExceededError(f"Shannon expansion exceeded {budget} nodes")
        groups = _components(g.children)
        if len(groups) > 1:
            if isinstance(g, And):
                result = 1.0
                for grp in groups:
                    result = result * rec(conj(*grp))
            else:
                miss = 1.0
                for grp in groups:
                    miss = miss * (1.0 - rec(disj(*grp)))
                result = 1.0 - miss
        else:
            v = _pivot(g)
            pv = p[v]
            result = pv * rec(restrict(g, {v: 1})) + (1.0 - pv) * rec(restrict(g, {v: 0}))
        memo[g] = result
        return result

    return rec(f)


# ------------------------------------------------------------ read-once


def _co_occurrence(clauses: Sequence[frozenset[VarId]]) -> dict[VarId, set[VarId]]:
    adj: dict[VarId, set[VarId]] = {}
    for c in clauses:
        for v in c:
            adj.setdefault(v, set()).update(c)
    for v in adj:
        adj[v].discard(v)
    return adj


def _graph_components(nodes: Iterable[VarId], neighbours) -> list[set[VarId]]:
    todo = set(nodes)
    comps = []
    while todo:
        start = min(todo)
        todo.discard(start)
        comp = {start}
        frontier = [start]
        while frontier:
            u = frontier.pop()
            nxt = neighbours(u, todo)
            todo -= nxt
            comp |= nxt
            frontier.extend(nxt)
        comps.append(comp)
    return comps


def _leaf_and(names: Iterable[VarId]) -> Formula:
    lits = [Lit(v) for v in sorted(names)]
    if not lits:
        return TRUE
    return lits[0] if len(lits) == 1 else And(lits)


def _first_var(f: Formula) -> VarId:
    return min(f.vars) if f.vars else ""


def _factor(clauses: list[frozenset[VarId]]) -> Formula | None:
    if not clauses:
        return FALSE
    if any(not c for c in clauses):
        return TRUE
    if len(clauses) == 1:
        return _leaf_and(clauses[0])
    adj = _co_occurrence(clauses)
    comps = _graph_components(adj, lambda u, todo: adj[u] & todo)
    if len(comps) > 1:
        kids = []
        for comp in comps:
            sub = _factor([c for c in clauses if c <= comp])
            if sub is None:
                return None
            kids.append(sub)
        kids.sort(key=_first_var)
        return Or(kids)
    co_comps = _graph_components(adj, lambda u, todo: todo - adj[u])
    if len(co_comps) == 1:
        return None
    projections = []
    for comp in co_comps:
        proj = {c & comp for c in clauses}
        if frozenset() in proj:
            return None
        projections.append(proj)
    size = 1
    for proj in projections:
        size *= len(proj)
    if size != len(clauses):
        return None
    kids = []
    for proj in projections:
        sub = _factor(sorted(proj, key=sorted))
        if sub is None:
            return None
        kids.extend(sub.children if isinstance(sub, And) else (sub,))
    kids.sort(key=_first_var)
    return And(kids)


def _dual(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Lit):
        return f
    kind = Or if isinstance(f, And) else And
    return kind(_dual(c) for c in f.children)


def readonce_factorize(nf: NormalForm) -> Formula | None:
    """Read-once tree equivalent to a monotone normal form, or None.

    Works on the co-occurrence graph of the clauses: disconnected pieces are
    OR-ed; pieces that are disconnected in the complement graph are AND-ed
    when the clause set is exactly their product. Anything else is not
    read-once. CNF input is handled through its dual DNF.
    """
    if not nf.is_monotone:
        raise ValueError("read-once factorisation needs a monotone normal form")
    clauses = sorted(absorb(nf.var_sets()), key=sorted)
    tree = _factor(clauses)
    if tree is None:
        return None
    return tree if nf.kind == "DNF" else _dual(tree)


def is_read_once(f: Formula) -> bool:
    seen = set()
    for lit in iter_literals(f):
        if lit.var in seen:
            return False
        seen.add(lit.var)
    return True


def tree_prob(t: Formula, p: ProbMap):
    """Bottom-up product / independent-or, treating every leaf as independent.

    On a read-once tree this is the exact probability; on a tree with repeated
    leaves it is the probability of the dissociated formula in which every
    leaf occurrence is its own copy.
    """
    if isinstance(t, Const):
        return 1.0 if t.value else 0.0
    if isinstance(t, Lit):
        try:
            pv = p[t.var]
        except KeyError:
            raise MissingVariableError(t.var) from None
        return pv if t.positive else 1.0 - pv
    if isinstance(t, And):
        result = 1.0
        for c in t.children:
            result = result * tree_prob(c, p)
        return result
    miss = 1.0
    for c in t.children:
        miss = miss * (1.0 - tree_prob(c, p))
    return 1.0 - miss


def readonce_prob(t: Formula, p: ProbMap):
    if not is_read_once(t):
        raise ValueError("tree repeats a variable; not read-once")
    return tree_prob(t, p)


# ------------------------------------------------------------ conditioning


def conditional_prob(x: VarId, f: Formula, p: ProbMap) -> float:
    """P[x | f] computed exactly as P[x and f] / P[f]."""
    denom = shannon_prob(f, p)
    if denom <= 0.0:
        raise ZeroProbabilityConditionError(f"P[{f}] = 0; cannot condition on it")
    num = p[x] * shannon_prob(restrict(f, {x: 1}), p)
    return num / denom


def prob_by_y_expansion(
    f: Formula, x_probs: ProbMap, y_probs: ProbMap, y_limit: int = EXPANSION_Y_LIMIT
) -> float:
    """Sum over all valuations nu of y of P[f[nu]] * P[y = nu]."""
    xs, ys = set(x_probs), set(y_probs)
    if xs & ys:
        raise ValueError(f"x and y overlap on {sorted(xs & ys)}")
    missing = f.vars - xs - ys
    if missing:
        raise ValueError(f"variables in neither x nor y: {sorted(missing)}")
    order = sorted(ys)
    if len(order) > y_limit:
        raise TooManyVariablesError(f"{len(order)} y-variables exceeds {y_limit}")
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(order)):
        nu = dict(zip(order, bits))
        weight = 1.0
        for v, b in nu.items():
            weight *= y_probs[v] if b else 1.0 - y_probs[v]
        if weight == 0.0:
            continue
        total += weight * shannon_prob(restrict(f, nu), x_probs)
    return total
