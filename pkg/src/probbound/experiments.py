"""Desk-scale numeric studies of dissociation bounds, written out as CSV.

Each study evaluates closed forms on numpy arrays; the tests cross-check every
closed form against the brute-force oracle on small instances.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exact import brute_force_prob, brute_force_probs
from .formula import Formula, conj, disj, parse_formula, var

GRID_VALUES = tuple(round(i / 10, 1) for i in range(11))
BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200

DEFAULT_P71 = (0.2, 0.5, 0.8)
DEFAULT_Q71 = (0.2, 0.5, 0.8)
DEFAULT_RHO_STEPS = 21
DEFAULT_N74 = tuple(range(1, 21)) + (50, 100, 200, 500, 1000, 2000, 5000, 10000)
DEFAULT_N75 = tuple(range(1, 21)) + (50, 100, 200, 500, 1000, 2000, 5000, 10000)

# the 4-variable path formula and its CNF twin
PATH4_DNF = "x1 y1 | x2 y1 | x2 y2"
PATH4_CNF = "(x1 | x2) (y1 | x2) (y1 | y2)"


class BisectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSummary:
    method: str
    avg_error: float  # percent
    worst_error: float  # percent
    points: int

    def __post_init__(self):
        if not (self.worst_error >= self.avg_error >= 0 or math.isinf(self.worst_error)):
            raise ValueError(f"inconsistent summary {self}")


@dataclass(frozen=True)
class CorrelationPoint:
    variant: str  # "CNF" or "DNF"
    p: float
    q: float
    rho: float
    pab: float
    exact: float
    upper: float
    lower: float


# ---------------------------------------------------------------- formulas


def gen_pp2cnf(edges: Iterable[tuple[int, int]]) -> Formula:
    """AND over the edges (i, j) of (x_i | y_j)."""
    return conj(*(disj(var(f"x{i}"), var(f"y{j}")) for i, j in edges))


def random_monotone_formula(seed: int, var_budget: int, clause_budget: int, kind: str = "DNF") -> Formula:
    """Seeded random monotone DNF or CNF over v1..v<var_budget>."""
    if var_budget < 1 or clause_budget < 1:
        raise ValueError("budgets must be at least 1")
    if kind not in ("DNF", "CNF"):
        raise ValueError(f"kind must be DNF or CNF, not {kind!r}")
    rng = random.Random(seed)
    names = [f"v{i}" for i in range(1, var_budget + 1)]
    clauses = []
    for _ in range(rng.randint(1, clause_budget)):
        size = rng.randint(1, min(4, var_budget))
        clauses.append(sorted(rng.sample(names, size), key=lambda s: int(s[1:])))
    inner, outer = (conj, disj) if kind == "DNF" else (disj, conj)
    return outer(*(inner(*(var(v) for v in c)) for c in clauses))


def path_formula(n: int) -> Formula:
    """x1 y1 | x1 y2 | x2 y2 | ... | x(n-1) yn | xn yn."""
    clauses = []
    for i in range(1, n + 1):
        if i > 1:
            clauses.append(conj(var(f"x{i - 1}"), var(f"y{i}")))
        clauses.append(conj(var(f"x{i}"), var(f"y{i}")))
    return disj(*clauses)


def complete_bipartite_formula(n: int) -> Formula:
    return disj(*(conj(var(f"x{i}"), var(f"y{j}")) for i in range(1, n + 1) for j in range(1, n + 1)))


# ---------------------------------------------------------------- helpers


def relative_error(bound: np.ndarray, exact: np.ndarray) -> np.ndarray:
    """(bound - exact) / exact, with 0/0 taken as 0."""
    bound, exact = np.broadcast_arrays(np.atleast_1d(np.asarray(bound, dtype=float)),
                                       np.atleast_1d(np.asarray(exact, dtype=float)))
    out = np.zeros(bound.shape)
    nz = exact != 0
    out[nz] = (bound[nz] - exact[nz]) / exact[nz]
    # a nonzero bound on a zero-probability point has unbounded relative error
    zero_bad = ~nz & (bound != 0)
    out[zero_bad] = np.copysign(np.inf, bound[zero_bad])
    return out


def summarize(method: str, errors: np.ndarray) -> GridSummary:
    mags = np.sort(np.abs(np.asarray(errors, dtype=float)))
    avg = math.fsum(mags.tolist()) / len(mags) if len(mags) else 0.0
    worst = float(mags[-1]) if len(mags) else 0.0
    return GridSummary(method, 100.0 * avg, 100.0 * worst, len(mags))


def grid4() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All 11^4 assignments, first coordinate outermost."""
    d = np.array(GRID_VALUES)
    mesh = np.meshgrid(d, d, d, d, indexing="ij")
    return tuple(m.ravel() for m in mesh)  # type: ignore[return-value]


def _ior(*ps):
    miss = 1.0
    for p in ps:
        miss = miss * (1.0 - p)
    return 1.0 - miss


# ---------------------------------------------------------------- ex71


def rho_min(q: float) -> float:
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly between 0 and 1")
    return max(-q / (1 - q), -(1 + q * q - 2 * q) / (q - q * q))


def pab_from_rho(rho: float, q: float) -> float:
    return rho * (q - q * q) + q * q


def ex71(p: float, q: float, rhos: Sequence[float] | None = None) -> list[CorrelationPoint]:
    """Exact and symmetric-optimal bounds for (x|A)(x|B) and xA | xB vs. correlation."""
    lo = rho_min(q)
    if rhos is None:
        rhos = [float(r) for r in np.linspace(lo, 1.0, DEFAULT_RHO_STEPS)]
    rows = []
    for rho in rhos:
        if rho < lo - 1e-12 or rho > 1 + 1e-12:
            raise ValueError(f"rho={rho} outside [{lo}, 1] for q={q}")
        pab = pab_from_rho(rho, q)

        def cnf(pp):
            return 2 * pp * q + pp * pp * (1 - 2 * q) + (1 - pp) ** 2 * pab

        def dnf(pp):
            return 2 * pp * q - pp * pp * pab

        rows.append(CorrelationPoint(
            "CNF", p, q, rho, pab, p + (1 - p) * pab, cnf(math.sqrt(p)), cnf(p)))
        rows.append(CorrelationPoint(
            "DNF", p, q, rho, pab, 2 * p * q - p * pab, dnf(p), dnf(1 - math.sqrt(1 - p))))
    return rows


# ---------------------------------------------------------------- ex72 / ex73


def path4_exact(p1, p2, q1, q2):
    return _ior(p1, p2) * q1 + (1 - q1) * p2 * q2


MODEL_UPPERS = {
    "U1": lambda p1, p2, q1, q2: _ior(p1 * q1, p2),
    "U2": lambda p1, p2, q1, q2: _ior(q1, p2 * q2),
    "U3": lambda p1, p2, q1, q2: _ior(_ior(p1, p2) * q1, q2),
    "U4": lambda p1, p2, q1, q2: _ior(p1, p2 * _ior(q1, q2)),
}
MODEL_LOWERS = {
    "L1": lambda p1, p2, q1, q2: _ior(p1, p2) * q1,
    "L2": lambda p1, p2, q1, q2: p2 * _ior(q1, q2),
    "L3": lambda p1, p2, q1, q2: _ior(p1 * q1, p2 * q2),
}


def dnf_dissociation_x2(p1, a, b, q1, q2):
    """(x1 | x2'1) y1 | x2'2 y2 with P[x2'1]=a, P[x2'2]=b."""
    return _ior(_ior(p1, a) * q1, b * q2)


def dnf_dissociation_y1(p1, p2, c, d, q2):
    """x1 y1'1 | x2 (y1'2 | y2) with P[y1'1]=c, P[y1'2]=d."""
    return _ior(p1 * c, p2 * _ior(d, q2))


def cnf_dissociation_x2(p1, a, b, q1, q2):
    """(x1 | x2'1)(y1 | x2'2)(y1 | y2)."""
    return _ior(p1, a) * _ior(q1, b * q2)


def cnf_dissociation_y1(p1, p2, c, d, q2):
    """(x1 | x2)(y1'1 | x2)(y1'2 | y2)."""
    return _ior(p2, p1 * c) * _ior(d, q2)


def _disjunctive_lowers(p):
    s = 1 - np.sqrt(1 - p)
    return [(p, np.zeros_like(p)), (s, s), (np.zeros_like(p), p)]


def _conjunctive_uppers(p):
    s = np.sqrt(p)
    return [(p, np.ones_like(p)), (s, s), (np.ones_like(p), p)]


@dataclass
class GridResult:
    columns: dict[str, np.ndarray]
    summaries: list[GridSummary]

    def summary(self, method: str) -> GridSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)


def disjunctive_bounds(p1, p2, q1, q2) -> dict[str, np.ndarray]:
    """Exact value, best model bounds and best disjunctive dissociation bounds."""
    exact = path4_exact(p1, p2, q1, q2)
    ups = [f(p1, p2, q1, q2) for f in MODEL_UPPERS.values()]
    lows = [f(p1, p2, q1, q2) for f in MODEL_LOWERS.values()]
    d_up = [dnf_dissociation_x2(p1, p2, p2, q1, q2), dnf_dissociation_y1(p1, p2, q1, q1, q2)]
    d_low = [dnf_dissociation_x2(p1, a, b, q1, q2) for a, b in _disjunctive_lowers(p2)]
    d_low += [dnf_dissociation_y1(p1, p2, c, d, q2) for c, d in _disjunctive_lowers(q1)]
    return {
        "exact": exact,
        "model_upper": np.min(ups, axis=0),
        "model_lower": np.max(lows, axis=0),
        "diss_upper": np.min(d_up, axis=0),
        "diss_lower": np.max(d_low, axis=0),
    }


def conjunctive_bounds(p1, p2, q1, q2) -> dict[str, np.ndarray]:
    ups = [cnf_dissociation_x2(p1, a, b, q1, q2) for a, b in _conjunctive_uppers(p2)]
    ups += [cnf_dissociation_y1(p1, p2, c, d, q2) for c, d in _conjunctive_uppers(q1)]
    lows = [cnf_dissociation_x2(p1, p2, p2, q1, q2), cnf_dissociation_y1(p1, p2, q1, q1, q2)]
    return {"conj_upper": np.min(ups, axis=0), "conj_lower": np.max(lows, axis=0)}


def _grid_probmaps(p1, p2, q1, q2) -> list[dict[str, float]]:
    return [
        {"x1": a, "x2": b, "y1": c, "y2": d}
        for a, b, c, d in zip(p1.tolist(), p2.tolist(), q1.tolist(), q2.tolist())
    ]


def ex72_grid() -> GridResult:
    p1, p2, q1, q2 = grid4()
    cols = {"p1": p1, "p2": p2, "q1": q1, "q2": q2}
    cols.update(disjunctive_bounds(p1, p2, q1, q2))
    exact = cols["exact"]
    summaries = [
        summarize("dissociation_upper", relative_error(cols["diss_upper"], exact)),
        summarize("model_upper", relative_error(cols["model_upper"], exact)),
        summarize("dissociation_lower", relative_error(cols["diss_lower"], exact)),
        summarize("model_lower", relative_error(cols["model_lower"], exact)),
    ]
    return GridResult(cols, summaries)


def ex73_grid() -> GridResult:
    """Conjunctive dissociations of the CNF twin, compared with the disjunctive ones."""
    p1, p2, q1, q2 = grid4()
    cols = {"p1": p1, "p2": p2, "q1": q1, "q2": q2}
    cols.update(disjunctive_bounds(p1, p2, q1, q2))
    cols.update(conjunctive_bounds(p1, p2, q1, q2))
    # the CNF's probability straight from the oracle, independent of the closed form
    cols["exact_cnf"] = brute_force_probs(parse_formula(PATH4_CNF), _grid_probmaps(p1, p2, q1, q2))
    exact = cols["exact"]
    summaries = [
        summarize("conjunctive_upper", relative_error(cols["conj_upper"], exact)),
        summarize("disjunctive_upper", relative_error(cols["diss_upper"], exact)),
        summarize("conjunctive_lower", relative_error(cols["conj_lower"], exact)),
        summarize("disjunctive_lower", relative_error(cols["diss_lower"], exact)),
    ]
    return GridResult(cols, summaries)


# ---------------------------------------------------------------- ex74


@dataclass(frozen=True)
class SeriesRow:
    n: int
    p: float
    exact: float
    upper: float
    lower: float


@dataclass(frozen=True)
class BipartiteRow(SeriesRow):
    limit: float


def path_coefficients(p: float) -> tuple[float, float, float]:
    q = 1 - p
    a = q * (1 + p)
    b = -p * p * q * q
    c = p * p * (p * q * q + (2 - p) * (1 - p * q))
    return a, b, c


def path_exact(n: int, p: float) -> float:
    """P[path formula of size n] with every variable at p, via the affine recurrence."""
    if n < 1:
        raise ValueError("n must be at least 1")
    p1, p2 = p * p, 3 * p * p - 2 * p ** 3
    if n == 1:
        return p1
    if n == 2:
        return p2
    a, b, c = path_coefficients(p)
    step = np.array([[a, b, c], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    state = np.linalg.matrix_power(step, n - 2) @ np.array([p2, p1, 1.0])
    return float(state[0])


def path_exact_series(n_max: int, p: float) -> list[float]:
    """p_1 .. p_n_max by direct iteration."""
    a, b, c = path_coefficients(p)
    out = [p * p, 3 * p * p - 2 * p ** 3]
    while len(out) < n_max:
        out.append(a * out[-1] + b * out[-2] + c)
    return out[:n_max]


def path_dissociated(n: int, p: float, pp: float) -> float:
    """Probability of the path formula with x1..x(n-1) split in two copies at pp."""
    if n == 1:
        return p * p
    q, qq = 1 - p, 1 - pp
    return 1 - (1 - p * pp) * (1 - p * (1 - qq * qq)) ** (n - 2) * (1 - p * (1 - q * qq))


@lru_cache(maxsize=None)
def validate_path_recurrence(n_max: int = 6, ps: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)) -> bool:
    """Compare the recurrence with the oracle before trusting it; raises on drift."""
    for n in range(1, n_max + 1):
        f = path_formula(n)
        for p in ps:
            oracle = brute_force_prob(f, {v: p for v in f.vars})
            if abs(oracle - path_exact(n, p)) > 1e-9:
                raise AssertionError(f"path recurrence disagrees with oracle at n={n}, p={p}")
    return True


def bisect_probability(fn, target: float) -> float:
    """p in [0, 1] with fn(p) = target for increasing fn."""
    lo, hi = 0.0, 1.0
    for _ in range(BISECT_MAX_ITER):
        mid = (lo + hi) / 2
        val = fn(mid)
        if abs(val - target) <= BISECT_TOL:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    raise BisectionError(f"no p within {BISECT_TOL} of {target} after {BISECT_MAX_ITER} steps")


def ex74(p: float | None = None, r: float | None = None, ns: Sequence[int] = DEFAULT_N74) -> list[SeriesRow]:
    """Path formulas: exact vs symmetric upper (p'=p) and lower (p'=1-sqrt(1-p)) bounds.

    Give either a fixed ``p`` or a target ``r`` for the exact probability.
    """
    if (p is None) == (r is None):
        raise ValueError("give exactly one of p and r")
    if any(n < 1 for n in ns):
        raise ValueError("n must be at least 1")
    validate_path_recurrence()
    rows = []
    for n in sorted(set(ns)):
        pn = p if r is None else bisect_probability(lambda t: path_exact(n, t), r)
        rows.append(SeriesRow(
            n, pn, path_exact(n, pn),
            path_dissociated(n, pn, pn),
            path_dissociated(n, pn, 1 - math.sqrt(1 - pn)),
        ))
    return rows


# ---------------------------------------------------------------- ex75


def bipartite_exact(n: int, p: float) -> float:
    return (1 - (1 - p) ** n) ** 2


def bipartite_dissociated(n: int, p: float, pp: float) -> float:
    return 1 - (1 - p * (1 - (1 - pp) ** n)) ** n


def bipartite_limit(r: float) -> float:
    s = math.sqrt(r)
    return 1 - (1 - s) ** s


def ex75(r: float = 0.5, ns: Sequence[int] = DEFAULT_N75) -> list[BipartiteRow]:
    """Complete bipartite formulas with p chosen so the exact probability stays r."""
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie strictly between 0 and 1")
    limit = bipartite_limit(r)
    rows = []
    for n in sorted(set(ns)):
        if n < 1:
            raise ValueError("n must be at least 1")
        p = 1 - (1 - math.sqrt(r)) ** (1 / n)
        rows.append(BipartiteRow(
            n, p, bipartite_exact(n, p),
            bipartite_dissociated(n, p, p),
            bipartite_dissociated(n, p, 1 - (1 - p) ** (1 / n)),
            limit,
        ))
    return rows


# ---------------------------------------------------------------- CSV


def _num(x) -> str:
    return repr(float(x))


def write_rows_csv(rows: Sequence, path: str | Path) -> None:
    """Dataclass rows to CSV, header from the field names."""
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in fields(rows[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, float) else v for v in (getattr(row, n) for n in names)])


def write_summary_csv(summaries: Sequence[GridSummary], path: str | Path) -> None:
    write_rows_csv(summaries, path)


def write_points_csv(result: GridResult, path: str | Path, columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in zip(*(result.columns[c].tolist() for c in columns)):
            w.writerow([_num(v) for v in row])


EX72_POINT_COLUMNS = ("p1", "p2", "q1", "q2", "exact", "diss_upper", "model_upper", "diss_lower", "model_lower")
EX73_POINT_COLUMNS = ("p1", "p2", "q1", "q2", "exact", "conj_upper", "diss_upper", "conj_lower", "diss_lower")
