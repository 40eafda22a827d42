import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracle import enumerate_prob
from probbound.dissociation import (
    BoundAssignment,
    Direction,
    DissociationSpec,
    Kind,
    NotReadOnceError,
    Style,
    bound_pipeline,
    classify,
    compensation_assignment,
    covered_sets,
    covers,
    dissociate,
    eager_dissociate,
    is_non_degenerate,
    model_degenerate_assignment,
    oblivious_assignment,
    occurrence_kind,
    relax,
    satisfies_condition,
    verify_dissociation_bound,
    verify_oblivious_bound,
)
from probbound.formula import conj, disj, evaluate, occurrence_counts, parse_formula
from strategies import NAMES, formulas, probmaps

PHI = parse_formula("x1 z1 y1 | x2 z2 y1 | x2 z3 y2")
HALF = {v: 0.5 for v in PHI.vars}
DIRECTIONS = (Direction.UPPER, Direction.LOWER)


# ---------------------------------------------------------------- dissociate


def test_dissociate_renames_by_cell():
    f = parse_formula("x a | x b | x c")
    fp, spec = dissociate(f, "x", [[0, 2], [1]])
    assert spec.copies == {"x": ("x'1", "x'2")}
    assert spec.cells == {"x": ((0, 2), (1,))}
    assert spec.theta == {"x'1": "x", "x'2": "x"}
    assert occurrence_counts(fp) == {"x'1": 2, "x'2": 1, "a": 1, "b": 1, "c": 1}
    assert spec.d() == 2 and spec.is_unary


@pytest.mark.parametrize("cells", [[[0], [0, 1]], [[0]], [[0], [], [1]], [[0], [2]]])
def test_dissociate_rejects_bad_partitions(cells):
    with pytest.raises(ValueError):
        dissociate(parse_formula("x a | x b"), "x", cells)


def test_dissociate_rejects_absent_and_negated():
    with pytest.raises(ValueError):
        dissociate(parse_formula("a b"), "x", [[0]])
    with pytest.raises(ValueError):
        dissociate(parse_formula("!x a | x b"), "x", [[0], [1]])


def test_spec_validation():
    with pytest.raises(ValueError):
        DissociationSpec({"x'1": "x"}, {"x": ((0,), (1,))}, {"x": ("x'1",)})
    with pytest.raises(ValueError):
        DissociationSpec({"x'1": "x", "x'2": "y"}, {"x": ((0,), (1,))}, {"x": ("x'1", "x'2")})


def test_eager_dissociate_every_occurrence():
    fp, spec = eager_dissociate(PHI, ["x2", "y1", "x1"])
    assert max(occurrence_counts(fp).values()) == 1
    assert spec.copies["x1"] == ("x1",)
    assert set(spec.originals) == {"x1", "x2", "y1"}
    with pytest.raises(ValueError):
        eager_dissociate(PHI, ["nope"])


def test_merged_rejects_overlap():
    _, a = dissociate(PHI, "x2", [[0], [1]])
    with pytest.raises(ValueError):
        a.merged(a)


@settings(max_examples=100, deadline=None)
@given(formulas(monotone=True), st.data())
def test_dissociation_collapses_back(f, data):
    counts = occurrence_counts(f)
    x = data.draw(st.sampled_from(sorted(counts)))
    k = counts[x]
    labels = data.draw(st.lists(st.integers(0, k - 1), min_size=k, max_size=k))
    cells = [[i for i in range(k) if labels[i] == c] for c in sorted(set(labels))]
    fp, spec = dissociate(f, x, cells)
    # giving every copy the value of x recovers f
    names = sorted(f.vars)
    for world in range(1 << len(names)):
        w = {v: bool(world >> i & 1) for i, v in enumerate(names)}
        wp = {v: w.get(spec.theta.get(v, v)) for v in fp.vars}
        assert evaluate(fp, wp) == evaluate(f, w)


# ---------------------------------------------------------------- classification


def test_classify_examples():
    fp, spec = dissociate(parse_formula("(x | y1)(x | y2)(x | y3) y4"), "x", [[0], [1], [2]])
    k = classify(fp, spec)
    assert k.kind is Kind.CONJUNCTIVE and k.d == 3 and k.verified
    fp, spec = dissociate(parse_formula("x y1 | x y2 | x y3 | y4"), "x", [[0], [1], [2]])
    assert classify(fp, spec).kind is Kind.DISJUNCTIVE
    fp, spec = dissociate(parse_formula("x (y1 | x y2)"), "x", [[0], [1]])
    assert classify(fp, spec).kind is Kind.CONJUNCTIVE
    fp, spec = dissociate(parse_formula("(x | a)(x | b) | x c"), "x", [[0, 2], [1]])
    assert classify(fp, spec).kind is Kind.NEITHER


def test_classify_sees_through_expression_shape():
    # written as a DNF, but equal to (x'1 | c)(x'2 | d)
    f = parse_formula("x x | x d | c x | c d")
    fp, spec = dissociate(f, "x", [[0, 2], [1, 3]])
    k = classify(fp, spec)
    assert k.kind is Kind.CONJUNCTIVE and k.verified
    assert set(k.factors) == {parse_formula("c | x'1"), parse_formula("d | x'2")}


def test_classify_needs_unary_spec():
    fp, spec = eager_dissociate(PHI, ["x2", "y1"])
    with pytest.raises(ValueError):
        classify(fp, spec)


def test_covers():
    fp, spec = dissociate(parse_formula("(x | y1)(x | y2)(x | y3) y4"), "x", [[0], [1], [2]])
    got = covered_sets(fp, spec)
    assert got == {frozenset(s) for s in ([], [1], [2], [3], [1, 2], [1, 3], [2, 3], [1, 2, 3])}
    assert covers(fp, spec, [2, 3])
    fp, spec = dissociate(parse_formula("(x | y1)(x | y1)"), "x", [[0], [1]])
    assert classify(fp, spec).kind is Kind.CONJUNCTIVE
    assert not covers(fp, spec, [1])
    assert covers(fp, spec, [1, 2])
    assert not is_non_degenerate(fp, spec)


def test_occurrence_kind():
    assert occurrence_kind(PHI, "x2") is Kind.DISJUNCTIVE
    assert occurrence_kind(parse_formula("(x | a)(x | b) c"), "x") is Kind.CONJUNCTIVE
    assert occurrence_kind(parse_formula("(x a | b)(x c | d)"), "x") is Kind.CONJUNCTIVE
    assert occurrence_kind(parse_formula("x (a | x b)"), "x") is Kind.CONJUNCTIVE
    assert occurrence_kind(parse_formula("(x a | x b) c"), "x") is Kind.DISJUNCTIVE
    assert occurrence_kind(parse_formula("a | (b | x)(c | x)"), "x") is Kind.CONJUNCTIVE
    assert occurrence_kind(parse_formula("(x | a)(x | b) | x c"), "x") is Kind.NEITHER


# ---------------------------------------------------------------- assignments


@pytest.mark.parametrize("kind", [Kind.CONJUNCTIVE, Kind.DISJUNCTIVE])
@pytest.mark.parametrize("direction", DIRECTIONS)
@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_oblivious_assignment_meets_its_condition_tightly(kind, direction, p):
    a = oblivious_assignment(kind, direction, p, 3)
    assert a.style is Style.OPTIMAL_SYMMETRIC and len(a.probs) == 3
    assert satisfies_condition(kind, direction, p, a.probs, 1e-12)
    if kind is Kind.CONJUNCTIVE and direction is Direction.UPPER:
        assert math.prod(a.probs) == pytest.approx(p, abs=1e-12)
    elif kind is Kind.DISJUNCTIVE and direction is Direction.LOWER:
        assert math.prod(1 - q for q in a.probs) == pytest.approx(1 - p, abs=1e-12)
    else:
        assert a.probs == (p, p, p)


def test_weighted_assignment():
    a = oblivious_assignment(Kind.CONJUNCTIVE, Direction.UPPER, 0.25, 2, weights=[0.25, 0.75])
    assert a.style is Style.OPTIMAL_WEIGHTED
    assert a.probs == pytest.approx((0.25**0.25, 0.25**0.75))
    with pytest.raises(ValueError):
        oblivious_assignment(Kind.CONJUNCTIVE, Direction.UPPER, 0.25, 2, weights=[0.5, 0.6])
    with pytest.raises(ValueError):
        oblivious_assignment(Kind.CONJUNCTIVE, Direction.UPPER, 0.25, 2, weights=[1.0, 0.0])


def test_assignment_errors():
    with pytest.raises(ValueError):
        oblivious_assignment(Kind.NEITHER, Direction.UPPER, 0.5, 2)
    with pytest.raises(ValueError):
        oblivious_assignment(Kind.CONJUNCTIVE, Direction.UPPER, 1.5, 2)
    with pytest.raises(ValueError):
        oblivious_assignment(Kind.CONJUNCTIVE, Direction.UPPER, 0.5, 0)
    with pytest.raises(ValueError):
        BoundAssignment(Kind.CONJUNCTIVE, Direction.LOWER, 0.5, (0.6, 0.5), Style.OPTIMAL_SYMMETRIC)


def test_model_degenerate_assignment():
    up = model_degenerate_assignment(Kind.DISJUNCTIVE, Direction.UPPER, 0.4, 3)
    lo = model_degenerate_assignment(Kind.CONJUNCTIVE, Direction.LOWER, 0.4, 3)
    assert up.probs == (0.4, 1.0, 1.0) and lo.probs == (0.4, 0.0, 0.0)
    assert up.style is Style.MODEL_DEGENERATE


@pytest.mark.parametrize("kind", [Kind.CONJUNCTIVE, Kind.DISJUNCTIVE])
@pytest.mark.parametrize("direction", DIRECTIONS)
def test_condition_boundaries(kind, direction):
    p = 0.4
    good = oblivious_assignment(kind, direction, p, 2).probs
    assert satisfies_condition(kind, direction, p, good)
    # raising a copy breaks a lower bound, lowering one breaks an upper bound
    step = 0.01 if direction is Direction.LOWER else -0.01
    worse = [good[0] + step, good[1]]
    assert not satisfies_condition(kind, direction, p, worse)


# ---------------------------------------------------------------- soundness


@st.composite
def unary_dissociations(draw):
    f = draw(formulas(names=NAMES[:5], monotone=True, max_leaves=8))
    counts = occurrence_counts(f)
    repeated = sorted(v for v, c in counts.items() if c >= 2)
    assume(repeated)
    x = draw(st.sampled_from(repeated))
    k = counts[x]
    labels = draw(st.lists(st.integers(0, k - 1), min_size=k, max_size=k))
    cells = [[i for i in range(k) if labels[i] == c] for c in sorted(set(labels))]
    fp, spec = dissociate(f, x, cells)
    kind = classify(fp, spec)
    assume(kind.kind is not Kind.NEITHER)
    return f, fp, spec, x, kind


def _copy_probs(p, spec, x, probs):
    out = {v: p[v] for v in p if v != x}
    out.update(zip(spec.copies[x], probs))
    return out


@settings(max_examples=200, deadline=None)
@given(unary_dissociations(), probmaps(NAMES[:5]))
def test_oblivious_bounds_hold(case, p):
    f, fp, spec, x, kind = case
    exact = enumerate_prob(f, p)
    for direction in DIRECTIONS:
        for a in (oblivious_assignment(kind, direction, p[x], spec.d()),
                  model_degenerate_assignment(kind, direction, p[x], spec.d())):
            assert verify_oblivious_bound(f, fp, spec, p[x], a)
            bound = enumerate_prob(fp, _copy_probs(p, spec, x, a.probs))
            if direction is Direction.UPPER:
                assert bound >= exact - 1e-12
            else:
                assert bound <= exact + 1e-12


@settings(max_examples=100, deadline=None)
@given(unary_dissociations(), st.floats(0.05, 0.95), st.data())
def test_random_weights_still_bound(case, px, data):
    f, fp, spec, x, kind = case
    raw = data.draw(st.lists(st.floats(0.05, 1.0), min_size=spec.d(), max_size=spec.d()))
    weights = [w / math.fsum(raw) for w in raw]
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    assume(weights[-1] > 0)
    for direction in DIRECTIONS:
        a = oblivious_assignment(kind, direction, px, spec.d(), weights)
        assert verify_oblivious_bound(f, fp, spec, px, a)


def test_verify_rejects_wrong_direction():
    f = parse_formula("x y1 | x y2")
    fp, spec = dissociate(f, "x", [[0], [1]])
    assert verify_oblivious_bound(f, fp, spec, 0.5, [0.5, 0.5], Direction.UPPER)
    assert not verify_oblivious_bound(f, fp, spec, 0.5, [0.5, 0.5], Direction.LOWER)
    with pytest.raises(ValueError):
        verify_oblivious_bound(f, fp, spec, 0.5, [0.5, 0.5])
    with pytest.raises(ValueError):
        verify_oblivious_bound(f, fp, spec, 0.5, [0.5], Direction.UPPER)


def test_verify_multi_variable():
    fp, spec = eager_dissociate(PHI, ["x2", "y1"])
    probs = dict(HALF)
    for x in ("x2", "y1"):
        probs.update({c: 0.5 for c in spec.copies[x]})
    assert verify_dissociation_bound(PHI, fp, spec, HALF, probs, Direction.UPPER)
    assert not verify_dissociation_bound(PHI, fp, spec, HALF, probs, Direction.LOWER)


# ---------------------------------------------------------------- compensation


@settings(max_examples=100, deadline=None)
@given(
    formulas(names=("a", "b", "x"), monotone=True, max_leaves=5),
    formulas(names=("c", "d", "x"), monotone=True, max_leaves=5),
    probmaps(("a", "b", "c", "d", "x")),
    st.sampled_from([Kind.CONJUNCTIVE, Kind.DISJUNCTIVE]),
)
def test_compensation_is_exact(f1, f2, p, mode):
    assume("x" in f1.vars and "x" in f2.vars)
    assume(0.01 < p["x"] < 0.99)
    whole = conj(f1, f2) if mode is Kind.CONJUNCTIVE else disj(f1, f2)
    exact = enumerate_prob(whole, p)
    try:
        q1, q2 = compensation_assignment(f1, f2, "x", mode, p)
    except ValueError:
        return  # conditioning event of probability zero
    joined, a, b = relax(f1, f2, "x", mode)
    probs = {**{v: p[v] for v in p if v != "x"}, a: q1, b: q2}
    assert enumerate_prob(joined, probs) == pytest.approx(exact, abs=1e-9)


def test_compensation_errors():
    with pytest.raises(ValueError):
        compensation_assignment(parse_formula("a"), parse_formula("x"), "x", Kind.CONJUNCTIVE, {"a": 0.5, "x": 0.5})
    with pytest.raises(ValueError):
        compensation_assignment(parse_formula("x a"), parse_formula("x"), "x", Kind.NEITHER, {"a": 0.5, "x": 0.5})


def test_relax_names_fresh_copies():
    joined, a, b = relax(parse_formula("x a"), parse_formula("x b"), "x", Kind.DISJUNCTIVE)
    assert a != b and "x" not in joined.vars
    assert str(joined) == f"{a} a | {b} b"


# ---------------------------------------------------------------- pipeline


def test_pipeline_frozen_values():
    # oracle-derived: enumerate the dissociated formula at the assigned probabilities
    up = bound_pipeline(PHI, HALF, ["x2"], Direction.UPPER)
    lo = bound_pipeline(PHI, HALF, ["x2"], Direction.LOWER)
    assert up.bound == pytest.approx(0.31640625, abs=1e-12)
    assert lo.bound == pytest.approx(0.239966630879, abs=1e-12)
    c = 1 - math.sqrt(0.5)
    assert lo.rows[0].assignment == pytest.approx((c, c))
    assert enumerate_prob(lo.f_prime, {**HALF, "x2'1": c, "x2'2": c}) == pytest.approx(lo.bound, abs=1e-12)
    assert lo.bound <= 39 / 128 <= up.bound
    assert up.condition == "single-variable"


def test_pipeline_reports():
    rep = bound_pipeline(PHI, HALF, ["y1"], "upper")
    text = rep.to_text()
    assert text.startswith("upper bound 0.31640625 (single-variable)")
    assert "y1: k=2 d=2 disjunctive" in text
    lines = rep.to_csv().splitlines()
    assert lines[0] == "variable,occurrences,copies,kind,assignment,bound"
    assert lines[1].startswith("y1,2,2,disjunctive,0.5 0.5,")


def test_pipeline_read_once_input():
    f = parse_formula("(a | b) c")
    rep = bound_pipeline(f, {"a": 0.5, "b": 0.5, "c": 0.5}, [], "lower")
    assert rep.condition == "read-once" and rep.bound == pytest.approx(0.375)


def test_pipeline_not_read_once():
    with pytest.raises(NotReadOnceError):
        bound_pipeline(PHI, HALF, ["x1"], Direction.UPPER)


def test_pipeline_nested_occurrences():
    f = parse_formula("(x | a)(x | b) | x c")
    with pytest.raises(ValueError):
        bound_pipeline(f, {v: 0.5 for v in f.vars}, ["x"], Direction.UPPER)


def test_pipeline_several_variables_brackets():
    f = parse_formula("(a | b)(a | c)(d | b)")
    p = {"a": 0.3, "b": 0.6, "c": 0.7, "d": 0.2}
    exact = enumerate_prob(f, p)
    lo = bound_pipeline(f, p, ["a", "b"], Direction.LOWER)
    up = bound_pipeline(f, p, ["a", "b"], Direction.UPPER)
    assert lo.bound <= exact + 1e-12 <= up.bound + 2e-12
    assert lo.condition == "sufficient-condition"


@settings(max_examples=100, deadline=None)
@given(formulas(names=NAMES[:5], monotone=True, max_leaves=8), probmaps(NAMES[:5]))
def test_pipeline_full_dissociation_brackets(f, p):
    counts = occurrence_counts(f)
    xs = [v for v, c in counts.items() if c >= 2]
    try:
        lo = bound_pipeline(f, p, xs, Direction.LOWER)
        up = bound_pipeline(f, p, xs, Direction.UPPER)
    except ValueError:
        return  # nested occurrences need an explicit partition
    exact = enumerate_prob(f, p)
    assert lo.bound <= exact + 1e-12
    assert up.bound >= exact - 1e-12
