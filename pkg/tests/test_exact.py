import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import enumerate_prob, exact_half
from probbound.exact import (
    BudgetExceededError,
    TooManyVariablesError,
    ZeroProbabilityConditionError,
    brute_force_prob,
    brute_force_probs,
    cofactor_table,
    conditional_prob,
    is_read_once,
    prob_by_y_expansion,
    readonce_factorize,
    readonce_prob,
    shannon_prob,
    tree_prob,
    truth_table,
    world_weights,
)
from probbound.formula import conj, disj, parse_formula, to_normal_form, var
from strategies import formulas, probmaps, read_once_formulas

PHI = parse_formula("x1 z1 y1 | x2 z2 y1 | x2 z3 y2")
P4 = parse_formula("x1 y1 | x2 y1 | x2 y2")


def same_function(f, g):
    order = sorted(f.vars | g.vars)
    return (truth_table(f, order) == truth_table(g, order)).all()


# frozen reference values, each re-derived here by plain enumeration
def test_frozen_values_at_one_half():
    assert exact_half(PHI) == Fraction(39, 128)
    assert exact_half(P4) == Fraction(1, 2)
    half = {v: 0.5 for v in PHI.vars}
    assert brute_force_prob(PHI, half) == pytest.approx(39 / 128, abs=1e-12)
    assert shannon_prob(PHI, half) == pytest.approx(39 / 128, abs=1e-12)
    assert brute_force_prob(P4, {v: 0.5 for v in P4.vars}) == pytest.approx(0.5, abs=1e-12)


def test_truth_table_bit_order():
    # the first variable of the order is the least significant bit
    t = truth_table(parse_formula("a !b"), ["a", "b"])
    assert t.tolist() == [False, True, False, False]


def test_world_weights():
    w = world_weights([0.2, 0.7])
    assert np.allclose(w, [0.8 * 0.3, 0.2 * 0.3, 0.8 * 0.7, 0.2 * 0.7])
    assert math.isclose(w.sum(), 1.0)


def test_cofactor_table_shape():
    t = cofactor_table(P4, ["y1", "y2"], ["x1", "x2"])
    assert t.shape == (4, 4)
    # y1 = y2 = 0 kills every clause
    assert not t[0].any()
    # y1 = 1, y2 = 0 leaves x1 | x2
    assert t[1].tolist() == [False, True, True, True]


@settings(max_examples=150, deadline=None)
@given(formulas(), probmaps())
def test_three_routes_agree(f, p):
    ref = enumerate_prob(f, p)
    assert brute_force_prob(f, p) == pytest.approx(ref, abs=1e-12)
    assert float(shannon_prob(f, p)) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(formulas(), st.lists(probmaps(), min_size=1, max_size=5))
def test_batched_oracle(f, maps):
    got = brute_force_probs(f, maps)
    assert got == pytest.approx([brute_force_prob(f, m) for m in maps], abs=1e-12)


def test_chunked_oracle_matches_shannon():
    f = disj(*(conj(var(f"a{i}"), var(f"b{i}"), var(f"a{(i + 1) % 9}")) for i in range(9)))
    assert len(f.vars) == 18
    p = {v: 0.1 + 0.04 * i for i, v in enumerate(sorted(f.vars))}
    assert brute_force_prob(f, p) == pytest.approx(shannon_prob(f, p), abs=1e-12)


def test_oracle_limit():
    f = disj(*(var(f"v{i}") for i in range(30)))
    with pytest.raises(TooManyVariablesError):
        brute_force_prob(f, {v: 0.5 for v in f.vars})
    # independent components: Shannon has no trouble
    assert shannon_prob(f, {v: 0.5 for v in f.vars}) == pytest.approx(1 - 0.5**30)


def test_shannon_budget():
    f = disj(*(conj(var(f"a{i}"), var(f"a{j}")) for i in range(12) for j in range(i + 1, 12)))
    with pytest.raises(BudgetExceededError):
        shannon_prob(f, {v: 0.5 for v in f.vars}, budget=5)


def test_shannon_on_arrays():
    p = {v: np.array([0.5, 0.2]) for v in PHI.vars}
    got = shannon_prob(PHI, p)
    assert got[0] == pytest.approx(39 / 128)
    assert got[1] == pytest.approx(brute_force_prob(PHI, {v: 0.2 for v in PHI.vars}))


# ---------------------------------------------------------------- read-once


def test_p4_is_not_read_once():
    assert readonce_factorize(to_normal_form(P4)) is None
    assert readonce_factorize(to_normal_form(PHI)) is None


def test_factorize_examples():
    t = readonce_factorize(to_normal_form(parse_formula("x1 y1 | x1 y2 | x2 y1 | x2 y2")))
    assert t == parse_formula("(x1 | x2)(y1 | y2)")
    t = readonce_factorize(to_normal_form(parse_formula("(x | a)(x | b)")))
    assert is_read_once(t) and same_function(t, parse_formula("x | a b"))


@settings(max_examples=150, deadline=None)
@given(read_once_formulas(), probmaps())
def test_factorize_recovers_read_once(f, p):
    for nf in (to_normal_form(f),):
        t = readonce_factorize(nf)
        assert t is not None and is_read_once(t)
        assert same_function(t, f)
        assert readonce_prob(t, p) == pytest.approx(enumerate_prob(f, p), abs=1e-12)


def test_tree_prob_counts_repeated_leaves_as_copies():
    tree = parse_formula("(x1 z1 | x2 z2) y1 | x2 y2 z3")
    assert not is_read_once(tree)
    assert tree_prob(tree, {v: 0.5 for v in tree.vars}) == pytest.approx(0.31640625, abs=1e-12)
    with pytest.raises(ValueError):
        readonce_prob(tree, {v: 0.5 for v in tree.vars})


# ---------------------------------------------------------------- conditioning


def test_conditional_prob():
    f = parse_formula("x | y")
    p = {"x": 0.5, "y": 0.5}
    assert conditional_prob("x", f, p) == pytest.approx(0.5 / 0.75)
    with pytest.raises(ZeroProbabilityConditionError):
        conditional_prob("x", f, {"x": 0.0, "y": 0.0})


@settings(max_examples=60, deadline=None)
@given(formulas(names=("a", "b", "c", "d")), probmaps(("a", "b", "c", "d")), st.data())
def test_y_expansion_matches_oracle(f, p, data):
    names = sorted(f.vars)
    ys = [v for v in names if data.draw(st.booleans())]
    xs = [v for v in names if v not in ys]
    got = prob_by_y_expansion(f, {v: p[v] for v in xs}, {v: p[v] for v in ys})
    assert got == pytest.approx(enumerate_prob(f, p), abs=1e-12)


def test_y_expansion_errors():
    with pytest.raises(ValueError):
        prob_by_y_expansion(PHI, {"x1": 0.5}, {"x1": 0.5})
    with pytest.raises(ValueError):
        prob_by_y_expansion(PHI, {"x1": 0.5}, {"y1": 0.5})
