"""Hypothesis strategies shared by the property tests."""

from hypothesis import strategies as st

from probbound.formula import conj, disj, negate, var

NAMES = ("a", "b", "c", "d", "e", "f")


def formulas(names=NAMES, monotone=False, max_leaves=10):
    leaf = st.sampled_from(names).map(var)
    if not monotone:
        leaf = leaf | leaf.map(negate)

    def extend(children):
        pair = st.lists(children, min_size=2, max_size=3)
        return pair.map(lambda cs: conj(*cs)) | pair.map(lambda cs: disj(*cs))

    return st.recursive(leaf, extend, max_leaves=max_leaves)


@st.composite
def read_once_formulas(draw, names=NAMES):
    """Monotone formulas using each variable at most once."""
    pool = list(draw(st.permutations(names)))[: draw(st.integers(1, len(names)))]

    def build(vs):
        if len(vs) == 1:
            return var(vs[0])
        cut = draw(st.integers(1, len(vs) - 1))
        gate = draw(st.sampled_from((conj, disj)))
        return gate(build(vs[:cut]), build(vs[cut:]))

    return build(pool)


def probmaps(names=NAMES):
    return st.fixed_dictionaries(
        {n: st.floats(0.0, 1.0, allow_nan=False) for n in names}
    )


def monotone_clause_sets(names=NAMES, max_clauses=5):
    clause = st.frozensets(st.sampled_from(names), min_size=1, max_size=3)
    return st.lists(clause, min_size=1, max_size=max_clauses)
