"""Upper and lower probability bounds by dissociating repeated variables."""

from .dissociation import (
    BoundAssignment,
    DissociationSpec,
    Direction,
    Kind,
    NotReadOnceError,
    bound_pipeline,
    classify,
    compensation_assignment,
    covered_sets,
    covers,
    dissociate,
    eager_dissociate,
    is_non_degenerate,
    oblivious_assignment,
    relax,
    verify_dissociation_bound,
    verify_oblivious_bound,
)
from .exact import (
    brute_force_prob,
    conditional_prob,
    readonce_factorize,
    readonce_prob,
    shannon_prob,
    tree_prob,
)
from .formula import (
    Formula,
    NormalForm,
    encode_disjoint_declaration,
    evaluate,
    parse_formula,
    to_normal_form,
    to_string,
)
from .lineage import lineage, load_db, parse_query, plan_eval, query_bounds
from .sql import emit_sql

__all__ = [name for name in dir() if not name.startswith("_")]
