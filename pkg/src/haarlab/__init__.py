"""Dyadic Haar analysis on [0,1)^d with Wilson's laminar Haar system,
paraproducts, A2 weights and numerical audits of weighted bounds."""

from .grid import (
    Cube,
    CubeSumCache,
    GridError,
    GridSpec,
    HaarSpectrum,
    StepFunction,
    WeightError,
    all_cubes,
    analyze,
    average,
    children,
    inner_product,
    read_step_function,
    synthesize,
    weighted_inner_product,
    write_step_function,
)
from .wilson import (
    WilsonHalf,
    WilsonSet,
    build_wilson_sets,
    disbalanced_coeffs,
    haar_function,
    haar_matrix,
    haar_pointwise_product_fact,
)
from .operators import LinearOperator, MaterializeError, materialize
from .paraproducts import (
    NineTermResolution,
    SymbolSequence,
    apply_multiplier,
    apply_paraproduct,
    build_nine_term_resolution,
    decompose_multiplication,
    multiplication_pieces,
    product_formula_coefficient,
    read_symbol,
    write_symbol,
)
from .weights import Weight, WeightRecipe, a2_characteristic, a2_witness, corpus, generate
from .spectral import ConvergenceError, NormResult, generalized_max_rayleigh, operator_norm
from .audit import (
    AuditRecord,
    AuditReport,
    audit_lemma_sums,
    audit_weight,
    audit_weighted_haar_parseval,
    carleson_constants,
    exact_constant_checks,
    square_function_constants,
)
from .checks import run_identity_suite

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
