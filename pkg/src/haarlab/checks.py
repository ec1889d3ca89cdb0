"""Exact identities of the construction, each returning a max discrepancy.

These are the oracles behind ``haarlab verify`` and the identity acceptance
suite. A case is one seeded (grid, weight, f, g, sigma) draw.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Cube, GridSpec, StepFunction, all_cubes, analyze, set_measures
from .paraproducts import (
    SymbolSequence,
    build_nine_term_resolution,
    multiplication_pieces,
    product_formula_spectrum,
)
from .weights import Weight
from .wilson import (
    build_wilson_sets,
    disbalanced_C_alternate,
    disbalanced_arrays,
    haar_matrix,
    lemma_violations,
    set_relation,
)

IDENTITY_TOL = 1e-10
# dense matrix checks stay at or below this cell count
DENSE_CHECK_CELLS = 1024


def max_level(d: int, cells: int = 4096) -> int:
    L = 1
    while 2 ** (d * (L + 1)) <= cells:
        L += 1
    return L


@dataclass(frozen=True)
class Case:
    grid: GridSpec
    w: Weight
    f: StepFunction
    g: StepFunction
    sigma: SymbolSequence
    seed: int


def make_case(d: int, seed: int, L: int | None = None) -> Case:
    rng = np.random.default_rng(seed)
    if L is None:
        L = 1 + seed % max_level(d)
    grid = GridSpec(d, L)
    n = grid.n_cells
    # log-normal weight with a heavy spot, so averages are far from constant
    logw = rng.normal(0.0, 1.0, n)
    logw[rng.integers(n)] += 4.0
    w = Weight(StepFunction(grid, np.exp(logw)), weight_id=f"case{seed}")
    f = StepFunction(grid, rng.standard_normal(n))
    g = StepFunction(grid, rng.standard_normal(n) + 0.5)
    sig = SymbolSequence(grid, [rng.uniform(-2, 2, (grid.n_cubes(l), grid.n_alpha)) for l in grid.levels()])
    return Case(grid, w, f, g, sig, seed)


def _rel(a, b) -> float:
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) / scale


def wilson_lemma_errors(d: int) -> list:
    """Properties (i)-(iv) for every alpha, beta pair of one cube (all cubes share the split)."""
    grid = GridSpec(d, 1)
    return lemma_violations(build_wilson_sets(grid, Cube.root(d)), d)


def global_laminarity_errors(grid: GridSpec) -> list:
    """Every pair of sets in the grid is nested, equal or disjoint."""
    sets = [s for l in grid.levels() for c in all_cubes(grid, l) for s in build_wilson_sets(grid, c)]
    bad = []
    for i, a in enumerate(sets):
        for b in sets[i + 1:]:
            if set_relation(grid, a, b) == "overlap":
                bad.append((a.cube, a.alpha, b.cube, b.alpha))
    return bad


def orthonormality_error(case: Case) -> float:
    """Gram matrices of the plain and the weighted Haar systems against the identity."""
    grid = case.grid
    H = haar_matrix(grid)
    G = (H * grid.cell_measure) @ H.T
    Hw = haar_matrix(grid, case.w.base)
    Gw = (Hw * (case.w.cells * grid.cell_measure)) @ Hw.T
    eye = np.eye(len(G))
    return max(float(np.max(np.abs(G - eye))), float(np.max(np.abs(Gw - eye))))


def indicator_matrix(grid: GridSpec) -> np.ndarray:
    """Rows h^1_E = 1_E / |E| in flat spectrum order, (N-1, N)."""
    H = haar_matrix(grid)
    rows = []
    k = 0
    for l in grid.levels():
        meas = set_measures(grid, l)
        n = grid.n_cubes(l) * grid.n_alpha
        block = (H[k:k + n] != 0).astype(float)
        rows.append(block / np.tile(meas, grid.n_cubes(l))[:, None])
        k += n
    return np.concatenate(rows, axis=0)


def disbalanced_error(case: Case) -> float:
    """h_J^beta = C h_J^{w,beta} + D h^1_E cellwise, plus the two closed forms of C."""
    grid = case.grid
    H = haar_matrix(grid)
    Hw = haar_matrix(grid, case.w.base)
    Cs, Ds = disbalanced_arrays(grid, case.w.cache("w"))
    alt = disbalanced_C_alternate(grid, case.w.cache("w"))
    forms = max(_rel(a / c, np.ones_like(c)) for a, c in zip(alt, Cs))
    C = np.concatenate([c.ravel() for c in Cs])
    D = np.concatenate([x.ravel() for x in Ds])
    rebuilt = C[:, None] * Hw + D[:, None] * indicator_matrix(grid)
    return max(_rel(rebuilt, H), forms)


def product_formula_error(case: Case) -> float:
    want = analyze(case.f * case.g).coeffs
    got = product_formula_spectrum(case.f, case.g)
    return max(_rel(a, b) for a, b in zip(got, want))


def multiplication_error(case: Case) -> float:
    parts = multiplication_pieces(case.g, case.f)
    total = parts[(0, 0)] + parts[(0, 1)] + parts[(1, 0)] + parts["mean"]
    return _rel(total.cells, (case.g * case.f).cells)


def nine_term_error(case: Case, n_probe: int = 4) -> float:
    res = build_nine_term_resolution(case.sigma, case.w)
    rng = np.random.default_rng(case.seed + 17)
    x = rng.standard_normal((n_probe, case.grid.n_cells))
    want = res.conjugated.apply(x)
    got = res.total().apply(x)
    return _rel(got, want)


CHECKS = {
    "orthonormality": orthonormality_error,
    "disbalanced": disbalanced_error,
    "product_formula": product_formula_error,
    "multiplication": multiplication_error,
    "nine_term": nine_term_error,
}
DENSE_CHECKS = ("orthonormality", "disbalanced")


@dataclass
class SuiteResult:
    max_errors: dict  # check -> max error over cases
    counts: dict  # check -> number of cases run
    failures: list  # (check, d, seed, error) or (check, d, message)

    @property
    def passed(self) -> bool:
        return not self.failures


def run_identity_suite(dims=(1, 2, 3), n_cases: int = 200, seed: int = 0, tol: float = IDENTITY_TOL,
                       L: int | None = None) -> SuiteResult:
    """Every identity on ``n_cases`` seeded cases per dimension.

    Grid depth cycles through every L with 2^{dL} <= 4096 unless ``L`` is
    given; the dense Gram-type checks redraw the case on a grid of at most
    DENSE_CHECK_CELLS cells.
    """
    errs, counts, fails = {}, {}, []
    for d in dims:
        for msg in wilson_lemma_errors(d):
            fails.append(("wilson_lemma", d, msg))
        counts["wilson_lemma"] = counts.get("wilson_lemma", 0) + 1
        lam_grid = GridSpec(d, min(2, max_level(d)))
        bad = global_laminarity_errors(lam_grid)
        if bad:
            fails.append(("laminarity", d, f"{len(bad)} overlapping pairs"))
        for i in range(n_cases):
            s = seed * 100003 + 1009 * d + i
            case = make_case(d, s, L)
            small = case
            if case.grid.n_cells > DENSE_CHECK_CELLS:
                small = make_case(d, s, 1 + s % max_level(d, DENSE_CHECK_CELLS))
            for name, fn in CHECKS.items():
                e = fn(small if name in DENSE_CHECKS else case)
                errs[name] = max(errs.get(name, 0.0), e)
                counts[name] = counts.get(name, 0) + 1
                if not e <= tol:
                    fails.append((name, d, s, e))
    return SuiteResult(errs, counts, fails)
