"""Wilson's laminar child-union pairs and the Haar systems built on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Cube,
    CubeSumCache,
    GridError,
    GridSpec,
    HaarSpectrum,
    StepFunction,
    WeightError,
    alpha_index,
    cube_cell_mask,
    from_children,
    haar_scale,
    inner_product,
    set_measures,
    wilson_tables,
)


@dataclass(frozen=True)
class WilsonSet:
    cube: Cube
    alpha: int
    E1: tuple  # child offsets
    E2: tuple

    @property
    def E(self) -> tuple:
        return tuple(sorted(self.E1 + self.E2))

    @property
    def measure(self) -> float:
        return len(self.E) * self.cube.measure / 2 ** self.cube.d

    def bitstrings(self):
        d = self.cube.d
        fmt = lambda c: format(c, f"0{d}b")
        return [fmt(c) for c in self.E1], [fmt(c) for c in self.E2]


@dataclass(frozen=True)
class WilsonHalf:
    wset: WilsonSet
    half: int  # 1 or 2


def build_wilson_sets(grid: GridSpec, cube: Cube) -> list:
    if cube.level >= grid.L:
        raise GridError("leaf cube has no children in grid")
    sets = []
    for a in range(1, grid.n_alpha + 1):
        ai = alpha_index(grid.d, a)
        sets.append(WilsonSet(cube, a, tuple(range(ai.lo, ai.mid)), tuple(range(ai.mid, ai.hi))))
    return sets


def lemma_violations(sets: list, d: int) -> list:
    """Check the four pair properties on one cube's sets; returns messages."""
    bad = []
    if len(sets) != 2**d - 1:
        bad.append(f"expected {2**d - 1} pairs, got {len(sets)}")
    full = set(range(2**d))
    for s in sets:
        e1, e2 = set(s.E1), set(s.E2)
        if len(e1) != len(e2):
            bad.append(f"alpha={s.alpha}: |E1| != |E2|")
        if not e1 or not e2 or not (e1 | e2) <= full:
            bad.append(f"alpha={s.alpha}: halves must be nonempty unions of children")
        if e1 & e2:
            bad.append(f"alpha={s.alpha}: halves intersect")
    for s in sets:
        for t in sets:
            if s.alpha == t.alpha:
                continue
            es, et = set(s.E), set(t.E)
            a = es <= set(t.E1) or es <= set(t.E2)
            b = et <= set(s.E1) or et <= set(s.E2)
            c = not (es & et)
            if not (a or b or c):
                bad.append(f"alpha={s.alpha}, beta={t.alpha}: not laminar")
    return bad


def wilson_set_mask(grid: GridSpec, wset: WilsonSet, half: int | None = None) -> np.ndarray:
    offsets = wset.E if half is None else (wset.E1 if half == 1 else wset.E2)
    return cube_cell_mask(grid, wset.cube, offsets)


def set_relation(grid: GridSpec, a: WilsonSet, b: WilsonSet) -> str:
    """'subset', 'superset', 'equal', 'disjoint' or 'overlap' (never for Wilson sets)."""
    ma, mb = wilson_set_mask(grid, a), wilson_set_mask(grid, b)
    inter = ma & mb
    if not inter.any():
        return "disjoint"
    if np.array_equal(ma, mb):
        return "equal"
    if np.array_equal(inter, ma):
        return "subset"
    if np.array_equal(inter, mb):
        return "superset"
    return "overlap"


def haar_function(grid: GridSpec, cube: Cube, alpha: int, w: StepFunction | None = None) -> StepFunction:
    """h_I^{w,alpha}; the unweighted h_I^alpha when ``w`` is None."""
    wset = build_wilson_sets(grid, cube)[alpha - 1]
    m1 = wilson_set_mask(grid, wset, 1)
    m2 = wilson_set_mask(grid, wset, 2)
    wc = np.ones(grid.n_cells) if w is None else w.cells
    w1 = wc[m1].sum() * grid.cell_measure
    w2 = wc[m2].sum() * grid.cell_measure
    if w1 <= 0 or w2 <= 0:
        raise WeightError("degenerate weighted Haar")
    out = np.zeros(grid.n_cells)
    norm = 1.0 / np.sqrt(w1 + w2)
    out[m2] = np.sqrt(w1 / w2) * norm
    out[m1] = -np.sqrt(w2 / w1) * norm
    return StepFunction(grid, out)


def indicator_average_function(grid: GridSpec, wset: WilsonSet) -> StepFunction:
    """h^1_E = 1_E / |E|."""
    return StepFunction(grid, wilson_set_mask(grid, wset) / wset.measure)


def weighted_haar_values(grid: GridSpec, wcache: CubeSumCache):
    """Values of every h_I^{w,alpha} on E^1 and E^2; lists of (M_l, K) arrays."""
    v1s, v2s = [], []
    for level in grid.levels():
        meas_half = set_measures(grid, level) / 2
        w1 = wcache.half_avg[level][..., 0, :, :] * meas_half
        w2 = wcache.half_avg[level][..., 1, :, :] * meas_half
        if np.any(w1 <= 0) or np.any(w2 <= 0):
            raise WeightError("degenerate weighted Haar")
        norm = 1.0 / np.sqrt(w1 + w2)
        v1s.append(-np.sqrt(w2 / w1) * norm)
        v2s.append(np.sqrt(w1 / w2) * norm)
    return v1s, v2s


def expand_to_cells(grid: GridSpec, arr: np.ndarray, level: int) -> np.ndarray:
    """Repeat per-cube values (..., M_level) down to cells (..., N)."""
    c = grid.n_children
    for l in range(level, grid.L):
        arr = from_children(grid, np.repeat(arr[..., None], c, axis=-1), l)
    return arr


def haar_matrix(grid: GridSpec, w: StepFunction | None = None) -> np.ndarray:
    """All (weighted) Haar functions as rows, in flat spectrum order, (N-1, N)."""
    tab = wilson_tables(grid.d)
    wcells = np.ones(grid.n_cells) if w is None else w.cells
    v1s, v2s = weighted_haar_values(grid, CubeSumCache.build(wcells, grid))
    rows = []
    neg = (tab.sign < 0).astype(float)
    pos = (tab.sign > 0).astype(float)
    for level in grid.levels():
        M, K = grid.n_cubes(level), grid.n_alpha
        # vals[m, a, c]: value of h_{m,a} on child c of cube m
        vals = v1s[level][:, :, None] * neg + v2s[level][:, :, None] * pos
        block = np.zeros((M, K, M, grid.n_children))
        idx = np.arange(M)
        block[idx, :, idx, :] = vals
        block = from_children(grid, block.reshape(M * K, M, grid.n_children), level)
        rows.append(expand_to_cells(grid, block, level + 1))
    return np.concatenate(rows, axis=0)


def weighted_haar_coeffs(grid: GridSpec, g: np.ndarray, w: StepFunction) -> list:
    """<g, h_I^{w,alpha}>_{L^2(w)} per level, (..., M_l, K)."""
    wcache = CubeSumCache.build(w)
    gw = CubeSumCache.build(np.asarray(g) * w.cells, grid)
    v1s, v2s = weighted_haar_values(grid, wcache)
    out = []
    for level in grid.levels():
        meas_half = set_measures(grid, level) / 2
        i1 = gw.half_avg[level][..., 0, :, :] * meas_half
        i2 = gw.half_avg[level][..., 1, :, :] * meas_half
        out.append(v1s[level] * i1 + v2s[level] * i2)
    return out


@dataclass(frozen=True)
class DisbalancedCoeffs:
    C: float
    D: float


def disbalanced_arrays(grid: GridSpec, wcache: CubeSumCache):
    """C_J(w,beta) and D_J(w,beta) for every (J, beta); lists of (M_l, K)."""
    Cs, Ds = [], []
    for level in grid.levels():
        e = wcache.set_avg[level]
        e1 = wcache.half_avg[level][..., 0, :, :]
        e2 = wcache.half_avg[level][..., 1, :, :]
        if np.any(e1 <= 0) or np.any(e2 <= 0):
            raise WeightError("degenerate weighted Haar")
        Cs.append(np.sqrt(e1 * e2 / e))
        Ds.append(wcache.coeffs[level] / e)
    return Cs, Ds


def disbalanced_coeffs(w: StepFunction, cube: Cube, beta: int) -> DisbalancedCoeffs:
    grid = w.grid
    if cube.level >= grid.L:
        raise GridError("leaf cube has no children in grid")
    Cs, Ds = disbalanced_arrays(grid, CubeSumCache.build(w))
    i = cube.index()
    return DisbalancedCoeffs(float(Cs[cube.level][i, beta - 1]), float(Ds[cube.level][i, beta - 1]))


def disbalanced_C_alternate(grid: GridSpec, wcache: CubeSumCache) -> list:
    """C via sqrt((<w>_E^2 - |E|^{-1} w_hat^2) / <w>_E), for cross-checking."""
    out = []
    for level in grid.levels():
        e = wcache.set_avg[level]
        wh = wcache.coeffs[level]
        out.append(np.sqrt((e**2 - wh**2 / set_measures(grid, level)) / e))
    return out


def _haar_value_on(grid: GridSpec, J: Cube, beta: int, inner: Cube) -> float:
    """Value of h_J^beta on a region inside one child of J (0 if outside E_{beta,J})."""
    shift = inner.level - J.level - 1
    child_coords = tuple(k >> shift for k in inner.coords)
    c = 0
    for k, p in zip(child_coords, J.coords):
        c = (c << 1) | (k - 2 * p)
    tab = wilson_tables(grid.d)
    return float(tab.sign[beta - 1, c] * haar_scale(grid, J.level)[beta - 1])


def strictly_nested(a: WilsonSet, b: WilsonSet) -> bool:
    """E_a strictly inside E_b."""
    if a.cube == b.cube:
        # heap ancestry: alpha in the subtree of beta
        x = a.alpha
        while x > b.alpha:
            x //= 2
        return x == b.alpha and a.alpha != b.alpha
    if not b.cube.contains(a.cube) or a.cube.level == b.cube.level:
        return False
    shift = a.cube.level - b.cube.level - 1
    c = 0
    for k, p in zip(a.cube.coords, b.cube.coords):
        c = (c << 1) | ((k >> shift) - 2 * p)
    return c in b.E


def haar_pointwise_product_fact(grid: GridSpec, I: Cube, alpha: int, J: Cube, beta: int) -> float:
    """Check h_I^alpha h_J^beta = <h_J^beta, h^1_{E_{alpha,I}}> h_I^alpha cellwise.

    Returns the max cellwise discrepancy.
    """
    a = build_wilson_sets(grid, I)[alpha - 1]
    b = build_wilson_sets(grid, J)[beta - 1]
    if not strictly_nested(a, b):
        raise GridError("sets not strictly nested")
    hI = haar_function(grid, I, alpha)
    hJ = haar_function(grid, J, beta)
    coef = inner_product(hJ, indicator_average_function(grid, a))
    return float(np.max(np.abs(hI.cells * hJ.cells - coef * hI.cells)))


def martingale_average(spec: HaarSpectrum, cube: Cube, alpha: int) -> float:
    """<f>_{E_{alpha,I}} rebuilt from the mean and the coefficients of strictly larger sets."""
    grid = spec.grid
    total = float(spec.mean)
    tab = wilson_tables(grid.d)
    # same cube: strict heap ancestors of alpha
    a = alpha
    while a > 1:
        parent = a // 2
        sgn = 1.0 if a == 2 * parent + 1 else -1.0
        total += spec.coeff(cube, parent) * sgn * haar_scale(grid, cube.level)[parent - 1]
        a = parent
    # strictly larger cubes: h_J^beta is constant on the child of J holding I
    for level in range(cube.level):
        J = Cube(level, tuple(k >> (cube.level - level) for k in cube.coords))
        for beta in range(1, grid.n_alpha + 1):
            v = _haar_value_on(grid, J, beta, cube)
            if v != 0.0:
                total += spec.coeff(J, beta) * v
    return total
