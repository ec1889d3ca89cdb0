"""Paraproducts, Haar multipliers, the multiplication decomposition and the
nine compositions of the conjugated multiplier."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import (
    Cube,
    CubeSumCache,
    GridError,
    GridSpec,
    StepFunction,
    WeightError,
    analyze_cells,
    set_measures,
    synthesize_cells,
    wilson_tables,
    from_children,
)
from .operators import LinearOperator, materialize  # noqa: F401  (re-export)

KINDS = ((0, 1), (1, 0), (0, 0))


@dataclass(eq=False)
class SymbolSequence:
    """Real values indexed by (cube, alpha); one (M_l, K) array per level."""

    grid: GridSpec
    values: list

    def __post_init__(self):
        vals = []
        for l, v in zip(self.grid.levels(), self.values):
            v = np.asarray(v, dtype=float)
            if v.shape != (self.grid.n_cubes(l), self.grid.n_alpha):
                raise GridError(f"symbol level {l} has shape {v.shape}")
            vals.append(v)
        if len(vals) != self.grid.L:
            raise GridError(f"expected {self.grid.L} symbol levels, got {len(vals)}")
        self.values = vals

    @property
    def sup_norm(self) -> float:
        return max(float(np.abs(v).max()) for v in self.values)

    def __getitem__(self, key) -> float:
        cube, alpha = key
        return float(self.values[cube.level][cube.index(), alpha - 1])

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SymbolSequence":
        return cls(grid, [np.zeros((grid.n_cubes(l), grid.n_alpha)) for l in grid.levels()])

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "SymbolSequence":
        return cls(grid, [np.full((grid.n_cubes(l), grid.n_alpha), float(value)) for l in grid.levels()])

    @classmethod
    def from_entries(cls, grid: GridSpec, entries: dict) -> "SymbolSequence":
        """Sparse construction; missing entries are 0."""
        s = cls.zeros(grid)
        for (cube, alpha), v in entries.items():
            if cube.level >= grid.L:
                raise GridError("leaf cube has no children in grid")
            s.values[cube.level][cube.index(), alpha - 1] = v
        return s

    @classmethod
    def random_signs(cls, grid: GridSpec, seed: int) -> "SymbolSequence":
        rng = np.random.default_rng(seed)
        return cls(grid, [rng.choice([-1.0, 1.0], size=(grid.n_cubes(l), grid.n_alpha)) for l in grid.levels()])

    def map(self, fn) -> "SymbolSequence":
        return SymbolSequence(self.grid, [fn(v) for v in self.values])

    def __mul__(self, other: "SymbolSequence") -> "SymbolSequence":
        return SymbolSequence(self.grid, [a * b for a, b in zip(self.values, other.values)])


def write_symbol(sym: SymbolSequence, path) -> None:
    g = sym.grid
    lines = [f"{g.d} {g.L}"]
    for l in g.levels():
        for m in range(g.n_cubes(l)):
            coords = " ".join(str(k) for k in Cube.from_index(g.d, l, m).coords)
            for a in range(1, g.n_alpha + 1):
                v = sym.values[l][m, a - 1]
                if v != 0.0:
                    lines.append(f"{l} {coords} {a} {float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_symbol(path, grid: GridSpec | None = None) -> SymbolSequence:
    """Parse a symbol file. A lone ``constant v`` line needs ``grid``."""
    path = Path(path)
    lines = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise GridError(f"{path}: empty symbol file")
    try:
        if lines[0][0] == "constant":
            if grid is None:
                raise GridError(f"{path}: constant symbol needs a grid")
            return SymbolSequence.constant(grid, float(lines[0][1]))
        d, L = int(lines[0][0]), int(lines[0][1])
        file_grid = GridSpec(d, L)
        if grid is not None and grid != file_grid:
            raise GridError(f"{path}: symbol grid {file_grid} does not match {grid}")
        entries = {}
        for row in lines[1:]:
            level = int(row[0])
            coords = tuple(int(t) for t in row[1 : 1 + d])
            alpha, value = int(row[1 + d]), float(row[2 + d])
            if not (0 <= level < L and all(0 <= k < 2**level for k in coords) and 1 <= alpha < 2**d):
                raise GridError(f"{path}: entry out of range: {' '.join(row)}")
            entries[(Cube(level, coords), alpha)] = value
    except (ValueError, IndexError) as exc:
        raise GridError(f"{path}: malformed symbol file ({exc})") from None
    return SymbolSequence.from_entries(file_grid, entries)


# --- kernels on cell arrays ---------------------------------------------------


def indicator_synthesis(grid: GridSpec, coeffs) -> np.ndarray:
    """Cells of sum_{I,alpha} c_{I,alpha} h^1_{E_{alpha,I}}."""
    tab = wilson_tables(grid.d)
    member = (tab.sign != 0).astype(float)
    lead = np.broadcast_shapes(*(np.shape(c)[:-2] for c in coeffs))
    acc = np.zeros(lead + (1,))
    for level in grid.levels():
        dens = np.asarray(coeffs[level]) / set_measures(grid, level)
        ch = acc[..., :, None] + dens @ member
        acc = from_children(grid, ch, level)
    return acc


def _check_grid(a: SymbolSequence, grid: GridSpec):
    if a.grid != grid:
        raise GridError(f"grid mismatch: symbol on {a.grid}, function on {grid}")


def _p00(grid, a, x):
    c = CubeSumCache.build(x, grid)
    return synthesize_cells(grid, 0.0, [s * v for s, v in zip(a.values, c.coeffs)])


def _p01(grid, a, x):
    c = CubeSumCache.build(x, grid)
    return synthesize_cells(grid, 0.0, [s * v for s, v in zip(a.values, c.set_avg)])


def _p10(grid, a, x):
    s = analyze_cells(grid, x)
    return indicator_synthesis(grid, [sv * v for sv, v in zip(a.values, s.coeffs)])


_KERNELS = {(0, 0): _p00, (0, 1): _p01, (1, 0): _p10}
_ADJOINT_KIND = {(0, 0): (0, 0), (0, 1): (1, 0), (1, 0): (0, 1)}


def apply_paraproduct(kind, a: SymbolSequence, f):
    """P_a^{kind} f for kind in (0,0), (0,1), (1,0)."""
    kind = tuple(kind)
    if kind not in _KERNELS:
        raise ValueError(f"unknown paraproduct kind {kind}")
    if isinstance(f, StepFunction):
        _check_grid(a, f.grid)
        return StepFunction(f.grid, _KERNELS[kind](f.grid, a, f.cells))
    return _KERNELS[kind](a.grid, a, np.asarray(f, dtype=float))


def paraproduct_operator(kind, a: SymbolSequence, label=None) -> LinearOperator:
    kind = tuple(kind)
    grid, n = a.grid, a.grid.n_cells
    fwd, adj = _KERNELS[kind], _KERNELS[_ADJOINT_KIND[kind]]
    return LinearOperator(
        lambda x: fwd(grid, a, x),
        lambda y: adj(grid, a, y),
        (n, n),
        label or ("P", kind),
        grid,
    )


def apply_multiplier(sigma: SymbolSequence, f):
    """T_sigma f = sum sigma_{I,alpha} f_hat(I,alpha) h_I^alpha."""
    return apply_paraproduct((0, 0), sigma, f)


def multiplier_operator(sigma: SymbolSequence) -> LinearOperator:
    return paraproduct_operator((0, 0), sigma, ("T",))


def decompose_multiplication(g: StepFunction):
    """Symbols (<g>_{E_{alpha,I}}, g_hat(I,alpha)) of the decomposition of M_g."""
    c = CubeSumCache.build(g)
    return SymbolSequence(g.grid, c.set_avg), SymbolSequence(g.grid, c.coeffs)


def multiplication_pieces(g: StepFunction, f: StepFunction) -> dict:
    """The three paraproduct pieces of g*f plus the rank-one mean term.

    On [0,1)^d the pieces sum to g*f exactly once <g><f>1 is added.
    """
    avg_sym, hat_sym = decompose_multiplication(g)
    return {
        (0, 0): apply_paraproduct((0, 0), avg_sym, f),
        (0, 1): apply_paraproduct((0, 1), hat_sym, f),
        (1, 0): apply_paraproduct((1, 0), hat_sym, f),
        "mean": StepFunction.constant(f.grid, g.mean() * f.mean()),
    }


def product_formula_coefficient(f: StepFunction, g: StepFunction, J: Cube, beta: int) -> float:
    """Haar coefficient of f*g at (J, beta) from the support-restricted product formula."""
    grid = f.grid
    if J.level >= grid.L:
        raise GridError("leaf cube has no children in grid")
    cf, cg = CubeSumCache.build(f), CubeSumCache.build(g)
    tab = wilson_tables(grid.d)
    j = J.index()
    scale_J = 1.0 / np.sqrt(set_measures(grid, J.level)[beta - 1])
    total = 0.0
    # same cube: alpha strictly below beta in the heap, on the E1 or E2 side
    for alpha in range(2 * beta, grid.n_alpha + 1):
        a, path_side = alpha, None
        while a > beta:
            path_side, a = a, a // 2
        if a != beta:
            continue
        sgn = 1.0 if path_side == 2 * beta + 1 else -1.0
        total += cf.coeffs[J.level][j, alpha - 1] * cg.coeffs[J.level][j, alpha - 1] * sgn * scale_J
    # strictly smaller cubes inside a child of J that lies in E_{beta,J}
    for level in range(J.level + 1, grid.L):
        coords = np.indices((2**level,) * grid.d).reshape(grid.d, -1).T
        shift = level - J.level - 1
        ch = coords >> shift
        inside = np.all((ch >> 1) == np.array(J.coords), axis=1)
        child = np.zeros(len(coords), dtype=int)
        for i in range(grid.d):
            child = (child << 1) | (ch[:, i] & 1)
        sgn = tab.sign[beta - 1, child] * inside
        prod = (cf.coeffs[level] * cg.coeffs[level]).sum(axis=1)
        total += float(np.dot(sgn, prod)) * scale_J
    fh = cf.coeffs[J.level][j, beta - 1]
    gh = cg.coeffs[J.level][j, beta - 1]
    return float(total + fh * cg.set_avg[J.level][j, beta - 1] + gh * cf.set_avg[J.level][j, beta - 1])


def product_formula_spectrum(f: StepFunction, g: StepFunction) -> list:
    """All Haar coefficients of f*g through the product formula, vectorized."""
    grid = f.grid
    cf, cg = CubeSumCache.build(f), CubeSumCache.build(g)
    diag = indicator_synthesis(grid, [a * b for a, b in zip(cf.coeffs, cg.coeffs)])
    first = CubeSumCache.build(diag, grid).coeffs
    return [
        t + fh * ga + gh * fa
        for t, fh, gh, fa, ga in zip(first, cf.coeffs, cg.coeffs, cf.set_avg, cg.set_avg)
    ]


# --- the nine-term resolution ---------------------------------------------------


def q_name(label) -> str:
    (e1, e2), (e3, e4) = label
    return f"q_{e1}{e2}_{e3}{e4}"


NINE_LABELS = tuple((left, right) for left in KINDS for right in KINDS)


@dataclass(eq=False)
class NineTermResolution:
    terms: dict  # label ((e1,e2),(e3,e4)) -> LinearOperator
    conjugated: LinearOperator
    sigma: SymbolSequence
    weight: StepFunction

    def named(self) -> dict:
        return {q_name(k): v for k, v in self.terms.items()}

    def total(self) -> LinearOperator:
        ops = list(self.terms.values())
        acc = ops[0]
        for op in ops[1:]:
            acc = acc + op
        return acc


def build_nine_term_resolution(sigma: SymbolSequence, w) -> NineTermResolution:
    """Q^{(e1,e2),(e3,e4)} = P^{(e1,e2)}_{w^{1/2}} T_sigma P^{(e3,e4)}_{w^{-1/2}}.

    The (0,1) and (1,0) factors use the Haar-coefficient symbol, (0,0) the
    Wilson-set average symbol.
    """
    w = getattr(w, "base", w)
    if np.any(w.cells <= 0):
        raise WeightError("weight must be positive")
    _check_grid(sigma, w.grid)
    half = StepFunction(w.grid, np.sqrt(w.cells))
    neg_half = StepFunction(w.grid, 1.0 / np.sqrt(w.cells))
    left_avg, left_hat = decompose_multiplication(half)
    right_avg, right_hat = decompose_multiplication(neg_half)
    T = multiplier_operator(sigma)

    def factor(kind, avg, hat, side):
        sym = avg if kind == (0, 0) else hat
        return paraproduct_operator(kind, sym, ("P", kind, side))

    terms = {}
    for left, right in NINE_LABELS:
        op = factor(left, left_avg, left_hat, "w^1/2") @ T @ factor(right, right_avg, right_hat, "w^-1/2")
        terms[(left, right)] = LinearOperator(op.apply_fn, op.adjoint_fn, op.shape, ("Q", left, right), w.grid)

    hv, nv = half.cells, neg_half.cells
    grid = w.grid

    def conj(x):
        return hv * _p00(grid, sigma, nv * x)

    def conj_adj(y):
        return nv * _p00(grid, sigma, hv * y)

    conjugated = LinearOperator(conj, conj_adj, T.shape, ("conjugated",), grid)
    return NineTermResolution(terms, conjugated, sigma, w)
