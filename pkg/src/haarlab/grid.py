"""Dyadic grid on [0,1)^d, step functions, and the fast Wilson-Haar transform.

Layout conventions used everywhere in the package:

* cells are stored row-major with coordinate 0 slowest, so a level-``l``
  cube with coords ``(k_0, ..., k_{d-1})`` has flat index
  ``sum(k_i * 2**(l*(d-1-i)))``;
* the ``2**d`` children of a cube are ordered by their offset bits, with
  coordinate 0 the most significant bit;
* per-level Haar data (coefficients, symbols, set averages) is an array of
  shape ``(..., M_l, K)`` with ``M_l = 2**(d*l)`` cubes and ``K = 2**d - 1``
  Wilson indices (column ``alpha - 1``).

All array kernels accept arbitrary leading batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence, Union

import numpy as np

MAX_DIM = 4
MAX_CELLS = 2**20


class GridError(ValueError):
    pass


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    d: int
    L: int

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and 1 <= self.d <= MAX_DIM):
            raise GridError(f"dimension must be an integer in [1, {MAX_DIM}], got {self.d!r}")
        if not (isinstance(self.L, (int, np.integer)) and self.L >= 1):
            raise GridError(f"depth must be a positive integer, got {self.L!r}")
        if 2 ** (self.d * self.L) > MAX_CELLS:
            raise GridError(f"grid 2^(dL) = 2^{self.d * self.L} exceeds the 2^20 cell cap")

    @property
    def n_cells(self) -> int:
        return 2 ** (self.d * self.L)

    @property
    def n_children(self) -> int:
        return 2**self.d

    @property
    def n_alpha(self) -> int:
        return 2**self.d - 1

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.d * self.L)

    def n_cubes(self, level: int) -> int:
        return 2 ** (self.d * level)

    def levels(self):
        """Levels that carry Haar functions, 0..L-1."""
        return range(self.L)


@dataclass(frozen=True)
class Cube:
    level: int
    coords: tuple

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.d * self.level)

    def index(self) -> int:
        """Row-major position among the cubes of its level."""
        idx = 0
        for k in self.coords:
            idx = (idx << self.level) | int(k)
        return idx

    @classmethod
    def from_index(cls, d: int, level: int, index: int) -> "Cube":
        mask = (1 << level) - 1
        coords = tuple((index >> (level * (d - 1 - i))) & mask for i in range(d))
        return cls(level, coords)

    @classmethod
    def root(cls, d: int) -> "Cube":
        return cls(0, (0,) * d)

    def child(self, offset: int) -> "Cube":
        d = self.d
        bits = [(offset >> (d - 1 - i)) & 1 for i in range(d)]
        return Cube(self.level + 1, tuple(2 * k + b for k, b in zip(self.coords, bits)))

    def contains(self, other: "Cube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((k >> shift) == c for k, c in zip(other.coords, self.coords))

    def interval(self):
        """Lower and upper corners as float tuples."""
        h = 2.0**-self.level
        return tuple(k * h for k in self.coords), tuple((k + 1) * h for k in self.coords)


def children(grid: GridSpec, cube: Cube) -> list:
    if cube.level >= grid.L:
        raise GridError("leaf cube has no children in grid")
    return [cube.child(c) for c in range(grid.n_children)]


def all_cubes(grid: GridSpec, level: int):
    return [Cube.from_index(grid.d, level, i) for i in range(grid.n_cubes(level))]


# --- Wilson tables -------------------------------------------------------
#
# Inside one cube, Wilson index alpha is node ``alpha`` of a binary heap whose
# leaves 2**d .. 2**(d+1)-1 are the children (leaf 2**d + c is child offset c).
# E^1 is the subtree of 2*alpha, E^2 the subtree of 2*alpha + 1.


@dataclass(frozen=True)
class AlphaIndex:
    alpha: int
    depth: int  # j, with alpha = 2**j + int(path)
    path: tuple  # bits of the tree path, length j
    lo: int  # child-offset range [lo, hi) covered by E_alpha
    hi: int

    @property
    def mid(self) -> int:
        return (self.lo + self.hi) // 2

    @property
    def relative_measure(self) -> float:
        """|E_alpha| / |I|."""
        return 2.0**-self.depth


def alpha_index(d: int, alpha: int) -> AlphaIndex:
    if not 1 <= alpha <= 2**d - 1:
        raise GridError(f"alpha must lie in [1, {2**d - 1}], got {alpha}")
    j = int(alpha).bit_length() - 1
    p = alpha - 2**j
    path = tuple((p >> (j - 1 - i)) & 1 for i in range(j))
    width = 2 ** (d - j)
    return AlphaIndex(int(alpha), j, path, p * width, (p + 1) * width)


@dataclass(frozen=True)
class WilsonTables:
    """Constant per-dimension matrices acting on the children axis."""

    d: int
    sign: np.ndarray  # (K, 2^d): -1 on E1, +1 on E2, 0 outside
    set_avg: np.ndarray  # (K, 2^d): averaging weights over E
    half_avg: np.ndarray  # (2, K, 2^d): averaging weights over E1, E2
    rel_measure: np.ndarray  # (K,): |E_alpha| / |I|
    depth: np.ndarray  # (K,)


@lru_cache(maxsize=None)
def wilson_tables(d: int) -> WilsonTables:
    K, C = 2**d - 1, 2**d
    sign = np.zeros((K, C))
    set_avg = np.zeros((K, C))
    half_avg = np.zeros((2, K, C))
    rel = np.zeros(K)
    depth = np.zeros(K, dtype=int)
    for a in range(1, K + 1):
        ai = alpha_index(d, a)
        n = ai.hi - ai.lo
        sign[a - 1, ai.lo : ai.mid] = -1.0
        sign[a - 1, ai.mid : ai.hi] = 1.0
        set_avg[a - 1, ai.lo : ai.hi] = 1.0 / n
        half_avg[0, a - 1, ai.lo : ai.mid] = 2.0 / n
        half_avg[1, a - 1, ai.mid : ai.hi] = 2.0 / n
        rel[a - 1] = ai.relative_measure
        depth[a - 1] = ai.depth
    for arr in (sign, set_avg, half_avg, rel, depth):
        arr.setflags(write=False)
    return WilsonTables(d, sign, set_avg, half_avg, rel, depth)


def set_measures(grid: GridSpec, level: int) -> np.ndarray:
    """|E_{alpha,I}| for every alpha at the given level, shape (K,)."""
    return wilson_tables(grid.d).rel_measure * 2.0 ** (-grid.d * level)


def haar_scale(grid: GridSpec, level: int) -> np.ndarray:
    """Unweighted Haar value magnitude 1/sqrt(|E_{alpha,I}|), shape (K,)."""
    return 1.0 / np.sqrt(set_measures(grid, level))


# --- reshaping between a level array and the children view ----------------


def to_children(grid: GridSpec, arr: np.ndarray, level: int) -> np.ndarray:
    """(..., M_{level+1}) -> (..., M_level, 2^d)."""
    d = grid.d
    lead = arr.shape[:-1]
    n = 2**level
    x = arr.reshape(lead + (n, 2) * d)
    nb = len(lead)
    outer = [nb + 2 * i for i in range(d)]
    inner = [nb + 2 * i + 1 for i in range(d)]
    x = x.transpose(tuple(range(nb)) + tuple(outer) + tuple(inner))
    return x.reshape(lead + (n**d, 2**d))


def from_children(grid: GridSpec, arr: np.ndarray, level: int) -> np.ndarray:
    """(..., M_level, 2^d) -> (..., M_{level+1})."""
    d = grid.d
    lead = arr.shape[:-2]
    n = 2**level
    x = arr.reshape(lead + (n,) * d + (2,) * d)
    nb = len(lead)
    order = []
    for i in range(d):
        order += [nb + i, nb + d + i]
    x = x.transpose(tuple(range(nb)) + tuple(order))
    return x.reshape(lead + ((2 * n) ** d,))


# --- StepFunction ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepFunction:
    grid: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (self.grid.n_cells,):
            raise GridError(
                f"expected {self.grid.n_cells} cell values for d={self.grid.d}, L={self.grid.L}, "
                f"got shape {cells.shape}"
            )
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "StepFunction":
        return cls(grid, np.full(grid.n_cells, float(value)))

    @classmethod
    def from_callable(cls, grid: GridSpec, fn) -> "StepFunction":
        """Sample ``fn`` at cell centers; ``fn`` receives an (N, d) array."""
        return cls(grid, fn(cell_centers(grid)))

    def integral(self) -> float:
        return float(self.cells.sum() * self.grid.cell_measure)

    def mean(self) -> float:
        return self.integral()

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self)))

    def _check(self, other: "StepFunction"):
        if other.grid != self.grid:
            raise GridError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, StepFunction):
            self._check(other)
            return StepFunction(self.grid, self.cells + other.cells)
        return StepFunction(self.grid, self.cells + other)

    def __sub__(self, other):
        if isinstance(other, StepFunction):
            self._check(other)
            return StepFunction(self.grid, self.cells - other.cells)
        return StepFunction(self.grid, self.cells - other)

    def __mul__(self, other):
        if isinstance(other, StepFunction):
            self._check(other)
            return StepFunction(self.grid, self.cells * other.cells)
        return StepFunction(self.grid, self.cells * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return StepFunction(self.grid, -self.cells)

    def __truediv__(self, other):
        if isinstance(other, StepFunction):
            self._check(other)
            return StepFunction(self.grid, self.cells / other.cells)
        return StepFunction(self.grid, self.cells / other)

    def __pow__(self, p):
        return StepFunction(self.grid, self.cells**p)


def cell_coords(grid: GridSpec) -> np.ndarray:
    """(N, d) integer coordinates of each cell in index order."""
    n = 2**grid.L
    axes = np.indices((n,) * grid.d).reshape(grid.d, -1)
    return axes.T.copy()


def cell_centers(grid: GridSpec) -> np.ndarray:
    return (cell_coords(grid) + 0.5) * 2.0**-grid.L


def cube_cell_mask(grid: GridSpec, cube: Cube, offsets: Sequence[int] | None = None) -> np.ndarray:
    """Boolean mask of the cells inside ``cube`` (or inside the listed children)."""
    k = cell_coords(grid)
    if offsets is None:
        shift = grid.L - cube.level
        return np.all((k >> shift) == np.array(cube.coords), axis=1)
    mask = np.zeros(grid.n_cells, dtype=bool)
    for c in offsets:
        mask |= cube_cell_mask(grid, cube.child(c))
    return mask


def inner_product(f: StepFunction, g: StepFunction) -> float:
    f._check(g)
    return float(np.dot(f.cells, g.cells) * f.grid.cell_measure)


def weighted_inner_product(f: StepFunction, g: StepFunction, w: StepFunction) -> float:
    f._check(g)
    f._check(w)
    if np.any(w.cells <= 0):
        raise WeightError("weight must be positive")
    return float(np.sum(f.cells * g.cells * w.cells) * f.grid.cell_measure)


# --- cube sums and the transform -----------------------------------------


def _ordered_child_sum(children_view: np.ndarray) -> np.ndarray:
    # fixed lexicographic accumulation order, for bit reproducibility
    acc = children_view[..., 0].copy()
    for c in range(1, children_view.shape[-1]):
        acc += children_view[..., c]
    return acc


def cube_averages(grid: GridSpec, cells: np.ndarray):
    """Averages over every cube, bottom-up. Returns (levels, visits).

    ``levels[l]`` has shape (..., M_l); ``levels[L]`` is ``cells`` itself.
    ``visits`` counts cube-level child reads (instrumentation for cost tests).
    """
    cells = np.asarray(cells, dtype=float)
    out = [None] * (grid.L + 1)
    out[grid.L] = cells
    visits = 0
    inv = 1.0 / grid.n_children
    for level in range(grid.L - 1, -1, -1):
        ch = to_children(grid, out[level + 1], level)
        out[level] = _ordered_child_sum(ch) * inv
        visits += ch.shape[-2] * ch.shape[-1]
    return out, visits


@dataclass(eq=False)
class CubeSumCache:
    """Every cube average and every Wilson-set average of one function.

    Averages rather than integrals are stored; integral = average * measure,
    and the measures are powers of two so the two are interchangeable exactly.
    """

    grid: GridSpec
    cube_avg: list  # cube_avg[l]: (..., M_l) for l = 0..L
    set_avg: list  # set_avg[l]: (..., M_l, K) averages over E_{alpha,I}
    half_avg: list  # half_avg[l]: (..., 2, M_l, K) averages over E^1, E^2
    coeffs: list  # coeffs[l]: (..., M_l, K) unweighted Haar coefficients
    visits: int = 0

    @classmethod
    def build(cls, f: Union[StepFunction, np.ndarray], grid: GridSpec | None = None) -> "CubeSumCache":
        if isinstance(f, StepFunction):
            grid, cells = f.grid, f.cells
        else:
            cells = np.asarray(f, dtype=float)
        tab = wilson_tables(grid.d)
        cube_avg, visits = cube_averages(grid, cells)
        set_avg, half_avg, coeffs = [], [], []
        child_measure_rel = 2.0**-grid.d
        for level in grid.levels():
            ch = to_children(grid, cube_avg[level + 1], level)
            set_avg.append(ch @ tab.set_avg.T)
            half_avg.append(np.stack([ch @ tab.half_avg[0].T, ch @ tab.half_avg[1].T], axis=-3))
            # <f, h> = sum_c |child| * avg_c * h(child), h = sign / sqrt|E|
            scale = haar_scale(grid, level) * (child_measure_rel * 2.0 ** (-grid.d * level))
            coeffs.append((ch @ tab.sign.T) * scale)
            visits += ch.shape[-2] * ch.shape[-1]
        return cls(grid, cube_avg, set_avg, half_avg, coeffs, visits)

    def mean(self):
        return self.cube_avg[0][..., 0]

    def cube_integral(self, level: int):
        return self.cube_avg[level] * 2.0 ** (-self.grid.d * level)

    def set_integral(self, level: int):
        return self.set_avg[level] * set_measures(self.grid, level)


@dataclass(eq=False)
class HaarSpectrum:
    """Global mean plus the coefficients <f, h_I^alpha> for levels 0..L-1."""

    grid: GridSpec
    mean: Union[float, np.ndarray]
    coeffs: list = field(default_factory=list)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "HaarSpectrum":
        return cls(grid, 0.0, [np.zeros((grid.n_cubes(l), grid.n_alpha)) for l in grid.levels()])

    def coeff(self, cube: Cube, alpha: int) -> float:
        return float(self.coeffs[cube.level][..., cube.index(), alpha - 1])

    def set_coeff(self, cube: Cube, alpha: int, value: float):
        self.coeffs[cube.level][..., cube.index(), alpha - 1] = value

    def flat(self) -> np.ndarray:
        """Orthonormal coordinates: [mean, level-0 coeffs, level-1 coeffs, ...]."""
        mean = np.asarray(self.mean, dtype=float)
        parts = [mean[..., None]]
        for c in self.coeffs:
            parts.append(c.reshape(c.shape[:-2] + (-1,)))
        return np.concatenate(parts, axis=-1)

    @classmethod
    def from_flat(cls, grid: GridSpec, vec: np.ndarray) -> "HaarSpectrum":
        vec = np.asarray(vec, dtype=float)
        lead = vec.shape[:-1]
        coeffs, pos = [], 1
        for l in grid.levels():
            n = grid.n_cubes(l) * grid.n_alpha
            coeffs.append(vec[..., pos : pos + n].reshape(lead + (grid.n_cubes(l), grid.n_alpha)))
            pos += n
        return cls(grid, vec[..., 0], coeffs)

    def energy(self):
        return np.asarray(self.mean) ** 2 + sum((c**2).sum(axis=(-2, -1)) for c in self.coeffs)


def analyze_cells(grid: GridSpec, cells: np.ndarray) -> HaarSpectrum:
    cache = CubeSumCache.build(cells, grid)
    return HaarSpectrum(grid, cache.mean(), cache.coeffs)


def analyze(f: StepFunction) -> HaarSpectrum:
    """Haar spectrum via bottom-up cube sums; O(N 2^d) work."""
    return analyze_cells(f.grid, f.cells)


def synthesize_cells(grid: GridSpec, mean, coeffs: Sequence[np.ndarray]) -> np.ndarray:
    """Inverse transform on raw arrays; returns cell values (..., N)."""
    tab = wilson_tables(grid.d)
    mean = np.asarray(mean, dtype=float)
    lead = np.broadcast_shapes(mean.shape, *(c.shape[:-2] for c in coeffs))
    avg = np.broadcast_to(mean, lead)[..., None].astype(float)
    for level in grid.levels():
        # child average = parent average + sum_alpha c_alpha h_alpha(child)
        c = np.asarray(coeffs[level]) * haar_scale(grid, level)
        ch = avg[..., :, None] + c @ tab.sign
        avg = from_children(grid, ch, level)
    return avg


def synthesize(spec: HaarSpectrum) -> StepFunction:
    return StepFunction(spec.grid, synthesize_cells(spec.grid, spec.mean, spec.coeffs))


def synthesize_flat(grid: GridSpec, vec: np.ndarray) -> np.ndarray:
    s = HaarSpectrum.from_flat(grid, vec)
    return synthesize_cells(grid, s.mean, s.coeffs)


def average(f: StepFunction, region, cache: CubeSumCache | None = None) -> float:
    """Mean of ``f`` over a Cube, a WilsonSet or a WilsonHalf."""
    from .wilson import WilsonHalf, WilsonSet

    cache = cache or CubeSumCache.build(f)
    if isinstance(region, Cube):
        return float(cache.cube_avg[region.level][..., region.index()])
    if isinstance(region, WilsonSet):
        return float(cache.set_avg[region.cube.level][..., region.cube.index(), region.alpha - 1])
    if isinstance(region, WilsonHalf):
        s = region.wset
        return float(cache.half_avg[s.cube.level][..., region.half - 1, s.cube.index(), s.alpha - 1])
    raise TypeError(f"cannot average over {type(region).__name__}")


# --- file format ------------------------------------------------------------


def write_step_function(f: StepFunction, path) -> None:
    lines = [f"{f.grid.d} {f.grid.L}"]
    lines += [repr(float(v)) for v in f.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_step_function(path) -> StepFunction:
    path = Path(path)
    text = path.read_text().split("\n")
    try:
        d, L = (int(t) for t in text[0].split())
        grid = GridSpec(d, L)
        values = [float(t) for t in text[1:] if t.strip()]
    except (ValueError, IndexError) as exc:
        raise GridError(f"{path}: malformed step-function file ({exc})") from None
    if len(values) != grid.n_cells:
        raise GridError(f"{path}: expected {grid.n_cells} cell values, found {len(values)}")
    if not np.all(np.isfinite(values)):
        raise GridError(f"{path}: non-finite cell value")
    return StepFunction(grid, np.array(values))
