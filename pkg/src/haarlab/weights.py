"""A2 weights: families, the dyadic characteristic, and sweep corpora."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid import Cube, CubeSumCache, GridError, GridSpec, StepFunction, WeightError, cell_coords
from .wilson import expand_to_cells

FAMILIES = ("constant", "step", "power", "cascade")
# largest max(w)/min(w) a corpus weight may have
DYNAMIC_RANGE_CAP = 1e8
GENERATOR = "PCG64"


class Weight:
    """A positive step function with cached powers and cube-sum caches."""

    def __init__(self, base: StepFunction, recipe: "WeightRecipe | None" = None, weight_id: str = ""):
        if np.any(~np.isfinite(base.cells)) or np.any(base.cells <= 0):
            raise WeightError("weight must be positive")
        self.base = base
        self.recipe = recipe
        self.id = weight_id

    @property
    def grid(self) -> GridSpec:
        return self.base.grid

    @property
    def cells(self) -> np.ndarray:
        return self.base.cells

    @cached_property
    def w(self) -> StepFunction:
        return self.base

    @cached_property
    def inv(self) -> StepFunction:
        return StepFunction(self.grid, 1.0 / self.base.cells)

    @cached_property
    def sqrt(self) -> StepFunction:
        return StepFunction(self.grid, np.sqrt(self.base.cells))

    @cached_property
    def inv_sqrt(self) -> StepFunction:
        return StepFunction(self.grid, 1.0 / np.sqrt(self.base.cells))

    def power(self, name: str) -> StepFunction:
        return {"w": self.w, "inv": self.inv, "sqrt": self.sqrt, "inv_sqrt": self.inv_sqrt}[name]

    def cache(self, name: str = "w") -> CubeSumCache:
        key = "_cache_" + name
        if key not in self.__dict__:
            self.__dict__[key] = CubeSumCache.build(self.power(name))
        return self.__dict__[key]

    @cached_property
    def a2(self) -> float:
        return a2_characteristic(self)

    def dual(self) -> "Weight":
        """The weight w^{-1}, sharing nothing mutable with this one."""
        rid = f"{self.id}~dual" if self.id else ""
        return Weight(self.inv, self.recipe, rid)

    def scaled(self, c: float) -> "Weight":
        return Weight(self.base * c, self.recipe, self.id)


def _as_weight(w) -> Weight:
    if isinstance(w, Weight):
        return w
    return Weight(w)


def a2_profile(w) -> list:
    """<w>_I <w^{-1}>_I for every cube, one array per level 0..L."""
    w = _as_weight(w)
    cw, ci = w.cache("w"), w.cache("inv")
    return [a * b for a, b in zip(cw.cube_avg, ci.cube_avg)]


def a2_characteristic(w) -> float:
    """sup over all grid cubes (cells included) of <w>_I <w^{-1}>_I."""
    return float(max(p.max() for p in a2_profile(w)))


def a2_witness(w) -> tuple:
    """(value, Cube) attaining the characteristic; ties go to the coarsest, first cube."""
    w = _as_weight(w)
    best, cube = -1.0, None
    for level, p in enumerate(a2_profile(w)):
        i = int(np.argmax(p))
        if p[i] > best:
            best, cube = float(p[i]), Cube.from_index(w.grid.d, level, i)
    return best, cube


# --- recipes ----------------------------------------------------------------------


@dataclass(frozen=True)
class WeightRecipe:
    family: str
    d: int
    L: int
    params: tuple = field(default=())  # sorted (key, value) pairs

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise WeightError(f"unknown weight family {self.family!r}")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    @classmethod
    def make(cls, family: str, d: int, L: int, **params) -> "WeightRecipe":
        return cls(family, d, L, tuple(params.items()))

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    def serialize(self) -> str:
        parts = [f"family={self.family}", f"d={self.d}", f"L={self.L}"]
        parts += [f"{k}={v!r}" for k, v in self.params]
        return " ".join(parts)

    @classmethod
    def parse(cls, text: str) -> "WeightRecipe":
        kv = {}
        for tok in text.split():
            if "=" not in tok:
                raise WeightError(f"bad recipe token {tok!r}")
            k, v = tok.split("=", 1)
            kv[k] = v
        try:
            family, d, L = kv.pop("family"), int(kv.pop("d")), int(kv.pop("L"))
        except KeyError as exc:
            raise WeightError(f"recipe missing {exc}") from None
        params = {}
        for k, v in kv.items():
            if k in ("seed", "level", "k"):
                params[k] = int(v)
            elif k == "generator":
                params[k] = v.strip("'\"")
            else:
                params[k] = float(v)
        return cls.make(family, d, L, **params)


def _power_cells_1d(L: int, a: float) -> np.ndarray:
    # exact cell averages of x^a: h^a ((k+1)^{a+1} - k^{a+1}) / (a+1)
    n = 2**L
    b = a + 1.0
    k = np.arange(n, dtype=float)
    diff = np.empty(n)
    diff[0] = 1.0
    kk = k[1:]
    diff[1:] = np.exp(b * np.log(kk)) * np.expm1(b * np.log1p(1.0 / kk))
    return diff / b * (2.0**-L) ** a


def _power_cells(grid: GridSpec, a: float) -> np.ndarray:
    if grid.d == 1:
        return _power_cells_1d(grid.L, a)
    # one refinement level: average |x|_inf^a over the 2^d sub-cell centers
    fine = cell_coords(grid) * 2
    h = 2.0 ** -(grid.L + 1)
    total = np.zeros(grid.n_cells)
    for off in range(2**grid.d):
        bits = np.array([(off >> (grid.d - 1 - i)) & 1 for i in range(grid.d)])
        centers = (fine + bits + 0.5) * h
        total += np.max(centers, axis=1) ** a
    return total / 2**grid.d


def _cascade_log(grid: GridSpec, seed: int) -> np.ndarray:
    """Sum over ancestors (levels 1..L) of uniform(-1, 1) draws, per cell."""
    rng = np.random.default_rng(seed)
    acc = np.zeros(grid.n_cells)
    for level in range(1, grid.L + 1):
        u = rng.uniform(-1.0, 1.0, size=grid.n_cubes(level))
        acc += expand_to_cells(grid, u, level)
    return acc


def generate(recipe: WeightRecipe) -> Weight:
    grid = GridSpec(recipe.d, recipe.L)
    fam = recipe.family
    if fam == "constant":
        c = recipe.param("c", 1.0)
        if not c > 0:
            raise WeightError("constant weight needs c > 0")
        cells = np.full(grid.n_cells, float(c))
    elif fam == "step":
        t = recipe.param("t")
        level = recipe.param("level", 0)
        k = recipe.param("k", 0)
        if t is None or not t > 0:
            raise WeightError("step weight needs t > 0")
        if not (0 <= level < grid.L and 0 <= k < 2**level):
            raise WeightError(f"step jump cube (level={level}, k={k}) outside the grid")
        x0 = (k + 0.5) * 2.0**-level
        x = (cell_coords(grid)[:, 0] + 0.5) * 2.0**-grid.L
        cells = np.where(x >= x0, float(t), 1.0)
    elif fam == "power":
        a = recipe.param("a")
        lim = 1.0 if grid.d == 1 else float(grid.d)
        if a is None or not -lim < a < lim:
            raise WeightError(f"power exponent must lie in (-{lim:g}, {lim:g})")
        cells = _power_cells(grid, float(a))
    else:
        K = recipe.param("K")
        seed = recipe.param("seed", 0)
        if K is None or not K >= 1:
            raise WeightError("cascade weight needs K >= 1")
        cells = np.exp(math.log(K) * _cascade_log(grid, seed))
    return Weight(StepFunction(grid, cells), recipe)


# --- corpus --------------------------------------------------------------------------


def _bisect(fn, target, lo, hi, iters=80):
    # fn increasing on [lo, hi]; returns x with fn(x) ~ target
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _step_for(target):
    s = 4.0 * target - 2.0
    return 0.5 * (s + math.sqrt(max(s * s - 4.0, 0.0)))


def _recipe_for(family: str, d: int, L: int, target: float, i: int, seed: int) -> WeightRecipe:
    if family == "step":
        level = i % min(L, 4)
        k = (7 * i) % 2**level
        return WeightRecipe.make("step", d, L, t=_step_for(target), level=level, k=k)
    if family == "power":
        sign = 1.0 if (i // 4) % 2 == 0 else -1.0
        lim = (1.0 if d == 1 else d) * (1.0 - 1e-9)

        def fn(x, sgn):
            return a2_characteristic(generate(WeightRecipe.make("power", d, L, a=sgn * x)))

        # positive exponents saturate on the grid (the discrete inverse stays
        # bounded near the origin); fall back to the singular side
        if fn(lim, sign) <= target:
            sign = -sign
            if fn(lim, sign) <= target:
                return WeightRecipe.make("power", d, L, a=sign * lim)
        return WeightRecipe.make("power", d, L, a=sign * _bisect(lambda x: fn(x, sign), target, 0.0, lim, iters=60))
    if family == "cascade":
        cseed = seed * 1000 + i
        grid = GridSpec(d, L)
        logs = _cascade_log(grid, cseed)

        def a2_at(s):
            return a2_characteristic(StepFunction(grid, np.exp(s * logs)))

        hi = 1.0
        while a2_at(hi) < target and hi < 1e3:
            hi *= 2.0
        s = _bisect(a2_at, target, 0.0, hi, iters=60)
        return WeightRecipe.make("cascade", d, L, K=math.exp(s), seed=cseed)
    raise WeightError(f"unknown family {family!r}")


def default_families(d: int) -> tuple:
    return ("step", "power", "cascade")


def corpus(d: int, L: int, n: int, a_max: float, seed: int = 0, families=None) -> list:
    """Deterministic weights whose characteristics span [1, a_max] log-uniformly.

    Member 0 is the constant weight; the rest cycle through ``families`` with
    a parameter solved to hit a log-uniform target. Each weight's exact
    characteristic is in ``weight.a2``.
    """
    if n < 1:
        raise WeightError("corpus needs n >= 1")
    if a_max < 1:
        raise WeightError("a_max must be >= 1")
    families = tuple(families or default_families(d))
    out = []
    for i in range(n):
        target = a_max ** (i / (n - 1)) if n > 1 else 1.0
        if i == 0 or target <= 1.0 + 1e-12:
            rec = WeightRecipe.make("constant", d, L, c=1.0)
        else:
            rec = _recipe_for(families[(i - 1) % len(families)], d, L, target, i, seed)
        w = generate(rec)
        span = w.cells.max() / w.cells.min()
        if span > DYNAMIC_RANGE_CAP:
            w = _clip_to_cap(rec, w)
        w.id = f"w{i:03d}"
        out.append(w)
    achieved = max(w.a2 for w in out)
    if achieved < a_max * (1 - 1e-6):
        warnings.warn(
            f"requested [w]_A2 up to {a_max:g} but the corpus reaches only {achieved:.6g} at d={d}, L={L}",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def _clip_to_cap(rec: WeightRecipe, w: Weight) -> Weight:
    """Shrink the family parameter until max(w)/min(w) fits the dynamic range cap."""
    cap = DYNAMIC_RANGE_CAP
    p = dict(rec.params)
    if rec.family == "step":
        p["t"] = cap if p["t"] > 1 else 1.0 / cap
    elif rec.family == "cascade":
        logs = _cascade_log(w.grid, p["seed"])
        p["K"] = math.exp(math.log(cap) / (logs.max() - logs.min()))
    elif rec.family == "power":
        spans = lambda a: (lambda c: c.max() / c.min())(generate(WeightRecipe.make("power", rec.d, rec.L, a=a)).cells)
        a = p["a"]
        x = _bisect(lambda t: spans(math.copysign(t, a)), cap, 0.0, abs(a))
        p["a"] = math.copysign(x * (1 - 1e-9), a)
    out = generate(WeightRecipe.make(rec.family, rec.d, rec.L, **p))
    return out
