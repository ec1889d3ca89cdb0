"""Lazy linear operators on cell arrays, with dense materialization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import GridSpec, StepFunction, analyze_cells, synthesize_flat

DENSE_CAP = 4096


class MaterializeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """apply/adjoint pair acting on the last axis of arrays.

    ``shape`` is (n_out, n_in). For operators on step functions both equal
    the cell count and ``grid`` is set.
    """

    apply_fn: Callable
    adjoint_fn: Callable
    shape: tuple
    label: tuple = ()
    grid: GridSpec | None = None

    def apply(self, x):
        if isinstance(x, StepFunction):
            return StepFunction(x.grid, self.apply_fn(x.cells))
        return self.apply_fn(np.asarray(x, dtype=float))

    __call__ = apply

    def apply_adjoint(self, x):
        if isinstance(x, StepFunction):
            return StepFunction(x.grid, self.adjoint_fn(x.cells))
        return self.adjoint_fn(np.asarray(x, dtype=float))

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(self.adjoint_fn, self.apply_fn, self.shape[::-1], ("adjoint", self.label), self.grid)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"cannot compose shapes {self.shape} and {other.shape}")
        f, g = self.apply_fn, other.apply_fn
        fa, ga = self.adjoint_fn, other.adjoint_fn
        return LinearOperator(
            lambda x: f(g(x)),
            lambda y: ga(fa(y)),
            (self.shape[0], other.shape[1]),
            ("compose", self.label, other.label),
            self.grid,
        )

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        if self.shape != other.shape:
            raise ValueError(f"cannot add shapes {self.shape} and {other.shape}")
        f, g = self.apply_fn, other.apply_fn
        fa, ga = self.adjoint_fn, other.adjoint_fn
        return LinearOperator(
            lambda x: f(x) + g(x),
            lambda y: fa(y) + ga(y),
            self.shape,
            ("sum", self.label, other.label),
            self.grid,
        )

    def scaled(self, c: float) -> "LinearOperator":
        f, fa = self.apply_fn, self.adjoint_fn
        return LinearOperator(lambda x: c * f(x), lambda y: c * fa(y), self.shape, ("scale", c, self.label), self.grid)


def identity_operator(grid: GridSpec) -> LinearOperator:
    n = grid.n_cells
    return LinearOperator(lambda x: x.copy(), lambda y: y.copy(), (n, n), ("identity",), grid)


def multiplication_operator(g: StepFunction) -> LinearOperator:
    v = g.cells
    n = g.grid.n_cells
    return LinearOperator(lambda x: x * v, lambda y: y * v, (n, n), ("multiply",), g.grid)


def from_matrix(A: np.ndarray, label=("matrix",)) -> LinearOperator:
    A = np.asarray(A, dtype=float)
    return LinearOperator(lambda x: x @ A.T, lambda y: y @ A, A.shape, label)


def mean_zero_projector(n: int) -> LinearOperator:
    def proj(x):
        return x - x.mean(axis=-1, keepdims=True)

    return LinearOperator(proj, proj, (n, n), ("mean-zero",))


def materialize(op: LinearOperator, basis: str = "cell", cap: int = DENSE_CAP, chunk: int = 1024) -> np.ndarray:
    """Dense matrix of ``op``: column j is op applied to the j-th basis vector.

    ``basis="haar"`` uses the orthonormal Haar basis (constant first) on
    both sides; it needs ``op.grid``.
    """
    n_out, n_in = op.shape
    if max(n_out, n_in) > cap:
        raise MaterializeError(
            f"operator of size {n_out}x{n_in} exceeds the dense cap {cap}; use the matrix-free power iteration path"
        )
    if basis not in ("cell", "haar"):
        raise ValueError(f"unknown basis {basis!r}")
    if basis == "haar" and op.grid is None:
        raise ValueError("haar basis needs an operator on a grid")
    cols = []
    for start in range(0, n_in, chunk):
        stop = min(start + chunk, n_in)
        e = np.zeros((stop - start, n_in))
        e[np.arange(stop - start), np.arange(start, stop)] = 1.0
        if basis == "haar":
            e = synthesize_flat(op.grid, e)
        y = op.apply_fn(e)
        if basis == "haar":
            y = analyze_cells(op.grid, y).flat()
        cols.append(y)
    return np.concatenate(cols, axis=0).T.copy()
