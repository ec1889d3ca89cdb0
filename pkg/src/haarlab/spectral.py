"""Operator norms and generalized Rayleigh quotients.

Dense path: full symmetric eigendecomposition of op* op. Matrix-free path:
block power iteration (subspace iteration with Rayleigh-Ritz) on op* op from
a seeded start, so results are reproducible bit for bit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .operators import DENSE_CAP, LinearOperator, from_matrix, materialize, mean_zero_projector

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


@dataclass
class NormResult:
    value: float
    method: str  # "dense" | "power-iteration"
    iterations: int
    residual: float
    witness: np.ndarray  # certified_lower_witness, in the operator's input coordinates

    @property
    def certified_lower_witness(self):
        return self.witness


def _as_operator(op) -> LinearOperator:
    if isinstance(op, LinearOperator):
        return op
    return from_matrix(np.asarray(op))


def _dense_norm(A: np.ndarray) -> NormResult:
    n = A.shape[1]
    G = A.T @ A
    G = 0.5 * (G + G.T)
    vals, vecs = scipy.linalg.eigh(G, subset_by_index=[n - 1, n - 1], driver="evx")
    if vecs.shape[1] == 0:
        # tight clusters occasionally defeat the subset driver
        vals, vecs = np.linalg.eigh(G)
        vals, vecs = vals[-1:], vecs[:, -1:]
    v = vecs[:, 0]
    value = float(np.sqrt(max(vals[0], 0.0)))
    achieved = float(np.linalg.norm(A @ v))
    return NormResult(value, "dense", 0, max(0.0, value - achieved), v)


def _power_norm(op: LinearOperator, tol: float, seed: int, max_iter: int, block: int) -> NormResult:
    n = op.shape[1]
    b = max(1, min(block, n))
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, b)))[0].T  # (b, n), orthonormal rows
    theta_prev = None
    theta, v, resid = 0.0, Q[0], np.inf
    for it in range(1, max_iter + 1):
        W = op.apply_fn(Q)  # (b, m)
        G = W @ W.T
        vals, vecs = np.linalg.eigh(0.5 * (G + G.T))
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        theta = float(max(vals[0], 0.0))
        Z = op.adjoint_fn(W)  # A*A Q
        y = vecs[:, 0]
        v = y @ Q
        r = y @ Z - theta * v
        resid = float(np.linalg.norm(r))
        if theta_prev is not None and abs(theta - theta_prev) <= tol * max(theta, np.finfo(float).tiny):
            value = float(np.sqrt(theta))
            achieved = float(np.linalg.norm(op.apply_fn(v[None, :])[0]))
            # first-order error of sigma from the eigen-residual of A*A
            err = resid / (2.0 * value) if value > 0 else 0.0
            return NormResult(min(value, achieved), "power-iteration", it, err, v)
        if theta == 0.0 and it > 1:
            return NormResult(0.0, "power-iteration", it, 0.0, v)
        theta_prev = theta
        Q = np.linalg.qr((vecs.T @ Z).T)[0].T
    lower = float(np.sqrt(theta))
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        (lower, float(np.sqrt(theta + resid))),
    )


def operator_norm(
    op,
    tol: float = 1e-8,
    method: str = "auto",
    mean_zero: bool = False,
    seed: int = 0,
    max_iter: int | None = None,
    block: int = 8,
    dense_cap: int = DENSE_CAP,
) -> NormResult:
    """Largest singular value of ``op`` (a LinearOperator or a matrix).

    With ``mean_zero`` the input is restricted to mean-zero vectors.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    op = _as_operator(op)
    if mean_zero:
        op = op @ mean_zero_projector(op.shape[1])
    n = op.shape[1]
    if method == "auto":
        method = "dense" if max(op.shape) <= dense_cap else "power"
    if method == "dense":
        return _dense_norm(materialize(op, cap=max(dense_cap, max(op.shape))))
    if method in ("power", "power-iteration"):
        return _power_norm(op, tol, seed, max_iter or 10 * n, block)
    raise ValueError(f"unknown method {method!r}")


def _as_form(F):
    """('diag', vector) | ('dense', matrix) | ('op', LinearOperator)."""
    if isinstance(F, LinearOperator):
        return "op", F
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        return "diag", F
    return "dense", 0.5 * (F + F.T)


def generalized_max_rayleigh(formA, formB, tol: float = 1e-8, method: str = "auto", seed: int = 0) -> NormResult:
    """max_f A(f)/B(f) for symmetric A >= 0 and B > 0.

    Forms are diagonal vectors, dense symmetric matrices or self-adjoint
    LinearOperators. Computed as the norm of B^{-1/2} A B^{-1/2}; a diagonal
    B is inverted exactly, a dense B through its Cholesky factor. The witness
    is returned in the original coordinates.
    """
    kind_a, A = _as_form(formA)
    kind_b, B = _as_form(formB)
    if kind_b == "op":
        raise ValueError("formB must be a diagonal vector or a dense matrix")
    if kind_b == "diag":
        if np.any(B <= 0):
            raise ValueError("formB is not positive definite")
        s = 1.0 / np.sqrt(B)
        if kind_a == "diag":
            vals = A * s * s
            i = int(np.argmax(vals))
            e = np.zeros_like(vals)
            e[i] = s[i]
            return NormResult(float(vals[i]), "dense", 0, 0.0, e)
        if kind_a == "dense":
            K = s[:, None] * A * s[None, :]
            res = operator_norm(K, tol=tol, method=method, seed=seed)
        else:
            K = LinearOperator(lambda x: A.apply_fn(x * s) * s, lambda y: A.adjoint_fn(y * s) * s, A.shape)
            res = operator_norm(K, tol=tol, method=method, seed=seed)
        res.witness = res.witness * s
        return res
    try:
        Lc = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise ValueError("formB is not positive definite") from None
    Linv = scipy.linalg.solve_triangular(Lc, np.eye(len(B)), lower=True)
    if kind_a == "diag":
        K = (Linv * A[None, :]) @ Linv.T
    elif kind_a == "dense":
        K = Linv @ A @ Linv.T
    else:
        K = Linv @ materialize(A, cap=max(DENSE_CAP, A.shape[0])).T @ Linv.T
    res = operator_norm(0.5 * (K + K.T), tol=tol, method=method, seed=seed)
    res.witness = Linv.T @ res.witness
    return res
