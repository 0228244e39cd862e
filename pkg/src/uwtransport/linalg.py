"""Sparse symmetric solvers: preconditioned CG, BiCGStab and Lanczos condition estimates.

Matrices are ``scipy.sparse.csr_matrix`` with sorted, duplicate-free column
indices. The Krylov loops and the SSOR sweeps are written here so that
iteration counts and residual definitions are under our control.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numba
import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)

DENSE_LIMIT = 5000


class Precond(enum.Enum):
    NONE = "none"
    JACOBI = "jacobi"
    SSOR = "ssor"
    BLOCK_SSOR = "block_ssor"
    AMG = "amg"


class AsymmetricMatrixError(ValueError):
    pass


class NotPositiveDefiniteError(ValueError):
    pass


@dataclass
class KrylovReport:
    """Diagnostics of one Krylov solve."""

    iterations: int
    residual: float
    converged: bool
    kappa: float | None = None
    method: str = "cg"
    precond: str = "none"

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "precond": self.precond,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "kappa": self.kappa,
        }


def to_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


@numba.njit(cache=True)
def _forward_sweep(indptr, indices, data, dscaled, r):
    n = r.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = r[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j < i:
                s -= data[k] * y[j]
        y[i] = s / dscaled[i]
    return y


@numba.njit(cache=True)
def _backward_sweep(indptr, indices, data, dscaled, z):
    n = z.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = z[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j > i:
                s -= data[k] * x[j]
        x[i] = s / dscaled[i]
    return x


@numba.njit(cache=True)
def _block_forward(indptr, indices, data, dinv, bs, r):
    n = r.shape[0]
    y = np.zeros(n)
    s = np.empty(bs)
    for blk in range(n // bs):
        lo = blk * bs
        for a in range(bs):
            i = lo + a
            acc = r[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j < lo:
                    acc -= data[k] * y[j]
            s[a] = acc
        for a in range(bs):
            acc = 0.0
            for b in range(bs):
                acc += dinv[blk, a, b] * s[b]
            y[lo + a] = acc
    return y


@numba.njit(cache=True)
def _block_backward(indptr, indices, data, dinv, bs, z):
    n = z.shape[0]
    x = np.zeros(n)
    s = np.empty(bs)
    for blk in range(n // bs - 1, -1, -1):
        lo = blk * bs
        hi = lo + bs
        for a in range(bs):
            i = lo + a
            acc = z[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j >= hi:
                    acc -= data[k] * x[j]
            s[a] = acc
        for a in range(bs):
            acc = 0.0
            for b in range(bs):
                acc += dinv[blk, a, b] * s[b]
            x[lo + a] = acc
    return x


def _diagonal_blocks(A: sp.csr_matrix, bs: int) -> np.ndarray:
    n = A.shape[0]
    nb = n // bs
    coo = A.tocoo()
    sel = (coo.row // bs) == (coo.col // bs)
    blocks = np.zeros((nb, bs, bs))
    blocks[coo.row[sel] // bs, coo.row[sel] % bs, coo.col[sel] % bs] = coo.data[sel]
    return blocks


AMG_SEED = 20240101


class Preconditioner:
    """Application of ``M^{-1}`` for NONE, JACOBI, SSOR, BLOCK_SSOR or AMG.

    BLOCK_SSOR is symmetric block Gauss-Seidel over consecutive blocks of
    ``block`` unknowns, ``M = (D + L) D^{-1} (D + U)`` with block diagonal ``D``.
    AMG is one smoothed-aggregation V-cycle from pyamg (symmetric matrices only).
    """

    def __init__(self, A: sp.csr_matrix, kind: Precond | str = Precond.SSOR, omega: float = 1.0, block: int = 1):
        self.kind = Precond(kind)
        self.omega = omega
        if self.kind is Precond.AMG:
            import pyamg

            # pyamg draws spectral-radius start vectors from the global numpy RNG;
            # seed it for reproducible hierarchies and restore the caller's state
            state = np.random.get_state()
            np.random.seed(AMG_SEED)
            try:
                ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
            finally:
                np.random.set_state(state)
            # one smoothed-aggregation V-cycle per application
            self._amg = ml.aspreconditioner(cycle="V")
            return
        if self.kind is Precond.BLOCK_SSOR:
            if A.shape[0] % block:
                raise ValueError(f"matrix size {A.shape[0]} is not a multiple of block size {block}")
            self.block = block
            self._csr = (A.indptr, A.indices, A.data)
            self._blocks = _diagonal_blocks(A, block)
            self._dinv = np.linalg.inv(self._blocks)
            return
        diag = A.diagonal()
        if self.kind is not Precond.NONE and np.any(diag == 0.0):
            raise ValueError("zero diagonal entry, cannot build point preconditioner")
        self.inv_diag = 1.0 / diag if self.kind is not Precond.NONE else None
        if self.kind is Precond.SSOR:
            if not 0.0 < omega < 2.0:
                raise ValueError("SSOR needs 0 < omega < 2")
            self._csr = (A.indptr, A.indices, A.data)
            self._dscaled = diag / omega
            self._diag = diag

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if self.kind is Precond.NONE:
            return r.copy()
        if self.kind is Precond.JACOBI:
            return self.inv_diag * r
        if self.kind is Precond.AMG:
            return self._amg @ r
        if self.kind is Precond.BLOCK_SSOR:
            indptr, indices, data = self._csr
            y = _block_forward(indptr, indices, data, self._dinv, self.block, r)
            z = np.einsum("kab,kb->ka", self._blocks, y.reshape(-1, self.block)).ravel()
            return _block_backward(indptr, indices, data, self._dinv, self.block, z)
        indptr, indices, data = self._csr
        y = _forward_sweep(indptr, indices, data, self._dscaled, r)
        z = self._dscaled * y
        x = _backward_sweep(indptr, indices, data, self._dscaled, z)
        return x * ((2.0 - self.omega) / self.omega)


def check_spd(A: sp.csr_matrix, tol: float = 1e-12, seed: int = 0) -> None:
    """Raise if ``A`` is not symmetric (relative ``tol``) or fails an energy probe."""
    scale = abs(A).max() if A.nnz else 0.0
    asym = abs(A - A.T).max() if A.nnz else 0.0
    if asym > tol * max(scale, 1e-300):
        raise AsymmetricMatrixError(f"matrix not symmetric: max |A - A^T| = {asym:.3e}")
    x = np.random.default_rng(seed).standard_normal(A.shape[0])
    if A.shape[0] and x @ (A @ x) <= 0.0:
        raise NotPositiveDefiniteError("x^T A x <= 0 for a random probe")


def cg_solve(
    A,
    rhs,
    precond: Precond | str = Precond.SSOR,
    tol: float = 1e-10,
    maxit: int | None = None,
    x0=None,
    check: bool = True,
    omega: float = 1.0,
    block: int = 1,
):
    """Preconditioned conjugate gradients for SPD ``A``.

    Convergence is declared on the true relative residual
    ``||rhs - A x|| / ||rhs|| <= tol``. Non-convergence is reported, not raised.

    Returns
    -------
    x : ndarray
    report : KrylovReport
    """
    A = to_csr(A)
    rhs = np.asarray(rhs, dtype=float)
    n = A.shape[0]
    if check:
        check_spd(A)
    maxit = 10 * n + 100 if maxit is None else maxit
    M = Preconditioner(A, precond, omega, block)
    name = M.kind.value
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), KrylovReport(0, 0.0, True, method="cg", precond=name)

    r = rhs - A @ x
    it = 0
    res = np.linalg.norm(r) / bnorm
    while res > tol and it < maxit:
        z = M(r)
        d = z.copy()
        rz = r @ z
        while it < maxit:
            Ad = A @ d
            dAd = d @ Ad
            if dAd <= 0.0:
                break
            alpha = rz / dAd
            x += alpha * d
            r -= alpha * Ad
            it += 1
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = M(r)
            rz_new = r @ z
            d = z + (rz_new / rz) * d
            rz = rz_new
        # restart from the true residual if the recursive one drifted
        r = rhs - A @ x
        new_res = np.linalg.norm(r) / bnorm
        if new_res > tol and not new_res < res:
            res = new_res
            break
        res = new_res
    report = KrylovReport(it, float(res), bool(res <= tol), method="cg", precond=name)
    if not report.converged:
        log.warning("CG did not converge: %d iterations, residual %.3e", it, res)
    return x, report


def bicgstab_solve(
    A,
    rhs,
    precond: Precond | str = Precond.SSOR,
    tol: float = 1e-10,
    maxit: int | None = None,
    x0=None,
    omega: float = 1.0,
    block: int = 1,
):
    """Right-preconditioned BiCGStab for general square ``A``."""
    A = to_csr(A)
    rhs = np.asarray(rhs, dtype=float)
    n = A.shape[0]
    maxit = 10 * n + 100 if maxit is None else maxit
    M = Preconditioner(A, precond, omega, block)
    name = M.kind.value
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n), KrylovReport(0, 0.0, True, method="bicgstab", precond=name)

    r = rhs - A @ x
    it = 0
    res = np.linalg.norm(r) / bnorm
    while res > tol and it < maxit:
        rhat = r.copy()
        rho = alpha = w = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        while it < maxit:
            rho_new = rhat @ r
            if rho_new == 0.0 or w == 0.0:
                break
            p = r + (rho_new / rho) * (alpha / w) * (p - w * v)
            rho = rho_new
            phat = M(p)
            v = A @ phat
            denom = rhat @ v
            if denom == 0.0:
                break
            alpha = rho / denom
            x += alpha * phat
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= tol * bnorm:
                r = s
                break
            shat = M(s)
            t = A @ shat
            tt = t @ t
            w = (t @ s) / tt if tt > 0.0 else 0.0
            x += w * shat
            r = s - w * t
            if np.linalg.norm(r) <= tol * bnorm:
                break
        r = rhs - A @ x
        new_res = np.linalg.norm(r) / bnorm
        if new_res > tol and not new_res < 0.5 * res:
            res = new_res
            break
        res = new_res
    report = KrylovReport(it, float(res), bool(res <= tol), method="bicgstab", precond=name)
    if not report.converged:
        log.warning("BiCGStab did not converge: %d iterations, residual %.3e", it, res)
    return x, report


def dense_solve(A, rhs):
    """Dense LU solve, for oracles and tiny problems."""
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense solve limited to {DENSE_LIMIT} unknowns, got {n}")
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    x = scipy.linalg.lu_solve(scipy.linalg.lu_factor(Ad), rhs)
    bnorm = np.linalg.norm(rhs)
    res = np.linalg.norm(rhs - Ad @ x) / bnorm if bnorm > 0 else 0.0
    return x, KrylovReport(0, float(res), True, method="lu", precond="none")


@dataclass
class ConditionEstimate:
    kappa: float
    lambda_min: float
    lambda_max: float
    iterations: int
    breakdown: bool = False
    seed: int = 0


def _lanczos_extreme(apply, n: int, iters: int, seed: int, rtol: float):
    """Largest Ritz value of the symmetric operator ``apply`` by Lanczos.

    Full reorthogonalization; stops once the top Ritz value changes by less
    than ``rtol`` (relative) between steps. Returns (value, steps, breakdown).
    """
    m = min(iters, n)
    V = np.zeros((m + 1, n))
    alpha = np.zeros(m)
    beta = np.zeros(m)
    v = np.random.default_rng(seed).standard_normal(n)
    V[0] = v / np.linalg.norm(v)
    top = None
    scale = 0.0
    for k in range(m):
        w = apply(V[k])
        alpha[k] = V[k] @ w
        w -= alpha[k] * V[k]
        if k > 0:
            w -= beta[k - 1] * V[k - 1]
        for _ in range(2):
            w -= V[: k + 1].T @ (V[: k + 1] @ w)
        beta[k] = np.linalg.norm(w)
        scale = max(scale, abs(alpha[k]), beta[k])
        theta = scipy.linalg.eigh_tridiagonal(alpha[: k + 1], beta[:k], eigvals_only=True)[-1]
        if beta[k] <= 1e-12 * scale:
            return float(theta), k + 1, True
        if top is not None and abs(theta - top) <= rtol * abs(theta):
            return float(theta), k + 1, False
        top = theta
        V[k + 1] = w / beta[k]
    return float(top), m, False


def estimate_condition(
    A, iters: int = 200, seed: int = 0, inverse: bool = True, rtol: float = 1e-10, inner_tol: float = 1e-10
) -> ConditionEstimate:
    """Estimate ``lambda_max / lambda_min`` of SPD ``A`` by Lanczos.

    ``lambda_max`` comes from Lanczos on ``A``. With ``inverse=True``,
    ``lambda_min`` is ``1 / lambda_max(A^{-1})`` from Lanczos on ``A^{-1}``,
    each step applying ``A^{-1}`` by SSOR-preconditioned CG to ``inner_tol``.
    Plain Lanczos (``inverse=False``) resolves ``lambda_min`` slowly on
    discretized operators, whose small eigenvalues cluster, and then only
    gives a lower bound for the condition number.

    A zero Lanczos vector (invariant subspace found) stops the iteration with
    ``breakdown=True``; the Ritz values found so far are returned.
    """
    A = to_csr(A)
    n = A.shape[0]
    lmax, steps, broke = _lanczos_extreme(lambda x: A @ x, n, iters, seed, rtol)
    if inverse:

        def apply_inv(x):
            y, rep = cg_solve(A, x, Precond.SSOR, tol=inner_tol, check=False)
            if not rep.converged:
                log.debug("inner CG in condition estimate stopped at residual %.3e", rep.residual)
            return y

        mu, k, broke_inv = _lanczos_extreme(apply_inv, n, iters, seed + 1, rtol)
        lmin = 1.0 / mu
    else:
        lmin, k, broke_inv = _lanczos_min(A, iters, seed)
    kappa = lmax / lmin if lmin > 0 else np.inf
    return ConditionEstimate(float(kappa), float(lmin), float(lmax), steps + k, broke or broke_inv, seed)


def _lanczos_min(A, iters, seed):
    """Smallest Ritz value of plain Lanczos on ``A`` (an upper bound for lambda_min)."""
    value, steps, broke = _lanczos_extreme(lambda x: -(A @ x), A.shape[0], iters, seed, 0.0)
    return -value, steps, broke


def write_matrix_market(path, A) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="general")
