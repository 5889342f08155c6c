"""Convex baseline: l1 plus nuclear-norm penalized quadratic loss via ADMM.

Solves::

    min_{Delta, S, R}  L(Delta) + lam1 ||S||_1 + lam2 ||R||_*
    subject to         Delta = S + R

where ``L`` is the quadratic differential-network loss. The augmented
Lagrangian uses a dual matrix ``Phi`` and penalty ``1 / (2 nu)``. The
``Delta`` step is a linear system in the Kronecker-sum operator
``(Sx (x) Sy + Sy (x) Sx) / 2 + I / nu`` which is solved matrix-free with
conjugate gradients, so each operator application costs ``O(d^3)`` instead
of forming the ``d^2 x d^2`` matrix.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ._validation import check_positive, check_symmetric
from .exceptions import (DivergenceError, InvalidArgumentError,
                         SolverStalledError)
from .loss import LossContext, _loss_of_delta

__all__ = [
    "AdmmParams",
    "AdmmState",
    "AdmmResult",
    "soft",
    "spectral_soft",
    "delta_update",
    "admm_objective",
    "admm_fit",
]

CG_RTOL = 1e-10


@dataclass(frozen=True)
class AdmmParams:
    """Penalty levels and solver controls.

    Parameters
    ----------
    lam1 : float
        Weight of the entrywise l1 norm of ``S``.
    lam2 : float
        Weight of the nuclear norm of ``R``.
    nu : float, default=1.0
        Augmented Lagrangian parameter; the quadratic term is
        ``||Delta - S - R||_F^2 / (2 nu)``.
    max_iter : int, default=2000
    feas_tol : float, default=1e-6
        Stop once ``||Delta - S - R||_F <= feas_tol * (1 + ||Delta||_F)``.
    """

    lam1: float
    lam2: float
    nu: float = 1.0
    max_iter: int = 2000
    feas_tol: float = 1e-6

    def __post_init__(self):
        check_positive(self.lam1, "lam1")
        check_positive(self.lam2, "lam2")
        check_positive(self.nu, "nu")
        check_positive(self.feas_tol, "feas_tol")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be a positive integer")
        object.__setattr__(self, "max_iter", int(self.max_iter))


@dataclass
class AdmmState:
    delta: np.ndarray
    S: np.ndarray
    R: np.ndarray
    phi: np.ndarray

    @property
    def gap(self):
        return float(np.linalg.norm(self.delta - self.S - self.R))

    @classmethod
    def zeros(cls, d):
        z = np.zeros((d, d))
        return cls(z, z.copy(), z.copy(), z.copy())


def soft(A, xi):
    """Entrywise soft-thresholding ``sign(a) * max(|a| - xi, 0)``."""
    xi = check_positive(xi, "xi", strict=False)
    A = np.asarray(A, dtype=np.float64)
    return np.sign(A) * np.maximum(np.abs(A) - xi, 0.0)


def _spectral_soft(A, xi):
    try:
        vals, vecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise SolverStalledError("eigendecomposition failed") from exc
    shrunk = np.sign(vals) * np.maximum(np.abs(vals) - xi, 0.0)
    keep = shrunk != 0
    V = vecs[:, keep]
    out = (V * shrunk[keep]) @ V.T
    return (out + out.T) / 2, shrunk


def spectral_soft(A, xi, return_eigvals=False):
    """Soft-threshold the eigenvalues of a symmetric matrix.

    This is the proximal map of ``xi * ||.||_*`` restricted to symmetric
    matrices: eigenvectors are kept and each eigenvalue ``l`` becomes
    ``sign(l) * max(|l| - xi, 0)``.

    Parameters
    ----------
    A : array_like of shape (d, d)
        Symmetric input.
    xi : float
        Nonnegative threshold.
    return_eigvals : bool, default=False
        Also return the shrunk eigenvalues (ascending order of the input
        eigenvalues), whose absolute sum is the nuclear norm of the output.
    """
    A = check_symmetric(A)
    xi = check_positive(xi, "xi", strict=False)
    out, shrunk = _spectral_soft(A, xi)
    if return_eigvals:
        return out, shrunk
    return out


def _kron_operator(ctx, nu):
    d = ctx.d
    cx, cy = ctx.cov_x, ctx.cov_y
    inv_nu = 1.0 / nu

    def matvec(v):
        D = v.reshape(d, d)
        out = (cx @ D @ cy + cy @ D @ cx) / 2 + inv_nu * D
        return out.ravel()

    return LinearOperator((d * d, d * d), matvec=matvec, rmatvec=matvec,
                          dtype=np.float64)


def delta_update(ctx, S, R, phi, nu, x0=None):
    """Solve the ``Delta`` step of the ADMM iteration.

    Finds ``Delta`` with::

        (Sx Delta Sy + Sy Delta Sx) / 2 + Delta / nu
            = (S + R) / nu + Phi + Sy - Sx

    by conjugate gradients on the vectorized system, to a residual of
    ``1e-10 * ||rhs||``.

    Parameters
    ----------
    ctx : LossContext
    S, R, phi : ndarray of shape (d, d)
    nu : float
    x0 : ndarray of shape (d, d), optional
        Warm start, typically the previous ``Delta``.

    Raises
    ------
    SolverStalledError
        If CG has not converged after ``10 d`` iterations.
    """
    nu = check_positive(nu, "nu")
    ctx.check(S, R, phi)
    d = ctx.d
    rhs = (np.asarray(S) + np.asarray(R)) / nu + np.asarray(phi) + ctx.cov_diff
    b = rhs.ravel()
    if not np.any(b):
        return np.zeros((d, d))
    op = _kron_operator(ctx, nu)
    start = None if x0 is None else np.asarray(x0, dtype=np.float64).ravel()
    sol, info = cg(op, b, x0=start, rtol=CG_RTOL, atol=0.0, maxiter=10 * d)
    if info != 0:
        resid = np.linalg.norm(op.matvec(sol) - b) / np.linalg.norm(b)
        raise SolverStalledError(
            f"CG did not reach rtol={CG_RTOL:g} in {10 * d} iterations "
            f"(relative residual {resid:.3g})")
    D = sol.reshape(d, d)
    return (D + D.T) / 2


def admm_objective(ctx, S, R, params):
    """Penalized objective ``L(S + R) + lam1 ||S||_1 + lam2 ||R||_*``."""
    delta = np.asarray(S) + np.asarray(R)
    nuclear = np.sum(np.abs(np.linalg.eigvalsh((R + R.T) / 2)))
    return float(_loss_of_delta(ctx, delta) + params.lam1 * np.sum(np.abs(S))
                 + params.lam2 * nuclear)


@dataclass
class AdmmResult:
    """Outcome of :func:`admm_fit`.

    ``objective`` holds the penalized objective at ``(S^k, R^k)``;
    ``feasibility`` the gap ``||Delta^k - S^k - R^k||_F``.
    """

    S: np.ndarray
    R: np.ndarray
    delta: np.ndarray
    n_iter: int
    objective: list
    feasibility: list
    converged: bool
    wall_time: float
    params: AdmmParams
    metrics: dict = field(default_factory=dict)

    @property
    def low_rank(self):
        return self.R

    @property
    def rank(self):
        vals = np.linalg.eigvalsh(self.R)
        top = np.max(np.abs(vals)) if vals.size else 0.0
        return int(np.sum(np.abs(vals) > 1e-8 * top)) if top > 0 else 0

    def to_dict(self):
        return {
            "method": "admm",
            "params": asdict(self.params),
            "d": int(self.S.shape[0]),
            "rank": self.rank,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "objective": [float(v) for v in self.objective],
            "feasibility": [float(v) for v in self.feasibility],
            "S": self.S.tolist(),
            "R": self.R.tolist(),
            "delta": self.delta.tolist(),
            "metrics": self.metrics,
        }


def admm_fit(ctx, params, init=None, callback=None):
    """Run ADMM from ``init`` (all zeros by default).

    Each iteration performs::

        Delta <- delta_update(S, R, Phi)
        S     <- soft(Delta - R - nu Phi, nu lam1)
        R     <- spectral_soft(Delta - S - nu Phi, nu lam2)
        Phi   <- Phi - (Delta - S - R) / nu

    Parameters
    ----------
    ctx : LossContext or CovariancePair
    params : AdmmParams
    init : AdmmState, optional
    callback : callable, optional
        Called as ``callback(state, k)`` after each iteration.

    Returns
    -------
    AdmmResult
    """
    start = time.perf_counter()
    if not isinstance(ctx, LossContext):
        ctx = LossContext.from_pair(ctx)
    st = AdmmState.zeros(ctx.d) if init is None else AdmmState(
        *(np.array(m, dtype=np.float64) for m in
          (init.delta, init.S, init.R, init.phi)))
    nu = params.nu
    objective, feasibility = [], []
    converged = False
    k = 0
    for k in range(1, params.max_iter + 1):
        delta = delta_update(ctx, st.S, st.R, st.phi, nu, x0=st.delta)
        S = soft(delta - st.R - nu * st.phi, nu * params.lam1)
        S = (S + S.T) / 2
        R, _ = _spectral_soft(delta - S - nu * st.phi, nu * params.lam2)
        phi = st.phi - (delta - S - R) / nu
        st = AdmmState(delta, S, R, (phi + phi.T) / 2)
        gap = st.gap
        obj = admm_objective(ctx, S, R, params)
        if not (np.isfinite(gap) and np.isfinite(obj)):
            raise DivergenceError(f"non-finite ADMM iterate at iteration {k}",
                                  iteration=k, trace=objective)
        objective.append(obj)
        feasibility.append(gap)
        if callback is not None:
            callback(st, k)
        if gap <= params.feas_tol * (1 + np.linalg.norm(delta)):
            converged = True
            break
    return AdmmResult(S=st.S, R=st.R, delta=st.delta, n_iter=k,
                      objective=objective, feasibility=feasibility,
                      converged=converged,
                      wall_time=time.perf_counter() - start, params=params)
