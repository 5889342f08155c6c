"""Quadratic differential-network loss and its gradients.

For sample covariances ``Sx``, ``Sy`` the loss of a candidate difference
``Delta = S + R`` is::

    L(S, R) = tr(Delta Sx Delta Sy) / 2 - tr(Delta (Sy - Sx))

which is minimized, in the population, by the difference of the two
precision matrices. The factored form replaces ``R`` by ``U Lambda U^T``
and adds ``||U1^T U2||_F^2 / 2`` to keep the positive and negative blocks
of ``U`` orthogonal.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_same_shape, check_square
from .exceptions import InvalidArgumentError
from .matops import Factor

__all__ = [
    "LossContext",
    "quad_loss",
    "grad_delta",
    "factored_objective",
    "orthogonality_penalty",
    "grad_S",
    "grad_U",
    "tuning_losses",
]


@dataclass(frozen=True)
class LossContext:
    cov_x: np.ndarray
    cov_y: np.ndarray

    def __post_init__(self):
        cx = check_square(self.cov_x, "cov_x")
        cy = check_square(self.cov_y, "cov_y")
        check_same_shape(cx, cy, ("cov_x", "cov_y"))
        object.__setattr__(self, "cov_x", cx)
        object.__setattr__(self, "cov_y", cy)
        object.__setattr__(self, "_diff", cy - cx)

    @classmethod
    def from_pair(cls, pair):
        return cls(pair.cov_x, pair.cov_y)

    @property
    def d(self):
        return self.cov_x.shape[0]

    @property
    def cov_diff(self):
        """``cov_y - cov_x``."""
        return self._diff

    def check(self, *mats):
        for M in mats:
            if np.shape(M) != (self.d, self.d):
                raise InvalidArgumentError(
                    f"expected a {self.d}x{self.d} matrix, got {np.shape(M)}")


def quad_loss(ctx, S, R):
    ctx.check(S, R)
    delta = np.asarray(S) + np.asarray(R)
    return _loss_of_delta(ctx, delta)


def _loss_of_delta(ctx, delta):
    dx = delta @ ctx.cov_x
    dy = delta @ ctx.cov_y
    return float(np.sum(dx * dy.T) / 2 - np.sum(delta * ctx.cov_diff.T))


def grad_delta(ctx, delta):
    """Gradient of the loss in ``Delta`` (equivalently in S or in R)."""
    ctx.check(delta)
    return (ctx.cov_x @ delta @ ctx.cov_y
            + ctx.cov_y @ delta @ ctx.cov_x) / 2 - ctx.cov_diff


def orthogonality_penalty(F):
    """``||U1^T U2||_F^2 / 2`` for the sign blocks of the factor."""
    U1, U2 = F.U[:, :F.r1], F.U[:, F.r1:]
    if U1.shape[1] == 0 or U2.shape[1] == 0:
        return 0.0
    return float(np.sum((U1.T @ U2) ** 2) / 2)


def factored_objective(ctx, S, F):
    ctx.check(S)
    if F.d != ctx.d:
        raise InvalidArgumentError(f"factor has {F.d} rows, expected {ctx.d}")
    delta = np.asarray(S) + F.reconstruct()
    return _loss_of_delta(ctx, delta) + orthogonality_penalty(F)


def grad_S(ctx, S, F):
    """Partial gradient of the factored loss with respect to ``S``.

    ``(Sx Delta Sy + Sy Delta Sx) / 2 - (Sy - Sx)`` with
    ``Delta = S + U Lambda U^T``. Not symmetrized.
    """
    ctx.check(S)
    delta = np.asarray(S) + F.reconstruct()
    return (ctx.cov_x @ delta @ ctx.cov_y
            + ctx.cov_y @ delta @ ctx.cov_x) / 2 - ctx.cov_diff


def grad_U(ctx, S, F):
    """Partial gradients with respect to ``U``.

    Returns
    -------
    loss_grad : ndarray of shape (d, r)
        ``(Sx Delta Sy + Sy Delta Sx) U Lambda - 2 (Sy - Sx) U Lambda``.
    penalty_grad : ndarray of shape (d, r)
        ``U (U^T U - Lambda U^T U Lambda) / 2``, the gradient of the
        orthogonality penalty.
    """
    ctx.check(S)
    if F.r == 0:
        empty = np.zeros((ctx.d, 0))
        return empty, empty.copy()
    delta = np.asarray(S) + F.reconstruct()
    ULam = F.U * F.signs
    loss_grad = (ctx.cov_x @ (delta @ (ctx.cov_y @ ULam))
                 + ctx.cov_y @ (delta @ (ctx.cov_x @ ULam))
                 - 2 * ctx.cov_diff @ ULam)
    gram = F.U.T @ F.U
    signs = F.signs
    penalty_grad = F.U @ (gram - signs[:, None] * gram * signs) / 2
    return loss_grad, penalty_grad


def tuning_losses(ctx, delta):
    """Validation losses of a candidate ``Delta``.

    Returns a dict with ``L_inf`` and ``L_F`` (max-entry and Frobenius norm
    of ``Sx Delta Sy - (Sy - Sx)``), ``L_inf_sym`` and ``L_F_sym`` (same for
    the symmetrized ``(Sx Delta Sy + Sy Delta Sx) / 2``) and ``quad``.
    """
    ctx.check(delta)
    delta = np.asarray(delta, dtype=np.float64)
    half = ctx.cov_x @ delta @ ctx.cov_y
    resid = half - ctx.cov_diff
    sym = (half + ctx.cov_y @ delta @ ctx.cov_x) / 2 - ctx.cov_diff
    return {
        "L_inf": float(np.max(np.abs(resid))),
        "L_F": float(np.linalg.norm(resid)),
        "L_inf_sym": float(np.max(np.abs(sym))),
        "L_F_sym": float(np.linalg.norm(sym)),
        "quad": _loss_of_delta(ctx, delta),
    }
