"""Two-stage nonconvex estimator of a sparse plus low-rank differential network.

Stage one builds a rough estimate from the difference of the scaled inverse
sample covariances, splits it into a truncated sparse part and a top-``r``
eigen part, and reads the sign pattern off the eigenvalues. Stage two runs
projected alternating gradient descent on ``(S, U)`` with the signs held
fixed.
"""

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_positive
from .exceptions import DivergenceError, InvalidArgumentError
from .loss import LossContext, factored_objective
from .matops import (Factor, _dispersed_truncate, _hard_truncate,
                     factor_from_eig, incoherence_bound, project_rows,
                     spectral_norm, top_eig_by_magnitude)

__all__ = [
    "HyperParams",
    "IterState",
    "Initialization",
    "FitReport",
    "initialize",
    "step",
    "fit_nonconvex",
    "estimate_rank",
]

# consecutive objective increases before the step sizes are halved
GUARD_PATIENCE = 10


@dataclass(frozen=True)
class HyperParams:
    """Tuning parameters shared by both stages.

    Parameters
    ----------
    alpha : float in (0, 1]
        Fraction of entries kept per row and column of ``S``.
    s : int
        Total number of entries kept in ``S``.
    r : int
        Number of columns of the factor ``U``.
    beta : float
        Incoherence level; rows of ``U`` are capped at
        ``sqrt(4 beta ||U||_2^2 r / d)``.
    eta1 : float, default=0.5
        Step size for ``S``.
    eta2 : float or None
        Step size for ``U``; None means ``eta1 / ||U0||_2^2``.
    max_iter : int, default=2000
    rel_tol : float, default=1e-8
        Stop when the objective moves by at most
        ``rel_tol * (1 + |previous|)``; 0 runs all iterations.
    alpha_init, s_init : optional
        Truncation levels for stage one, defaulting to ``alpha`` and ``s``.
    """

    alpha: float
    s: int
    r: int
    beta: float = 1.0
    eta1: float = 0.5
    eta2: float = None
    max_iter: int = 2000
    rel_tol: float = 1e-8
    alpha_init: float = None
    s_init: int = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidArgumentError(f"alpha must be in (0, 1], got {self.alpha}")
        if int(self.s) != self.s or self.s < 1:
            raise InvalidArgumentError(f"s must be a positive integer, got {self.s}")
        if int(self.r) != self.r or self.r < 0:
            raise InvalidArgumentError(f"r must be a non-negative integer, got {self.r}")
        check_positive(self.beta, "beta")
        check_positive(self.eta1, "eta1")
        if self.eta2 is not None:
            check_positive(self.eta2, "eta2")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise InvalidArgumentError("max_iter must be a non-negative integer")
        check_positive(self.rel_tol, "rel_tol", strict=False)
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "max_iter", int(self.max_iter))

    @property
    def init_alpha(self):
        return self.alpha if self.alpha_init is None else self.alpha_init

    @property
    def init_s(self):
        return self.s if self.s_init is None else int(self.s_init)


@dataclass
class IterState:
    S: np.ndarray
    U: np.ndarray
    r1: int
    k: int = 0

    @property
    def factor(self):
        return Factor(self.U, self.r1)

    def radius(self, beta):
        """Squared row-norm cap used when projecting the next ``U``."""
        d, r = self.U.shape
        return incoherence_bound(4 * beta * spectral_norm(self.U) ** 2, r, d)


@dataclass
class Initialization:
    S: np.ndarray
    U: np.ndarray
    r1: int
    delta0: np.ndarray
    R0: np.ndarray
    eigvals: np.ndarray


def _sparse_project(A, alpha, s):
    return _dispersed_truncate(_hard_truncate(A, s), alpha)


def initialize(cov, hp, delta0=None):
    """Stage one: starting point ``(S0, U0, r1)`` from scaled inverses.

    Parameters
    ----------
    cov : CovariancePair
    hp : HyperParams
    delta0 : ndarray, optional
        Precomputed difference of the scaled inverse covariances, reused
        when many parameter settings share the same data.

    Returns
    -------
    Initialization
    """
    if hp.r > cov.d:
        raise InvalidArgumentError(f"r={hp.r} exceeds d={cov.d}")
    if delta0 is None:
        inv_x, inv_y = cov.scaled_inverses()
        delta0 = inv_x - inv_y
    S0 = _sparse_project(delta0, hp.init_alpha, hp.init_s)
    R0 = delta0 - S0
    R0 = (R0 + R0.T) / 2
    eigvals, eigvecs = top_eig_by_magnitude(R0, hp.r)
    F = factor_from_eig(eigvals, eigvecs)
    U = F.U
    if hp.r:
        d = cov.d
        U = project_rows(U, incoherence_bound(
            4 * hp.beta * spectral_norm(U) ** 2, hp.r, d))
    return Initialization(S0, U, F.r1, delta0, R0, eigvals)


def _evaluate(ctx, S, U, signs):
    """Objective and symmetrized loss gradient at ``(S, U)``."""
    delta = S + (U * signs) @ U.T if U.shape[1] else S
    P = ctx.cov_x @ delta @ ctx.cov_y
    loss = np.sum(delta * P) / 2 - np.sum(delta * ctx.cov_diff)
    G = (P + P.T) / 2 - ctx.cov_diff
    pen = 0.0
    r1 = int(np.sum(signs > 0))
    if 0 < r1 < len(signs):
        pen = np.sum((U[:, :r1].T @ U[:, r1:]) ** 2) / 2
    return float(loss + pen), G


def _advance(st, G, hp):
    S_half = st.S - hp.eta1 * G
    S_new = _sparse_project(S_half, hp.alpha, hp.s)
    r = st.U.shape[1]
    if r:
        signs = np.concatenate([np.ones(st.r1), -np.ones(r - st.r1)])
        gram = st.U.T @ st.U
        pen_grad = st.U @ (gram - signs[:, None] * gram * signs) / 2
        U_half = st.U - hp.eta2 * (2 * G @ (st.U * signs) + pen_grad)
        U_new = project_rows(U_half, st.radius(hp.beta))
    else:
        U_new = st.U.copy()
    if not (np.all(np.isfinite(S_new)) and np.all(np.isfinite(U_new))):
        raise DivergenceError(
            f"non-finite iterate at iteration {st.k + 1}", iteration=st.k + 1)
    return IterState(S_new, U_new, st.r1, st.k + 1)


def step(ctx, st, hp):
    """One projected alternating gradient step.

    Both partial gradients are evaluated at the current ``(S^k, U^k)``, the
    ``S`` half-step is truncated by magnitude and the ``U`` half-step is
    projected onto rows of norm at most ``sqrt(4 beta ||U^k||_2^2 r / d)``.
    `hp` must carry a concrete ``eta2`` when ``r > 0``.
    """
    if hp.eta2 is None and st.U.shape[1]:
        raise InvalidArgumentError("step needs an explicit eta2")
    ctx.check(st.S)
    _, G = _evaluate(ctx, st.S, st.U, st.factor.signs)
    return _advance(st, G, hp)


@dataclass
class FitReport:
    """Outcome of a nonconvex fit.

    ``objective[k]`` is the penalized objective at iterate ``k`` (index 0 is
    the initial point). ``error`` holds ``||Delta^k - Delta*||_F /
    sqrt(sigma_max(R*))`` when a ground truth was supplied.
    """

    S: np.ndarray
    U: np.ndarray
    r1: int
    delta: np.ndarray
    n_iter: int
    objective: list
    converged: bool
    guard_triggered: bool
    wall_time: float
    hp: HyperParams
    error: list = None
    metrics: dict = field(default_factory=dict)

    @property
    def factor(self):
        return Factor(self.U, self.r1)

    @property
    def low_rank(self):
        return self.factor.reconstruct()

    def to_dict(self):
        out = {
            "method": "nonconvex",
            "hyperparams": asdict(self.hp),
            "d": int(self.S.shape[0]),
            "r": int(self.U.shape[1]),
            "r1": self.r1,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "guard_triggered": self.guard_triggered,
            "objective": [float(v) for v in self.objective],
            "S": self.S.tolist(),
            "U": self.U.tolist(),
            "delta": self.delta.tolist(),
            "metrics": self.metrics,
        }
        if self.error is not None:
            out["error"] = [float(v) for v in self.error]
        return out


def _scaled_error(delta, truth):
    scale = np.sqrt(truth.sigma1) if truth.sigma1 > 0 else 1.0
    return float(np.linalg.norm(delta - truth.delta) / scale)


def fit_nonconvex(cov, hp, truth=None, init=None, callback=None):
    """Run both stages and return a :class:`FitReport`.

    Parameters
    ----------
    cov : CovariancePair
    hp : HyperParams
    truth : GroundTruthModel, optional
        When given, the scaled error of every iterate is recorded.
    init : Initialization, optional
        Reuse a stage-one result computed with the same data and
        parameters.
    callback : callable, optional
        Called as ``callback(state)`` after each iteration.
    """
    start = time.perf_counter()
    ctx = LossContext(cov.cov_x, cov.cov_y)
    if init is None:
        init = initialize(cov, hp)
    st = IterState(init.S.copy(), init.U.copy(), init.r1, 0)
    if hp.eta2 is None:
        top = spectral_norm(st.U)
        hp = replace(hp, eta2=hp.eta1 / top ** 2 if top > 0 else hp.eta1)

    signs = st.factor.signs
    obj, G = _evaluate(ctx, st.S, st.U, signs)
    trace = [obj]
    errors = None
    if truth is not None:
        errors = [_scaled_error(st.S + st.factor.reconstruct(), truth)]
    converged = False
    guard_triggered = False
    rising = 0
    for _ in range(hp.max_iter):
        try:
            st = _advance(st, G, hp)
        except DivergenceError as exc:
            exc.trace = list(trace)
            raise
        obj, G = _evaluate(ctx, st.S, st.U, signs)
        if not np.isfinite(obj):
            raise DivergenceError(
                f"non-finite objective at iteration {st.k}",
                iteration=st.k, trace=trace)
        prev = trace[-1]
        trace.append(obj)
        if errors is not None:
            errors.append(_scaled_error(st.S + st.factor.reconstruct(), truth))
        if callback is not None:
            callback(st)
        rising = rising + 1 if obj > prev else 0
        if rising >= GUARD_PATIENCE and not guard_triggered:
            hp = replace(hp, eta1=hp.eta1 / 2, eta2=hp.eta2 / 2)
            guard_triggered = True
            rising = 0
        if abs(obj - prev) <= hp.rel_tol * (1 + abs(prev)):
            converged = True
            break
    F = st.factor
    delta = st.S + F.reconstruct()
    report = FitReport(
        S=st.S, U=st.U, r1=st.r1, delta=delta, n_iter=st.k,
        objective=trace, converged=converged,
        guard_triggered=guard_triggered,
        wall_time=time.perf_counter() - start, hp=hp, error=errors)
    return report


def estimate_rank(R0, n_min, d, c=2.0):
    """Number of eigenvalues of ``R0`` above ``c * sqrt(d / n_min)`` in
    magnitude."""
    c = check_positive(c, "c")
    R0 = np.asarray(R0, dtype=np.float64)
    vals = np.linalg.eigvalsh((R0 + R0.T) / 2)
    return int(np.sum(np.abs(vals) > c * np.sqrt(d / n_min)))

