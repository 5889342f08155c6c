"""Grid search on a validation split and estimation-quality metrics."""

import csv
import itertools
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .admm import AdmmParams, admm_fit
from .exceptions import DiffNetError, InvalidArgumentError
from .loss import LossContext, _loss_of_delta
from .nonconvex import HyperParams, fit_nonconvex, initialize

__all__ = ["Grid", "CVResult", "Metrics", "cross_validate", "evaluate",
           "estimate_inertia"]

METHODS = ("nonconvex", "admm")
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Candidate hyperparameters.

    ``s_mult`` lists multiples of ``d`` for the entry budget. The nonconvex
    method uses ``alpha``, ``s_mult``, ``r`` and ``beta``; the convex
    baseline uses ``lam1`` and ``lam2``. The defaults are the full grids
    used for the simulation study.
    """

    alpha: tuple = (0.01, 0.03, 0.05, 0.1, 0.3, 0.5, 0.8)
    s_mult: tuple = (2, 4, 6, 15, 25, 30)
    r: tuple = (0, 1, 2, 3, 4)
    beta: tuple = (1.0, 3.0)
    lam1: tuple = (0.01, 0.05, 0.1, 0.15)
    lam2: tuple = (0.15, 0.25, 0.35, 0.45)

    def __post_init__(self):
        for name in ("alpha", "s_mult", "r", "beta", "lam1", "lam2"):
            values = tuple(getattr(self, name))
            if not values:
                raise InvalidArgumentError(f"grid list {name!r} is empty")
            object.__setattr__(self, name, values)

    @classmethod
    def from_dict(cls, config):
        unknown = set(config) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(
                f"unknown grid keys: {', '.join(sorted(unknown))}")
        return cls(**{k: tuple(v) for k, v in config.items()})

    def to_dict(self):
        return {k: list(v) for k, v in asdict(self).items()}

    def points(self, method, d):
        """Grid points as dicts, row-major over the declared lists.

        The first list varies slowest, matching ``itertools.product``.
        """
        if method == "nonconvex":
            for a, m, r, b in itertools.product(self.alpha, self.s_mult,
                                                self.r, self.beta):
                yield {"alpha": a, "s": int(round(m * d)), "r": int(r),
                       "beta": b}
        elif method == "admm":
            for l1, l2 in itertools.product(self.lam1, self.lam2):
                yield {"lam1": l1, "lam2": l2}
        else:
            raise InvalidArgumentError(f"unknown method {method!r}")

    def size(self, method):
        if method == "nonconvex":
            return (len(self.alpha) * len(self.s_mult) * len(self.r)
                    * len(self.beta))
        return len(self.lam1) * len(self.lam2)


@dataclass
class Metrics:
    """Estimation quality against a known ground truth.

    ``scaled_error`` is ``||Delta_hat - Delta*||_F / sqrt(sigma_max(R*))``,
    falling back to the plain Frobenius error when ``R* = 0``.
    """

    sparse_error: float
    scaled_error: float
    rank: int
    r1: int
    rank_correct: bool
    r1_correct: bool
    wall_time: float = float("nan")

    def to_dict(self):
        return asdict(self)


def _parts(est):
    """Pull ``(S, Delta)`` out of a fit result or fitted estimator."""
    if hasattr(est, "delta_"):
        return est.sparse_, est.delta_
    if hasattr(est, "delta") and hasattr(est, "S"):
        return est.S, est.delta
    raise InvalidArgumentError(
        f"cannot read an estimate from {type(est).__name__}")


def estimate_inertia(est):
    """``(rank, positive index)`` of the low-rank part of an estimate.

    Factored fits report their number of columns and sign split directly;
    otherwise eigenvalues of the low-rank part (``Delta - S`` when no
    separate part is stored) above ``1e-8`` times the largest magnitude are
    counted.
    """
    U = getattr(est, "U", None)
    if U is None and hasattr(est, "factor_"):
        U = est.factor_.U
    if U is not None:
        r1 = est.r1 if hasattr(est, "r1") else est.r1_
        return int(U.shape[1]), int(r1)
    low = getattr(est, "low_rank_", getattr(est, "low_rank", None))
    if low is None:
        S, delta = _parts(est)
        low = np.asarray(delta) - np.asarray(S)
    low = np.asarray(low, dtype=np.float64)
    vals = np.linalg.eigvalsh((low + low.T) / 2)
    top = np.max(np.abs(vals)) if vals.size else 0.0
    if top == 0:
        return 0, 0
    big = np.abs(vals) > RANK_RTOL * top
    return int(big.sum()), int(np.sum(big & (vals > 0)))


def evaluate(est, truth, wall_time=None):
    """Compare an estimate with a :class:`GroundTruthModel`."""
    S, delta = _parts(est)
    S = np.asarray(S, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if S.shape != truth.sparse.shape or delta.shape != truth.delta.shape:
        raise InvalidArgumentError(
            f"estimate is {S.shape}, truth is {truth.sparse.shape}")
    scale = np.sqrt(truth.sigma1) if truth.sigma1 > 0 else 1.0
    rank, r1 = estimate_inertia(est)
    if wall_time is None:
        wall_time = getattr(est, "wall_time", float("nan"))
    return Metrics(
        sparse_error=float(np.linalg.norm(S - truth.sparse)),
        scaled_error=float(np.linalg.norm(delta - truth.delta) / scale),
        rank=rank, r1=r1,
        rank_correct=rank == truth.rank,
        r1_correct=rank == truth.rank and r1 == truth.r1,
        wall_time=float(wall_time))


@dataclass
class CVResult:
    """Outcome of :func:`cross_validate`.

    ``table`` has one dict per grid point in enumeration order with the
    point's parameters, the validation loss (NaN for failed fits), an
    error message when the fit failed and, if a truth was supplied, the
    metrics of that fit.
    """

    method: str
    best_index: int
    best_params: dict
    best_fit: object
    table: list
    wall_time: float
    columns: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns,
                                    lineterminator="\n")
            writer.writeheader()
            for row in self.table:
                writer.writerow({k: _fmt(row.get(k, "")) for k in self.columns})


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    return value


def _fit_point(method, point, train, delta0, base):
    if method == "nonconvex":
        hp = HyperParams(**point, **base)
        init = initialize(train, hp, delta0=delta0)
        return fit_nonconvex(train, hp, init=init)
    return admm_fit(LossContext.from_pair(train),
                    AdmmParams(**point, **base))


def cross_validate(train, valid, grid, method="nonconvex", truth=None,
                   **base):
    """Pick the grid point whose fit on `train` has the smallest
    quadratic loss on `valid`.

    Parameters
    ----------
    train, valid : CovariancePair
    grid : Grid
    method : {"nonconvex", "admm"}
    truth : GroundTruthModel, optional
        When given every row of the score table also carries metrics.
    **base
        Fixed solver settings forwarded to :class:`HyperParams` or
        :class:`AdmmParams` (for example ``max_iter`` or ``feas_tol``).

    Returns
    -------
    CVResult

    Raises
    ------
    DiffNetError
        If every grid point failed.
    """
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}")
    if train.d != valid.d:
        raise InvalidArgumentError(
            f"train has d={train.d}, validation has d={valid.d}")
    start = time.perf_counter()
    vctx = LossContext.from_pair(valid)
    delta0 = None
    if method == "nonconvex":
        inv_x, inv_y = train.scaled_inverses()
        delta0 = inv_x - inv_y

    table, best, best_fit = [], None, None
    for i, point in enumerate(grid.points(method, train.d)):
        row = {"index": i, **point}
        try:
            fit = _fit_point(method, point, train, delta0, base)
        except DiffNetError as exc:
            row.update(loss=float("nan"), n_iter=0, converged=False,
                       error=f"{type(exc).__name__}: {exc}")
            table.append(row)
            continue
        loss = _loss_of_delta(vctx, fit.delta)
        row.update(loss=loss, n_iter=fit.n_iter, converged=fit.converged,
                   error="")
        if truth is not None:
            m = evaluate(fit, truth)
            row.update(sparse_error=m.sparse_error,
                       scaled_error=m.scaled_error, rank=m.rank, r1=m.r1)
        table.append(row)
        # strict inequality keeps the first point on ties
        if best is None or loss < table[best]["loss"]:
            best, best_fit = len(table) - 1, fit
    if best is None:
        raise DiffNetError(f"all {len(table)} grid points failed")

    keys = list(next(grid.points(method, train.d)))
    columns = ["index", *keys, "loss", "n_iter", "converged", "error"]
    if truth is not None:
        columns += ["sparse_error", "scaled_error", "rank", "r1"]
    best_params = {k: table[best][k] for k in keys}
    return CVResult(method=method, best_index=best, best_params=best_params,
                    best_fit=best_fit, table=table,
                    wall_time=time.perf_counter() - start, columns=columns)
