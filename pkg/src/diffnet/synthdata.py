"""Synthetic latent-variable Gaussian graphical models.

A group is described by a joint precision over ``d`` observed and ``r``
hidden coordinates. The observed block comes from one of four banded or
block structures, the observed-hidden block from a sparse mixture and the
hidden block is the identity. The joint matrix is shifted to be positive
definite, rescaled by a random diagonal and inverted to give the group
covariance.

Randomness is drawn from PCG64 streams keyed by ``(seed, group, artifact)``
so that, for example, changing the sample size never perturbs the model.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_samples, check_square
from .exceptions import (InvalidArgumentError, InvalidModelError,
                         SampleTooSmallError, SingularCovarianceError)
from .matops import Factor, factor_from_eig, top_eig_by_magnitude

__all__ = [
    "JointPrecision",
    "GroundTruthModel",
    "SampleBatch",
    "CovariancePair",
    "make_joint_precision",
    "assemble_precision",
    "assemble_covariance",
    "extract_truth",
    "make_model_pair",
    "sample",
    "sample_covariance",
    "scaled_inverse",
    "rng_stream",
]

SCHEMA_VERSION = 1
RNG_NAME = "numpy.PCG64/SeedSequence"

# stream identifiers
_PRECISION, _SCALING, _SAMPLES = 1, 2, 3
RANK_RTOL = 1e-8


def rng_stream(seed, *keys):
    """Independent generator for ``seed`` and a tuple of integer keys."""
    seed = int(seed)
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence([seed, *(int(k) for k in keys)])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class JointPrecision:
    """Blocks of a joint precision matrix before shifting and scaling."""

    model_id: int
    omega_oo: np.ndarray
    omega_oh: np.ndarray
    omega_hh: np.ndarray

    @property
    def d(self):
        return self.omega_oo.shape[0]

    @property
    def r(self):
        return self.omega_hh.shape[0]

    def full(self):
        return np.block([[self.omega_oo, self.omega_oh],
                         [self.omega_oh.T, self.omega_hh]])


def _model_offdiag(model_id, d, rng):
    omega = np.eye(d)
    if model_id == 1:
        i = np.arange(d - 1)
        omega[i, i + 1] = omega[i + 1, i] = 0.6
        i = np.arange(d - 2)
        omega[i, i + 2] = omega[i + 2, i] = 0.3
    elif model_id == 2:
        # 1-based: row 10k-9 linked to columns 10k-6 .. 10k
        for k in range(d // 10):
            i = 10 * k
            j = np.arange(10 * k + 3, 10 * k + 10)
            omega[i, j] = omega[j, i] = 0.5
    elif model_id == 3:
        for i in range(d):
            for j in range(i + 1, min(i + 4, d)):
                if rng.random() < 0.1:
                    omega[i, j] = omega[j, i] = 0.8
    elif model_id == 4:
        # 1-based: row 2k-1 linked to columns 2k .. min(2k+2, d)
        for k in range(d // 2):
            i = 2 * k
            for j in range(2 * k + 1, min(2 * k + 4, d)):
                if rng.random() < 0.5:
                    omega[i, j] = omega[j, i] = 0.5
    return omega


def make_joint_precision(model_id, d, r, seed, group=0):
    """Generate the unshifted joint precision blocks of one group.

    Parameters
    ----------
    model_id : {1, 2, 3, 4}
        Structure of the observed block: 1 banded (0.6, 0.3), 2 hubs every
        ten nodes (0.5), 3 random band ``0.8 * Bernoulli(0.1)``, 4 random
        pairs ``0.5 * Bernoulli(0.5)``.
    d, r : int
        Observed and hidden dimensions.
    seed : int
    group : int, default=0
        Stream key distinguishing groups generated from the same seed.

    Returns
    -------
    JointPrecision
    """
    if model_id not in (1, 2, 3, 4):
        raise InvalidArgumentError(f"model_id must be 1..4, got {model_id}")
    if int(d) != d or d < 3:
        raise InvalidArgumentError(f"d must be an integer >= 3, got {d}")
    if int(r) != r or r < 0:
        raise InvalidArgumentError(f"r must be a non-negative integer, got {r}")
    if model_id == 2 and d % 10:
        raise InvalidArgumentError("model 2 needs d to be a multiple of 10")
    if model_id == 4 and d % 2:
        raise InvalidArgumentError("model 4 needs an even d")
    rng = rng_stream(seed, group, _PRECISION)
    omega_oo = _model_offdiag(model_id, d, rng)
    # row-major draws: one zero-indicator and one uniform per entry
    zero = rng.random((d, r)) < 0.1
    value = rng.uniform(0.5, 1.0, size=(d, r))
    omega_oh = np.where(zero, 0.0, value)
    return JointPrecision(model_id, omega_oo, omega_oh, np.eye(r))


def assemble_precision(blocks, seed, group=0, scaling=None):
    """Shifted and rescaled joint precision
    ``D^{1/2} (Omega + (iota + 1) I) D^{1/2}``.

    ``iota`` is the magnitude of the smallest eigenvalue of ``Omega`` and
    ``D`` is diagonal with entries drawn from Uniform(0.5, 2.5), unless
    `scaling` gives them explicitly.
    """
    omega = blocks.full() if isinstance(blocks, JointPrecision) else \
        check_square(blocks, "blocks")
    p = omega.shape[0]
    iota = abs(np.linalg.eigvalsh(omega)[0])
    if scaling is None:
        scaling = rng_stream(seed, group, _SCALING).uniform(0.5, 2.5, size=p)
    root = np.sqrt(np.asarray(scaling, dtype=np.float64))
    return root[:, None] * (omega + (iota + 1.0) * np.eye(p)) * root


def assemble_covariance(blocks, seed, group=0, scaling=None):
    """Joint covariance: the inverse of :func:`assemble_precision`."""
    precision = assemble_precision(blocks, seed, group, scaling)
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise InvalidModelError(
            f"shifted precision not positive definite "
            f"(cond={np.linalg.cond(precision):.3g})") from exc
    inv_chol = np.linalg.inv(chol)
    sigma = inv_chol.T @ inv_chol
    return (sigma + sigma.T) / 2


def _marginal_parts(sigma_joint, d, precision=None):
    if precision is None:
        precision = np.linalg.inv(sigma_joint)
        precision = (precision + precision.T) / 2
    oo, oh, hh = precision[:d, :d], precision[:d, d:], precision[d:, d:]
    if hh.size == 0:
        return oo, np.zeros((d, d))
    if np.linalg.cond(hh) > 1e12:
        raise InvalidModelError("hidden precision block is near singular")
    low = oh @ np.linalg.solve(hh, oh.T)
    return oo, (low + low.T) / 2


@dataclass
class GroundTruthModel:
    """Population quantities of a two-group differential network.

    ``delta = sparse + factor.reconstruct()`` where ``sparse`` is the
    difference of the conditional precisions of the observed block and the
    factor carries the (indefinite) difference of the latent effects.
    """

    d: int
    r: int
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sparse: np.ndarray
    factor: Factor
    delta: np.ndarray
    sigma1: float
    sigma_r: float
    models: tuple = (None, None)
    seed: int = None
    blocks: tuple = field(default=(None, None), repr=False)

    @property
    def rank(self):
        """Realized rank of the low-rank component."""
        return self.factor.r

    @property
    def r1(self):
        return self.factor.r1

    @property
    def low_rank(self):
        return self.factor.reconstruct()

    @property
    def cov_x(self):
        """Observed-coordinate covariance of the first group."""
        return self.sigma_x[:self.d, :self.d]

    @property
    def cov_y(self):
        return self.sigma_y[:self.d, :self.d]

    def incoherence(self):
        """Empirical ``beta``: ``d / rank * max_i ||L_i||^2`` for the
        orthonormal eigenvectors ``L`` of the low-rank part."""
        if self.rank == 0:
            return 0.0
        _, vecs = top_eig_by_magnitude(self.low_rank, self.rank)
        return float(self.d / self.rank * np.max(np.sum(vecs ** 2, axis=1)))

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "ground_truth",
            "d": self.d,
            "r": self.r,
            "models": list(self.models),
            "seed": self.seed,
            "rng": RNG_NAME,
            "rank": self.rank,
            "r1": self.r1,
            "sigma1": self.sigma1,
            "sigma_r": self.sigma_r,
            "sigma_x": self.sigma_x.tolist(),
            "sigma_y": self.sigma_y.tolist(),
            "sparse": self.sparse.tolist(),
            "U": self.factor.U.tolist(),
            "delta": self.delta.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        d = int(data["d"])
        rank = int(data["rank"])
        U = np.asarray(data["U"], dtype=np.float64).reshape(d, rank)
        return cls(
            d=d, r=int(data["r"]),
            sigma_x=np.asarray(data["sigma_x"], dtype=np.float64),
            sigma_y=np.asarray(data["sigma_y"], dtype=np.float64),
            sparse=np.asarray(data["sparse"], dtype=np.float64),
            factor=Factor(U, int(data["r1"])),
            delta=np.asarray(data["delta"], dtype=np.float64),
            sigma1=float(data["sigma1"]), sigma_r=float(data["sigma_r"]),
            models=tuple(data.get("models", (None, None))),
            seed=data.get("seed"),
        )

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def extract_truth(sigma_x, sigma_y, d, precision_x=None, precision_y=None):
    """Decompose the differential network of two joint covariances.

    Parameters
    ----------
    sigma_x, sigma_y : ndarray of shape (d + r, d + r)
        Joint covariances of observed and hidden coordinates.
    d : int
        Number of observed coordinates (the leading block).
    precision_x, precision_y : ndarray, optional
        Exact joint precisions. When given they are used instead of
        inverting the covariances, which keeps the sparse part exactly
        sparse.

    Returns
    -------
    GroundTruthModel
    """
    sigma_x = check_square(sigma_x, "sigma_x")
    sigma_y = check_square(sigma_y, "sigma_y")
    for name, sig in (("sigma_x", sigma_x), ("sigma_y", sigma_y)):
        if sig.shape[0] < d:
            raise InvalidArgumentError(f"{name} smaller than d={d}")
        if np.linalg.eigvalsh(sig)[0] <= 0:
            raise InvalidModelError(f"{name} is not positive definite")
    oo_x, low_x = _marginal_parts(sigma_x, d, precision_x)
    oo_y, low_y = _marginal_parts(sigma_y, d, precision_y)
    sparse = oo_x - oo_y
    low_rank = low_y - low_x
    vals = np.linalg.eigvalsh(low_rank)
    sigma1 = float(np.max(np.abs(vals))) if vals.size else 0.0
    rank = int(np.sum(np.abs(vals) > RANK_RTOL * sigma1)) if sigma1 > 0 else 0
    eigvals, eigvecs = top_eig_by_magnitude(low_rank, rank)
    factor = factor_from_eig(eigvals, eigvecs)
    sigma_r = float(np.min(np.abs(eigvals))) if rank else 0.0
    r = max(sigma_x.shape[0], sigma_y.shape[0]) - d
    return GroundTruthModel(
        d=d, r=r, sigma_x=sigma_x, sigma_y=sigma_y, sparse=sparse,
        factor=factor, delta=sparse + factor.reconstruct(),
        sigma1=sigma1, sigma_r=sigma_r)


def make_model_pair(control_model, test_model, d, r, seed):
    """Generate control and test groups and their ground truth.

    The control group uses stream key 0 and the test group key 1, so both
    groups get their own observed-hidden block and diagonal scaling.
    """
    blocks, sigmas, precisions = [], [], []
    for group, model_id in enumerate((control_model, test_model)):
        jp = make_joint_precision(model_id, d, r, seed, group=group)
        blocks.append(jp)
        precisions.append(assemble_precision(jp, seed, group=group))
        sigmas.append(assemble_covariance(jp, seed, group=group))
    truth = extract_truth(sigmas[0], sigmas[1], d, *precisions)
    truth.r = r
    truth.models = (control_model, test_model)
    truth.seed = int(seed)
    truth.blocks = tuple(blocks)
    return truth


@dataclass(frozen=True)
class SampleBatch:
    """Observations of one group, one row per observation."""

    group: str
    observations: np.ndarray
    seed: int = None

    @property
    def n(self):
        return self.observations.shape[0]

    @property
    def d(self):
        return self.observations.shape[1]

    def to_csv(self, path, header=True):
        head = ",".join(f"x{j + 1}" for j in range(self.d)) if header else ""
        np.savetxt(path, self.observations, fmt="%.17g", delimiter=",",
                   header=head, comments="")

    @classmethod
    def from_csv(cls, path, group=""):
        with open(path) as fh:
            first = fh.readline()
        try:
            [float(v) for v in first.strip().split(",")]
            skip = 0
        except ValueError:
            skip = 1
        X = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
        return cls(group, X)


def sample(sigma_joint, n, seed, d=None, group=0):
    """Draw `n` zero-mean Gaussian observations and keep the observed part.

    Parameters
    ----------
    sigma_joint : ndarray of shape (p, p)
        Joint covariance.
    n : int
    seed : int
    d : int, optional
        Number of leading coordinates to keep, default all.
    group : int, default=0
        Stream key, so two groups sharing a seed get independent draws.
    """
    sigma_joint = check_square(sigma_joint, "sigma_joint")
    if int(n) != n or n < 2:
        raise InvalidArgumentError(f"n must be an integer >= 2, got {n}")
    p = sigma_joint.shape[0]
    d = p if d is None else int(d)
    try:
        chol = np.linalg.cholesky(sigma_joint)
    except np.linalg.LinAlgError as exc:
        raise InvalidModelError("covariance is not positive definite") from exc
    z = rng_stream(seed, group, _SAMPLES).standard_normal((int(n), p))
    X = z @ chol.T
    return SampleBatch(str(group), np.ascontiguousarray(X[:, :d]), int(seed))


def sample_covariance(batch):
    """Mean-centred covariance normalised by ``1/n``."""
    X = batch.observations if isinstance(batch, SampleBatch) else batch
    X = check_samples(X, min_samples=1)
    if X.shape[0] < 2:
        raise InvalidArgumentError("need at least two observations")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / X.shape[0]
    return (cov + cov.T) / 2


def scaled_inverse(cov, n, d=None):
    """Inverse of the Kaufman-Hartlap scaled covariance.

    Returns ``((n - d - 2) / n) * inv(cov)``.
    """
    cov = check_square(cov, "cov")
    d = cov.shape[0] if d is None else int(d)
    if n <= d + 2:
        raise SampleTooSmallError(f"need n > d + 2, got n={n}, d={d}")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "sample covariance is not positive definite") from exc
    inv_chol = np.linalg.inv(chol)
    inv = inv_chol.T @ inv_chol
    return (n - d - 2) / n * (inv + inv.T) / 2


@dataclass(frozen=True)
class CovariancePair:
    """Sample covariances of both groups and their sample sizes."""

    cov_x: np.ndarray
    cov_y: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        cx = check_square(self.cov_x, "cov_x")
        cy = check_square(self.cov_y, "cov_y")
        if cx.shape != cy.shape:
            raise InvalidArgumentError(
                f"covariance shapes differ: {cx.shape} vs {cy.shape}")
        object.__setattr__(self, "cov_x", (cx + cx.T) / 2)
        object.__setattr__(self, "cov_y", (cy + cy.T) / 2)
        check_positive(self.n_x, "n_x")
        check_positive(self.n_y, "n_y")

    @property
    def d(self):
        return self.cov_x.shape[0]

    @property
    def n_min(self):
        return min(self.n_x, self.n_y)

    @classmethod
    def from_samples(cls, X, Y):
        X = X.observations if isinstance(X, SampleBatch) else X
        Y = Y.observations if isinstance(Y, SampleBatch) else Y
        X = check_samples(X, "X")
        Y = check_samples(Y, "Y")
        return cls(sample_covariance(X), sample_covariance(Y),
                   X.shape[0], Y.shape[0])

    def scaled_inverses(self):
        return (scaled_inverse(self.cov_x, self.n_x),
                scaled_inverse(self.cov_y, self.n_y))
