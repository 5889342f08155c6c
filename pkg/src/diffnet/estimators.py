"""scikit-learn style wrappers around the two solvers.

Both estimators take the observations of the two groups, ``X`` (control)
and ``Y`` (test), and estimate ``Delta = Omega_X - Omega_Y`` as a sparse
plus low-rank matrix::

    est = LatentDifferentialNetwork(alpha=0.1, s=200, r=2).fit(X, Y)
    est.delta_, est.sparse_, est.low_rank_
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_samples
from .admm import AdmmParams, admm_fit
from .exceptions import InvalidArgumentError
from .loss import LossContext, _loss_of_delta
from .matops import Factor
from .nonconvex import HyperParams, fit_nonconvex
from .synthdata import CovariancePair

__all__ = ["LatentDifferentialNetwork", "ConvexDifferentialNetwork"]


def _pair_from_samples(X, Y):
    X = check_samples(X, "X")
    Y = check_samples(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise InvalidArgumentError(
            f"X has {X.shape[1]} features but Y has {Y.shape[1]}")
    return CovariancePair.from_samples(X, Y)


class _DifferentialBase(BaseEstimator):

    def fit(self, X, Y):
        """Estimate the differential network from two sample matrices.

        Parameters
        ----------
        X, Y : array_like of shape (n_x, d) and (n_y, d)
            Observations of the control and test groups.

        Returns
        -------
        self
        """
        return self.fit_covariance(_pair_from_samples(X, Y))

    def fit_covariance(self, pair):
        raise NotImplementedError

    def score(self, X, Y):
        """Negative quadratic loss of ``delta_`` on held-out samples
        (larger is better)."""
        check_is_fitted(self, "delta_")
        pair = _pair_from_samples(X, Y)
        if pair.d != self.n_features_in_:
            raise InvalidArgumentError(
                f"expected {self.n_features_in_} features, got {pair.d}")
        return -_loss_of_delta(LossContext.from_pair(pair), self.delta_)


class LatentDifferentialNetwork(_DifferentialBase):
    """Two-stage nonconvex estimator with an indefinite low-rank factor.

    Parameters
    ----------
    alpha : float, default=0.1
        Fraction of entries kept per row and column of the sparse part.
    s : int or None, default=None
        Total entry budget of the sparse part; None means ``6 * d``.
    r : int, default=1
        Rank of the low-rank part.
    beta : float, default=1.0
        Incoherence level of the factor.
    eta1 : float, default=0.5
        Step size for the sparse part.
    eta2 : float or None, default=None
        Step size for the factor; None uses ``eta1 / ||U0||_2^2``.
    max_iter : int, default=2000
    rel_tol : float, default=1e-8

    Attributes
    ----------
    sparse_ : ndarray of shape (d, d)
    factor_ : Factor
    r1_ : int
        Number of positive eigenvalues of the low-rank part.
    low_rank_, delta_ : ndarray of shape (d, d)
    n_iter_ : int
    report_ : FitReport
    """

    def __init__(self, alpha=0.1, s=None, r=1, beta=1.0, eta1=0.5, eta2=None,
                 max_iter=2000, rel_tol=1e-8):
        self.alpha = alpha
        self.s = s
        self.r = r
        self.beta = beta
        self.eta1 = eta1
        self.eta2 = eta2
        self.max_iter = max_iter
        self.rel_tol = rel_tol

    def _hyperparams(self, d):
        s = 6 * d if self.s is None else self.s
        return HyperParams(alpha=self.alpha, s=s, r=self.r, beta=self.beta,
                           eta1=self.eta1, eta2=self.eta2,
                           max_iter=self.max_iter, rel_tol=self.rel_tol)

    def fit_covariance(self, pair):
        """Fit from a :class:`CovariancePair` (sample sizes included)."""
        report = fit_nonconvex(pair, self._hyperparams(pair.d))
        self.report_ = report
        self.sparse_ = report.S
        self.factor_ = Factor(report.U, report.r1)
        self.r1_ = report.r1
        self.low_rank_ = report.low_rank
        self.delta_ = report.delta
        self.n_iter_ = report.n_iter
        self.n_features_in_ = pair.d
        return self


class ConvexDifferentialNetwork(_DifferentialBase):
    """l1 plus nuclear-norm penalized estimator solved by ADMM.

    Parameters
    ----------
    lam1 : float, default=0.1
    lam2 : float, default=0.25
    nu : float, default=1.0
    max_iter : int, default=2000
    feas_tol : float, default=1e-6

    Attributes
    ----------
    sparse_, low_rank_, delta_ : ndarray of shape (d, d)
    rank_ : int
    n_iter_ : int
    report_ : AdmmResult
    """

    def __init__(self, lam1=0.1, lam2=0.25, nu=1.0, max_iter=2000,
                 feas_tol=1e-6):
        self.lam1 = lam1
        self.lam2 = lam2
        self.nu = nu
        self.max_iter = max_iter
        self.feas_tol = feas_tol

    def fit_covariance(self, pair):
        params = AdmmParams(lam1=self.lam1, lam2=self.lam2, nu=self.nu,
                            max_iter=self.max_iter, feas_tol=self.feas_tol)
        result = admm_fit(LossContext.from_pair(pair), params)
        self.report_ = result
        self.sparse_ = result.S
        self.low_rank_ = result.R
        self.delta_ = result.delta
        self.rank_ = result.rank
        self.n_iter_ = result.n_iter
        self.n_features_in_ = pair.d
        return self
