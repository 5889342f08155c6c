import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffnet.exceptions import (DivergenceError, InvalidArgumentError,
                                SampleTooSmallError)
from diffnet.experiments import make_instance
from diffnet.loss import LossContext
from diffnet.matops import (Factor, dispersed_truncate, hard_truncate,
                            total_distance)
from diffnet.nonconvex import (HyperParams, Initialization, IterState,
                               estimate_rank, fit_nonconvex, initialize, step)
from diffnet.synthdata import CovariancePair, sample

from conftest import random_spd, random_symmetric


@pytest.fixture(scope="module")
def instance_30():
    """d = 30, r = 1 (realized rank 2), n = 10000."""
    return make_instance((1, 2), 30, 1, 10000, seed=3)


def population_pair(truth):
    return CovariancePair(truth.cov_x, truth.cov_y, 10**9, 10**9)


def reference_step(Sx, Sy, S, U, r1, eta1, eta2, alpha, s, beta):
    """Straight transcription of the four update lines."""
    d, r = U.shape
    lam = np.diag([1.0] * r1 + [-1.0] * (r - r1))
    delta = S + U @ lam @ U.T
    grad_s = 0.5 * Sx @ delta @ Sy + 0.5 * Sy @ delta @ Sx - (Sy - Sx)
    grad_u = (Sx @ delta @ Sy @ U @ lam + Sy @ delta @ Sx @ U @ lam
              - 2 * (Sy - Sx) @ U @ lam)
    S_new = dispersed_truncate(hard_truncate(S - eta1 * grad_s, s), alpha)
    U_half = (U - eta2 * grad_u
              - eta2 / 2 * U @ (U.T @ U - lam @ U.T @ U @ lam))
    bound2 = 4 * beta * np.linalg.norm(U, 2) ** 2 * r / d
    rows = np.linalg.norm(U_half, axis=1)
    scale = np.minimum(1.0, np.sqrt(bound2) / np.maximum(rows, 1e-300))
    return S_new, U_half * scale[:, None]


class TestHyperParams:

    @pytest.mark.parametrize("kwargs", [
        dict(alpha=0.0, s=10, r=1), dict(alpha=1.5, s=10, r=1),
        dict(alpha=0.5, s=0, r=1), dict(alpha=0.5, s=10, r=-1),
        dict(alpha=0.5, s=10, r=1, eta1=0.0),
        dict(alpha=0.5, s=10, r=1, beta=-1.0)])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            HyperParams(**kwargs)

    def test_stage_one_defaults(self):
        hp = HyperParams(alpha=0.2, s=40, r=1)
        assert (hp.init_alpha, hp.init_s) == (0.2, 40)
        hp = HyperParams(alpha=0.2, s=40, r=1, alpha_init=0.5, s_init=80)
        assert (hp.init_alpha, hp.init_s) == (0.5, 80)


class TestInitialize:

    def test_identical_groups_give_small_sparse_part(self):
        sigma = random_spd(np.random.default_rng(0), 20)
        X = sample(sigma, 100000, seed=1, group=0)
        Y = sample(sigma, 100000, seed=1, group=1)
        pair = CovariancePair.from_samples(X, Y)
        init = initialize(pair, HyperParams(alpha=0.1, s=120, r=1))
        assert np.linalg.norm(init.S) <= 0.5

    def test_rank_zero(self, instance_30):
        init = initialize(instance_30.train, HyperParams(alpha=0.3, s=60, r=0))
        assert init.U.shape == (30, 0) and init.r1 == 0

    def test_decomposition(self, instance_30):
        hp = HyperParams(alpha=0.3, s=60, r=2)
        init = initialize(instance_30.train, hp)
        inv_x, inv_y = instance_30.train.scaled_inverses()
        np.testing.assert_allclose(init.delta0, inv_x - inv_y, rtol=1e-12)
        np.testing.assert_allclose(init.S + init.R0, init.delta0, atol=1e-12)
        assert np.count_nonzero(init.S) <= hp.s + 1
        # radius uses the unprojected factor, whose squared norm is the
        # largest retained eigenvalue magnitude
        bound2 = 4 * hp.beta * np.abs(init.eigvals).max() * 2 / 30
        assert np.all(np.sum(init.U ** 2, axis=1) <= bound2 * (1 + 1e-9))

    def test_small_sample(self):
        X = np.random.default_rng(0).standard_normal((10, 9))
        pair = CovariancePair.from_samples(X, X)
        with pytest.raises(SampleTooSmallError):
            initialize(pair, HyperParams(alpha=0.5, s=10, r=1))

    def test_positive_index_recovered(self):
        hits = 0
        for seed in range(20):
            inst = make_instance((1, 2), 50, 1, 5000, seed)
            hp = HyperParams(alpha=0.1, s=300, r=inst.truth.rank)
            hits += initialize(inst.train, hp).r1 == inst.truth.r1
        assert hits >= 18


class TestStep:

    def test_population_fixed_point(self, truth_30):
        ctx = LossContext(truth_30.cov_x, truth_30.cov_y)
        hp = HyperParams(alpha=1.0, s=200, r=truth_30.rank, eta2=0.1)
        st0 = IterState(truth_30.sparse.copy(), truth_30.factor.U.copy(),
                        truth_30.r1)
        st1 = step(ctx, st0, hp)
        np.testing.assert_allclose(st1.S, st0.S, atol=1e-10)
        np.testing.assert_allclose(st1.U, st0.U, atol=1e-10)

    def test_vanishing_steps_project_once(self, rng):
        # step sizes must be positive; 1e-300 is zero up to underflow
        ctx = LossContext(random_spd(rng, 8), random_spd(rng, 8))
        hp = HyperParams(alpha=0.25, s=10, r=2, eta1=1e-300, eta2=1e-300)
        S0 = random_symmetric(rng, 8)
        st0 = IterState(S0, rng.standard_normal((8, 2)), 1)
        st1 = step(ctx, st0, hp)
        st2 = step(ctx, st1, hp)
        np.testing.assert_allclose(st1.S, dispersed_truncate(
            hard_truncate(S0, 10), 0.25), rtol=1e-12, atol=1e-250)
        np.testing.assert_allclose(st2.S, st1.S, rtol=1e-12, atol=1e-250)
        np.testing.assert_allclose(st2.U, st1.U, rtol=1e-12)

    @pytest.mark.parametrize("r1", [0, 1, 2])
    def test_matches_reference(self, instance_30, r1):
        pair = instance_30.train
        ctx = LossContext.from_pair(pair)
        rng = np.random.default_rng(r1)
        S = random_symmetric(rng, 30, scale=0.1)
        U = rng.standard_normal((30, 2)) * 0.5
        hp = HyperParams(alpha=0.2, s=80, r=2, beta=1.0, eta1=0.5, eta2=0.05)
        st1 = step(ctx, IterState(S, U, r1), hp)
        S_ref, U_ref = reference_step(pair.cov_x, pair.cov_y, S, U, r1,
                                      0.5, 0.05, 0.2, 80, 1.0)
        np.testing.assert_allclose(st1.S, S_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(st1.U, U_ref, rtol=0, atol=1e-12)
        assert st1.k == 1 and st1.r1 == r1

    def test_needs_eta2(self, rng):
        ctx = LossContext(np.eye(3), np.eye(3))
        st0 = IterState(np.eye(3), np.ones((3, 1)), 1)
        with pytest.raises(InvalidArgumentError):
            step(ctx, st0, HyperParams(alpha=1.0, s=9, r=1))

    @given(st.integers(0, 10**6), st.integers(0, 3),
           st.floats(0.1, 1.0), st.integers(4, 40))
    def test_feasibility_after_step(self, seed, r, alpha, s):
        rng = np.random.default_rng(seed)
        d = 8
        ctx = LossContext(random_spd(rng, d), random_spd(rng, d))
        r1 = int(rng.integers(0, r + 1))
        hp = HyperParams(alpha=alpha, s=s, r=r, eta2=0.1)
        st0 = IterState(random_symmetric(rng, d), rng.standard_normal((d, r)),
                        r1)
        st1 = step(ctx, st0, hp)
        assert np.count_nonzero(st1.S) <= s + 1
        k = int(np.ceil(alpha * d - 1e-12))
        assert np.count_nonzero(st1.S, axis=1).max() <= k
        np.testing.assert_array_equal(st1.S, st1.S.T)
        if r:
            bound2 = 4 * np.linalg.norm(st0.U, 2) ** 2 * r / d
            assert np.all(np.sum(st1.U ** 2, axis=1) <= bound2 * (1 + 1e-12))
        assert st1.r1 == r1

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence_reports_iteration(self, instance_30):
        hp = HyperParams(alpha=0.3, s=60, r=2, eta1=1e300, eta2=1e300)
        with pytest.raises(DivergenceError) as info:
            fit_nonconvex(instance_30.train, hp)
        assert info.value.iteration == 1
        assert len(info.value.trace) >= 1


class TestFit:

    def test_objective_non_increasing(self, instance_30):
        hp = HyperParams(alpha=0.3, s=180, r=instance_30.truth.rank)
        report = fit_nonconvex(instance_30.train, hp)
        obj = np.asarray(report.objective)
        assert np.all(np.diff(obj[1:]) <= 1e-8)
        assert report.converged and not report.guard_triggered

    def test_default_eta2(self, instance_30):
        hp = HyperParams(alpha=0.3, s=60, r=2, max_iter=1)
        init = initialize(instance_30.train, hp)
        report = fit_nonconvex(instance_30.train, hp, init=init)
        expected = 0.5 / np.linalg.norm(init.U, 2) ** 2
        assert report.hp.eta2 == pytest.approx(expected, rel=1e-12)

    def test_rank_zero_is_iterative_thresholding(self, instance_30):
        pair = instance_30.train
        hp = HyperParams(alpha=0.3, s=60, r=0, max_iter=25, rel_tol=0)
        report = fit_nonconvex(pair, hp)
        S = initialize(pair, hp).S
        for _ in range(25):
            G = (pair.cov_x @ S @ pair.cov_y + pair.cov_y @ S @ pair.cov_x) / 2 \
                - (pair.cov_y - pair.cov_x)
            S = dispersed_truncate(hard_truncate(S - 0.5 * G, 60), 0.3)
        assert report.U.shape == (30, 0)
        np.testing.assert_allclose(report.S, S, atol=1e-12)
        np.testing.assert_array_equal(report.delta, report.S)

    def test_positive_index_fixed(self, instance_30):
        hp = HyperParams(alpha=0.3, s=60, r=2, max_iter=50)
        seen = set()
        fit_nonconvex(instance_30.train, hp,
                      callback=lambda st: seen.add(st.r1))
        assert len(seen) == 1

    def test_deterministic(self, instance_30):
        hp = HyperParams(alpha=0.3, s=60, r=2, max_iter=100)
        a = fit_nonconvex(instance_30.train, hp)
        b = fit_nonconvex(instance_30.train, hp)
        assert a.objective == b.objective
        np.testing.assert_array_equal(a.delta, b.delta)

    def test_report_dict(self, instance_30):
        hp = HyperParams(alpha=0.3, s=60, r=2, max_iter=5)
        report = fit_nonconvex(instance_30.train, hp, truth=instance_30.truth)
        out = report.to_dict()
        assert out["d"] == 30 and out["r"] == 2
        assert len(out["objective"]) == report.n_iter + 1
        assert len(out["error"]) == report.n_iter + 1
        np.testing.assert_allclose(report.delta, report.delta.T, atol=1e-12)

    @pytest.mark.parametrize("population,scale", [(False, 0.6), (True, 0.3),
                                                  (True, 0.6)])
    def test_error_contracts_until_plateau(self, instance_30, population,
                                           scale):
        truth = instance_30.truth
        pair = population_pair(truth) if population else instance_30.train
        rng = np.random.default_rng(0)
        E = rng.standard_normal((30, 30)) * truth.sparse.std() * scale
        E = (E + E.T) / 2 * (truth.sparse != 0)
        U = truth.factor.U * (1 + scale / 2
                              * rng.standard_normal(truth.factor.U.shape))
        init = Initialization(truth.sparse + E, U, truth.r1, None, None, None)
        hp = HyperParams(alpha=0.4, s=200, r=truth.rank, max_iter=400,
                         rel_tol=0)
        tds = [total_distance(init.S, truth.sparse, Factor(U, truth.r1),
                              truth.factor, truth.sigma1)]
        fit_nonconvex(pair, hp, init=init, callback=lambda st: tds.append(
            total_distance(st.S, truth.sparse, st.factor, truth.factor,
                           truth.sigma1)))
        tds = np.asarray(tds)
        stop = int(np.argmax(tds <= 2 * tds[-1]))
        assert np.all(tds[1:stop + 1] <= 1.05 * tds[:stop])
        assert tds[-1] < tds[0]


class TestEstimateRank:

    def test_zero(self):
        assert estimate_rank(np.zeros((5, 5)), 100, 5) == 0

    def test_diagonal(self):
        R0 = np.diag([10.0, 0.01, 0.0, 0.0])
        # threshold c * sqrt(d / n) = 1
        assert estimate_rank(R0, n_min=4, d=4, c=1.0) == 1

    def test_rejects_nonpositive_c(self):
        with pytest.raises(InvalidArgumentError):
            estimate_rank(np.eye(2), 10, 2, c=0.0)

    def test_synthetic_recovery(self):
        hits, found = 0, []
        for seed in range(20):
            inst = make_instance((1, 2), 50, 1, 5000, seed)
            hp = HyperParams(alpha=0.3, s=300, r=inst.truth.rank)
            init = initialize(inst.train, hp)
            rank = estimate_rank(init.R0, inst.train.n_min, 50)
            found.append(rank)
            hits += rank == inst.truth.rank
        assert hits >= 18, f"estimated ranks {found}"
