import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import erfc, gamma as gamma_fn

from tiedml import processes as pr
from tiedml.paths import FactorFunction, ProductFunctional, eval_path
from tiedml.stats import ks_distance, ks_threshold, mean_report


def levy_cdf(x):
    # one-sided stable gamma=1/2, Laplace transform exp(-sqrt(s))
    return erfc(1.0 / (2.0 * np.sqrt(x)))


class TestMoments:
    def test_first_moment_is_one(self):
        for g in (0.3, 0.5, 0.7, 0.9):
            assert np.isclose(pr.ml_moment(g, 1), 1.0)

    def test_second_moment_half(self):
        assert np.isclose(pr.ml_moment(0.5, 2), math.pi / 2.0)

    def test_degenerate_limit(self):
        for p in (1, 2, 3):
            assert abs(pr.ml_moment(0.999, p) - 1.0) < 0.01

    def test_tied_moments(self):
        assert pr.tied_marginal_moment(0.4, 0) == 1.0
        assert np.isclose(pr.tied_marginal_moment(0.5, 1), math.pi / 2.0)
        vals = [pr.tied_marginal_moment(0.5, p) for p in (0, 1, 2)]
        assert vals[0] < vals[1] < vals[2]

    def test_gamma_validation(self):
        with pytest.raises(pr.ConfigurationError):
            pr.ml_moment(1.0, 1)
        with pytest.raises(pr.ConfigurationError):
            pr.check_gamma(0.0)


class TestStableSampler:
    def test_laplace_transform(self, rng):
        s = pr.standard_stable(0.5, 200_000, rng)
        est, se = mean_report(np.exp(-s))
        assert abs(est - math.exp(-1.0)) < 4 * se

    def test_ks_against_levy(self, rng):
        s = np.sort(pr.standard_stable(0.5, 5000, rng))
        ecdf = np.arange(1, s.size + 1) / s.size
        dist = float(np.max(np.abs(ecdf - levy_cdf(s))))
        assert dist < ks_threshold(5000, level=0.01)

    def test_positive(self, rng):
        assert np.all(pr.standard_stable(0.7, 10_000, rng) > 0)


class TestSubordinator:
    def test_strictly_increasing(self):
        spec = pr.SubordinatorSpec(0.5, 0.01, seed=5)
        path = pr.sample_subordinator(spec, 2.0)
        assert np.all(np.diff(path.values) > 0)
        assert path.epochs[0] == 0.01 and path.epochs[-1] == 2.0

    def test_normalization(self, rng):
        # E(eta(1) ** -gamma) = 1 under the chosen scaling
        g = 0.5
        spec = pr.SubordinatorSpec(g, 0.1, seed=rng)
        vals = np.array(
            [eval_path(pr.sample_subordinator(spec, 1.0), 1.0) for _ in range(4000)]
        )
        est, se = mean_report(vals**-g)
        assert abs(est - 1.0) < 4 * se

    def test_config_errors(self):
        with pytest.raises(pr.ConfigurationError):
            pr.SubordinatorSpec(0.5, -1.0)
        with pytest.raises(pr.ConfigurationError):
            pr.sample_subordinator(pr.SubordinatorSpec(0.5, 0.5), 0.1)


class TestMlPath:
    def test_structure(self):
        path = pr.sample_ml_path(0.5, 1.0, resolution=100, seed=3)
        assert path.epochs[0] == 0.0
        assert np.allclose(path.jump_sizes, 0.01)
        assert path.horizon == 1.0

    def test_marginal_mean(self):
        xs = pr.sample_ml_marginals(0.5, 20_000, 400, seed=4)
        est, se = mean_report(xs)
        assert abs(est - 1.0) < 4 * se + 1.0 / 400.0

    def test_marginal_matches_path_sampler(self):
        # the batched marginal kernel and the path pipeline draw the same law
        xs = pr.sample_ml_marginals(0.5, 3000, 100, seed=10)
        ys = np.array(
            [eval_path(pr.sample_ml_path(0.5, 1.0, 100, seed), 1.0)
             for seed in range(3000, 6000)]
        )
        assert ks_distance(xs, ys) < ks_threshold(3000, level=0.01)

    def test_self_similarity(self):
        # marginal of the rescaled path at 1 versus the marginal itself
        g = 0.5
        n = 10_000
        base = pr.sample_ml_marginals(g, n, 300, seed=21, t=1.0)
        for i, a in enumerate((0.5, 2.0)):
            scaled = pr.sample_ml_marginals(g, n, 300, seed=50 + i, t=a) / a**g
            assert ks_distance(base, scaled) < ks_threshold(n, level=0.01)

    def test_moment_ladder(self):
        for g in (0.3, 0.5, 0.7):
            xs = pr.sample_ml_marginals(g, 10_000, 300, seed=hash(g) % 2**31)
            for p in (1, 2):
                est, se = mean_report(xs**p)
                assert abs(est - pr.ml_moment(g, p)) < 4 * se + 2e-2

    def test_refinement_consistency(self, rng):
        # couple resolutions r and 2r through shared increments (adjacent fine
        # cells merge into one coarse cell): grid halving moves the estimate
        # by less than one standard error
        g, n, cells = 0.5, 2500, 2048
        fine_step = 1.0 / 400.0
        scale = pr._increment_scale(g, fine_step)
        coarse = np.empty(n)
        fine = np.empty(n)
        i = 0
        while i < n:
            inc = scale * pr.standard_stable(g, cells, rng)
            cs = np.cumsum(inc)
            if cs[-1] <= 1.0:
                continue
            fine[i] = fine_step * (1 + np.searchsorted(cs, 1.0, side="right"))
            cs2 = np.cumsum(inc.reshape(-1, 2).sum(axis=1))
            coarse[i] = 2 * fine_step * (1 + np.searchsorted(cs2, 1.0, side="right"))
            i += 1
        est_f, se_f = mean_report(fine)
        est_c, _ = mean_report(coarse)
        assert abs(est_f - est_c) < se_f


class TestTiedPath:
    def test_final_epoch_is_one(self):
        for seed in range(20):
            path = pr.sample_tied_path(0.5, resolution=200, seed=seed)
            assert path.epochs[-1] == 1.0
            assert path.horizon == 1.0

    def test_marginal_mean(self):
        tm = pr.sample_tied_marginals(0.5, 20_000, resolution=500, seed=9)
        est, se = mean_report(tm.samples)
        assert abs(est - math.pi / 2.0) < 4 * se + 5e-3
        assert tm.resamples >= 0

    def test_size_biasing_ks(self):
        # tie-down marginal at 1 versus the free marginal reweighted by itself
        n = 30_000
        tied = pr.sample_tied_marginals(0.5, n, resolution=500, seed=31).samples
        pool = pr.sample_ml_marginals(0.5, 2 * n, 500, seed=32)
        rng = np.random.default_rng(33)
        resampled = rng.choice(pool, size=n, p=pool / pool.sum())
        assert ks_distance(tied, resampled) < 0.02


class TestStableDensity:
    def test_closed_form_half(self):
        val = pr._stable_density_standard(0.5, 1.0)
        assert np.isclose(val, math.exp(-0.25) / (2.0 * math.sqrt(math.pi)), rtol=1e-10)

    def test_normalization(self):
        for g in (0.5, 0.7):
            val, _ = integrate.quad(lambda x: pr.stable_density(g, x), 0, np.inf, limit=300)
            assert abs(val - 1.0) < 1e-6

    def test_negative_moment(self):
        for g in (0.4, 0.5):
            val, _ = integrate.quad(
                lambda x: pr.stable_density(g, x) * x**-g, 0, np.inf, limit=300
            )
            assert abs(val - 1.0) < 1e-4

    def test_scale_mapping(self):
        # density of Z relates to the standard law by the deterministic factor
        g = 0.5
        kappa = gamma_fn(1.5) ** 2
        assert np.isclose(
            pr.stable_density(g, 1.0), kappa * pr._stable_density_standard(g, kappa)
        )

    def test_domain(self):
        with pytest.raises(Exception):
            pr.stable_density(0.5, -1.0)


class TestPropositionEstimators:
    def test_prop_c_trivial(self):
        rep = pr.estimate_propC(
            0.5, FactorFunction.parse("one"), samples=4000, resolution=300, seed=2
        )
        assert rep.passed
        assert abs(rep.lhs - 1.0) < 1e-12
        assert abs(rep.rhs - 1.0) < 5 * rep.rhs_se + 1e-2
        assert rep.extra["epsilon_cutoff_bound"] > 0

    def test_prop_c_exponential(self):
        rep = pr.estimate_propC(
            0.5, FactorFunction.parse("exp:1"), samples=8000, resolution=400, seed=3
        )
        assert rep.passed

    def test_cutoff_bound_decreases_in_epsilon(self):
        h = FactorFunction.parse("exp:1")
        b1 = pr.estimate_propC(0.5, h, 2000, 300, epsilon=1e-2, seed=5).tolerance
        b2 = pr.estimate_propC(0.5, h, 2000, 300, epsilon=1e-5, seed=5).tolerance
        assert b2 < b1

    def test_prop_d_trivial(self, pf_one):
        rep = pr.estimate_propD(0.5, pf_one, samples=8000, resolution=400, seed=6)
        assert abs(rep.lhs - 1.0) < 1e-12
        assert abs(rep.rhs - 1.0) < 5 * rep.rhs_se + 1e-2

    def test_prop_d_weights_on_retained_event(self, rng):
        # right endpoint of the straddling stretch is at most 1 on the retained
        # event, so the importance weight is at least 1
        g = 0.5
        c = pr._sub_rows(g, 1.0, 500, 1e-2, rng)
        idx = (c <= 0.5).sum(axis=1)
        d = c[np.arange(500), idx]
        keep = d <= 1.0
        w = (1.0 - d[keep]) ** (g - 1.0)
        assert np.all(w >= 1.0) and np.all(np.isfinite(w))

    def test_prop_d_basic(self, pf_basic):
        rep = pr.estimate_propD(0.5, pf_basic, samples=10_000, resolution=400, seed=7)
        assert rep.passed

    def test_determinism(self):
        a = pr.sample_ml_marginals(0.5, 200, 100, seed=12)
        b = pr.sample_ml_marginals(0.5, 200, 100, seed=12)
        assert np.array_equal(a, b)
        r1 = pr.estimate_propC(0.5, FactorFunction.parse("exp:1"), 500, 200, seed=1)
        r2 = pr.estimate_propC(0.5, FactorFunction.parse("exp:1"), 500, 200, seed=1)
        assert r1.to_json() == r2.to_json()
