import json
import math

import numpy as np
import pytest

from tiedml.stats import (
    ComparisonReport,
    bootstrap_ci,
    ecdf_csv,
    ks_distance,
    ks_threshold,
    mean_report,
    moment_report,
)


class TestKS:
    def test_self(self, rng):
        xs = rng.normal(size=100)
        assert ks_distance(xs, xs) == 0.0

    def test_disjoint(self, rng):
        assert ks_distance(rng.uniform(-5, 0, 50), rng.uniform(1, 5, 60)) == 1.0

    def test_hand_value(self):
        assert np.isclose(ks_distance([1, 2, 3], [1.5, 2.5]), 1.0 / 3.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_distance([], [1.0])

    def test_triangle_on_ecdfs(self, rng):
        xs, ys, zs = (rng.normal(loc=m, size=200) for m in (0.0, 0.3, 0.8))
        assert ks_distance(xs, zs) <= ks_distance(xs, ys) + ks_distance(ys, zs) + 1e-12

    def test_threshold_table(self):
        assert ks_threshold(10_000, level=0.01) == pytest.approx(0.0231, abs=1e-4)
        assert ks_threshold(500, 2000, level=0.05) == pytest.approx(
            1.3581 * math.sqrt(2500 / 1e6), rel=1e-6
        )
        with pytest.raises(ValueError):
            ks_threshold(100, level=0.2)


class TestMoments:
    def test_constant(self):
        est, se = moment_report(np.full(10, 3.0), 2)
        assert est == 9.0 and se == 0.0

    def test_hand_jackknife(self):
        est, se = moment_report(np.array([0.0, 2.0]), 1)
        assert est == 1.0 and np.isclose(se, 1.0)

    def test_mean_agreement(self, rng):
        xs = rng.exponential(size=500)
        est, _ = moment_report(xs, 1)
        assert np.isclose(est, xs.mean())

    def test_mean_report(self, rng):
        xs = rng.normal(size=400)
        est, se = mean_report(xs)
        assert np.isclose(est, xs.mean())
        assert np.isclose(se, xs.std(ddof=1) / 20.0)


class TestBootstrap:
    def test_constant_degenerate(self):
        lo, hi = bootstrap_ci(np.full(50, 2.5), np.mean, 0.9, 200, seed=1)
        assert lo == hi == 2.5

    def test_widening(self, rng):
        xs = rng.exponential(size=300)
        widths = []
        for level in (0.5, 0.8, 0.95):
            lo, hi = bootstrap_ci(xs, np.mean, level, 400, seed=7)
            widths.append(hi - lo)
        assert widths[0] <= widths[1] <= widths[2]

    def test_deterministic(self, rng):
        xs = rng.normal(size=100)
        assert bootstrap_ci(xs, np.mean, 0.9, 200, seed=3) == bootstrap_ci(
            xs, np.mean, 0.9, 200, seed=3
        )

    def test_reps_floor(self):
        with pytest.raises(ValueError):
            bootstrap_ci(np.ones(5), np.mean, 0.9, 50, seed=0)

    def test_coverage(self):
        # mean of exponential data: percentile interval should cover near its level
        rng = np.random.default_rng(11)
        level, hits, trials = 0.9, 0, 200
        for t in range(trials):
            xs = rng.exponential(size=60)
            lo, hi = bootstrap_ci(xs, np.mean, level, 300, seed=t)
            hits += lo <= 1.0 <= hi
        assert abs(hits / trials - level) < 0.06


class TestComparisonReport:
    def test_pass_rule(self):
        rep = ComparisonReport("x", {}, 1.0, 0.01, 1.05, 0.01, 0.0, z=3.0)
        assert rep.passed == (abs(1.0 - 1.05) <= 3.0 * math.sqrt(2) * 0.01)
        rep2 = ComparisonReport("x", {}, 1.0, 0.0, 1.04, 0.0, 0.05, z=0.0)
        assert rep2.passed

    def test_json_roundtrip(self):
        rep = ComparisonReport("exp", {"gamma": 0.5}, 1.0, 0.1, 1.1, 0.0, 0.2,
                               z=2.0, n_lhs=10, seed=4, extra={"a": 1})
        obj = json.loads(rep.to_json())
        assert obj["schema"] == 1
        back = ComparisonReport.from_dict(obj)
        assert back == rep
        assert obj["pass"] == rep.passed


def test_ecdf_csv(rng):
    xs = rng.normal(size=5)
    text = ecdf_csv(xs, xs + 1)
    assert text.startswith("x,F1,F2")
    assert len(text.strip().splitlines()) == 11
