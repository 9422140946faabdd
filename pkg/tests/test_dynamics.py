import numpy as np
import pytest

from tiedml import dynamics as dy
from tiedml import processes as pr
from tiedml.paths import FactorFunction, ProductFunctional
from tiedml.stats import mean_report


@pytest.fixture(scope="module")
def system():
    return dy.ulam_density(0.5, grid=2048, x_min=1e-6)


class TestMap:
    def test_fixed_point(self):
        assert dy.lsv_map(0.5, 0.0) == 0.0

    def test_second_branch(self):
        assert dy.lsv_map(0.5, 0.75) == 0.5

    def test_first_branch_value(self):
        assert dy.lsv_map(0.5, 0.25) == pytest.approx(5.0 / 16.0, rel=1e-15)

    def test_branch_endpoints(self):
        assert dy.lsv_map(0.5, 0.5 - 1e-12) == pytest.approx(1.0, abs=1e-10)
        assert dy.lsv_map(0.5, 0.5) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            dy.lsv_map(0.5, 1.5)


class TestReturnTime:
    def test_hand_values(self):
        assert dy.return_time(0.5, 0.75) == (1, False)
        assert dy.return_time(0.5, 0.9) == (1, False)

    def test_censoring(self):
        # a point mapped deep into the left branch takes many steps to return
        assert dy.return_time(0.5, 0.5 + 1e-9, cap=3).censored

    def test_tail_exponent(self, system):
        rng = np.random.default_rng(31)
        x = dy.sample_from_omega(system, 30_000, rng)
        cap = 100_000
        alive = np.arange(x.size)
        cur = x.copy()
        rt = np.full(x.size, cap, dtype=np.int64)
        for j in range(1, cap + 1):
            lo = cur < 0.5
            cur = np.where(lo, cur * (1.0 + (2.0 * cur) ** 2.0), 2.0 * cur - 1.0)
            back = cur >= 0.5
            if back.any():
                rt[alive[back]] = j
                cur = cur[~back]
                alive = alive[~back]
            if alive.size == 0:
                break
        ns = np.unique(np.geomspace(100, 10_000, 10).astype(int))
        tail = np.array([(rt > n).mean() for n in ns])
        slope = np.polyfit(np.log(ns), np.log(tail), 1)[0]
        assert abs(slope + 0.5) < 0.1


class TestUlam:
    def test_residual_contract(self, system):
        assert system.residual <= 1e-8

    def test_density_positive_on_omega(self, system):
        sel = system.edges[:-1] >= 0.5
        assert np.all(system.density[sel] > 0)
        assert np.isclose(system.masses[sel].sum(), 1.0)

    def test_density_slope_near_zero(self, system):
        mids = 0.5 * (system.edges[:-1] + system.edges[1:])
        sel = (mids > 1e-4) & (mids < 1e-2)
        slope = np.polyfit(np.log(mids[sel]), np.log(system.density[sel]), 1)[0]
        assert abs(slope + 2.0) < 0.2  # -1/gamma within 10%

    def test_density_csv(self, system):
        text = system.density_csv()
        assert text.startswith("cell_left,cell_right,value")
        assert "np." not in text


class TestOccupation:
    def test_record_monotone(self):
        rec = dy.occupation_record(0.5, 0.77, 500, checkpoints=[0, 100, 250, 500])
        assert np.all(np.diff(rec.counts) >= 0)
        assert rec.counts[0] == 0
        assert rec.counts[-1] <= 500

    def test_step_increments(self):
        rec = dy.occupation_record(0.5, 0.9, 60, checkpoints=list(range(61)))
        inc = np.diff(rec.counts)
        assert set(np.unique(inc)).issubset({0, 1})


class TestEmpiricalReturns:
    def test_tables_shape(self, system):
        tabs = dy.empirical_return_sequence(0.5, 3000, 3000, seed=3, system=system)
        assert tabs.u[0] == 1.0
        assert np.all((tabs.u >= 0) & (tabs.u <= 1))
        assert np.all(np.diff(tabs.a) >= 0)

    def test_slope_and_srt_shadow(self, system):
        tabs = dy.empirical_return_sequence(0.5, 20_000, 8000, seed=5, system=system)
        ns = np.unique(np.geomspace(1000, 20_000, 10).astype(int))
        slope = np.polyfit(np.log(ns), np.log(tabs.a[ns]), 1)[0]
        assert abs(slope - 0.5) < 0.1
        # windowed empirical ratio u*k/(gamma*a) drifts toward 1
        def windowed_ratio(k):
            lo, hi = int(0.9 * k), k
            return tabs.u[lo:hi].mean() * k / (0.5 * tabs.a[k])
        assert abs(windowed_ratio(18_000) - 1.0) < 0.35
        # cross-engine shadow: same diagnostic, exact renewal tables
        import tiedml.renewal as rn
        f = rn.make_lifetime("zeta", 40_000, gamma=0.5)
        t_exact = rn.renewal_sequence(f, 18_000)
        exact_ratio = rn.srt_ratio(t_exact, 18_000).ratio
        assert abs(windowed_ratio(18_000) - exact_ratio) < 0.35


class TestUmbrella:
    def test_trivial_functional(self, system, pf_one):
        tabs = dy.empirical_return_sequence(0.5, 4000, 4000, seed=7, system=system)
        rep = dy.verify_umbrella_mc(
            0.5, 4000, 800, pf_one, seed=8, system=system, tables=tabs,
            reference=(1.0, 0.0),
        )
        assert abs(rep.lhs - 1.0) < 0.08

    def test_against_sampler_reference(self, system):
        pf = ProductFunctional(
            (0.5,), (FactorFunction.parse("exp:1"),), FactorFunction.parse("one")
        )
        rng = np.random.default_rng(5)
        w, _ = pr._tied_rows(0.5, 10_000, 1e-3, rng, [0.5])
        ref, ref_se = mean_report(np.exp(-w[:, 0]))
        tabs = dy.empirical_return_sequence(0.5, 20_000, 4000, seed=11, system=system)
        rep = dy.verify_umbrella_mc(
            0.5, 20_000, 1500, pf, seed=12, system=system, tables=tabs,
            reference=(ref, ref_se),
        )
        assert rep.passed

    def test_requires_reference(self, system):
        with pytest.raises(ValueError):
            dy.verify_umbrella_mc(0.5, 100, 10, None, system=system)
