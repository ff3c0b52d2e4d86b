import math

import numpy as np
import pytest

from fblsi.density import InfeasibleError
from fblsi.instances import (
    bsc_channel,
    capacity_first_order_stuck_at,
    dsbs_wak,
    dsbs_wz,
    lossy_as_wz,
    stuck_at_decoder_si,
    stuck_at_gp,
)
from fblsi.prob import Channel, Pmf, binary_entropy
from fblsi.second_order.mvn import qinv
from fblsi.second_order.rd import lossy_second_order
from fblsi.second_order.regions import (
    RegionCurve,
    channel_rate,
    gp_rate,
    gp_region,
    log_term,
    lossless_rate,
    wak_contains,
    wak_min_r2,
    wak_region,
    wz_rate,
    wz_region,
)
from fblsi.second_order.stats import DispersionStats, dispersion_stats

DSBS = dsbs_wak(0.11, 0.2)


class TestWakRegion:
    def test_large_n_collapses_to_mean(self):
        curve = wak_region(DSBS, 10**16, 0.1, num=40)
        st = dispersion_stats(DSBS)
        assert np.max(np.abs(curve.points - st.j_mean)) < 1e-6

    def test_modified_with_zero_shift_is_cs(self):
        a = wak_region(DSBS, 1000, 0.1, num=30)
        b = wak_region(DSBS, 1000, 0.1, "modified", rho_grid=[0.0], num=30)
        np.testing.assert_array_equal(a.points, b.points)

    def test_modified_shift_only_enlarges(self):
        cs = wak_region(DSBS, 1000, 0.1, num=30).points
        mod = wak_region(DSBS, 1000, 0.1, "modified", rho_grid=[0.0, 0.2, 0.5], num=30).points
        for p in cs:
            assert np.any(np.all(mod <= p + 1e-12, axis=1))

    @pytest.mark.parametrize("eps", [0.1, 0.5])
    def test_split_points_inside_cs(self, eps):
        split = wak_region(DSBS, 10_000, eps, "verdu_split", lam_grid=np.linspace(0, 1, 11))
        assert all(wak_contains(DSBS, 10_000, eps, p) for p in split.points)

    def test_boundary_points_are_members(self):
        curve = wak_region(DSBS, 500, 0.1, num=20)
        assert all(wak_contains(DSBS, 500, 0.1, p) for p in curve.points)
        assert not wak_contains(DSBS, 500, 0.1, curve.points[10] - 1e-3)

    def test_min_r2_on_the_curve(self):
        curve = wak_region(DSBS, 500, 0.1, logterm=False, num=20)
        r1, r2 = curve.points[7]
        assert wak_min_r2(DSBS, 500, 0.1, r1, logterm=False) == pytest.approx(r2, abs=1e-9)

    def test_nesting_in_n(self):
        small = wak_region(DSBS, 200, 0.1, logterm=False, num=20)
        for p in small.points:
            assert wak_contains(DSBS, 2000, 0.1, p, logterm=False)

    def test_log_term_shift(self):
        with_lt = wak_region(DSBS, 1000, 0.1, num=10).points
        without = wak_region(DSBS, 1000, 0.1, logterm=False, num=10).points
        np.testing.assert_allclose(with_lt - without, log_term(1000), atol=1e-12)

    def test_degenerate_dispersion_is_a_point_set_at_the_mean(self):
        inst = dsbs_wak(0.11, 0.5)
        st = dispersion_stats(inst)
        assert st.rank == 0
        curve = wak_region(inst, 100, 0.1, num=10)
        np.testing.assert_allclose(curve.points[0], st.j_mean + log_term(100), atol=1e-12)

    def test_corner(self):
        n, eps = 1000, 0.1
        curve = wak_region(DSBS.p_xy, n, eps, "corner", logterm=False, num=20)
        st = dispersion_stats(DSBS.p_xy, "corner")
        # R1 >= H(X|Y) and R1 + R2 >= H(X, Y) up to the 1/sqrt(n) backoff
        s = np.sqrt(np.diag(st.v_matrix))
        assert np.all(curve.points[:, 0] >= st.j_mean[0] + s[0] * qinv(eps) / math.sqrt(n) - 1e-9)
        assert np.all(curve.points.sum(axis=1) >= st.j_mean[1] + s[1] * qinv(eps) / math.sqrt(n) - 1e-9)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            wak_region(DSBS, 100, 0.1, "nope")
        with pytest.raises(ValueError):
            wak_region(DSBS, 100, 0.1, "modified", rho_grid=[])
        with pytest.raises(ValueError):
            wak_region(DSBS, 100, 0.1, "verdu_split", lam_grid=[0.0, 1.0])
        with pytest.raises(ValueError):
            log_term(0)

    def test_curve_meta(self):
        curve = wak_region(DSBS, 100, 0.1, num=10)
        assert curve.meta["instance"] == DSBS.fingerprint()
        assert curve.meta["construction"] == "cs"
        assert curve.coords == ("R1", "R2")


class TestRegionCurve:
    def test_sorted(self):
        c = RegionCurve(np.array([[2.0, 0.0], [1.0, 1.0]]), ("a", "b"))
        np.testing.assert_array_equal(c.points[:, 0], [1.0, 2.0])
        assert len(c) == 2

    def test_finite(self):
        with pytest.raises(ValueError):
            RegionCurve(np.array([[math.inf, 0.0]]), ("a", "b"))


class TestWz:
    def test_curve_consistent_with_rate(self):
        inst = dsbs_wz(0.11, 0.2, 0.25)
        curve = wz_region(inst, 1000, 0.1, num=12)
        assert curve.meta["construction"] == "z3-scan"
        r, d = curve.points[5]
        assert wz_rate(inst, 1000, 0.1, d) == pytest.approx(r, abs=1e-6)

    def test_rate_decreases_with_distortion(self):
        inst = dsbs_wz(0.11, 0.2, 0.25)
        rates = [wz_rate(inst, 1000, 0.1, d) for d in (0.245, 0.26, 0.3)]
        assert rates[0] > rates[1] > rates[2]

    def test_infeasible_level(self):
        with pytest.raises(InfeasibleError):
            wz_rate(dsbs_wz(0.11, 0.2, 0.1), 1000, 0.1)

    def test_constant_side_information_is_lossy_coding(self):
        level = 0.11
        inst = lossy_as_wz(Pmf.uniform(2), Channel.bsc(level), 1.0 - np.eye(2), level + 1e-3)
        st = dispersion_stats(inst)
        np.testing.assert_allclose(st.j_mean[:2], [0.0, 1 - binary_entropy(level)], atol=1e-12)
        assert wz_rate(inst, 10**8, 0.1, logterm=False) == pytest.approx(1 - binary_entropy(level), abs=1e-3)
        # a fixed test channel cannot beat the optimal second-order rate
        at_n = wz_rate(inst.with_level(level + 0.02), 1000, 0.1, logterm=False)
        assert at_n >= lossy_second_order([0.5, 0.5], 1.0 - np.eye(2), level + 0.02, 1000, 0.1).second_order_rate


class TestGp:
    def test_zero_dispersion_gives_first_order(self):
        st = DispersionStats(3, [0.6, -0.1, -0.5], np.zeros((3, 3)), 0.0)
        assert gp_rate(st, 1000, 0.01, logterm=False) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("n", [500, 5000, 100_000])
    def test_stuck_at_ordering(self, n):
        eps = 0.001
        r_gp = gp_rate(stuck_at_gp(0.1, 0.11), n, eps, logterm=False)
        r_si = channel_rate(stuck_at_decoder_si(0.1, 0.11), n, eps, logterm=False)
        assert r_gp < r_si < capacity_first_order_stuck_at(0.1, 0.11)

    def test_rate_increases_with_n(self):
        inst = stuck_at_gp(0.1, 0.11)
        rates = [gp_rate(inst, n, 0.001, logterm=False) for n in (1000, 10_000, 100_000)]
        assert rates[0] < rates[1] < rates[2]

    def test_region_with_large_budget(self):
        inst = stuck_at_gp(0.1, 0.11)
        curve = gp_region(inst, 1000, 0.01, num=15)
        assert curve.coords == ("R", "Gamma")
        # the loosest budget on the scan approaches the cost-free rate from below
        assert curve.points[-1, 0] <= gp_rate(inst, 1000, 0.01) + 1e-6
        assert curve.points[-1, 0] == pytest.approx(gp_rate(inst, 1000, 0.01), abs=1e-3)


class TestPointToPoint:
    def test_deterministic_source(self):
        assert lossless_rate(Pmf(np.array([1.0, 0.0])), 100, 0.1, logterm=False) == 0.0

    def test_half_eps(self):
        p = np.array([0.2, 0.3, 0.5])
        h = -(p @ np.log2(p))
        assert lossless_rate(p, 1000, 0.5) == pytest.approx(h + log_term(1000), abs=1e-12)

    def test_bsc(self):
        a, n, eps = 0.11, 1000, 0.01
        st = dispersion_stats(bsc_channel(a), "channel")
        assert st.j_mean[0] == pytest.approx(1 - binary_entropy(a), abs=1e-12)
        v = a * (1 - a) * math.log2((1 - a) / a) ** 2
        assert st.v_matrix[0, 0] == pytest.approx(v, abs=1e-12)
        ref = 1 - binary_entropy(a) - math.sqrt(v / n) * qinv(eps) - 4 * math.log2(n) / n
        assert channel_rate(bsc_channel(a), n, eps) == pytest.approx(ref, abs=1e-12)
