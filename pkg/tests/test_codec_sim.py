import itertools
import math

import numpy as np
import pytest

from fblsi.bounds import BoundParams, delta_quantity, wak_cs_bound
from fblsi.codec_sim import (
    ResolvabilityCode,
    TrialStats,
    build_code,
    resolvability_bound,
    resolvability_delta,
    resolvability_distance,
    simulated_output_law,
    simulation_map_sample,
    wak_trial,
)
from fblsi.instances import dsbs_wak, random_wak

from oracles import delta_direct, nfold_joint

P_UZ = np.array([[0.4, 0.1], [0.15, 0.35]])


def best_params(inst, n, log_m, log_l):
    """Thresholds on a coarse grid that minimize the analytic bound."""
    cands = []
    for gb in np.arange(0.0, log_m + 4.5, 0.5):
        for gc in np.arange(0.0, log_l + 3.5, 0.5):
            p = BoundParams(n=n, log_m=log_m, log_l=log_l, gamma_b=gb, gamma_c=gc, delta=1e-6)
            cands.append((wak_cs_bound(inst, p).raw_total, gb, gc))
    total, gb, gc = min(cands)
    return BoundParams(n=n, log_m=log_m, log_l=log_l, gamma_b=gb, gamma_c=gc, delta=1e-6), total


class TestCodebook:
    def test_reproducible(self):
        a = build_code([0.3, 0.7], 5, 3, 4, seed=11)
        b = build_code([0.3, 0.7], 5, 3, 4, seed=11)
        np.testing.assert_array_equal(a.codebook, b.codebook)
        assert not np.array_equal(a.codebook, build_code([0.3, 0.7], 5, 3, 4, seed=12).codebook)

    def test_letter_frequencies(self):
        p = np.array([0.2, 0.5, 0.3])
        code = build_code(p, 10, 100, 100, seed=3)
        letters = code.codebook.ravel()
        assert letters.size == 100_000
        freq = np.bincount(letters, minlength=3) / letters.size
        assert np.all(np.abs(freq - p) <= 5 * np.sqrt(p * (1 - p) / letters.size))

    def test_single_codeword(self):
        code = build_code([0.5, 0.5], 6, 1, 1, seed=0)
        assert code.codebook.shape == (1, 1, 6) and code.size == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            build_code([0.5, 0.5], 3, 0, 1, seed=0)
        with pytest.raises(ValueError):
            ResolvabilityCode(np.zeros((2, 2, 3)), 2, 3, 0, 3)

    def test_frozen(self):
        code = build_code([0.5, 0.5], 3, 2, 2, seed=0)
        with pytest.raises(ValueError):
            code.codebook[0, 0, 0] = 1


class TestSimulationMap:
    def test_single_column(self):
        code = build_code(P_UZ.sum(axis=1), 3, 2, 1, seed=1)
        assert {simulation_map_sample(code, P_UZ, 1, [0, 1, 1], rng=s) for s in range(20)} == {0}

    def test_deterministic_channel_hits_matching_codewords(self):
        p_uz = np.diag([0.5, 0.5])
        code = build_code([0.5, 0.5], 3, 1, 16, seed=2)
        z = code.codebook[0, 5]
        rng = np.random.default_rng(0)
        ls = [simulation_map_sample(code, p_uz, 0, z, rng=rng) for _ in range(200)]
        assert all(np.array_equal(code.codebook[0, l], z) for l in ls)

    def test_conditional_law_for_a_fixed_code(self):
        code = build_code(P_UZ.sum(axis=1), 2, 1, 4, seed=5)
        z = np.array([1, 0])
        p_z_u = P_UZ / P_UZ.sum(axis=1, keepdims=True)
        w = np.array([np.prod([p_z_u[u, zz] for u, zz in zip(code.codebook[0, l], z)]) for l in range(4)])
        w /= w.sum()
        rng = np.random.default_rng(1)
        draws = np.array([simulation_map_sample(code, P_UZ, 0, z, rng=rng) for _ in range(20_000)])
        freq = np.bincount(draws, minlength=4) / draws.size
        assert np.all(np.abs(freq - w) <= 5 * np.sqrt(w * (1 - w) / draws.size))

    def test_ensemble_law_of_selected_codeword(self):
        # n = 1, L = 3: the law of u_hat given z, averaged over all 8 codebooks
        p_u = P_UZ.sum(axis=1)
        p_z_u = P_UZ / p_u[:, None]
        z = 0
        exact = 0.0
        for cb in itertools.product(range(2), repeat=3):
            pr = np.prod(p_u[list(cb)])
            w = p_z_u[list(cb), z]
            exact += pr * sum(w[i] for i in range(3) if cb[i] == 0) / w.sum()
        hits = 0
        trials = 20_000
        rng = np.random.default_rng(7)
        for s in range(trials):
            code = build_code(p_u, 1, 1, 3, seed=s)
            l = simulation_map_sample(code, P_UZ, 0, [z], rng=rng)
            hits += code.codebook[0, l, 0] == 0
        se = math.sqrt(exact * (1 - exact) / trials)
        assert abs(hits / trials - exact) <= 5 * se

    def test_zero_weights_fall_back_to_uniform(self):
        code = build_code(P_UZ.sum(axis=1), 2, 1, 4, seed=8)
        rng = np.random.default_rng(2)
        # every two-letter log ratio exceeds -5, so the smoothed kernel has no mass left
        draws = [simulation_map_sample(code, P_UZ, 0, [0, 0], gamma_c=-5.0, rng=rng) for _ in range(4000)]
        freq = np.bincount(draws, minlength=4) / 4000
        assert np.all(np.abs(freq - 0.25) <= 5 * math.sqrt(0.25 * 0.75 / 4000))

    def test_input_checks(self):
        code = build_code([0.5, 0.5], 2, 2, 2, seed=0)
        with pytest.raises(ValueError):
            simulation_map_sample(code, P_UZ, 0, [0, 1, 0])
        with pytest.raises(ValueError):
            simulation_map_sample(code, P_UZ, 2, [0, 1])


class TestResolvability:
    def test_independent_channel_gives_zero_distance(self):
        p = np.outer([0.3, 0.7], [0.6, 0.4])
        code = build_code([0.3, 0.7], 3, 1, 2, seed=4)
        assert resolvability_distance(p, code) == pytest.approx(0.0, abs=1e-15)

    def test_output_law_is_a_pmf(self):
        code = build_code(P_UZ.sum(axis=1), 3, 2, 3, seed=4)
        law = simulated_output_law(P_UZ, code)
        assert law.shape == (8,) and law.sum() == pytest.approx(1.0)

    def test_delta_matches_direct_sum(self):
        for n in (1, 2, 3):
            for g in (0.5, 1.0, 2.0, math.inf):
                ref = delta_direct(nfold_joint(P_UZ, n), g)
                assert resolvability_delta(P_UZ, n, g) == pytest.approx(ref, rel=1e-12)
        assert resolvability_delta(P_UZ, 1, 1.0) == pytest.approx(delta_quantity(P_UZ, 1.0), rel=1e-12)

    def test_distance_shrinks_with_codebook_size(self):
        means = []
        for L in (2, 8, 32):
            d = [resolvability_distance(P_UZ, build_code(P_UZ.sum(axis=1), 4, 1, L, seed=s)) for s in range(50)]
            means.append(np.mean(d))
        assert means[0] > means[1] > means[2]

    def test_mean_distance_below_bound(self):
        d = [resolvability_distance(P_UZ, build_code(P_UZ.sum(axis=1), 4, 1, 16, seed=s)) for s in range(100)]
        assert np.mean(d) <= resolvability_bound(P_UZ, 4, 16, 2.0)


class TestWakTrial:
    def test_injective_binning_never_fails(self):
        inst = dsbs_wak(0.11, 0.2)
        p = BoundParams(n=3, log_m=3.0, log_l=1.0, gamma_b=math.inf, gamma_c=1.0, delta=0.5)
        s = wak_trial(inst, 3, p, 3000, seed=1)
        assert s.errors == 0 and s.e1 == 0 and s.e2 == 0

    def test_zero_threshold_always_fails(self):
        inst = dsbs_wak(0.11, 0.2)
        p = BoundParams(n=3, log_m=3.0, log_l=1.0, gamma_b=0.0, gamma_c=1.0, delta=0.5)
        s = wak_trial(inst, 3, p, 3000, seed=1)
        assert s.error_rate == 1.0 and s.e1 == 3000

    @pytest.mark.parametrize("log_m,log_l", [(4.0, 2.0), (6.0, 4.0)])
    def test_dsbs_against_bound(self, log_m, log_l):
        inst = dsbs_wak(0.11, 0.2)
        p, bound = best_params(inst, 4, log_m, log_l)
        s = wak_trial(inst, 4, p, 10_000, seed=3)
        assert s.error_rate <= bound + 4 * s.stderr

    def test_informative_bound_at_higher_rates(self):
        # at rates (1.5, 1) the optimized bound is below one and still holds
        inst = dsbs_wak(0.11, 0.2)
        p, bound = best_params(inst, 4, 6.0, 4.0)
        assert bound < 1.0

    def test_deterministic(self):
        inst = random_wak(np.random.default_rng(1))
        p = BoundParams(n=3, log_m=2.0, log_l=2.0, gamma_b=2.0, gamma_c=1.0, delta=0.5)
        assert wak_trial(inst, 3, p, 5000, seed=9) == wak_trial(inst, 3, p, 5000, seed=9)

    def test_more_common_randomness_does_not_hurt(self):
        inst = dsbs_wak(0.11, 0.2)
        p = BoundParams(n=4, log_m=5.0, log_l=2.0, gamma_b=4.0, gamma_c=1.0, delta=0.5)
        rates = {}
        for K in (1, 16):
            runs = [wak_trial(inst, 4, p, 500, seed=s, code=build_code([0.5, 0.5], 4, K, 4, seed=s))
                    for s in range(40)]
            rates[K] = np.array([r.error_rate for r in runs])
        se = math.sqrt(rates[1].var() / 40 + rates[16].var() / 40)
        assert rates[16].mean() <= rates[1].mean() + 4 * se

    def test_fixed_code_matches_ensemble_on_average(self):
        inst = dsbs_wak(0.11, 0.2)
        p = BoundParams(n=3, log_m=3.0, log_l=2.0, gamma_b=3.0, gamma_c=1.0, delta=0.5)
        ens = wak_trial(inst, 3, p, 20_000, seed=5)
        fixed = np.array([wak_trial(inst, 3, p, 500, seed=s, code=build_code([0.5, 0.5], 3, 8, 4, seed=s)).error_rate
                          for s in range(60)])
        se = math.sqrt(fixed.var() / 60 + ens.stderr ** 2)
        assert abs(fixed.mean() - ens.error_rate) <= 4 * se

    def test_validation(self):
        inst = dsbs_wak(0.11, 0.2)
        p = BoundParams(n=3, log_m=1.5, log_l=1.0, gamma_b=1.0, gamma_c=1.0, delta=0.5)
        with pytest.raises(ValueError):
            wak_trial(inst, 3, p, 10)
        p = BoundParams(n=3, log_m=2.0, log_l=1.0, gamma_b=1.0, gamma_c=1.0, delta=0.5)
        with pytest.raises(ValueError):
            wak_trial(inst, 4, p, 10)
        with pytest.raises(ValueError):
            wak_trial(inst, 3, p, 10, code=build_code([0.5, 0.5], 3, 1, 4, seed=0))


class TestTrialStats:
    def test_invariants(self):
        with pytest.raises(ValueError):
            TrialStats(10, 11, 11, 0)
        with pytest.raises(ValueError):
            TrialStats(10, 5, 2, 2)

    def test_rate_and_stderr(self):
        s = TrialStats(400, 100, 80, 40)
        assert s.error_rate == 0.25
        assert s.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 400))
        assert s.to_dict()["e2_collision"] == 40
