import math

import numpy as np
import pytest

from conftest import d1_law
from rwre_ldp.env_model import (
    Box,
    PeriodicEnvironment,
    ProbVec,
    sample_environment,
)
from rwre_ldp.errors import ConfigError, WalkRangeError
from rwre_ldp.periodic_solver import exact_return_probability
from rwre_ldp.simulate import (
    block_return_bound,
    composed_endpoint_samples,
    decomposed_rwpe_run,
    dominant_event_bound,
    exact_walk_law,
    first_hit_over_seeds,
    importance_sampling_return,
    occupation_check,
    occupation_sweep,
    quenched_rate_experiment,
    renormalized_chain_diagnostic,
    run_walk,
    scan_for_G,
)
from rwre_ldp.strip_builder import StripSpec, build_strip_environment, optimal_strip_pipeline


@pytest.fixture(scope="module")
def mirror_report(mirror_law):
    return optimal_strip_pipeline(mirror_law, epsilon=0.05, M=20)


class TestRunWalk:
    def test_zero_steps(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.5, 0.5]))
        run = run_walk(env, (3,), 0, seed=1)
        assert run.endpoint == (3,)

    def test_deterministic(self, warm_kernels, mirror_report):
        a = run_walk(mirror_report.environment, (0, 0), 5000, seed=7)
        b = run_walk(mirror_report.environment, (0, 0), 5000, seed=7)
        assert a.endpoint == b.endpoint
        assert a.max_abs_displacement == b.max_abs_displacement

    def test_parity_of_endpoint(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(2, [0.4, 0.1, 0.3, 0.2]))
        for n in (7, 12):
            run = run_walk(env, (0, 0), n, seed=3)
            assert (sum(run.endpoint) - n) % 2 == 0

    def test_drifted_walk_clt_band(self, warm_kernels):
        kappa = 0.05
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [1 - kappa, kappa]))
        n = 10**5
        run = run_walk(env, (0,), n, seed=11)
        mean = n * (1 - 2 * kappa)
        sigma = math.sqrt(n * 4 * kappa * (1 - kappa))
        assert abs(run.endpoint[0] - mean) <= 5 * sigma

    def test_occupation_counts_total(self, warm_kernels, mirror_report):
        from rwre_ldp.strip_builder import strip_classes_for_period

        env = mirror_report.environment
        cls = strip_classes_for_period(mirror_report.spec, env.period)
        n = 999
        run = run_walk(env, (0, 0), n, seed=2, class_map=cls)
        assert sum(run.occupation_counts) == n + 1

    def test_sampled_box_walk_and_exit(self, warm_kernels):
        law = d1_law([0.9], 0.1)  # strong right drift
        omega = sample_environment(law, Box((-5,), (5,)), seed=4)
        with pytest.raises(WalkRangeError):
            run_walk(omega, (0,), 100, seed=5)
        big = sample_environment(law, Box((-200,), (200,)), seed=4)
        run = run_walk(big, (0,), 100, seed=5)
        assert abs(run.endpoint[0]) <= 100


class TestOccupation:
    def test_single_strip_always_passes(self, warm_kernels):
        s = ProbVec(1, [0.5, 0.5])
        spec = StripSpec((1,), (0, 2), (s,), 0.0)
        report = build_strip_environment(spec, target_frequencies=[1.0])
        check = occupation_check(report, 1000, seed=1, epsilon=0.0)
        assert check.passed
        assert check.fractions[0] == 1.0

    def test_mirror_strips(self, warm_kernels, mirror_report):
        check = occupation_check(mirror_report, 10**5, seed=1, epsilon=0.05)
        assert check.passed
        assert abs(check.fractions[0] - 0.5) <= 0.05

    def test_near_balanced_d1_width_ratio(self, warm_kernels):
        # two nearly-balanced d=1 laws on widths (6, 2): occupation tracks widths
        s1 = ProbVec(1, [0.505, 0.495])
        s2 = ProbVec(1, [0.495, 0.505])
        spec = StripSpec((1,), (0, 6, 8), (s1, s2), 0.01)
        report = build_strip_environment(spec, target_frequencies=[0.75, 0.25])
        checks = occupation_sweep(report, 10**6, range(10), epsilon=0.05)
        assert sum(c.passed for c in checks) >= 8

    def test_tilted_variant(self, warm_kernels, mirror_report):
        check = occupation_check(mirror_report, 10**5, seed=5, epsilon=0.05, tilted=True)
        assert check.passed

    def test_deviation_shrinks_with_n(self, warm_kernels, mirror_report):
        improved = 0
        for seed in range(10):
            small = occupation_check(mirror_report, 10**4, seed=seed, epsilon=1.0)
            large = occupation_check(mirror_report, 10**6, seed=seed, epsilon=1.0)
            if large.max_deviation <= small.max_deviation:
                improved += 1
        assert improved >= 8


class TestDecomposed:
    def test_single_strip_occupation_exact(self, warm_kernels):
        s = ProbVec(2, [0.25, 0.25, 0.25, 0.25])
        spec = StripSpec((0, 1), (0, 2), (s,), 0.0)
        report = build_strip_environment(spec, target_frequencies=[1.0])
        run = decomposed_rwpe_run(report, [1.0], np.zeros(2), N=2000, epsilon=0.1, seeds=range(5))
        assert run.freq_B == 1.0  # tau = n exactly
        assert run.freq_A >= 0.8  # law of large numbers event

    def test_mirror_events(self, warm_kernels, mirror_report):
        # the occupation fluctuation needs the 1e5 scale to concentrate
        run = decomposed_rwpe_run(
            mirror_report,
            mirror_report.t_star,
            mirror_report.theta_star,
            N=10**5,
            epsilon=0.1,
            seeds=range(100),
        )
        assert run.freq_AB >= 0.95

    def test_two_step_law_matches_direct_walk(self, warm_kernels, mirror_report):
        ends = composed_endpoint_samples(
            mirror_report, mirror_report.theta_star, n_steps=2, n_samples=10**5, seed=21
        )
        exact = exact_walk_law(mirror_report.tilted_environment(), 2)
        pts, counts = np.unique(ends, axis=0, return_counts=True)
        emp = {tuple(int(v) for v in p): c / len(ends) for p, c in zip(pts, counts)}
        support = set(emp) | set(exact)
        tv = 0.5 * sum(abs(emp.get(k, 0.0) - exact.get(k, 0.0)) for k in support)
        assert tv <= 0.01


class TestImportanceSampling:
    def test_two_step_enumeration(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.8, 0.2]))
        est = importance_sampling_return(env, 2, 10**4, seed=11)
        assert abs(est.estimate - 0.32) <= 3 * est.stderr

    def test_matches_dp_at_n100(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.8, 0.2]))
        est = importance_sampling_return(env, 100, 2 * 10**4, seed=11)
        dp = exact_return_probability(env, 100)
        assert abs(est.estimate - dp) <= 3 * est.stderr
        assert est.variance_reduction_vs_naive >= 10

    def test_symmetric_reduces_to_frequency(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.5, 0.5]))
        est = importance_sampling_return(env, 10, 5000, seed=3)
        assert est.theta == (0.0,)
        # weights are identically 1: the estimate is a plain frequency
        assert (est.estimate * 5000) == pytest.approx(round(est.estimate * 5000), abs=1e-9)

    def test_odd_steps_give_exact_zero(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.8, 0.2]))
        est = importance_sampling_return(env, 11, 2000, seed=9)
        assert est.estimate == 0.0

    def test_deterministic(self, warm_kernels):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.7, 0.3]))
        a = importance_sampling_return(env, 50, 5000, seed=2)
        b = importance_sampling_return(env, 50, 5000, seed=2)
        assert a.estimate == b.estimate


class TestScan:
    def test_large_epsilon_matches_everywhere(self):
        law = d1_law([0.6, 0.8], 0.2)
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        rep = scan_for_G(law, target, epsilon=1.0, delta=0.5, N=1000, seed=1)
        assert len(rep.hits) == rep.centers_scanned

    def test_single_site_ball_binomial_oracle(self):
        law = d1_law([0.6, 0.8], 0.2, weights=[0.3, 0.7])
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        # delta small: the ball is just the center site; match prob = weight 0.3
        rep = scan_for_G(law, target, epsilon=0.05, delta=0.05, N=2000, seed=8)
        assert rep.ball_radius == 0
        n = rep.centers_scanned
        w = 0.3
        sigma = math.sqrt(n * w * (1 - w))
        assert abs(len(rep.hits) - n * w) <= 5 * sigma

    def test_hits_recheckable(self):
        law = d1_law([0.6, 0.8], 0.2)
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        rep = scan_for_G(law, target, epsilon=0.05, delta=0.4, N=4000, seed=5)
        from rwre_ldp.env_model import atom_indices_at

        for y in rep.hits[:10]:
            for x in range(y[0] - rep.ball_radius, y[0] + rep.ball_radius + 1):
                idx = atom_indices_at(law, np.array([[x]]), seed=5)[0]
                sampled = law.atoms[int(idx)].probs
                assert np.abs(sampled - target.site_probs((x,))).max() <= 0.05

    def test_monotone_in_epsilon(self):
        law = d1_law([0.6, 0.8], 0.2)
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        counts = [
            len(scan_for_G(law, target, eps, 0.4, 3000, seed=2).hits) for eps in (0.0, 0.1, 0.3)
        ]
        assert counts == sorted(counts)

    def test_deterministic(self):
        law = d1_law([0.6, 0.8], 0.2)
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        a = scan_for_G(law, target, 0.05, 0.4, 2000, seed=8)
        b = scan_for_G(law, target, 0.05, 0.4, 2000, seed=8)
        assert a.hits == b.hits

    def test_hits_non_increasing_in_delta(self):
        law = d1_law([0.6, 0.8], 0.2)
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        counts = [
            len(scan_for_G(law, target, 0.05, delta, 3000, seed=2).hits)
            for delta in (0.05, 0.4, 0.8)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_first_hit_monotone_in_epsilon(self):
        law = d1_law([0.6, 0.8], 0.2)
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.6, 0.4]))
        grid = [50, 200, 1000, 4000]
        stats_tight = dict(first_hit_over_seeds(law, target, 0.05, 0.6, grid, range(20)))
        stats_loose = dict(first_hit_over_seeds(law, target, 0.25, 0.6, grid, range(20)))
        for seed in range(20):
            tight, loose = stats_tight[seed], stats_loose[seed]
            if tight is not None:
                assert loose is not None and loose <= tight

    def test_d2_scan_runs(self, mirror_law, mirror_report):
        rep = scan_for_G(mirror_law, mirror_report.environment, 0.5, 0.4, 200, seed=3)
        assert rep.centers_scanned > 0
        assert rep.exhaustive


class TestBlocks:
    def test_block_length_formula(self):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.5, 0.5]))
        rep = block_return_bound(env, delta=0.5, n=2982, theta=np.zeros(1), a_n=0, fit_L_max=None)
        assert rep.L == 8  # 2 * floor(0.5 * log n) with log n just above 8

    def test_d1_symmetric_block_bound(self):
        env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.5, 0.5]))
        rep = block_return_bound(env, delta=0.18, n=600, theta=np.zeros(1), a_n=0, fit_L_max=None)
        assert rep.L == 2
        assert math.exp(rep.block_log_prob) == pytest.approx(0.5, abs=1e-12)
        assert rep.log_bound == pytest.approx((600 / 2) * math.log(0.5), abs=1e-9)

    def test_d2_local_limit_exponent(self):
        env = PeriodicEnvironment.homogeneous(ProbVec.uniform(2))
        rep = block_return_bound(env, delta=1.2, n=1000, theta=np.zeros(2), fit_L_max=64)
        assert rep.clt_exponent == pytest.approx(-1.0, abs=0.1)


class TestDominant:
    def test_corridor_arithmetic(self, warm_kernels):
        # kappa = 0.5, N chosen so the search radius is exactly 10
        law = d1_law([0.5], 0.5)
        report = optimal_strip_pipeline(law, epsilon=1e-6, M=4)
        omega = sample_environment(law, Box.centered(1, 1), seed=1)
        dom = dominant_event_bound(omega, report, epsilon=0.0, delta=1.0, N=40)
        assert dom.a_N == 10
        assert dom.center == (0,)
        assert dom.corridor_bound == pytest.approx(20 * math.log(0.5), abs=1e-12)
        assert dom.corridor_out + dom.corridor_back == pytest.approx(20 * math.log(0.5), abs=1e-12)

    def test_sound_against_dp(self, warm_kernels):
        law = d1_law([0.8], 0.2)
        report = optimal_strip_pipeline(law, epsilon=1e-6, M=4)
        omega = sample_environment(law, Box.centered(1, 1), seed=9)
        target = report.environment
        for n in (200, 500):
            dom = dominant_event_bound(omega, report, epsilon=0.0, delta=1.0, N=n)
            assert dom.outcome == "ok"
            dp = math.log(exact_return_probability(target, n))
            assert dom.total <= dp + 1e-9

    def test_no_hit_outcome(self, warm_kernels):
        law = d1_law([0.8], 0.2)
        report = optimal_strip_pipeline(law, epsilon=1e-6, M=4)
        # target far from the law's only atom, zero tolerance: no match
        target = PeriodicEnvironment.homogeneous(ProbVec(1, [0.3, 0.7]))
        report = report.__class__(
            spec=report.spec,
            environment=target,
            effective_variances=report.effective_variances,
            target_frequencies=report.target_frequencies,
            i0=report.i0,
            rate0=report.rate0,
            rate_gap=report.rate_gap,
            scale_M=report.scale_M,
            theta_star=report.theta_star,
            t_star=report.t_star,
            tilted_drifts=report.tilted_drifts,
            ok=report.ok,
        )
        dom = dominant_event_bound(omega := sample_environment(law, Box.centered(1, 1), 2), report, 0.0, 1.0, 400)
        assert dom.total is None
        assert "not realized" in dom.outcome

    def test_trend_improves_with_n(self, warm_kernels):
        law = d1_law([0.8], 0.2)
        report = optimal_strip_pipeline(law, epsilon=1e-6, M=4)
        omega = sample_environment(law, Box.centered(1, 1), seed=9)
        per_step = []
        for n in (200, 1000, 4000):
            dom = dominant_event_bound(omega, report, epsilon=0.0, delta=1.0, N=n)
            per_step.append(dom.total / n)
        assert per_step[0] <= per_step[1] <= per_step[2]

    def test_d2_desk_scale_trend(self, warm_kernels, mirror_law):
        # capped center enumeration; ball radius reaches 3 at N = 1e6
        report = optimal_strip_pipeline(mirror_law, epsilon=0.05, M=20)
        omega = sample_environment(mirror_law, Box.centered(2, 1), seed=3)
        per_step = []
        for n in (10**4, 10**6):
            dom = dominant_event_bound(
                omega, report, epsilon=0.35, delta=0.85, N=n, center_cap=200_000
            )
            assert dom.outcome == "ok"
            per_step.append(dom.total / n)
        assert per_step[0] <= per_step[1]
        assert dom.scan.ball_radius == 3


class TestRenormalizedChain:
    def test_crossing_occupation_near_uniform(self, warm_kernels, mirror_law):
        report = optimal_strip_pipeline(mirror_law, epsilon=0.05, M=40)  # widths (10, 10)
        diag = renormalized_chain_diagnostic(report, interval_half_length=5, n_steps=10**6, seed=6)
        assert diag.nu_bar == 4
        assert diag.crossings > 100
        assert diag.passed
        assert diag.max_deviation_from_uniform <= 0.1

    def test_half_length_must_divide_radius(self, warm_kernels, mirror_report):
        with pytest.raises(ConfigError):
            renormalized_chain_diagnostic(mirror_report, interval_half_length=3, n_steps=1000, seed=1)


class TestQuenched:
    def test_homogeneous_law_converges(self, warm_kernels):
        law = d1_law([0.8], 0.2)
        rows, report = quenched_rate_experiment(law, [200, 500], seeds=[1], samples=10**4)
        assert all(r.chebyshev_ok for r in rows)
        final = rows[-1]
        assert final.rate_estimate == pytest.approx(report.i0, abs=0.02)

    def test_marginal_law_rate_vanishes(self, warm_kernels):
        law = d1_law([0.5, 0.7], 0.3)
        rows, report = quenched_rate_experiment(law, [400], seeds=[3], samples=10**4)
        assert report.i0 == pytest.approx(0.0, abs=1e-9)
        assert rows[0].rate_estimate <= 0.03
        assert rows[0].chebyshev_ok

    def test_odd_grid_rejected(self):
        law = d1_law([0.8], 0.2)
        with pytest.raises(ConfigError):
            quenched_rate_experiment(law, [3], seeds=[1])
