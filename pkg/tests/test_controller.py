import numpy as np
import pytest

from mpmcil.controller import (
    AdaptiveConfig,
    AdaptiveWindow,
    FixedWindow,
    propose_component,
    prune_components,
    run_adaptive,
    smoothed_objective,
    window_should_stop,
)
from mpmcil.linalg import cholesky_spd
from mpmcil.mixture import MixtureParams, add_component, single_component
from mpmcil.models.tractable import tractable_mixture_target
from mpmcil.rng import StreamKey


def two_mode_target(noise_cv=0.5, sep=3.0):
    spd = cholesky_spd(np.eye(2))
    truth = MixtureParams(np.array([0.5, 0.5]),
                          np.array([[-sep, 0.0], [sep, 0.0]]), (spd, spd))
    return tractable_mixture_target(truth, noise_cv, -20, 20), truth


class TestWindowRule:
    def test_fixed_boundary(self):
        rule = FixedWindow(t_w=20)
        history = list(np.zeros(25))
        assert window_should_stop(rule, 20, history[:20]) is False
        assert window_should_stop(rule, 21, history[:21]) is True

    def test_adaptive_constant_history_stops(self):
        rule = AdaptiveWindow(s=5, eps0=0.1)
        assert window_should_stop(rule, 8, [2.5] * 8) is True

    def test_adaptive_alternating_history_smoothing_artifact(self):
        # with s = 2 an alternating +-1 sequence has constant pairwise means,
        # so the smoothed difference is 0 and the rule fires
        rule = AdaptiveWindow(s=2, eps0=0.1)
        history = [(-1.0) ** t for t in range(1, 7)]
        assert window_should_stop(rule, 6, history) is True

    def test_adaptive_needs_two_points(self):
        rule = AdaptiveWindow(s=3, eps0=0.5)
        assert window_should_stop(rule, 1, [4.2]) is False

    def test_matches_direct_transcription(self):
        # 1000 randomized synthetic objective histories versus a literal
        # transcription of both rules
        rng = np.random.default_rng(0)
        for _ in range(1000):
            t = int(rng.integers(1, 40))
            history = list(np.cumsum(rng.standard_normal(t)))
            t_w = int(rng.integers(1, 30))
            assert window_should_stop(FixedWindow(t_w), t, history) == (t > t_w)
            s = int(rng.integers(1, 8))
            eps0 = float(rng.uniform(0.01, 2.0))

            def smooth(upto):  # smoothed value at iteration `upto` (1-based)
                if upto < s:
                    return history[upto - 1]
                return float(np.mean(history[upto - s:upto]))

            expected = False if t < 2 else abs(smooth(t) - smooth(t - 1)) < eps0
            assert window_should_stop(AdaptiveWindow(s, eps0), t, history) == expected

    def test_smoothed_objective_definition(self):
        values = [1.0, 2.0, 3.0, 4.0]
        assert smoothed_objective(values[:1], 3) == 1.0
        assert smoothed_objective(values[:2], 3) == 2.0  # raw until s reached
        assert smoothed_objective(values[:3], 3) == pytest.approx(2.0)
        assert smoothed_objective(values, 3) == pytest.approx(3.0)


class TestConfigValidation:
    def test_invariants_enforced(self):
        good = dict(n_particles=100, window_rule=FixedWindow(5))
        AdaptiveConfig(**good)
        bad_cases = [
            dict(good, alpha_add=1.0),
            dict(good, alpha_add=0.0),
            dict(good, alpha_min=0.5),
            dict(good, sigma_add_scale=0.0),
            dict(good, t_max=0),
            dict(good, d_max=0),
            dict(good, eps_tot=-0.1),
            dict(good, window_rule=FixedWindow(0)),
            dict(good, window_rule=AdaptiveWindow(0, 0.1)),
            dict(good, window_rule=AdaptiveWindow(3, 0.0)),
        ]
        for case in bad_cases:
            with pytest.raises(ValueError):
                AdaptiveConfig(**case)


class TestPrune:
    def test_healthy_weights_unchanged(self):
        spd = cholesky_spd(np.eye(1))
        params = MixtureParams(np.array([0.5, 0.5]), np.array([[0.0], [1.0]]),
                               (spd, spd))
        out, removed = prune_components(params, 0.02)
        assert removed is None and out is params

    def test_removes_lowest_index_tie(self):
        spd = cholesky_spd(np.eye(1))
        params = MixtureParams(np.array([0.98, 0.01, 0.01]),
                               np.array([[0.0], [1.0], [2.0]]), (spd,) * 3)
        out, removed = prune_components(params, 0.02)
        assert removed == 1
        assert np.allclose(out.weights, [0.98 / 0.99, 0.01 / 0.99], atol=1e-15)

    def test_never_removes_last(self):
        params = single_component([0.0], np.eye(1))
        out, removed = prune_components(params, 0.5)
        assert removed is None and out is params

    def test_invariants_on_random_mixtures(self):
        rng = np.random.default_rng(1)
        spd = cholesky_spd(np.eye(1))
        for _ in range(1000):
            d = int(rng.integers(1, 7))
            w = rng.random(d) + 1e-3
            w /= w.sum()
            params = MixtureParams(w, rng.standard_normal((d, 1)), (spd,) * d)
            alpha_min = float(rng.uniform(0.01, 0.45))
            out, removed = prune_components(params, alpha_min)
            assert abs(out.weights.sum() - 1.0) <= 1e-12
            if removed is not None:
                assert out.n_components == d - 1
                assert removed == int(np.argmin(w))
            grown = add_component(out, rng.standard_normal(1), spd, 0.1)
            assert abs(grown.weights.sum() - 1.0) <= 1e-12


class TestProposeComponent:
    def test_single_draw_returned(self):
        model, truth = two_mode_target(noise_cv=0.0)
        params = single_component([0.0, 0.0], np.eye(2))
        mean, cov = propose_component(params, model, 1, 2.0, StreamKey(2))
        assert mean.shape == (2,)
        assert np.array_equal(cov.entries, 2.0 * np.eye(2))

    def test_finds_missed_mode(self):
        # the fitted component sits on the mode at -3 and only its broad
        # tail reaches +3; the largest likelihood ratio among the draws
        # should sit inside the missed mode's 3-sigma ball
        model, truth = two_mode_target(noise_cv=0.0)
        params = single_component([-3.0, 0.0], 9.0 * np.eye(2))
        hits = 0
        for seed in range(20):
            mean, _ = propose_component(params, model, 2000, 1.0,
                                        StreamKey(100 + seed))
            if np.linalg.norm(mean - np.array([3.0, 0.0])) <= 3.0:
                hits += 1
        assert hits >= 19

    def test_argmax_invariant_to_constant_psi_shift(self):
        from tests.test_engine import StubModelInt

        rng = np.random.default_rng(3)
        table = rng.integers(-30, 30, size=256).astype(float)
        params = single_component([0.0], np.eye(1))
        means = []
        for shift in (0.0, 1024.0):
            def fn(thetas, shift=shift):
                return table[: thetas.shape[0]] + shift
            mean, _ = propose_component(params, StubModelInt(fn), 256, 1.0,
                                        StreamKey(4))
            means.append(mean)
        assert np.array_equal(means[0], means[1])

    def test_all_zero_estimates_raise(self):
        from tests.test_engine import StubModelInt

        params = single_component([0.0], np.eye(1))
        model = StubModelInt(lambda t: np.full(t.shape[0], -np.inf))
        with pytest.raises(RuntimeError, match="no informative proposal draws"):
            propose_component(params, model, 64, 1.0, StreamKey(5))


class TestRunAdaptive:
    def test_component_cap_stops_immediately(self):
        model, _ = two_mode_target()
        cfg = AdaptiveConfig(n_particles=500, window_rule=FixedWindow(3),
                             t_max=100, d_max=1, eps_tot=0.0)
        final, trace = run_adaptive(model, single_component([0.0, 0.0], np.eye(2)),
                                    cfg, 6)
        assert trace.stop_reason == "D_max"
        assert final.n_components == 1
        assert len(trace.objective) == 4  # one window: t_w + 1 iterations
        kinds = [e.kind for e in trace.events]
        assert "component_added" not in kinds

    def test_iteration_budget_cuts_inside_window(self):
        model, _ = two_mode_target()
        cfg = AdaptiveConfig(n_particles=500, window_rule=FixedWindow(10),
                             t_max=1, d_max=4, eps_tot=0.0)
        final, trace = run_adaptive(model, single_component([0.0, 0.0], np.eye(2)),
                                    cfg, 7)
        assert trace.stop_reason == "T_max"
        assert len(trace.objective) == 1

    def test_two_mode_target_grows_components(self):
        model, truth = two_mode_target(noise_cv=0.5)
        cfg = AdaptiveConfig(n_particles=4000, window_rule=FixedWindow(8),
                             t_max=60, d_max=4, eps_tot=0.0)
        final, trace = run_adaptive(model, single_component([0.0, 0.0], np.eye(2)),
                                    cfg, 8)
        assert final.n_components >= 2
        assert any(e.kind == "component_added" for e in trace.events)

    def test_eps_tot_needs_two_windows(self):
        model, _ = two_mode_target()
        cfg = AdaptiveConfig(n_particles=500, window_rule=FixedWindow(2),
                             t_max=100, d_max=6, eps_tot=1e9)
        final, trace = run_adaptive(model, single_component([0.0, 0.0], np.eye(2)),
                                    cfg, 9)
        assert trace.stop_reason == "eps_tot"
        stops = [e for e in trace.events if e.kind == "window_stop"]
        assert len(stops) == 2  # the huge threshold fires at the second window

    def test_requires_single_component_start(self):
        model, truth = two_mode_target()
        cfg = AdaptiveConfig(n_particles=100, window_rule=FixedWindow(2))
        with pytest.raises(ValueError, match="single-component"):
            run_adaptive(model, truth, cfg, 10)

    def test_trace_invariants(self):
        model, _ = two_mode_target()
        cfg = AdaptiveConfig(n_particles=800, window_rule=FixedWindow(4),
                             t_max=30, d_max=3, eps_tot=0.0)
        final, trace = run_adaptive(model, single_component([0.0, 0.0], np.eye(2)),
                                    cfg, 11)
        iters = [e.iteration for e in trace.events]
        assert iters == sorted(iters)
        assert [e.kind for e in trace.events].count("global_stop") == 1
        assert trace.events[-1].kind == "global_stop"
        # T_tot equals the number of objective estimates exactly
        assert trace.events[-1].payload["T_tot"] == len(trace.objective)
        # weight sums and SPD covariances hold after every round
        for _, params in trace.snapshots:
            assert abs(params.weights.sum() - 1.0) <= 1e-12
            for cov in params.covs:
                assert np.all(np.diag(cov.chol) > 0.0)
        # per round, D changes by at most one in either direction
        d_values = [1] + [params.n_components for _, params in trace.snapshots]
        for a, b in zip(d_values, d_values[1:]):
            assert abs(b - a) <= 1

    def test_bit_reproducible_across_runs_and_threads(self):
        model, _ = two_mode_target(noise_cv=0.5)
        model.psi_chunk_size = 256
        cfg = AdaptiveConfig(n_particles=1000, window_rule=FixedWindow(4),
                             t_max=20, d_max=3, eps_tot=0.0)
        init = single_component([0.0, 0.0], np.eye(2))
        runs = [run_adaptive(model, init, cfg, 12, n_threads=n) for n in (1, 1, 8)]
        (f0, t0), (f1, t1), (f8, t8) = runs
        for other in (f1, f8):
            assert np.array_equal(f0.weights, other.weights)
            assert np.array_equal(f0.means, other.means)
            for a, b in zip(f0.covs, other.covs):
                assert np.array_equal(a.entries, b.entries)
        for other in (t1, t8):
            assert [p.L for p in t0.objective] == [p.L for p in other.objective]
            assert [(e.iteration, e.kind) for e in t0.events] == \
                [(e.iteration, e.kind) for e in other.events]

    def test_zero_weight_error_carries_trace(self):
        from tests.test_engine import StubModelInt
        from mpmcil.engine import ZeroTotalWeightError

        model = StubModelInt(lambda t: np.full(t.shape[0], -np.inf))
        cfg = AdaptiveConfig(n_particles=50, window_rule=FixedWindow(2))
        with pytest.raises(ZeroTotalWeightError) as exc:
            run_adaptive(model, single_component([0.0], np.eye(1)), cfg, 13)
        assert exc.value.trace is not None
        assert exc.value.trace.header["config"]["n_particles"] == 50
