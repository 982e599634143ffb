"""Experiment orchestration: configs, estimators, reports."""

import json

import numpy as np
import pytest

from erasure_consensus.channel import ErasureModel
from erasure_consensus.experiments import (
    ExperimentConfig,
    clopper_pearson,
    emit_report,
    estimate_rate,
    estimate_tail_probability,
    run_experiment,
    run_trials_counters,
    trial_seed,
    uncoded_msq_stats,
)
from erasure_consensus.graphs import path_graph
from erasure_consensus.protocols import run_uncoded


class TestExperimentConfig:
    def test_rejects_bad_fields(self):
        good = dict(graph_spec="path:3")
        with pytest.raises(ValueError, match="protocol"):
            ExperimentConfig(**good, protocol="turbo")
        with pytest.raises(ValueError, match="mode"):
            ExperimentConfig(**good, mode="duplex")
        with pytest.raises(ValueError, match="probability"):
            ExperimentConfig(**good, p=1.5)
        with pytest.raises(ValueError, match="rounds"):
            ExperimentConfig(**good, rounds=0)
        with pytest.raises(ValueError, match="trials"):
            ExperimentConfig(**good, trials=-1)
        with pytest.raises(ValueError, match="auto"):
            ExperimentConfig(**good, eps="optimal")
        with pytest.raises(ValueError, match="x0"):
            ExperimentConfig(**good, x0="ones")

    def test_repetition_needs_symmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            ExperimentConfig(
                graph_spec="path:3", protocol="repetition", mode="asymmetric"
            )

    def test_json_round_trip(self):
        cfg = ExperimentConfig(
            graph_spec="cycle:4", protocol="treecode", mode="asymmetric",
            p=0.3, eps=0.4, rounds=20, trials=10, seed=7, x0=(1, 2, 3, 4),
        )
        blob = json.dumps(cfg.to_json())
        back = ExperimentConfig.from_json(json.loads(blob))
        assert back == cfg
        assert back.config_hash() == cfg.config_hash()

    def test_hash_sensitivity(self):
        cfg = ExperimentConfig(graph_spec="path:3", p=0.2)
        assert cfg.config_hash() != ExperimentConfig(
            graph_spec="path:3", p=0.25
        ).config_hash()
        assert cfg.config_hash() == ExperimentConfig(
            graph_spec="path:3", p=0.2
        ).config_hash()

    def test_resolution_helpers(self):
        cfg = ExperimentConfig(graph_spec="path:3")
        g = cfg.graph()
        # eps* for P3 is 2/(lambda1 + lambda_{N-1}) = 2/(3+1).
        assert cfg.eps_value(g) == pytest.approx(0.5)
        assert cfg.model() == ErasureModel("symmetric", 0.0)
        np.testing.assert_array_equal(cfg.x0_vector(g), [3.0, 0.0, 0.0])
        explicit = ExperimentConfig(graph_spec="path:3", x0=(5, 0, 1))
        np.testing.assert_array_equal(explicit.x0_vector(g), [5.0, 0.0, 1.0])
        with pytest.raises(ValueError, match="per node"):
            ExperimentConfig(graph_spec="path:3", x0=(1.0, 2.0)).x0_vector(g)

    def test_trial_seeds_distinct(self):
        seeds = {trial_seed(0, k) for k in range(100)}
        assert len(seeds) == 100
        assert trial_seed(0, 3) == trial_seed(0, 3)
        assert trial_seed(0, 3) != trial_seed(1, 3)


class TestVectorizedUncoded:
    @pytest.mark.parametrize("mode", ["symmetric", "asymmetric"])
    def test_matches_scalar_runs_bitwise(self, mode):
        g = path_graph(3)
        eps, p, rounds, trials, seed = 0.4, 0.3, 12, 5, 11
        x0 = np.array([3.0, 0.0, 0.0])
        stats = uncoded_msq_stats(
            g, eps, mode, p, x0, rounds, trials, seed,
            probe_trials=tuple(range(trials)),
        )
        for k in range(trials):
            run = run_uncoded(
                g, eps, ErasureModel(mode, p), x0, rounds, trial_seed(seed, k)
            )
            assert np.array_equal(stats.probes[k], run.value_hist)

    def test_chunking_does_not_change_results(self):
        g = path_graph(3)
        x0 = [3.0, 0.0, 0.0]
        a = uncoded_msq_stats(g, 0.4, "symmetric", 0.3, x0, 8, 7, 1, chunk=2)
        b = uncoded_msq_stats(g, 0.4, "symmetric", 0.3, x0, 8, 7, 1, chunk=100)
        # Trial values are chunk-independent bit for bit; the aggregate
        # sums may differ by rounding order across chunk boundaries.
        np.testing.assert_array_equal(a.per_trial_err, b.per_trial_err)
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-14)
        np.testing.assert_allclose(a.sem, b.sem, rtol=1e-12)

    def test_stats_shapes_and_zero_trials(self):
        g = path_graph(3)
        x0 = [3.0, 0.0, 0.0]
        stats = uncoded_msq_stats(g, 0.4, "symmetric", 0.3, x0, 6, 4, 0)
        assert stats.mean.shape == (7,)
        assert stats.per_trial_err.shape == (4, 7)
        # Mean of the per-trial squared deviations equals the running sums.
        np.testing.assert_allclose(
            stats.mean, np.mean(stats.per_trial_err**2, axis=0), rtol=1e-12
        )
        empty = uncoded_msq_stats(g, 0.4, "symmetric", 0.3, x0, 6, 0, 0)
        assert np.all(np.isnan(empty.mean))

    def test_single_trial_sem_is_nan(self):
        g = path_graph(2)
        stats = uncoded_msq_stats(g, 0.5, "symmetric", 0.2, [2.0, 0.0], 4, 1, 0)
        assert np.all(np.isnan(stats.sem))


class TestEstimateRate:
    def test_recovers_exact_geometric_decay(self):
        mu = 0.7
        ks = np.arange(41)
        mean_msq = 5.0 * mu ** (2 * ks)
        est = estimate_rate(mean_msq, [10.0, 0.0])
        assert est.mu_hat == pytest.approx(mu, rel=1e-12)
        assert est.fit_rounds == (20, 40)
        assert est.n_fitted == 21
        # A perfect line has zero residual, hence zero half-width.
        assert est.half_width == pytest.approx(0.0, abs=1e-12)

    def test_noise_floor_rounds_are_dropped(self):
        mu = 0.5
        ks = np.arange(21)
        mean_msq = 1.0 * mu ** (2 * ks)
        # ||x0|| = 4.5e7 puts the floor at about 1e-5, between the
        # deviations of rounds 16 (1.5e-5) and 17 (7.6e-6).
        est = estimate_rate(mean_msq, [4.5e7, 0.0])
        assert est.fit_rounds == (10, 16)
        assert est.mu_hat == pytest.approx(mu, rel=1e-12)
        with pytest.raises(ValueError, match="noise floor"):
            estimate_rate(mean_msq, [1e18, 0.0])

    def test_zero_rounds_are_dropped(self):
        mean_msq = np.array([4.0, 1.0, 0.25, 0.0625, 0.0, 0.0])
        est = estimate_rate(mean_msq, [2.0, 0.0])
        assert est.mu_hat == pytest.approx(0.5, rel=1e-12)
        assert est.n_fitted == 2


class TestCounterTrials:
    def test_repetition_p1_rate_zero(self):
        # Nothing is ever delivered, so no node completes an iteration.
        cfg = ExperimentConfig(
            graph_spec="path:3", protocol="repetition", p=1.0,
            rounds=10, trials=30, seed=3,
        )
        counters = run_trials_counters(cfg)
        assert np.all(counters.final_min == 0)
        assert counters.r_hat_mean == 0.0

    def test_treecode_p0_rate_one(self):
        # Every frame arrives, so the counters advance every round.
        cfg = ExperimentConfig(
            graph_spec="path:3", protocol="treecode", mode="asymmetric",
            p=0.0, rounds=10, trials=5, seed=3,
        )
        counters = run_trials_counters(cfg)
        assert np.all(counters.final_min == 10)
        assert counters.r_hat_mean == 1.0
        np.testing.assert_array_equal(counters.mean_min_n, np.arange(11.0))

    def test_uncoded_counters_synthesized(self):
        cfg = ExperimentConfig(graph_spec="path:3", p=0.5, rounds=6, trials=4)
        counters = run_trials_counters(cfg)
        assert np.all(counters.final_min == 6)
        np.testing.assert_array_equal(counters.min_n[2], np.arange(7))

    def test_repetition_counters_match_single_runs(self):
        from erasure_consensus.protocols import run_repetition

        cfg = ExperimentConfig(
            graph_spec="path:3", protocol="repetition", p=0.4,
            rounds=8, trials=3, seed=9,
        )
        counters = run_trials_counters(cfg)
        g = cfg.graph()
        for k in range(3):
            run = run_repetition(
                g, 0.5, 0.4, cfg.x0_vector(g), 8, seed=trial_seed(9, k)
            )
            np.testing.assert_array_equal(
                counters.min_n[k], np.min(run.n_hist, axis=1)
            )
            np.testing.assert_array_equal(counters.err[k], run.err_hist)


@pytest.fixture(scope="module")
def rep_cfg():
    return ExperimentConfig(
        graph_spec="path:3", protocol="repetition", p=0.3,
        rounds=12, trials=120, seed=5,
    )


@pytest.fixture(scope="module")
def rep_counters(rep_cfg):
    return run_trials_counters(rep_cfg)


@pytest.fixture(scope="module")
def small_result():
    cfg = ExperimentConfig(
        graph_spec="path:2", p=0.25, eps=0.5, rounds=6, trials=40, seed=2
    )
    return run_experiment(cfg)


class TestTailProbability:
    def test_zero_rate_never_fails(self, rep_cfg, rep_counters):
        est = estimate_tail_probability(rep_cfg, 12, 0.0, counters=rep_counters)
        assert est.p_hat == 0.0
        assert est.ci_lo == 0.0
        assert est.failures == 0

    def test_monotone_in_rate(self, rep_cfg, rep_counters):
        ps = [
            estimate_tail_probability(rep_cfg, 12, r, counters=rep_counters).p_hat
            for r in (0.1, 0.5, 0.9, 1.0)
        ]
        assert ps == sorted(ps)

    def test_requires_enough_trials(self):
        cfg = ExperimentConfig(
            graph_spec="path:3", protocol="repetition", p=0.3, trials=99
        )
        with pytest.raises(ValueError, match="100 trials"):
            estimate_tail_probability(cfg, 12, 0.5)

    def test_counters_shape_mismatch_rejected(self, rep_cfg, rep_counters):
        with pytest.raises(ValueError, match="different horizon"):
            estimate_tail_probability(rep_cfg, 13, 0.5, counters=rep_counters)

    def test_uncoded_rates_below_one_never_fail(self):
        cfg = ExperimentConfig(graph_spec="path:3", p=0.9, rounds=10, trials=100)
        assert estimate_tail_probability(cfg, 10, 0.99).p_hat == 0.0
        assert estimate_tail_probability(cfg, 10, 1.0).p_hat == 0.0

    def test_clopper_pearson_closed_forms(self):
        # At zero failures the upper limit solves (1-hi)^n = alpha/2.
        lo, hi = clopper_pearson(0, 50)
        assert lo == 0.0
        assert hi == pytest.approx(1.0 - (0.025) ** (1 / 50), rel=1e-10)
        lo, hi = clopper_pearson(50, 50)
        assert hi == 1.0
        assert lo == pytest.approx(0.025 ** (1 / 50), rel=1e-10)
        lo, hi = clopper_pearson(10, 40)
        assert lo < 0.25 < hi
        with pytest.raises(ValueError):
            clopper_pearson(5, 4)


class TestRunExperiment:
    def test_k2_symmetric_rate_example(self):
        # Closed form: on two nodes with eps = 1/2 the squared deviation
        # survives each round with probability p, so the RMS contraction
        # factor is sqrt(p) = 0.5.
        cfg = ExperimentConfig(
            graph_spec="path:2", p=0.25, eps=0.5, rounds=2,
            trials=10_000, seed=2,
        )
        result = run_experiment(cfg)
        assert result.predictions["sqrt_lambda2"] == pytest.approx(0.5, abs=1e-12)
        assert result.rate is not None
        assert abs(result.rate.mu_hat - 0.5) <= 0.02

    def test_p3_symmetric_rate_tracks_prediction(self):
        cfg = ExperimentConfig(
            graph_spec="path:3", p=0.1, eps="auto", rounds=40,
            trials=3000, seed=4,
        )
        result = run_experiment(cfg)
        predicted = result.predictions["sqrt_lambda2"]
        assert result.rate is not None
        assert abs(result.rate.mu_hat - predicted) / predicted < 0.08

    def test_repetition_rows_and_tails(self):
        cfg = ExperimentConfig(
            graph_spec="path:3", protocol="repetition", p=0.3,
            rounds=30, trials=200, seed=6,
        )
        result = run_experiment(cfg, r_prime_grid=(0.0, 0.2, 0.4))
        quantities = [row.quantity for row in result.rate_rows]
        assert "r_prime" in quantities
        assert "tail_p[r_prime=0.2]" in quantities
        assert len(result.tail_rows) == 3
        assert result.tail_rows[0].p_hat == 0.0
        # The guaranteed-rate prediction lower-bounds the empirical rate
        # on average (it holds except with vanishing probability).
        row = result.rate_rows[quantities.index("r_prime")]
        assert row.empirical >= row.predicted

    def test_asymmetric_uncoded_limit_prediction(self):
        cfg = ExperimentConfig(
            graph_spec="path:2", mode="asymmetric", p=0.3, eps=0.5,
            rounds=25, trials=4000, seed=8,
        )
        result = run_experiment(cfg)
        # d = 2, so the limiting mean squared deviation is
        # d^2 p / (2 (2 + p)) = 4*0.3/4.6.
        limit = result.predictions["limit_mse"]
        assert limit == pytest.approx(4 * 0.3 / (2 * (2 + 0.3)), rel=1e-9)
        final = float(result.msq.mean[-1])
        sem = float(result.msq.sem[-1])
        assert abs(final - limit) <= 4 * sem


class TestEmitReport:
    def test_files_and_hash_header(self, small_result, tmp_path):
        paths = emit_report(small_result, tmp_path, plots=False)
        for key in ("runs", "rates", "report"):
            assert key in paths
        first = open(paths["runs"]).readline()
        assert first == f"# config_hash={small_result.config_hash}\n"
        header = open(paths["runs"]).readlines()[1]
        assert header == "trial,round,min_n_v,err_norm\n"
        rates_header = open(paths["rates"]).readlines()[1]
        assert rates_header == "quantity,predicted,empirical,ci_lo,ci_hi\n"

    def test_byte_identical_reruns(self, tmp_path):
        cfg = ExperimentConfig(
            graph_spec="path:3", protocol="repetition", p=0.3,
            rounds=8, trials=150, seed=3,
        )
        a = emit_report(run_experiment(cfg, r_prime_grid=(0.2,)),
                        tmp_path / "a", plots=False)
        b = emit_report(run_experiment(cfg, r_prime_grid=(0.2,)),
                        tmp_path / "b", plots=False)
        for key in ("runs", "rates"):
            assert open(a[key], "rb").read() == open(b[key], "rb").read()
        ra = json.load(open(a["report"]))
        rb = json.load(open(b["report"]))
        del ra["wall_time_s"], rb["wall_time_s"]
        assert ra == rb

    def test_report_round_trip(self, small_result, tmp_path):
        paths = emit_report(small_result, tmp_path, plots=False)
        report = json.load(open(paths["report"]))
        assert report["config_hash"] == small_result.config_hash
        cfg = ExperimentConfig.from_json(report["config"])
        assert cfg == small_result.config
        assert report["summary"] == json.loads(
            json.dumps(small_result.summary_record())
        )

    def test_zero_trials_header_only(self, tmp_path):
        cfg = ExperimentConfig(graph_spec="path:2", p=0.25, eps=0.5, trials=0)
        paths = emit_report(run_experiment(cfg), tmp_path, plots=False)
        lines = open(paths["runs"]).readlines()
        assert len(lines) == 2
        assert lines[0].startswith("# config_hash=")
        assert lines[1] == "trial,round,min_n_v,err_norm\n"

    def test_aggregate_rows_when_per_trial_too_big(self, tmp_path, monkeypatch):
        import erasure_consensus.experiments as exps

        monkeypatch.setattr(exps, "PER_TRIAL_ROW_CAP", 10)
        cfg = ExperimentConfig(
            graph_spec="path:2", p=0.25, eps=0.5, rounds=4, trials=20, seed=2
        )
        paths = emit_report(run_experiment(cfg), tmp_path, plots=False)
        rows = open(paths["runs"]).readlines()[2:]
        assert len(rows) == 5
        assert all(line.startswith("-1,") for line in rows)

    def test_plots_written(self, small_result, tmp_path):
        paths = emit_report(small_result, tmp_path, plots=True)
        assert (tmp_path / "msq.png").exists()
        assert "msq_plot" in paths
