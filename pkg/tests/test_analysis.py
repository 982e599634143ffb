"""Second-moment analysis and tail bounds against hand-derived oracles."""

import math

import numpy as np
import pytest

from erasure_consensus import channel
from erasure_consensus.analysis import (
    BoundReport,
    GammaAnalysis,
    asym_limit_mse,
    coding_gain_check,
    gamma_exact,
    guaranteed_rate_anytime,
    guaranteed_rate_degree,
    guaranteed_rate_strict,
    msq_trajectory,
    tail_bound_anytime,
    tail_bound_degree,
    tail_bound_edgecount,
    uncoded_sym_rate,
)
from erasure_consensus.channel import ErasureModel, effective_update_matrix
from erasure_consensus.errors import TooManyEdges, WrongMode
from erasure_consensus.graphs import complete_graph, cycle_graph, path_graph
from erasure_consensus.infomath import kl_bernoulli
from erasure_consensus.protocols import run_uncoded


class TestGammaExact:
    def test_two_node_symmetric_closed_form(self):
        # With eps = 1/2 on a single symmetric edge, the update is either
        # the identity (erased, prob p) or the rank-one averaging matrix,
        # giving Gamma = p I + (1-p) J/4 exactly.
        g = path_graph(2)
        for p in (0.0, 0.1, 0.5, 0.9):
            ga = gamma_exact(g, 0.5, p, "symmetric")
            expect = p * np.eye(4) + (1 - p) * np.full((4, 4), 0.25)
            assert np.allclose(ga.gamma, expect, atol=1e-15)

    def test_two_node_asymmetric_hand_sum(self):
        g = path_graph(2)
        eps, p = 0.5, 0.3
        q = 1 - p
        ws = {
            (1, 1): np.array([[0.5, 0.5], [0.5, 0.5]]),
            (1, 0): np.array([[0.5, 0.5], [0.0, 1.0]]),
            (0, 1): np.array([[1.0, 0.0], [0.5, 0.5]]),
            (0, 0): np.eye(2),
        }
        probs = {(1, 1): q * q, (1, 0): q * p, (0, 1): p * q, (0, 0): p * p}
        expect = sum(probs[k] * np.kron(ws[k].T, ws[k].T) for k in ws)
        ga = gamma_exact(g, eps, p, "asymmetric")
        assert np.allclose(ga.gamma, expect, atol=1e-15)

    def test_symmetric_gamma_doubly_stochastic(self):
        ga = gamma_exact(cycle_graph(4), 0.3, 0.25, "symmetric")
        assert np.allclose(ga.gamma.sum(axis=0), 1.0, atol=1e-12)
        assert np.allclose(ga.gamma.sum(axis=1), 1.0, atol=1e-12)
        assert np.allclose(ga.gamma, ga.gamma.T, atol=1e-14)

    def test_asymmetric_gamma_column_sums_one(self):
        ga = gamma_exact(path_graph(3), 0.4, 0.3, "asymmetric")
        assert np.allclose(ga.gamma.sum(axis=0), 1.0, atol=1e-12)

    def test_matches_empirical_average(self):
        g = path_graph(2)
        eps, p = 0.5, 0.3
        model = ErasureModel("asymmetric", p)
        acc = np.zeros((4, 4))
        rounds = 20000
        for t in range(1, rounds + 1):
            w = effective_update_matrix(g, channel.sample_round(g, model, 77, t), eps)
            acc += np.kron(w.T, w.T)
        ga = gamma_exact(g, eps, p, "asymmetric")
        assert np.max(np.abs(acc / rounds - ga.gamma)) < 0.02

    def test_edge_caps(self):
        with pytest.raises(TooManyEdges):
            gamma_exact(complete_graph(7), 0.1, 0.3, "symmetric")
        with pytest.raises(TooManyEdges):
            gamma_exact(cycle_graph(11), 0.1, 0.3, "asymmetric")

    def test_input_validation(self):
        with pytest.raises(ValueError, match="mode"):
            gamma_exact(path_graph(2), 0.5, 0.3, "bidirectional")
        with pytest.raises(ValueError, match="probability"):
            gamma_exact(path_graph(2), 0.5, 1.5)


class TestSymmetricRate:
    def test_two_node_rate_is_sqrt_p(self):
        g = path_graph(2)
        for p in (0.04, 0.25, 0.7):
            ga = gamma_exact(g, 0.5, p, "symmetric")
            assert abs(uncoded_sym_rate(ga) - math.sqrt(p)) <= 1e-12

    @pytest.mark.parametrize("graph", [path_graph(3), cycle_graph(4)])
    @pytest.mark.parametrize("p", [0.1, 0.5])
    def test_matches_dense_eigensolver(self, graph, p):
        # Restrict Gamma to an explicit orthonormal basis of the
        # average-free subspace and eigendecompose the small block.
        from erasure_consensus.spectral import eps_star

        ga = gamma_exact(graph, eps_star(graph), p, "symmetric")
        n = graph.n_nodes
        full = np.linalg.qr(
            np.hstack([np.ones((n, 1)) / math.sqrt(n), np.eye(n)[:, : n - 1]])
        )[0]
        basis = np.kron(full[:, 1:], full[:, 1:])
        block = basis.T @ ga.gamma @ basis
        oracle = float(np.max(np.abs(np.linalg.eigvalsh(block))))
        assert uncoded_sym_rate(ga) == pytest.approx(math.sqrt(oracle), abs=1e-10)

    def test_p_zero_reduces_to_noiseless_mu(self):
        from erasure_consensus.spectral import spectral_summary

        g = cycle_graph(4)
        ga = gamma_exact(g, 0.3, 0.0, "symmetric")
        mu = spectral_summary(g, 0.3).mu
        assert uncoded_sym_rate(ga) == pytest.approx(mu, abs=1e-10)

    def test_exact_trajectory_tail_ratio_converges_to_lambda2(self):
        g = path_graph(3)
        ga = gamma_exact(g, 0.4, 0.3, "symmetric")
        traj = msq_trajectory(ga, [2.0, 0.0, 1.0], 30)
        assert traj[30] > 0
        ratio = traj[30] / traj[29]
        assert ratio == pytest.approx(ga.lambda2_magnitude, rel=1e-6)

    def test_wrong_mode(self):
        ga = gamma_exact(path_graph(2), 0.5, 0.3, "asymmetric")
        with pytest.raises(WrongMode):
            uncoded_sym_rate(ga)


def k2_asym_msq_closed_form(d: float, p: float, k_max: int) -> list[float]:
    """Independent recursion for the 2-node asymmetric chain at eps=1/2.

    In difference/sum coordinates v = a-b, s = a+b of the deviation,
    E v^2 scales by rho = p(1+p)/2 per round and E s^2 accumulates
    (pq/2) E v^2; the mean square error is their half-sum.
    """
    q = 1 - p
    rho = p * (1 + p) / 2
    ev2, es2 = d * d, 0.0
    out = []
    for _ in range(k_max + 1):
        out.append((ev2 + es2) / 2)
        es2 = es2 + (q * p / 2) * ev2
        ev2 = rho * ev2
    return out


class TestAsymmetricLimit:
    def test_two_node_trajectory_closed_form(self):
        g = path_graph(2)
        p = 0.3
        ga = gamma_exact(g, 0.5, p, "asymmetric")
        x0 = [1.0, 0.0]
        got = msq_trajectory(ga, x0, 10)
        want = k2_asym_msq_closed_form(1.0, p, 10)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-15)

    def test_two_node_limit_closed_form(self):
        # Limit mse = d^2 p / (2 (2 + p)) from summing the recursion.
        g = path_graph(2)
        for p in (0.1, 0.3, 0.6):
            ga = gamma_exact(g, 0.5, p, "asymmetric")
            want = p / (2 * (2 + p))
            assert asym_limit_mse(ga, [1.0, 0.0]) == pytest.approx(want, rel=1e-9)
            # Quadratic in the initial spread d.
            assert asym_limit_mse(ga, [5.0, 2.0]) == pytest.approx(9 * want, rel=1e-9)

    def test_symmetric_mode_limit_is_zero(self):
        ga = gamma_exact(path_graph(3), 0.4, 0.3, "symmetric")
        assert abs(asym_limit_mse(ga, [2.0, -1.0, 0.5])) < 1e-9

    def test_p_one_state_frozen(self):
        ga = gamma_exact(path_graph(2), 0.5, 1.0, "asymmetric")
        x0 = np.array([1.0, 0.0])
        dev = x0 - x0.mean()
        assert asym_limit_mse(ga, x0) == pytest.approx(float(dev @ dev), rel=1e-12)

    def test_limit_vector_column_normalised(self):
        ga = gamma_exact(cycle_graph(4), 1 / 3, 0.3, "asymmetric")
        assert float(np.sum(ga.limit_vector)) == pytest.approx(1.0, abs=1e-12)
        resid = ga.gamma @ ga.limit_vector - ga.limit_vector
        assert float(np.max(np.abs(resid))) < 1e-10


class TestTrajectory:
    def test_k0_is_initial_deviation(self):
        ga = gamma_exact(path_graph(3), 0.4, 0.2, "symmetric")
        x0 = np.array([3.0, 0.0, 0.0])
        dev = x0 - 1.0
        assert msq_trajectory(ga, x0, 0)[0] == pytest.approx(float(dev @ dev))

    def test_p_zero_matches_deterministic_iteration(self):
        from erasure_consensus.protocols import noiseless_step

        g = cycle_graph(4)
        ga = gamma_exact(g, 0.3, 0.0, "symmetric")
        x0 = [4.0, 0.0, -2.0, 1.0]
        traj = msq_trajectory(ga, x0, 8)
        x = np.asarray(x0, dtype=float)
        for k in range(9):
            assert traj[k] == pytest.approx(float(np.sum((x - 0.75) ** 2)), rel=1e-10)
            x = noiseless_step(x, g, 0.3)

    def test_matches_monte_carlo(self):
        g = path_graph(3)
        eps, p, rounds, trials = 0.4, 0.3, 6, 3000
        ga = gamma_exact(g, eps, p, "symmetric")
        x0 = [2.0, 0.0, 1.0]
        model = ErasureModel("symmetric", p)
        sq = np.zeros((trials, rounds + 1))
        for s in range(trials):
            run = run_uncoded(g, eps, model, x0, rounds, seed=s)
            sq[s] = run.err_hist**2
        pred = msq_trajectory(ga, x0, rounds)
        mean = sq.mean(axis=0)
        sem = sq.std(axis=0, ddof=1) / math.sqrt(trials)
        for k in range(1, rounds + 1):
            assert abs(mean[k] - pred[k]) < 4 * sem[k]


class TestTailBounds:
    def test_degree_bound_shape(self):
        g = path_graph(3)
        rep = tail_bound_degree(g, 100, 0.2, 0.1)
        assert isinstance(rep, BoundReport)
        want_exp = kl_bernoulli(0.8, 0.1) - math.log2(3)
        assert rep.exponent == pytest.approx(want_exp, rel=1e-12)
        assert rep.value == pytest.approx(3 * 2.0 ** (-100 * want_exp), rel=1e-9)
        assert rep.valid_regime and rep.decaying
        assert rep.value_raw == rep.value  # small enough not to clamp

    def test_bounds_clamp_to_one(self):
        g = path_graph(3)
        rep = tail_bound_degree(g, 1, 0.05, 0.1)
        assert rep.value_raw > 1.0
        assert rep.value == 1.0

    def test_invalid_regime_is_vacuous(self):
        g = path_graph(3)
        rep = tail_bound_degree(g, 50, 0.95, 0.3)
        assert not rep.valid_regime and not rep.decaying
        assert rep.value == 1.0 and math.isinf(rep.value_raw)
        rep2 = tail_bound_edgecount(g, 50, 0.9, 0.3)
        assert not rep2.valid_regime and rep2.value == 1.0

    def test_edgecount_threshold(self):
        g = path_graph(3)
        p = 0.2
        q_all = 0.8**2
        below = tail_bound_edgecount(g, 80, q_all - 0.05, p)
        above = tail_bound_edgecount(g, 80, q_all - 1e-12, p)
        assert below.decaying and below.threshold_rate == pytest.approx(q_all)
        assert not above.decaying or above.exponent < 1e-10

    def test_degree_bound_decay_flips_at_threshold(self):
        g = path_graph(3)
        p = 0.1
        r_star = guaranteed_rate_degree(p, g)
        assert tail_bound_degree(g, 10, r_star - 1e-6, p).decaying
        assert not tail_bound_degree(g, 10, min(r_star + 1e-6, 0.999), p).decaying

    def test_anytime_bound_always_valid(self):
        g = cycle_graph(4)
        strong = tail_bound_anytime(g, 60, 0.1, beta=8.0)
        weak = tail_bound_anytime(g, 60, 0.1, beta=1.0)
        assert strong.valid_regime and weak.valid_regime
        assert strong.decaying and not weak.decaying
        assert weak.value == 1.0

    def test_p_zero_bound_is_zero(self):
        rep = tail_bound_degree(path_graph(3), 10, 0.5, 0.0)
        assert rep.value == 0.0 and math.isinf(rep.exponent)

    def test_argument_validation(self):
        g = path_graph(3)
        with pytest.raises(ValueError):
            tail_bound_degree(g, 0, 0.5, 0.1)
        with pytest.raises(ValueError):
            tail_bound_degree(g, 10, 1.0, 0.1)
        with pytest.raises(ValueError):
            tail_bound_anytime(g, 10, 0.5, 0.0)


class TestGuaranteedRates:
    def test_degree_rate_zero_threshold_exact(self):
        g = path_graph(3)  # max degree 2
        p_star = 1.0 / 3.0
        assert guaranteed_rate_degree(p_star, g) == 0.0
        assert guaranteed_rate_degree(p_star + 1e-12, g) == 0.0
        assert guaranteed_rate_degree(p_star - 1e-9, g) > 0.0

    def test_anytime_rate_zero_threshold_exact(self):
        g = path_graph(3)
        beta_star = 2.0 * math.log2(3.0)
        assert guaranteed_rate_anytime(beta_star, g) == 0.0
        assert guaranteed_rate_anytime(beta_star + 1e-9, g) > 0.0

    def test_degree_rate_at_root(self):
        g = path_graph(3)
        r = guaranteed_rate_degree(0.1, g)
        assert 0.0 < r < 0.9
        assert kl_bernoulli(1 - r, 0.1) == pytest.approx(math.log2(3), abs=1e-10)

    def test_anytime_rate_at_root(self):
        from erasure_consensus.infomath import entropy

        g = cycle_graph(4)
        beta = 6.0
        r = guaranteed_rate_anytime(beta, g)
        assert 0.0 < r < 1.0
        assert (1 - r) * beta / 2 - entropy(r) == pytest.approx(math.log2(3), abs=1e-10)

    def test_degree_rate_decreasing_in_p(self):
        g = path_graph(3)
        rates = [guaranteed_rate_degree(p, g) for p in (0.01, 0.05, 0.1, 0.2, 0.3)]
        assert all(a > b for a, b in zip(rates, rates[1:]))

    def test_strict_never_exceeds_degree_rate(self):
        g = cycle_graph(5)
        for p in (0.01, 0.05, 0.1, 0.2, 0.3, 1 / 3, 0.5):
            assert guaranteed_rate_strict(p, g) <= guaranteed_rate_degree(p, g) + 1e-15

    def test_p_zero_full_rate(self):
        g = path_graph(3)
        assert guaranteed_rate_degree(0.0, g) == 1.0
        assert guaranteed_rate_strict(0.0, g) == 1.0


class TestCodingGain:
    def test_two_node_coding_wins(self):
        # mu = 0 at eps = 1/2 on two nodes, so any positive coded rate
        # beats the uncoded sqrt(p) factor.
        rep = coding_gain_check(path_graph(2), 0.5, 0.3)
        assert rep.mu == pytest.approx(0.0, abs=1e-12)
        assert rep.sqrt_lambda2 == pytest.approx(math.sqrt(0.3), abs=1e-10)
        assert rep.rate_degree > 0 and rep.rate_edgecount > 0
        assert rep.gain_degree and rep.gain_strict and rep.gain_edgecount
        assert not rep.disagreement

    def test_report_internally_consistent(self):
        rep = coding_gain_check(path_graph(3), 0.4, 0.2)
        assert rep.rate_edgecount == pytest.approx(0.8**2)
        assert rep.rate_strict <= rep.rate_degree + 1e-15
        assert rep.disagreement == (
            not (rep.gain_degree == rep.gain_strict == rep.gain_edgecount)
        )
        for verdict, rate in (
            (rep.gain_degree, rep.rate_degree),
            (rep.gain_strict, rep.rate_strict),
            (rep.gain_edgecount, rep.rate_edgecount),
        ):
            assert verdict == (rate > 0 and rep.mu**rate < rep.sqrt_lambda2)


class TestGammaAnalysisObject:
    def test_fields(self):
        ga = gamma_exact(path_graph(2), 0.5, 0.3, "symmetric")
        assert isinstance(ga, GammaAnalysis)
        assert ga.mode == "symmetric" and ga.eps == 0.5 and ga.p == 0.3
        assert ga.gamma.shape == (4, 4)

    def test_x0_shape_guards(self):
        ga = gamma_exact(path_graph(2), 0.5, 0.3, "asymmetric")
        with pytest.raises(ValueError, match="x0"):
            asym_limit_mse(ga, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="x0"):
            msq_trajectory(ga, [1.0], 3)
