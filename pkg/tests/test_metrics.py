import math

import numpy as np
import pytest

from domd.algorithms import LearnerState, domd_madgc_round, run_experiment
from domd.cli import ExperimentConfig, build_run_config
from domd.geometry import FeasibleSet, MirrorMap
from domd.losses import global_loss, synthetic_quadratic_stream
from domd.metrics import (
    dynamic_regret,
    envelope_slope,
    lemma1_slack,
    network_errors,
    path_length,
    regret_bound,
)
from domd.topology import generate_topology

from test_losses import FixedQuad


class TestDynamicRegret:
    def test_playing_minimizers_gives_zero(self):
        stream = FixedQuad([(0.5, 0.5), (-0.5, -0.5)])
        xstar = np.zeros(2)
        plays = [np.stack([xstar, xstar]) for _ in range(5)]
        series = dynamic_regret(stream, plays, [xstar] * 5)
        np.testing.assert_allclose(series, 0.0, atol=1e-12)

    def test_single_node_hand_case(self):
        # f_t(x) = (x-1)^2, play 0 for two rounds: regret 1 then 2
        stream = FixedQuad([(1.0,)], lam=2.0)
        plays = [np.array([[0.0]]), np.array([[0.0]])]
        minimizers = [np.array([1.0]), np.array([1.0])]
        series = dynamic_regret(stream, plays, minimizers)
        np.testing.assert_allclose(series, [1.0, 2.0], atol=1e-12)

    def test_matches_brute_force_resummation(self):
        rng = np.random.default_rng(0)
        fs = FeasibleSet("ball", 2, r=1.0)
        stream = synthetic_quadratic_stream(3, 2, 1.0, ("random_walk", 0.05), 1, fs)
        plays = [rng.uniform(-0.3, 0.3, size=(3, 2)) for _ in range(6)]
        minimizers = [rng.uniform(-0.3, 0.3, size=2) for _ in range(6)]
        series = dynamic_regret(stream, plays, minimizers)
        brute = 0.0
        for idx in range(6):
            t = idx + 1
            brute += np.mean([global_loss(stream, t, plays[idx][i]) for i in range(3)])
            brute -= global_loss(stream, t, minimizers[idx])
            assert series[idx] == pytest.approx(brute, abs=1e-10)

    def test_length_mismatch(self):
        stream = FixedQuad([(0.0,)])
        with pytest.raises(ValueError):
            dynamic_regret(stream, [np.zeros((1, 1))], [])


class TestPathLength:
    def test_constant_sequence(self):
        assert path_length([np.ones(3)] * 7) == 0.0

    def test_alternating_basis_vectors(self):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        assert path_length([e1, e2, e1]) == pytest.approx(2 * math.sqrt(2), abs=1e-12)

    def test_single_round_is_zero(self):
        assert path_length([np.array([3.0])]) == 0.0

    def test_random_matches_manual_sum(self):
        rng = np.random.default_rng(1)
        seq = [rng.standard_normal(4) for _ in range(20)]
        manual = sum(float(np.linalg.norm(b - a)) for a, b in zip(seq, seq[1:]))
        assert path_length(seq) == pytest.approx(manual, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            path_length([])


class TestNetworkErrors:
    def test_exact_consensus_zeroes_everything(self):
        stream = FixedQuad([(0.2, 0.1)] * 4)
        fs = FeasibleSet("ball", 2, r=1.0)
        mirror = MirrorMap("euclidean")
        x = np.tile([0.05, -0.05], (4, 1))
        g = np.array([stream.grad(i, 1, x[i]) for i in range(4)])
        x_next = np.array([x[i] - 0.5 * g[i] for i in range(4)])
        delta, delta_small, dis = network_errors(x, x_next, x, stream, 1, mirror, fs, 0.5)
        assert delta == pytest.approx(0.0, abs=1e-12)
        assert delta_small == pytest.approx(0.0, abs=1e-12)
        assert dis == pytest.approx(0.0, abs=1e-12)

    def test_single_node_identically_zero(self):
        stream = FixedQuad([(0.3,)])
        fs = FeasibleSet("ball", 1, r=1.0)
        mirror = MirrorMap("euclidean")
        x = np.array([[0.1]])
        g = stream.grad(0, 1, x[0])
        x_next = x - 0.5 * g
        delta, delta_small, dis = network_errors(x, x_next, x, stream, 1, mirror, fs, 0.5)
        assert delta == pytest.approx(0.0, abs=1e-14)
        assert delta_small == pytest.approx(0.0, abs=1e-14)
        assert dis == 0.0


class TestLemma1Slack:
    def test_exact_landing_keeps_slack_nonnegative(self):
        xstar = np.array([0.5, 0.5])
        slack = lemma1_slack(np.zeros(2), xstar, xstar, 0.5, 0.01, 0.02)
        assert slack == pytest.approx(0.5 * np.linalg.norm(xstar) + 0.03)

    def test_boundary_configuration(self):
        xbar = np.array([1.0, 0.0])
        assert lemma1_slack(xbar, xbar, xbar, 1.0, 0.0, 0.0) == 0.0

    def test_stationary_rho_one(self):
        xbar = np.array([0.7])
        xstar = np.array([0.2])
        assert lemma1_slack(xbar, xbar, xstar, 1.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_slack_nonnegative_single_node_run(self):
        cfg = ExperimentConfig(
            algorithm="madgc", topology="complete", nodes=1, loss="quadratic",
            eta=0.5, T=500, seed=5, dim=2, lam=1.0, drift="walk:0.01",
            feasible="ball:1",
        )
        traces, _ = run_experiment(build_run_config(cfg))
        slacks = [tr.diagnostics.lemma1_slack for tr in traces]
        assert min(slacks) >= -1e-8


class TestRegretBound:
    def test_frozen_reference_value(self):
        value = regret_bound(G=1, R=1, mu=1, mu_prime=1, eta=0.5, lam=1,
                             n=4, initial_gap=1.0, C_T=3.0)
        assert value == pytest.approx(24.449340668482265, abs=1e-9)

    def test_driftless_floor_has_two_terms(self):
        G, R, n, eta, lam = 2.0, 1.5, 9, 0.5, 1.0
        rho = 0.5
        value = regret_bound(G, R, 1, 1, eta, lam, n, initial_gap=0.0, C_T=0.0)
        pi26 = math.pi**2 / 6
        term1 = G * R * 3 * pi26
        term3 = ((G * R * 1 + eta * G * G + eta * lam * G * R) / 1) * 3 * pi26 / (1 - rho)
        assert value == pytest.approx(term1 + term3, abs=1e-12)

    def test_doubling_path_length_doubles_last_term(self):
        base = dict(G=1.0, R=1.0, mu=1.0, mu_prime=1.0, eta=0.5, lam=1.0,
                    n=4, initial_gap=0.2)
        b1 = regret_bound(**base, C_T=2.0)
        b2 = regret_bound(**base, C_T=4.0)
        rho = 0.5
        assert b2 - b1 == pytest.approx(1.0 * 2.0 / (1 - rho), abs=1e-12)

    def test_invalid_contraction_rejected(self):
        with pytest.raises(ValueError, match="rho"):
            regret_bound(1, 1, 1, 1, 1.2, 1, 4, 0.0, 0.0)
        with pytest.raises(ValueError, match="rho"):
            regret_bound(1, 1, 1, 2, 0.1, 1, 4, 0.0, 0.0)


class TestEnvelopeSlope:
    def test_clean_inverse_square(self):
        t = np.arange(1, 1001)
        v = 3.0 / t**2
        assert envelope_slope(t, v, 10, 1000) == pytest.approx(-2.0, abs=1e-6)

    def test_sawtooth_modulated_decay(self):
        # staircase exponent mimicking a ceil-scheduled consensus count
        sigma2 = 0.8
        t = np.arange(1, 1001)
        K = np.maximum(1, np.ceil(-2 * np.log(t) / np.log(sigma2)))
        v = 0.7 * sigma2**K
        slope = envelope_slope(t, v, 10, 1000)
        assert slope <= -1.8

    def test_flat_series_has_zero_slope(self):
        t = np.arange(1, 101)
        assert abs(envelope_slope(t, np.full(100, 1e-16), 10, 100)) < 1e-9

    def test_window_validation(self):
        t = np.arange(1, 101)
        with pytest.raises(ValueError, match="fewer than two"):
            envelope_slope(t, np.ones(100), 200, 300)

    def test_zero_envelope_rejected(self):
        t = np.arange(1, 101)
        with pytest.raises(ValueError, match="nonpositive"):
            envelope_slope(t, np.zeros(100), 10, 100)


def drive_madgc_network_errors(cfg: ExperimentConfig, T: int):
    """Manual round loop so network errors are measured without the oracle."""
    run = build_run_config(cfg)
    stream, mirror, fs = run.stream, run.mirror, run.feasible
    states = [
        LearnerState(fs.center(), fs.center(), np.zeros(stream.d))
        for _ in range(stream.n)
    ]
    rounds, deltas, smalls = [], [], []
    for t in range(1, T + 1):
        W = run.schedule.matrix_for(t)
        xs_before = np.array([s.x for s in states])
        states, _ = domd_madgc_round(
            states, W, stream, t, mirror, fs, run.eta, run.k_policy, run.k_fixed
        )
        ys = np.array([s.y for s in states])
        xs_after = np.array([s.x for s in states])
        delta, small, _ = network_errors(
            xs_before, xs_after, ys, stream, t, mirror, fs, run.eta
        )
        rounds.append(t)
        deltas.append(delta)
        smalls.append(small)
    return np.array(rounds), np.array(deltas), np.array(smalls)


class TestNetworkErrorDecay:
    """The inverse-square decay is only measurable when the mirror step or the
    gradients are genuinely nonlinear; affine regimes cancel exactly and sit
    at rounding noise (see the quadratic/euclidean acceptance run)."""

    def test_entropy_map_decision_error_decays(self):
        cfg = ExperimentConfig(
            algorithm="madgc", topology="cycle", nodes=8, loss="quadratic",
            eta=0.2, T=400, seed=3, dim=4, lam=1.0, drift="walk:0.005",
            feasible="simplex", mirror="entropy", entropy_eps=1e-6,
        )
        ts, deltas, smalls = drive_madgc_network_errors(cfg, 400)
        assert deltas.max() > 1e-9  # genuinely nonzero
        assert envelope_slope(ts, deltas, 10, 400) <= -1.8
        # quadratic gradients are linear, so the gradient-point error cancels
        assert smalls.max() < 1e-12

    def test_logistic_gradient_error_decays(self, fixture_dataset_path):
        cfg = ExperimentConfig(
            algorithm="madgc", topology="cycle", nodes=8, loss="logistic",
            eta=0.5, T=400, seed=7, feasible="ball:1",
            dataset=str(fixture_dataset_path), reg_lambda=0.01, batch=10,
        )
        ts, deltas, smalls = drive_madgc_network_errors(cfg, 400)
        assert smalls.max() > 1e-9
        assert envelope_slope(ts, smalls, 10, 400) <= -1.8

    def test_bound_with_run_derived_constant(self):
        cfg = ExperimentConfig(
            algorithm="madgc", topology="cycle", nodes=8, loss="quadratic",
            eta=0.2, T=300, seed=4, dim=3, lam=1.0, drift="walk:0.005",
            feasible="simplex", mirror="entropy", entropy_eps=1e-6,
        )
        ts, deltas, _ = drive_madgc_network_errors(cfg, 300)
        C = np.max(deltas * ts.astype(float) ** 2)
        assert np.all(deltas <= C / ts.astype(float) ** 2 + 1e-15)
