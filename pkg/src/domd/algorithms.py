"""Synchronous round engines and the experiment runner.

Three engines share one round shape: reveal losses, exchange state over the
round's weight matrix, take a mirror step.

  madgc        multi-step consensus on decisions AND gradients; the per-round
               iteration count follows the logarithmic schedule (or a fixed
               override), so every learner steps along an estimate of the
               global gradient from its estimate of the average decision.
  domd_single  one consensus step on decisions only; each learner then
               follows its own local gradient.
  centralized  a single learner stepping along the exact global gradient
               scaled by 1/n (the same per-node gradient scale as above).

Rounds are strictly sequential and all reductions run in fixed node order,
so a (config, seed) pair reproduces bit-identical traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FeasibleSet, MirrorMap, mirror_descent_step, project, validate_step_size
from .losses import LossStream, global_grad, global_loss, global_minimizer
from .metrics import DiagnosticsRecord, lemma1_slack, network_errors
from .topology import TopologySchedule, WeightMatrix, consensus_average, consensus_rounds

__all__ = [
    "LearnerState",
    "RoundTrace",
    "RunConfig",
    "resolve_consensus_count",
    "domd_madgc_round",
    "domd_single_round",
    "centralized_omd_round",
    "run_experiment",
]


@dataclass(frozen=True)
class LearnerState:
    """Per-node triple: decision x, minimizer estimate y, gradient estimate g."""

    x: np.ndarray
    y: np.ndarray
    g: np.ndarray


@dataclass
class RoundTrace:
    t: int
    K: int
    sigma2: float
    global_loss_y: float
    global_loss_x: float
    diagnostics: DiagnosticsRecord | None = None


@dataclass
class RunConfig:
    algorithm: str  # madgc | domd_single | centralized
    eta: float
    T: int
    schedule: TopologySchedule
    mirror: MirrorMap
    feasible: FeasibleSet
    stream: LossStream
    seed: int = 0
    k_policy: str = "paper"  # paper | fixed | single
    k_fixed: int | None = None
    diagnostics: bool = True
    init: str = "center"  # center | random

    def __post_init__(self) -> None:
        if self.algorithm not in ("madgc", "domd_single", "centralized"):
            raise ValueError(f"unknown algorithm '{self.algorithm}'")
        if self.k_policy not in ("paper", "fixed", "single"):
            raise ValueError(f"unknown K policy '{self.k_policy}'")
        if self.k_policy == "fixed" and (self.k_fixed is None or self.k_fixed < 1):
            raise ValueError("fixed K policy requires k_fixed >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.init not in ("center", "random"):
            raise ValueError(f"unknown init '{self.init}'")
        if self.algorithm != "centralized" and self.schedule.n != self.stream.n:
            raise ValueError(
                f"schedule has {self.schedule.n} nodes but stream has {self.stream.n}"
            )


def resolve_consensus_count(
    k_policy: str, k_fixed: int | None, t: int, sigma2: float
) -> int:
    if k_policy == "paper":
        return consensus_rounds(t, sigma2)
    if k_policy == "single":
        return 1
    return int(k_fixed)  # type: ignore[arg-type]


def _mean_global_loss(stream: LossStream, t: int, points: list[np.ndarray]) -> float:
    return sum(global_loss(stream, t, p) for p in points) / len(points)


def domd_madgc_round(
    states: list[LearnerState],
    W: WeightMatrix,
    stream: LossStream,
    t: int,
    mirror: MirrorMap,
    feasible: FeasibleSet,
    eta: float,
    k_policy: str = "paper",
    k_fixed: int | None = None,
) -> tuple[list[LearnerState], RoundTrace]:
    """One multi-consensus round: average decisions, average gradients, step."""
    K = resolve_consensus_count(k_policy, k_fixed, t, W.sigma2)
    xs = [s.x for s in states]
    ys = consensus_average(W, K, xs)
    grads = [stream.grad(i, t, ys[i]) for i in range(len(states))]
    gs = consensus_average(W, K, grads)
    new_states = [
        LearnerState(
            x=mirror_descent_step(mirror, feasible, eta, gs[i], ys[i]),
            y=ys[i],
            g=gs[i],
        )
        for i in range(len(states))
    ]
    trace = RoundTrace(
        t=t,
        K=K,
        sigma2=W.sigma2,
        global_loss_y=_mean_global_loss(stream, t, ys),
        global_loss_x=_mean_global_loss(stream, t, xs),
    )
    return new_states, trace


def domd_single_round(
    states: list[LearnerState],
    W: WeightMatrix,
    stream: LossStream,
    t: int,
    mirror: MirrorMap,
    feasible: FeasibleSet,
    eta: float,
) -> tuple[list[LearnerState], RoundTrace]:
    """Baseline round: one decision consensus step, then purely local gradients."""
    xs = [s.x for s in states]
    ys = consensus_average(W, 1, xs)
    new_states = []
    for i in range(len(states)):
        g = stream.grad(i, t, ys[i])
        new_states.append(
            LearnerState(
                x=mirror_descent_step(mirror, feasible, eta, g, ys[i]),
                y=ys[i],
                g=g,
            )
        )
    trace = RoundTrace(
        t=t,
        K=1,
        sigma2=W.sigma2,
        global_loss_y=_mean_global_loss(stream, t, ys),
        global_loss_x=_mean_global_loss(stream, t, xs),
    )
    return new_states, trace


def centralized_omd_round(
    x: np.ndarray,
    stream: LossStream,
    t: int,
    mirror: MirrorMap,
    feasible: FeasibleSet,
    eta: float,
    sigma2: float = 0.0,
) -> tuple[np.ndarray, RoundTrace]:
    """Single-learner reference: mirror step along the exact average gradient."""
    g = global_grad(stream, t, x) / stream.n
    x_next = mirror_descent_step(mirror, feasible, eta, g, x)
    loss = global_loss(stream, t, x)
    trace = RoundTrace(
        t=t, K=0, sigma2=sigma2, global_loss_y=loss, global_loss_x=loss
    )
    return x_next, trace


def _initial_states(config: RunConfig) -> list[LearnerState]:
    n = config.stream.n if config.algorithm != "centralized" else 1
    d = config.stream.d
    if config.init == "center":
        points = [config.feasible.center() for _ in range(n)]
    else:
        points = []
        for i in range(n):
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(i,)))
            points.append(_random_feasible_point(config.feasible, rng))
    zero = np.zeros(d)
    return [LearnerState(x=p, y=p.copy(), g=zero.copy()) for p in points]


def _random_feasible_point(feasible: FeasibleSet, rng: np.random.Generator) -> np.ndarray:
    if feasible.kind == "ball":
        v = rng.standard_normal(feasible.dim)
        v /= max(np.linalg.norm(v), 1e-12)
        return v * feasible.r * rng.random() ** (1.0 / feasible.dim)
    if feasible.kind == "box":
        return rng.uniform(feasible.lo, feasible.hi, size=feasible.dim)
    w = rng.dirichlet(np.ones(feasible.dim))
    return project(feasible, w)


def _contraction_factor(config: RunConfig) -> tuple[float | None, bool]:
    """(rho, enforced): enforcement only in the regime where constants are exact."""
    lam = config.stream.constants.lam
    enforce = (
        config.algorithm == "madgc"
        and config.diagnostics
        and config.mirror.kind == "euclidean"
        and lam > 0
    )
    if enforce:
        return validate_step_size(config.eta, lam, config.mirror), True
    if lam > 0:
        rho = (config.mirror.mu_prime - config.eta * lam) / config.mirror.mu
        if 0.0 < rho < 1.0:
            return rho, False
    return None, False


def run_experiment(config: RunConfig) -> tuple[list[RoundTrace], dict]:
    """Run T rounds and return the trace plus the realized-constants header."""
    stream = config.stream
    consts = stream.constants
    rho, _ = _contraction_factor(config)

    header: dict = {
        "algorithm": config.algorithm,
        "K_policy": config.k_policy
        + (f":{config.k_fixed}" if config.k_policy == "fixed" else ""),
        "n": stream.n,
        "dim": stream.d,
        "eta": config.eta,
        "T": config.T,
        "seed": config.seed,
        "mirror": config.mirror.kind,
        "feasible": config.feasible.kind,
        "loss": stream.kind,
        "lambda": consts.lam,
        "beta": consts.beta,
        "G": consts.G,
        "R": config.feasible.radius,
        "mu": config.mirror.mu,
        "mu_prime": config.mirror.mu_prime,
        "rho": rho,
        "gradient_scale": "average",
        "assumption1_strong_convexity": consts.lam > 0,
        "regret_comparison_series": "y",
        "initial_gap": None,
        "drift_clamped_rounds": None,
    }

    states = _initial_states(config)
    x_central = states[0].x
    traces: list[RoundTrace] = []
    cum_regret_x = 0.0
    cum_regret_y = 0.0
    path_so_far = 0.0
    prev_xstar: np.ndarray | None = None

    for t in range(1, config.T + 1):
        try:
            W = config.schedule.matrix_for(t)
            xs_before = np.array([s.x for s in states])
            if config.algorithm == "madgc":
                states, trace = domd_madgc_round(
                    states, W, stream, t, config.mirror, config.feasible,
                    config.eta, config.k_policy, config.k_fixed,
                )
            elif config.algorithm == "domd_single":
                states, trace = domd_single_round(
                    states, W, stream, t, config.mirror, config.feasible, config.eta
                )
            else:
                x_central, trace = centralized_omd_round(
                    x_central, stream, t, config.mirror, config.feasible,
                    config.eta, sigma2=W.sigma2,
                )
                states = [LearnerState(x=x_central, y=states[0].x, g=states[0].g)]

            if config.diagnostics:
                xstar = global_minimizer(
                    stream, t, config.feasible, tol=1e-10, warm_start=prev_xstar
                )
                opt_loss = global_loss(stream, t, xstar)
                cum_regret_x += trace.global_loss_x - opt_loss
                cum_regret_y += trace.global_loss_y - opt_loss
                if prev_xstar is not None:
                    path_so_far += float(np.linalg.norm(xstar - prev_xstar))
                xs_after = np.array([s.x for s in states])
                ys = np.array([s.y for s in states])
                if config.algorithm == "centralized":
                    ys = xs_before
                delta, delta_small, disagreement = network_errors(
                    xs_before, xs_after, ys, stream, t,
                    config.mirror, config.feasible, config.eta,
                )
                xbar = xs_before.mean(axis=0)
                xbar_next = xs_after.mean(axis=0)
                slack = (
                    lemma1_slack(xbar, xbar_next, xstar, rho, delta, delta_small)
                    if rho is not None
                    else float("nan")
                )
                if t == 1:
                    header["initial_gap"] = float(np.linalg.norm(xbar - xstar))
                trace.diagnostics = DiagnosticsRecord(
                    t=t,
                    cumulative_regret_x=cum_regret_x,
                    cumulative_regret_y=cum_regret_y,
                    path_length_so_far=path_so_far,
                    max_disagreement=disagreement,
                    delta_norm=delta,
                    delta_small_norm=delta_small,
                    lemma1_slack=slack,
                    xbar_to_opt=float(np.linalg.norm(xbar_next - xstar)),
                )
                prev_xstar = xstar
            traces.append(trace)
        except Exception as exc:
            raise RuntimeError(f"round {t}: {exc}") from exc

    clamped = getattr(stream, "clamped_rounds", None)
    header["drift_clamped_rounds"] = len(clamped) if clamped is not None else 0
    return traces, header
