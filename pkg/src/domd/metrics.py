"""Dynamic regret, path length, network-error diagnostics, and the bound.

The network errors compare the realized average decision update against two
reference mirror steps taken from the exact average state: one driven by the
exact average of the node gradients (isolating consensus error) and one
driven by the average-scaled global gradient (isolating the gradient
evaluation points). Both vanish to rounding noise whenever the mirror step
is affine and the losses have linear gradients, so their decay is only
measurable in curved regimes (entropy map or non-quadratic losses).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import FeasibleSet, MirrorMap, mirror_descent_step
from .losses import LossStream, global_loss

__all__ = [
    "DiagnosticsRecord",
    "dynamic_regret",
    "path_length",
    "network_errors",
    "lemma1_slack",
    "regret_bound",
    "envelope_slope",
]


@dataclass
class DiagnosticsRecord:
    """Per-round diagnostics computed from exact averages and the oracle."""

    t: int
    cumulative_regret_x: float
    cumulative_regret_y: float
    path_length_so_far: float
    max_disagreement: float
    delta_norm: float
    delta_small_norm: float
    lemma1_slack: float
    xbar_to_opt: float


def dynamic_regret(
    stream: LossStream,
    plays: list[np.ndarray],
    minimizers: list[np.ndarray],
) -> np.ndarray:
    """Cumulative dynamic regret series for per-node plays against the oracle.

    plays[t-1] holds the n stacked decisions of round t; the increment is
    mean_i f_t(plays_i) - f_t(x*_t) with f_t the summed global loss.
    """
    if len(plays) != len(minimizers):
        raise ValueError("plays and minimizers must cover the same rounds")
    out = np.zeros(len(plays))
    total = 0.0
    for idx, (X, xstar) in enumerate(zip(plays, minimizers)):
        t = idx + 1
        X = np.atleast_2d(np.asarray(X, float))
        mean_play_loss = sum(global_loss(stream, t, X[i]) for i in range(X.shape[0])) / X.shape[0]
        total += mean_play_loss - global_loss(stream, t, np.asarray(xstar, float))
        out[idx] = total
    return out


def path_length(minimizers: list[np.ndarray]) -> float:
    """Sum of distances between successive minimizers; zero for one round."""
    if len(minimizers) < 1:
        raise ValueError("need at least one minimizer")
    total = 0.0
    for prev, cur in zip(minimizers, minimizers[1:]):
        total += float(np.linalg.norm(np.asarray(cur, float) - np.asarray(prev, float)))
    return total


def network_errors(
    xs_before: np.ndarray,
    xs_after: np.ndarray,
    ys: np.ndarray,
    stream: LossStream,
    t: int,
    mirror: MirrorMap,
    feasible: FeasibleSet,
    eta: float,
) -> tuple[float, float, float]:
    """Norms of the two network-error terms plus the max consensus gap.

    Returns (delta, delta_small, max_disagreement):
      delta        = || xbar_{t+1} - MD(gbar, xbar) ||
      delta_small  = || MD(gbar, xbar) - MD(grad f_t(xbar)/n, xbar) ||
    with gbar the exact average of node gradients taken at their y's.
    """
    xs_before = np.asarray(xs_before, float)
    xs_after = np.asarray(xs_after, float)
    ys = np.asarray(ys, float)
    n = xs_before.shape[0]
    xbar = xs_before.mean(axis=0)
    xbar_next = xs_after.mean(axis=0)
    gbar = np.zeros(stream.d)
    for i in range(n):
        gbar = gbar + stream.grad(i, t, ys[i])
    gbar /= n
    gfull = np.zeros(stream.d)
    for i in range(n):
        gfull = gfull + stream.grad(i, t, xbar)
    gfull /= n
    md_gbar = mirror_descent_step(mirror, feasible, eta, gbar, xbar)
    md_true = mirror_descent_step(mirror, feasible, eta, gfull, xbar)
    delta = float(np.linalg.norm(xbar_next - md_gbar))
    delta_small = float(np.linalg.norm(md_gbar - md_true))
    disagreement = float(np.max(np.linalg.norm(ys - xbar, axis=1)))
    return delta, delta_small, disagreement


def lemma1_slack(
    xbar: np.ndarray,
    xbar_next: np.ndarray,
    xstar: np.ndarray,
    rho: float,
    delta_norm: float,
    delta_small_norm: float,
) -> float:
    """Contraction-inequality slack: RHS minus LHS, nonnegative on valid runs."""
    lhs = float(np.linalg.norm(np.asarray(xbar_next, float) - np.asarray(xstar, float)))
    rhs = (
        rho * float(np.linalg.norm(np.asarray(xbar, float) - np.asarray(xstar, float)))
        + delta_norm
        + delta_small_norm
    )
    return rhs - lhs


def regret_bound(
    G: float,
    R: float,
    mu: float,
    mu_prime: float,
    eta: float,
    lam: float,
    n: int,
    initial_gap: float,
    C_T: float,
) -> float:
    """Dynamic-regret upper bound for the multi-consensus algorithm.

    G*R*sqrt(n)*pi^2/6 + G*gap/(1-rho)
      + ((G*R*mu' + eta*G^2 + eta*lam*G*R)/mu) * sqrt(n)*pi^2/(6*(1-rho))
      + G*C_T/(1-rho),  with rho = (mu' - eta*lam)/mu.
    """
    rho = (mu_prime - eta * lam) / mu
    if not 0.0 < rho < 1.0:
        raise ValueError(f"contraction factor rho = {rho:.6g} outside (0, 1)")
    pi26 = math.pi**2 / 6.0
    rn = math.sqrt(n)
    return (
        G * R * rn * pi26
        + G * initial_gap / (1.0 - rho)
        + ((G * R * mu_prime + eta * G * G + eta * lam * G * R) / mu)
        * rn
        * pi26
        / (1.0 - rho)
        + G * C_T / (1.0 - rho)
    )


def envelope_slope(
    rounds: np.ndarray, values: np.ndarray, t_lo: int, t_hi: int
) -> float:
    """Least-squares log-log slope of the upper envelope over [t_lo, t_hi].

    The upper envelope at t is the maximum of the series from t onward
    (within the window), which strips sawtooth dips so the fitted slope
    tracks the decay rate of the peaks. Nonpositive envelope points cannot
    be fit and raise.
    """
    rounds = np.asarray(rounds)
    values = np.asarray(values, float)
    mask = (rounds >= t_lo) & (rounds <= t_hi)
    if mask.sum() < 2:
        raise ValueError("window contains fewer than two points")
    tw = rounds[mask].astype(float)
    vw = values[mask]
    env = np.maximum.accumulate(vw[::-1])[::-1]
    if np.any(env <= 0):
        raise ValueError("upper envelope has nonpositive values; slope undefined")
    slope, _ = np.polyfit(np.log(tw), np.log(env), 1)
    return float(slope)
