"""Per-node, per-round loss streams with curvature constants.

A stream serves the loss of node i at round t through value(i, t, x) and
grad(i, t, x), and reports analytic curvature constants (strong convexity,
smoothness, gradient bound) used by the step-size window and the regret
bound. Synthetic quadratics have drifting targets with a closed-form global
minimizer; logistic and ridge streams draw round-robin minibatches from
sharded LIBSVM data.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .data import SparseExample, batch, densify
from .geometry import FeasibleSet, project

__all__ = [
    "StreamConstants",
    "LossStream",
    "QuadraticStream",
    "LogisticStream",
    "RidgeStream",
    "synthetic_quadratic_stream",
    "logistic_stream",
    "ridge_stream",
    "global_loss",
    "global_grad",
    "global_minimizer",
]


@dataclass(frozen=True)
class StreamConstants:
    lam: float
    beta: float
    G: float


class LossStream:
    """Base interface: n nodes, dimension d, per-(i, t) value and gradient."""

    n: int
    d: int
    kind: str
    constants: StreamConstants

    def value(self, i: int, t: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, i: int, t: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def closed_form_minimizer(self, t: int, feasible: FeasibleSet) -> np.ndarray | None:
        return None


def _unit_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    nrm = np.linalg.norm(v)
    while nrm < 1e-12:
        v = rng.standard_normal(d)
        nrm = np.linalg.norm(v)
    return v / nrm


class QuadraticStream(LossStream):
    """f_{i,t}(x) = (lam/2) ||x - a_{i,t}||^2 with a_{i,t} = c_t + b_i.

    The node offsets b_i are fixed and mean-zero; the common center c_t
    drifts per round (random walk or sinusoid) and every target is projected
    back into the feasible set, so the global minimizer is exactly
    project(mean_i a_{i,t}). Rounds where the projection actually moved a
    point are recorded in clamped_rounds.
    """

    kind = "quadratic"

    def __init__(
        self,
        n: int,
        d: int,
        lam: float,
        drift: tuple,
        seed: int,
        feasible: FeasibleSet,
        offset_scale: float | None = None,
    ):
        if lam <= 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        if n < 1 or d < 1:
            raise ValueError("n and d must be >= 1")
        if feasible.dim != d:
            raise ValueError("feasible set dimension does not match the stream")
        self.n = n
        self.d = d
        self.lam = lam
        self.drift = drift
        self.seed = seed
        self.feasible = feasible
        R = feasible.radius
        if offset_scale is None:
            offset_scale = 0.1 * R
        off_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        raw = off_rng.standard_normal((n, d))
        raw -= raw.mean(axis=0)
        self.offsets = offset_scale * raw
        self._drift_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        self._sine_dir = _unit_vector(
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,))), d
        )
        self._centers: list[np.ndarray] = [feasible.center()]
        self._lock = threading.Lock()
        self.clamped_rounds: set[int] = set()
        self.constants = StreamConstants(lam=lam, beta=lam, G=2.0 * lam * R)

    def _center(self, t: int) -> np.ndarray:
        kind = self.drift[0]
        if kind == "sinusoid":
            _, amp, period = self.drift
            raw = self.feasible.center() + amp * np.sin(2.0 * np.pi * t / period) * self._sine_dir
            c = project(self.feasible, raw)
            if np.linalg.norm(c - raw) > 1e-12:
                self.clamped_rounds.add(t)
            return c
        if kind != "random_walk":
            raise ValueError(f"unknown drift kind '{kind}'")
        with self._lock:
            # walk is sequential; extend the memoized path up to round t
            while len(self._centers) < t:
                step = self.drift[1] * _unit_vector(self._drift_rng, self.d)
                raw = self._centers[-1] + step
                c = project(self.feasible, raw)
                if np.linalg.norm(c - raw) > 1e-12:
                    self.clamped_rounds.add(len(self._centers) + 1)
                self._centers.append(c)
            return self._centers[t - 1]

    def target(self, i: int, t: int) -> np.ndarray:
        if not (0 <= i < self.n):
            raise ValueError(f"node index {i} out of range")
        if t < 1:
            raise ValueError(f"round index must be >= 1, got {t}")
        return project(self.feasible, self._center(t) + self.offsets[i])

    def value(self, i: int, t: int, x: np.ndarray) -> float:
        diff = np.asarray(x, float) - self.target(i, t)
        return 0.5 * self.lam * float(np.dot(diff, diff))

    def grad(self, i: int, t: int, x: np.ndarray) -> np.ndarray:
        return self.lam * (np.asarray(x, float) - self.target(i, t))

    def closed_form_minimizer(self, t: int, feasible: FeasibleSet) -> np.ndarray:
        mean_target = np.mean([self.target(i, t) for i in range(self.n)], axis=0)
        return project(feasible, mean_target)


class _DataStream(LossStream):
    """Shared plumbing for losses driven by sharded sparse examples."""

    def __init__(
        self,
        shards: list[list[SparseExample]],
        batch_size: int,
        reg_lambda: float,
        dim: int,
        radius: float,
    ):
        if any(len(s) == 0 for s in shards):
            raise ValueError("empty shard")
        if batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {batch_size}")
        if reg_lambda < 0:
            raise ValueError(f"reg_lambda must be nonnegative, got {reg_lambda}")
        self.n = len(shards)
        self.d = dim
        self.shards = shards
        self.batch_size = batch_size
        self.reg = reg_lambda
        self.radius = radius
        # the batch start position cycles through finitely many offsets, so
        # every dense minibatch can be materialized once up front; streams
        # stay immutable (and cheap) afterwards
        self._dense: list[dict[int, tuple[np.ndarray, np.ndarray]]] = []
        for shard in shards:
            m = len(shard)
            cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
            for t in range(1, m + 1):
                start = ((t - 1) * batch_size) % m
                if start not in cache:
                    cache[start] = densify(batch(shard, t, batch_size), dim)
            self._dense.append(cache)

    def _batch(self, i: int, t: int) -> tuple[np.ndarray, np.ndarray]:
        if not (0 <= i < self.n):
            raise ValueError(f"node index {i} out of range")
        if t < 1:
            raise ValueError(f"round index must be >= 1, got {t}")
        start = ((t - 1) * self.batch_size) % len(self.shards[i])
        return self._dense[i][start]

    def _max_feature_norm(self) -> float:
        best = 0.0
        for shard in self.shards:
            for ex in shard:
                nrm = np.sqrt(sum(v * v for _, v in ex.features))
                best = max(best, float(nrm))
        return best


class LogisticStream(_DataStream):
    """Minibatch logistic loss log(1 + exp(-z x.w)) + (reg/2)||x||^2.

    Labels are mapped to +-1 one-vs-rest against target_class. Without a
    regularizer the loss is not strongly convex (lam = 0), which the run
    header flags.
    """

    kind = "logistic"

    def __init__(
        self,
        shards: list[list[SparseExample]],
        batch_size: int,
        reg_lambda: float = 0.0,
        *,
        dim: int,
        radius: float,
        target_class: float = 1.0,
    ):
        super().__init__(shards, batch_size, reg_lambda, dim, radius)
        self.target_class = target_class
        wmax = self._max_feature_norm()
        self.constants = StreamConstants(
            lam=reg_lambda,
            beta=reg_lambda + wmax * wmax / 4.0,
            G=wmax + reg_lambda * radius,
        )

    def _signs(self, labels: np.ndarray) -> np.ndarray:
        return np.where(labels == self.target_class, 1.0, -1.0)

    def value(self, i: int, t: int, x: np.ndarray) -> float:
        X, labels = self._batch(i, t)
        z = self._signs(labels)
        margins = z * (X @ np.asarray(x, float))
        # log(1 + exp(-m)) via logaddexp for overflow safety
        loss = float(np.mean(np.logaddexp(0.0, -margins)))
        return loss + 0.5 * self.reg * float(np.dot(x, x))

    def grad(self, i: int, t: int, x: np.ndarray) -> np.ndarray:
        X, labels = self._batch(i, t)
        z = self._signs(labels)
        x = np.asarray(x, float)
        margins = z * (X @ x)
        # sigmoid(-m) computed stably
        sig = np.where(
            margins >= 0,
            np.exp(-margins) / (1.0 + np.exp(-margins)),
            1.0 / (1.0 + np.exp(margins)),
        )
        return -((z * sig) @ X) / X.shape[0] + self.reg * x


class RidgeStream(_DataStream):
    """Minibatch squared loss (x.w - z)^2 + (reg/2)||x||^2."""

    kind = "ridge"

    def __init__(
        self,
        shards: list[list[SparseExample]],
        batch_size: int,
        reg_lambda: float = 0.0,
        *,
        dim: int,
        radius: float,
    ):
        super().__init__(shards, batch_size, reg_lambda, dim, radius)
        wmax = self._max_feature_norm()
        zmax = max(abs(ex.label) for shard in shards for ex in shard)
        self.constants = StreamConstants(
            lam=self._min_batch_curvature() + reg_lambda,
            beta=2.0 * wmax * wmax + reg_lambda,
            G=2.0 * (radius * wmax + zmax) * wmax + reg_lambda * radius,
        )

    def _min_batch_curvature(self) -> float:
        """Smallest 2*lambda_min over every distinct batch any node serves."""
        best = np.inf
        for cache in self._dense:
            for X, _ in cache.values():
                gram = (2.0 / X.shape[0]) * (X.T @ X)
                best = min(best, float(np.linalg.eigvalsh(gram)[0]))
        return max(best, 0.0)

    def value(self, i: int, t: int, x: np.ndarray) -> float:
        X, z = self._batch(i, t)
        resid = X @ np.asarray(x, float) - z
        return float(np.mean(resid**2)) + 0.5 * self.reg * float(np.dot(x, x))

    def grad(self, i: int, t: int, x: np.ndarray) -> np.ndarray:
        X, z = self._batch(i, t)
        x = np.asarray(x, float)
        resid = X @ x - z
        return 2.0 * (resid @ X) / X.shape[0] + self.reg * x


def synthetic_quadratic_stream(
    n: int,
    d: int,
    lam: float,
    drift: tuple,
    seed: int,
    feasible: FeasibleSet,
    offset_scale: float | None = None,
) -> QuadraticStream:
    """Drifting quadratic stream; drift is ('random_walk', s) or ('sinusoid', a, p)."""
    return QuadraticStream(n, d, lam, drift, seed, feasible, offset_scale)


def logistic_stream(
    shards: list[list[SparseExample]],
    batch_size: int,
    reg_lambda: float = 0.0,
    *,
    dim: int,
    radius: float,
    target_class: float = 1.0,
) -> LogisticStream:
    return LogisticStream(
        shards, batch_size, reg_lambda, dim=dim, radius=radius, target_class=target_class
    )


def ridge_stream(
    shards: list[list[SparseExample]],
    batch_size: int,
    reg_lambda: float = 0.0,
    *,
    dim: int,
    radius: float,
) -> RidgeStream:
    return RidgeStream(shards, batch_size, reg_lambda, dim=dim, radius=radius)


def global_loss(stream: LossStream, t: int, x: np.ndarray) -> float:
    """Sum of all local losses at x, accumulated in fixed node order."""
    total = 0.0
    for i in range(stream.n):
        total += stream.value(i, t, x)
    return total


def global_grad(stream: LossStream, t: int, x: np.ndarray) -> np.ndarray:
    """Gradient of the summed global loss, fixed node order."""
    g = np.zeros(stream.d)
    for i in range(stream.n):
        g = g + stream.grad(i, t, x)
    return g


def global_minimizer(
    stream: LossStream,
    t: int,
    feasible: FeasibleSet,
    tol: float = 1e-10,
    warm_start: np.ndarray | None = None,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Per-round global minimizer over the feasible set.

    Quadratic streams use the closed form; data streams run projected
    gradient with step 1/(n*beta) until successive iterates move less
    than tol, warm-started from the previous round's solution.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    closed = stream.closed_form_minimizer(t, feasible)
    if closed is not None:
        return closed
    step = 1.0 / (stream.n * stream.constants.beta)
    x = project(feasible, warm_start) if warm_start is not None else feasible.center()
    for _ in range(max_iter):
        xn = project(feasible, x - step * global_grad(stream, t, x))
        if np.linalg.norm(xn - x) < tol:
            return xn
        x = xn
    resid = float(np.linalg.norm(project(feasible, x - step * global_grad(stream, t, x)) - x))
    raise RuntimeError(
        f"minimizer oracle did not converge in {max_iter} iterations (residual {resid:.3e})"
    )
