"""Time-varying communication topologies and consensus averaging.

Builds doubly stochastic weight matrices from undirected graphs, schedules
them over rounds (round-robin for pools), computes the second singular
value that governs mixing speed, and runs multi-step consensus averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WeightMatrix",
    "TopologySchedule",
    "build_weight_matrix",
    "generate_topology",
    "second_singular_value",
    "consensus_rounds",
    "consensus_average",
    "mixing_deviation",
]

_STOCHASTIC_TOL = 1e-12
_RGG_RETRIES = 50


def second_singular_value(entries: np.ndarray) -> float:
    """Second largest singular value of a square matrix via dense SVD.

    A 1x1 matrix has no second mode; averaging is already exact, so 0.0 is
    returned for that degenerate network.
    """
    W = np.asarray(entries, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"matrix must be square, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("non-finite entries")
    if W.shape[0] == 1:
        return 0.0
    s = np.linalg.svd(W, compute_uv=False)
    return float(s[1])


@dataclass(frozen=True)
class WeightMatrix:
    """Doubly stochastic mixing matrix with its second singular value cached.

    Immutable after construction; validation happens once here and every
    consumer can rely on the invariants (nonnegative entries, row and column
    sums equal to 1 within 1e-12).
    """

    entries: np.ndarray
    sigma2: float = field(default=-1.0)

    def __post_init__(self) -> None:
        W = np.array(self.entries, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValueError("non-finite entries")
        if np.any(W < 0):
            raise ValueError("weight matrix has negative entries")
        rows = W.sum(axis=1)
        cols = W.sum(axis=0)
        if np.max(np.abs(rows - 1.0)) > _STOCHASTIC_TOL:
            raise ValueError("rows do not sum to 1")
        if np.max(np.abs(cols - 1.0)) > _STOCHASTIC_TOL:
            raise ValueError("columns do not sum to 1")
        W.setflags(write=False)
        object.__setattr__(self, "entries", W)
        object.__setattr__(self, "sigma2", second_singular_value(W))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class TopologySchedule:
    """Ordered pool of weight matrices cycled round-robin over rounds."""

    pool: tuple[WeightMatrix, ...]

    def __post_init__(self) -> None:
        if not self.pool:
            raise ValueError("empty topology pool")
        n = self.pool[0].n
        if any(W.n != n for W in self.pool):
            raise ValueError("pool matrices must share the node count")

    @property
    def n(self) -> int:
        return self.pool[0].n

    def matrix_for(self, t: int) -> WeightMatrix:
        """Weight matrix used at round t (1-based); round-robin over the pool."""
        if t < 1:
            raise ValueError(f"round index must be >= 1, got {t}")
        return self.pool[(t - 1) % len(self.pool)]


def _check_adjacency(adjacency: np.ndarray) -> np.ndarray:
    A = np.asarray(adjacency)
    A = A.astype(bool)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(A)):
        raise ValueError("adjacency must have zero diagonal")
    if not _is_connected(A):
        raise ValueError("graph not connected")
    return A


def _is_connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    if n == 1:
        return True
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(A[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def build_weight_matrix(
    adjacency: np.ndarray, scheme: str = "metropolis", alpha: float | None = None
) -> WeightMatrix:
    """Symmetric doubly stochastic weights on a connected undirected graph.

    ``metropolis`` assigns 1/(1+max(deg_i, deg_j)) to each edge and puts the
    remainder on the diagonal, which keeps the diagonal strictly positive and
    therefore sigma2 < 1 on every connected graph. ``lazy_uniform`` blends
    alpha * I + (1-alpha) * metropolis so the diagonal is at least alpha.
    """
    A = _check_adjacency(adjacency)
    n = A.shape[0]
    deg = A.sum(axis=1)
    W = np.zeros((n, n))
    for i in range(n):
        for j in np.flatnonzero(A[i]):
            W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, i] = 1.0 - W[i].sum()
    if scheme == "metropolis":
        return WeightMatrix(W)
    if scheme == "lazy_uniform":
        if alpha is None or not (0.0 < alpha < 1.0):
            raise ValueError(f"lazy_uniform alpha must be in (0, 1), got {alpha}")
        return WeightMatrix(alpha * np.eye(n) + (1.0 - alpha) * W)
    raise ValueError(f"unknown weight scheme '{scheme}'")


def _complete_adjacency(n: int) -> np.ndarray:
    A = np.ones((n, n), dtype=bool)
    np.fill_diagonal(A, False)
    return A


def _cycle_adjacency(n: int) -> np.ndarray:
    A = np.zeros((n, n), dtype=bool)
    for i in range(n):
        A[i, (i + 1) % n] = True
        A[(i + 1) % n, i] = True
    np.fill_diagonal(A, False)
    return A


def _grid_adjacency(n: int, degree: int) -> np.ndarray:
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError(f"grid topology requires a square node count, got {n}")
    if degree < 4 or degree % 4 != 0:
        raise ValueError(f"grid degree must be a positive multiple of 4, got {degree}")
    reach = degree // 4
    A = np.zeros((n, n), dtype=bool)
    for r in range(side):
        for c in range(side):
            i = r * side + c
            for k in range(1, reach + 1):
                # axis-aligned neighbors only; boundary nodes clip
                if c + k < side:
                    A[i, i + k] = A[i + k, i] = True
                if r + k < side:
                    A[i, i + k * side] = A[i + k * side, i] = True
    return A


def _rgg_adjacency(n: int, eps: float, rng: np.random.Generator) -> np.ndarray:
    if eps <= 0:
        raise ValueError(f"random geometric eps must be positive, got {eps}")
    if n == 1:
        return np.zeros((1, 1), dtype=bool)
    radius = math.sqrt(math.log(n) ** (1.0 + eps) / n) if n > 1 else 1.0
    for _ in range(_RGG_RETRIES):
        pts = rng.random((n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        A = dist < radius
        np.fill_diagonal(A, False)
        if _is_connected(A):
            return A
    raise ValueError(
        f"random geometric graph not connected after {_RGG_RETRIES} placements "
        f"(radius {radius:.6g}, n={n})"
    )


def _random_connected_adjacency(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random spanning tree plus Bernoulli extra edges; connected by construction."""
    A = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    for k in range(1, n):
        j = order[int(rng.integers(0, k))]
        i = order[k]
        A[i, j] = A[j, i] = True
    extra = rng.random((n, n)) < 0.25
    extra = np.triu(extra, 1)
    A |= extra | extra.T
    np.fill_diagonal(A, False)
    return A


def generate_topology(
    spec: str, n: int, seed: int, lazy_alpha: float = 0.0
) -> TopologySchedule:
    """Build a topology schedule from a spec string.

    Spec strings: ``complete``, ``cycle``, ``grid:<d>``, ``rgg:<eps>``,
    ``pool:<P>``. All but ``pool`` produce a single-matrix schedule.
    Deterministic given (spec, n, seed). When ``lazy_alpha`` > 0 the lazy
    uniform weights are used instead of plain Metropolis.
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    scheme = "lazy_uniform" if lazy_alpha > 0 else "metropolis"
    alpha = lazy_alpha if lazy_alpha > 0 else None

    def build(A: np.ndarray) -> WeightMatrix:
        return build_weight_matrix(A, scheme=scheme, alpha=alpha)

    kind, _, arg = spec.partition(":")
    if kind == "complete":
        return TopologySchedule((build(_complete_adjacency(n)),))
    if kind == "cycle":
        return TopologySchedule((build(_cycle_adjacency(n)),))
    if kind == "grid":
        degree = int(arg) if arg else 4
        return TopologySchedule((build(_grid_adjacency(n, degree)),))
    if kind == "rgg":
        eps = float(arg) if arg else 1.0
        return TopologySchedule((build(_rgg_adjacency(n, eps, rng)),))
    if kind == "pool":
        size = int(arg) if arg else 3
        if size < 1:
            raise ValueError(f"pool size must be >= 1, got {size}")
        if n == 1:
            return TopologySchedule(tuple(build(np.zeros((1, 1), bool)) for _ in range(size)))
        pool: list[WeightMatrix] = []
        seen: list[np.ndarray] = []
        attempts = 0
        while len(pool) < size:
            attempts += 1
            if attempts > 100 * size:
                raise ValueError(f"could not generate {size} distinct pool graphs")
            A = _random_connected_adjacency(n, rng)
            if any(np.array_equal(A, B) for B in seen):
                continue
            seen.append(A)
            pool.append(build(A))
        return TopologySchedule(tuple(pool))
    raise ValueError(f"unknown topology spec '{spec}'")


def consensus_rounds(t: int, sigma2: float) -> int:
    """Number of consensus iterations at round t for a given mixing rate.

    ceil(-2 log t / log sigma2), clamped to at least one exchange per round
    (the raw formula yields 0 at t = 1). sigma2 = 0 averages exactly in one
    step; sigma2 >= 1 never mixes and is rejected.
    """
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    if sigma2 < 0:
        raise ValueError(f"sigma2 must be nonnegative, got {sigma2}")
    if sigma2 >= 1.0:
        raise ValueError(f"graph does not mix (sigma2 = {sigma2} >= 1)")
    if sigma2 == 0.0:
        return 1
    ratio = -2.0 * math.log(t) / math.log(sigma2)
    # round before ceil so exact-integer ratios (e.g. t=8, sigma2=0.5 -> 6)
    # are immune to last-bit float noise
    return max(1, math.ceil(round(ratio, 9)))


def consensus_average(
    W: WeightMatrix, K: int, values: list[np.ndarray]
) -> list[np.ndarray]:
    """Apply K successive averaging steps with W to per-node vectors.

    Output i equals sum_j (W^K)_ij values_j, computed as K matrix
    applications in fixed node order so runs are bit-reproducible.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if len(values) != W.n:
        raise ValueError(f"expected {W.n} vectors, got {len(values)}")
    X = np.array([np.asarray(v, dtype=float) for v in values])
    if X.ndim != 2:
        raise ValueError("all vectors must share the same dimension")
    for _ in range(K):
        X = W.entries @ X
    return [X[i].copy() for i in range(W.n)]


def mixing_deviation(W: WeightMatrix, K: int) -> float:
    """Worst-row l1 distance of (W^K) from the uniform averaging matrix."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    P = np.eye(W.n)
    for _ in range(K):
        P = P @ W.entries
    return float(np.max(np.abs(P - 1.0 / W.n).sum(axis=1)))
