"""Shared helpers: independent graph generation and connectivity checks.

Oracles here deliberately avoid the package's own code paths (BFS instead of
the package connectivity check, eigvalsh instead of svd, bisection simplex
projection instead of the sort-based one) so the tests cross-check rather
than mirror the implementation.
"""

from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def bfs_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 1:
        return True
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in range(n):
            if adj[i, j] and j not in seen:
                seen.add(j)
                frontier.append(j)
    return len(seen) == n


def random_connected_adjacency(n: int, rng: np.random.Generator, p: float = 0.4) -> np.ndarray:
    """Erdos-Renyi retried until connected."""
    for _ in range(200):
        upper = rng.random((n, n)) < p
        adj = np.triu(upper, 1)
        adj = adj | adj.T
        if bfs_connected(adj):
            return adj
    raise AssertionError(f"could not sample a connected graph with n={n}, p={p}")


def sigma2_oracle(W: np.ndarray) -> float:
    """Second largest singular value via the eigenvalues of W^T W."""
    evals = np.linalg.eigvalsh(W.T @ W)
    svals = np.sqrt(np.clip(evals, 0.0, None))[::-1]
    return float(svals[1])


def project_lower_bounded_simplex(v: np.ndarray, eps: float) -> np.ndarray:
    """Euclidean projection onto {x >= eps, sum x = 1} by bisection on the shift."""
    lo = float(v.min() - 2.0)
    hi = float(v.max())
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        total = np.maximum(v - tau, eps).sum()
        if total > 1.0:
            lo = tau
        else:
            hi = tau
    return np.maximum(v - 0.5 * (lo + hi), eps)


@pytest.fixture(scope="session")
def fixture_dataset_path() -> Path:
    return FIXTURES / "logistic200.libsvm"
