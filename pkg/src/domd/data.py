"""LIBSVM-format parsing, node sharding, and per-round minibatches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SparseExample",
    "parse_libsvm",
    "serialize_libsvm",
    "densify",
    "partition",
    "batch",
]


@dataclass(frozen=True)
class SparseExample:
    label: float
    features: tuple[tuple[int, float], ...]  # (index >= 1, value), strictly increasing


def parse_libsvm(text: str) -> tuple[list[SparseExample], int]:
    """Parse `label idx:val idx:val ...` lines; returns examples and dimension.

    Dimension is the largest feature index seen. Indices must be strictly
    increasing within a line; malformed tokens report their line number.
    """
    examples: list[SparseExample] = []
    dim = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ValueError(f"malformed label '{tokens[0]}' at line {lineno}") from None
        feats: list[tuple[int, float]] = []
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ValueError(f"malformed token '{tok}' at line {lineno}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ValueError(f"malformed token '{tok}' at line {lineno}") from None
            if idx < 1:
                raise ValueError(f"feature index must be >= 1 at line {lineno}")
            if idx <= prev:
                raise ValueError(f"indices not increasing at line {lineno}")
            if not np.isfinite(val):
                raise ValueError(f"non-finite feature value at line {lineno}")
            feats.append((idx, val))
            prev = idx
        if feats:
            dim = max(dim, feats[-1][0])
        examples.append(SparseExample(label, tuple(feats)))
    return examples, dim


def serialize_libsvm(examples: list[SparseExample]) -> str:
    """Canonical text form; parse(serialize(x)) round-trips exactly."""
    lines = []
    for ex in examples:
        parts = [repr(ex.label)] + [f"{i}:{v!r}" for i, v in ex.features]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def densify(examples: list[SparseExample], dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense (features, labels) arrays for a batch of sparse examples."""
    X = np.zeros((len(examples), dim))
    y = np.zeros(len(examples))
    for k, ex in enumerate(examples):
        y[k] = ex.label
        for i, v in ex.features:
            X[k, i - 1] = v
    return X, y


def partition(
    examples: list[SparseExample],
    n: int,
    policy: str = "contiguous",
    seed: int = 0,
) -> list[list[SparseExample]]:
    """Split examples into n shards whose sizes differ by at most one.

    The seed shuffles the order first; `contiguous` then slices, while
    `round_robin` deals example k to shard k mod n.
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    if len(examples) < n:
        raise ValueError(f"fewer examples ({len(examples)}) than nodes ({n})")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(len(examples))
    shuffled = [examples[i] for i in order]
    if policy == "contiguous":
        base, rem = divmod(len(shuffled), n)
        shards = []
        pos = 0
        for i in range(n):
            size = base + (1 if i < rem else 0)
            shards.append(shuffled[pos : pos + size])
            pos += size
        return shards
    if policy == "round_robin":
        return [shuffled[i::n] for i in range(n)]
    raise ValueError(f"unknown partition policy '{policy}'")


def batch(shard: list[SparseExample], t: int, batch_size: int) -> list[SparseExample]:
    """Round-t minibatch: batch_size examples starting at (t-1)*b mod m, wrapping."""
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    m = len(shard)
    if m == 0:
        raise ValueError("empty shard")
    start = ((t - 1) * batch_size) % m
    return [shard[(start + k) % m] for k in range(batch_size)]
