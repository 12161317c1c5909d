"""Synthetic long-tailed label distributions and mini-batch sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import RawConfiguration
from .errors import BatchTooLargeError, InvalidSpecError

PROFILES = ("exponential", "step")


@dataclass(frozen=True)
class LongTailSpec:
    K: int
    n_max: int
    beta: float = 1.0
    profile: str = "exponential"

    def __post_init__(self):
        if self.K < 1:
            raise InvalidSpecError("K must be >= 1")
        if self.n_max < 1:
            raise InvalidSpecError("n_max must be >= 1")
        if not self.beta >= 1.0:
            raise InvalidSpecError(f"beta must be >= 1, got {self.beta}")
        if self.profile not in PROFILES:
            raise InvalidSpecError(f"profile must be one of {PROFILES}, got {self.profile!r}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def class_counts(spec: LongTailSpec) -> list[int]:
    """Per-class sample counts, largest class first.

    ``exponential`` decays as ``n_max * beta**(-k/(K-1))``; ``step`` keeps the
    first ceil(K/2) classes at ``n_max`` and the rest at ``n_max/beta``.
    """
    K, n_max, beta = spec.K, spec.n_max, float(spec.beta)
    if K == 1:
        return [n_max]
    if spec.profile == "exponential":
        raw = [n_max * beta ** (-k / (K - 1)) for k in range(K)]
    else:
        n_major = K - K // 2
        raw = [n_max if k < n_major else n_max / beta for k in range(K)]
    counts = [_round_half_up(x) for x in raw]
    if min(counts) < 1:
        raise InvalidSpecError(
            f"n_max={n_max}, beta={beta} rounds the smallest class to 0 samples"
        )
    return counts


def init_embeddings(counts, h: int, seed: int) -> RawConfiguration:
    """Standard-normal raw embeddings, labels assigned in contiguous blocks."""
    counts = [int(c) for c in counts]
    if h < 1:
        raise InvalidSpecError("h must be >= 1")
    if not counts or min(counts) < 1:
        raise InvalidSpecError("every class needs at least one sample")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(counts)), counts)
    w = rng.standard_normal((labels.size, h))
    return RawConfiguration(w, labels, len(counts))


@dataclass(frozen=True, eq=False)
class Batch:
    """Instance ids of a mini-batch plus their per-class partition."""

    indices: np.ndarray
    per_class: dict = field(default_factory=dict)
    classes_present: frozenset = frozenset()

    @classmethod
    def from_labels(cls, indices, labels) -> "Batch":
        indices = np.asarray(indices, dtype=np.int64)
        if np.unique(indices).size != indices.size:
            raise InvalidSpecError("batch indices must be distinct")
        labels = np.asarray(labels)
        ys = labels[indices]
        per_class = {int(y): indices[ys == y] for y in np.unique(ys)}
        indices = indices.copy()
        indices.setflags(write=False)
        return cls(indices, per_class, frozenset(per_class))

    @classmethod
    def full(cls, labels) -> "Batch":
        return cls.from_labels(np.arange(len(labels)), labels)

    def __len__(self):
        return int(self.indices.size)

    def size_of(self, y: int) -> int:
        members = self.per_class.get(int(y))
        return 0 if members is None else int(members.size)


def make_rng(seed: int, step: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for a given (seed, step) pair."""
    return np.random.default_rng([int(seed), int(step)])


def sample_batch(labels, batch_size: int, rng) -> Batch:
    """Uniform sample of distinct instances; ``rng`` is a Generator or an int seed."""
    labels = np.asarray(labels)
    n = labels.size
    if batch_size > n:
        raise BatchTooLargeError(f"batch_size={batch_size} exceeds dataset size {n}")
    if batch_size < 1:
        raise InvalidSpecError("batch_size must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    idx = np.sort(rng.choice(n, size=batch_size, replace=False))
    return Batch.from_labels(idx, labels)
