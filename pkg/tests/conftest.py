import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from balcon.embedding import PrototypeSet, UnitConfiguration  # noqa: E402
from balcon.longtail import Batch  # noqa: E402
from balcon.simplex import SimplexSpec, build_regular_simplex  # noqa: E402

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(rng, N, K, h, ensure_pairs=False):
    labels = rng.integers(0, K, size=N)
    if ensure_pairs:
        labels[: 2 * K] = np.repeat(np.arange(K), 2)
    w = rng.standard_normal((N, h))
    z = UnitConfiguration(w / np.linalg.norm(w, axis=1, keepdims=True), labels, K)
    c = rng.standard_normal((K, h))
    protos = PrototypeSet(c / np.linalg.norm(c, axis=1, keepdims=True))
    return z, Batch.full(labels), protos


def collapsed_simplex(counts, h=None, seed=0):
    K = len(counts)
    h = h or max(K - 1, 1)
    zeta = build_regular_simplex(SimplexSpec(K, h), seed=seed)
    labels = np.repeat(np.arange(K), counts)
    return UnitConfiguration(zeta[labels], labels, K), PrototypeSet(zeta)
