"""Embedding data model: raw parameters, their unit-sphere view, prototypes.

Labels are zero-based (``0 .. K-1``) everywhere in the package. Matrices are
row-per-instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSpecError, ZeroVectorError

ZERO_NORM = 1e-12
UNIT_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_labels(labels: np.ndarray, K: int) -> None:
    if labels.ndim != 1:
        raise InvalidSpecError("labels must be a 1-D sequence")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise InvalidSpecError(f"labels must lie in [0, {K - 1}]")


@dataclass(frozen=True, eq=False)
class RawConfiguration:
    w: np.ndarray
    labels: np.ndarray
    K: int

    def __post_init__(self):
        w = _frozen(self.w)
        labels = _frozen(self.labels, dtype=np.int64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise InvalidSpecError(f"w must be a non-empty N x h matrix, got shape {w.shape}")
        if labels.shape[0] != w.shape[0]:
            raise InvalidSpecError("labels and w disagree on N")
        if self.K < 1:
            raise InvalidSpecError("K must be >= 1")
        _check_labels(labels, self.K)
        norms = np.linalg.norm(w, axis=1)
        if np.any(norms < ZERO_NORM):
            bad = int(np.argmin(norms))
            raise ZeroVectorError(f"row {bad} of w has norm {norms[bad]:.3g} < {ZERO_NORM}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def h(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True, eq=False)
class UnitConfiguration:
    z: np.ndarray
    labels: np.ndarray
    K: int

    def __post_init__(self):
        z = _frozen(self.z)
        labels = _frozen(self.labels, dtype=np.int64)
        if z.ndim != 2 or labels.shape[0] != z.shape[0]:
            raise InvalidSpecError("z must be N x h with one label per row")
        _check_labels(labels, self.K)
        dev = np.abs(np.linalg.norm(z, axis=1) - 1.0)
        if np.any(dev > UNIT_TOL):
            raise InvalidSpecError(f"rows of z must be unit norm (max deviation {dev.max():.3g})")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return self.z.shape[0]

    @property
    def h(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    """One unit-norm class center per class; row ``j`` belongs to class ``j``."""

    c: np.ndarray

    def __post_init__(self):
        c = _frozen(self.c)
        if c.ndim != 2 or c.shape[0] < 1:
            raise InvalidSpecError("prototypes must be a K x h matrix")
        dev = np.abs(np.linalg.norm(c, axis=1) - 1.0)
        if np.any(dev > UNIT_TOL):
            raise InvalidSpecError(f"prototypes must be unit norm (max deviation {dev.max():.3g})")
        object.__setattr__(self, "c", c)

    @property
    def K(self) -> int:
        return self.c.shape[0]

    @classmethod
    def from_raw(cls, raw) -> "PrototypeSet":
        return cls(normalize_rows(raw))


def normalize_rows(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    norms = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(norms < ZERO_NORM):
        raise ZeroVectorError(f"cannot normalize a vector with norm < {ZERO_NORM}")
    return w / norms


def normalize(raw: RawConfiguration) -> UnitConfiguration:
    return UnitConfiguration(normalize_rows(raw.w), raw.labels, raw.K)


def sphere_project_gradient(w_i, z_i, g_z) -> np.ndarray:
    """Chain a gradient w.r.t. ``z = w/|w|`` back to ``w``.

    Returns ``(g_z - (z.g_z) z) / |w|``. Works row-wise on stacked inputs.
    """
    w_i = np.asarray(w_i, dtype=float)
    z_i = np.asarray(z_i, dtype=float)
    g_z = np.asarray(g_z, dtype=float)
    norm = np.linalg.norm(w_i, axis=-1, keepdims=True)
    if np.any(norm < ZERO_NORM):
        raise ZeroVectorError(f"cannot project through a vector with norm < {ZERO_NORM}")
    radial = np.sum(z_i * g_z, axis=-1, keepdims=True)
    return (g_z - radial * z_i) / norm


def config_to_dict(raw: RawConfiguration) -> dict:
    return {
        "h": int(raw.h),
        "K": int(raw.K),
        "labels": [int(y) for y in raw.labels],
        "w": [[float(x) for x in row] for row in raw.w],
    }


def config_from_dict(doc: dict) -> RawConfiguration:
    missing = {"h", "K", "labels", "w"} - set(doc)
    if missing:
        raise InvalidSpecError(f"configuration document missing fields: {sorted(missing)}")
    raw = RawConfiguration(np.asarray(doc["w"], dtype=float), doc["labels"], int(doc["K"]))
    if raw.h != int(doc["h"]):
        raise InvalidSpecError(f"field h={doc['h']} does not match row length {raw.h}")
    return raw


def save_config(raw: RawConfiguration, path) -> None:
    # repr-round-trip floats keep reloads bit-exact
    Path(path).write_text(json.dumps(config_to_dict(raw)) + "\n")


def load_config(path) -> RawConfiguration:
    return config_from_dict(json.loads(Path(path).read_text()))
