"""Regular simplex construction and geometry metrics for learned configurations."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .embedding import UnitConfiguration
from .errors import DimensionTooSmallError, EmptyClassError, InvalidSpecError


@dataclass(frozen=True)
class SimplexSpec:
    K: int
    h: int
    rho: float = 1.0

    def __post_init__(self):
        if self.K < 1 or self.h < 1:
            raise InvalidSpecError("K and h must be >= 1")
        if not self.rho > 0:
            raise InvalidSpecError("rho must be > 0")
        if self.K > self.h + 1:
            raise DimensionTooSmallError(f"a {self.K}-vertex simplex needs h >= {self.K - 1}, got h={self.h}")


def random_rotation(h: int, seed) -> np.ndarray:
    """Haar-distributed orthogonal matrix."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((h, h)))
    return q * np.sign(np.diag(r))


def build_regular_simplex(spec: SimplexSpec, seed=0) -> np.ndarray:
    """K x h matrix whose rows are the vertices of a regular simplex of radius rho.

    The centered standard basis of R^K is expressed in an orthonormal basis of
    its (K-1)-dimensional span, padded into R^h and rotated by a seeded random
    orthogonal matrix.
    """
    K, h = spec.K, spec.h
    if K == 1:
        v = np.zeros((1, h))
        v[0, 0] = 1.0
    else:
        centered = np.eye(K) - 1.0 / K
        # left singular vectors with nonzero singular value span the centered rows
        u, _, _ = np.linalg.svd(centered)
        basis = u[:, : K - 1]
        coords = centered @ basis
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        v = np.zeros((K, h))
        v[:, : K - 1] = coords
    out = spec.rho * (v @ random_rotation(h, seed).T)
    return out


@dataclass(frozen=True)
class SimplexReport:
    collapse_residual: float
    norm_residual: float
    centroid_norm: float
    gram_offdiag_mean: float
    gram_offdiag_spread: float

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)


def class_mean_directions(z: UnitConfiguration) -> np.ndarray:
    means = np.zeros((z.K, z.h))
    counts = np.bincount(z.labels, minlength=z.K)
    if np.any(counts == 0):
        raise EmptyClassError(f"classes without instances: {np.flatnonzero(counts == 0).tolist()}")
    np.add.at(means, z.labels, z.z)
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise EmptyClassError("a class mean vanishes; its direction is undefined")
    return means / norms


def measure(z: UnitConfiguration) -> SimplexReport:
    """Deviation of a labelled configuration from a collapsed regular simplex.

    ``collapse_residual`` is an angle in radians; the rest are unitless.
    """
    dirs = class_mean_directions(z)
    ref = dirs[z.labels]
    cos = np.sum(z.z * ref, axis=1)
    # arctan2 stays accurate near zero angle where arccos does not
    sin = np.linalg.norm(z.z - cos[:, None] * ref, axis=1)
    collapse = float(np.max(np.arctan2(sin, cos)))
    norm_res = float(max(
        np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)),
        np.max(np.abs(np.linalg.norm(z.z, axis=1) - 1.0)),
    ))
    centroid = float(np.linalg.norm(dirs.sum(axis=0)) / z.K)
    if z.K > 1:
        gram = dirs @ dirs.T
        off = gram[~np.eye(z.K, dtype=bool)]
        gmean, spread = float(off.mean()), float(off.max() - off.min())
    else:
        gmean, spread = float("nan"), 0.0
    return SimplexReport(collapse, norm_res, centroid, gmean, spread)
