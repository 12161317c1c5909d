"""Lower bounds of the class-specific batch-wise losses and their slack.

All bounds take ``tau`` (default 1). Other temperatures divide every inner
product by ``tau``; the Jensen argument goes through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .embedding import UnitConfiguration
from .errors import InvalidKError, UndefinedBoundError
from .longtail import Batch
from .losses import anchor_terms, batch_view
from .simplex import measure


@dataclass(frozen=True, eq=False)
class BoundReport:
    bound: float
    loss: float
    slack: float
    attraction: float
    repulsion: float
    per_anchor_S: np.ndarray

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_anchor_S"] = [float(s) for s in self.per_anchor_S]
        return d


def _empty_report() -> BoundReport:
    return BoundReport(0.0, 0.0, 0.0, 0.0, 0.0, np.zeros(0))


def _positive_means(sims, yb, y):
    """Mean similarity of each class-y anchor to its same-class partners."""
    members = np.flatnonzero(yb == y)
    block = sims[np.ix_(members, members)]
    n = members.size
    return members, (block.sum(axis=1) - np.diag(block)) / (n - 1)


def theorem1_bound(z: UnitConfiguration, batch: Batch, y: int, tau: float = 1.0,
                   _loss_shift: float = 0.0) -> BoundReport:
    """SCL bound: sum_i log((|B_y|-1) + |B_y^C| exp(rep_i - att_i))."""
    if batch.size_of(y) <= 1:
        return _empty_report()
    Zb, yb = batch_view(z, batch)
    sims = Zb @ Zb.T / tau
    members, att = _positive_means(sims, yb, y)
    n_pos = members.size - 1
    neg = yb != y
    n_neg = int(neg.sum())
    if n_neg:
        rep = sims[np.ix_(members, np.flatnonzero(neg))].mean(axis=1)
        S = rep - att
        bound = float(np.sum(np.log(n_pos + n_neg * np.exp(S))))
    else:
        rep = np.zeros_like(att)
        S = np.full_like(att, -np.inf)
        bound = float(members.size * math.log(n_pos))
    a, r, _ = anchor_terms(z, batch, "scl", tau)
    loss = float((a + r)[members].sum()) + _loss_shift
    return BoundReport(bound, loss, loss - bound, float(-att.mean()), float(rep.mean()), S)


def theorem2_bound(z: UnitConfiguration, batch: Batch, y: int, tau: float = 1.0,
                   _loss_shift: float = 0.0) -> BoundReport:
    """Class-averaged (L1) bound: sum_i log(1 + (|Y_B|-1) exp(rep_i - att_i))."""
    if batch.size_of(y) <= 1:
        return _empty_report()
    if len(batch.classes_present) < 2:
        raise UndefinedBoundError("the class-averaged bound needs at least two classes in the batch")
    Zb, yb = batch_view(z, batch)
    sims = Zb @ Zb.T / tau
    members, att = _positive_means(sims, yb, y)
    others = sorted(c for c in batch.classes_present if c != y)
    class_means = np.stack([sims[np.ix_(members, np.flatnonzero(yb == q))].mean(axis=1) for q in others])
    rep = class_means.mean(axis=0)
    S = rep - att
    bound = float(np.sum(np.log1p(len(others) * np.exp(S))))
    a, r, _ = anchor_terms(z, batch, "l1", tau)
    loss = float((a + r)[members].sum()) + _loss_shift
    return BoundReport(bound, loss, loss - bound, float(-att.mean()), float(rep.mean()), S)


def theorem3_bound(K: int, dataset_size: int, tau: float = 1.0) -> float:
    """``|D| log(1 + (K-1) exp(-K/((K-1) tau)))``, the collapsed-simplex BCL value."""
    if K < 2:
        raise InvalidKError(f"K must be >= 2, got {K}")
    if dataset_size < 1:
        raise ValueError("dataset_size must be >= 1")
    return dataset_size * math.log1p((K - 1) * math.exp(-K / ((K - 1) * tau)))


def bcl_dataset_loss(z: UnitConfiguration, prototypes, tau: float = 1.0) -> float:
    """BCL summed over every instance, the whole dataset treated as one batch."""
    a, r, _ = anchor_terms(z, Batch.full(z.labels), "bcl", tau, prototypes)
    return float(np.sum(a + r))


def theorem3_report(z: UnitConfiguration, prototypes, tau: float = 1.0) -> BoundReport:
    full = Batch.full(z.labels)
    a, r, _ = anchor_terms(z, full, "bcl", tau, prototypes)
    loss = float(np.sum(a + r))
    bound = theorem3_bound(z.K, z.N, tau)
    return BoundReport(bound, loss, loss - bound, float(a.mean()), float(r.mean()), np.zeros(0))


@dataclass(frozen=True)
class EqualityConditions:
    collapse_residual: float
    norm_residual: float
    centroid_residual: float
    equiangular_residual: float
    tol: float

    @property
    def collapsed(self) -> bool:
        return self.collapse_residual <= self.tol

    @property
    def equal_norm(self) -> bool:
        return self.norm_residual <= self.tol

    @property
    def zero_centroid(self) -> bool:
        return self.centroid_residual <= self.tol

    @property
    def equiangular(self) -> bool:
        return self.equiangular_residual <= self.tol

    @property
    def holds(self) -> bool:
        return self.collapsed and self.equal_norm and self.zero_centroid and self.equiangular

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(collapsed=self.collapsed, equal_norm=self.equal_norm,
                 zero_centroid=self.zero_centroid, equiangular=self.equiangular, holds=self.holds)
        return d


def check_equality_conditions(z: UnitConfiguration, tol: float = 1e-6) -> EqualityConditions:
    """Variability collapse plus regular-simplex class means, each with a residual."""
    rep = measure(z)
    return EqualityConditions(
        collapse_residual=rep.collapse_residual,
        norm_residual=rep.norm_residual,
        centroid_residual=rep.centroid_norm,
        equiangular_residual=rep.gram_offdiag_spread,
        tol=tol,
    )
