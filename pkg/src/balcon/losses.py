"""Contrastive loss family on the unit hypersphere, plus logit-compensated CE.

Every contrastive variant is written per anchor as

    loss_i = -(1/|P_i|) sum_{p in P_i} s_ip  +  log sum_k a_ik exp(s_ik)

with ``s = z_i . key / tau``. The first part is the attraction term and the
second the repulsion term. Variants differ only in the candidate keys, the
positive set ``P_i`` and the weights ``a_ik`` (``log a = -inf`` excludes a key),
which is what the ``_layout`` helpers build. L2 averages inside the exponent
and has its own routine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .embedding import PrototypeSet, UnitConfiguration
from .errors import InvalidSpecError, NoPositiveError
from .longtail import Batch

CONTRASTIVE_VARIANTS = ("scl", "l1", "l2", "l3", "bcl")


@dataclass(frozen=True)
class LossParams:
    tau: float = 0.1
    lam: float = 2.0
    mu: float = 0.6

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidSpecError(f"tau must be > 0, got {self.tau}")
        if not (self.lam >= 0 and self.mu >= 0):
            raise InvalidSpecError("lambda and mu must be >= 0")


@dataclass(frozen=True, eq=False)
class ClassifierWeights:
    W: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        priors = np.array(self.priors, dtype=float)
        if W.ndim != 2 or priors.shape != (W.shape[0],):
            raise InvalidSpecError("W must be K x h and priors length K")
        if np.any(priors <= 0) or abs(priors.sum() - 1.0) > 1e-10:
            raise InvalidSpecError("priors must be strictly positive and sum to 1")
        W.setflags(write=False)
        priors.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "priors", priors)

    @classmethod
    def from_counts(cls, W, counts) -> "ClassifierWeights":
        counts = np.asarray(counts, dtype=float)
        return cls(W, counts / counts.sum())


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    total: float
    per_instance: np.ndarray
    attraction: float
    repulsion: float
    lc: float = 0.0
    contrastive: float = 0.0


@dataclass(frozen=True, eq=False)
class ContrastLayout:
    """Candidate keys and per-anchor weights for one batch."""

    keys: np.ndarray      # m x h
    n_batch: int          # first n_batch keys are the batch itself
    logw: np.ndarray      # n x m, -inf where excluded
    pos: np.ndarray       # n x m bool
    valid: np.ndarray     # n bool, anchors with at least one positive

    @property
    def npos(self) -> np.ndarray:
        return self.pos.sum(axis=1)


def batch_view(z: UnitConfiguration, batch: Batch):
    idx = np.asarray(batch.indices)
    return z.z[idx], z.labels[idx]


def _class_sizes(yb, K):
    return np.bincount(yb, minlength=K)


def scl_layout(Zb, yb) -> ContrastLayout:
    n = len(yb)
    same = yb[:, None] == yb[None, :]
    off = ~np.eye(n, dtype=bool)
    logw = np.where(off, 0.0, -np.inf)
    pos = same & off
    return ContrastLayout(Zb, n, logw, pos, pos.any(axis=1))


def l1_layout(Zb, yb) -> ContrastLayout:
    n = len(yb)
    sizes = np.bincount(yb)
    same = yb[:, None] == yb[None, :]
    off = ~np.eye(n, dtype=bool)
    div = sizes[yb][None, :] - same.astype(int)  # own class loses the anchor
    with np.errstate(divide="ignore"):
        logw = np.where(off, -np.log(np.maximum(div, 1)), -np.inf)
    pos = same & off
    return ContrastLayout(Zb, n, logw, pos, pos.any(axis=1))


def bcl_class_divisors(sizes: np.ndarray, y: int) -> np.ndarray:
    """Divisor per class in the BCL denominator for an anchor of class ``y``.

    Class ``j`` contributes ``|B_j|`` batch members plus its prototype, so the
    divisor is ``|B_j| + 1``; the anchor's own class loses the anchor itself and
    keeps ``|B_y|``.
    """
    div = sizes + 1
    div[y] -= 1
    return div


def bcl_layout(Zb, yb, C) -> ContrastLayout:
    n = len(yb)
    K = C.shape[0]
    sizes = _class_sizes(yb, K)
    keys = np.vstack([Zb, C])
    key_labels = np.concatenate([yb, np.arange(K)])
    div = np.stack([bcl_class_divisors(sizes, y) for y in yb]) if n else np.zeros((0, K), int)
    logw = -np.log(np.take_along_axis(div, np.broadcast_to(key_labels, (n, n + K)), axis=1).astype(float))
    logw[np.arange(n), np.arange(n)] = -np.inf
    pos = yb[:, None] == key_labels[None, :]
    pos[np.arange(n), np.arange(n)] = False
    return ContrastLayout(keys, n, logw, pos, np.ones(n, dtype=bool))


def l3_layout(Zb, yb, C) -> ContrastLayout:
    n = len(yb)
    K = C.shape[0]
    logw = np.zeros((n, K))
    pos = yb[:, None] == np.arange(K)[None, :]
    return ContrastLayout(C, 0, logw, pos, np.ones(n, dtype=bool))


def contrast_terms(Zb, layout: ContrastLayout, tau: float):
    """Per-anchor (attraction, repulsion); zeros for anchors without positives."""
    s = Zb @ layout.keys.T / tau
    npos = np.maximum(layout.npos, 1)
    att = -np.where(layout.pos, s, 0.0).sum(axis=1) / npos
    rep = logsumexp(s + layout.logw, axis=1)
    att = np.where(layout.valid, att, 0.0)
    rep = np.where(layout.valid, rep, 0.0)
    return att, rep


def l2_terms(Zb, yb, tau: float):
    """L2: class averaging inside the exponent, own class without the anchor."""
    n = len(yb)
    classes = np.unique(yb)
    s = Zb @ Zb.T / tau
    off = ~np.eye(n, dtype=bool)
    same = yb[:, None] == yb[None, :]
    pos = same & off
    valid = pos.any(axis=1)
    member = (yb[None, :] == classes[:, None])  # q x n
    # class-mean similarity per anchor, anchor excluded from its own class
    counts = member.sum(axis=1)[None, :] - (yb[:, None] == classes[None, :])
    sums = np.where(off, s, 0.0) @ member.T
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), -np.inf)
    att = -np.where(pos, s, 0.0).sum(axis=1) / np.maximum(pos.sum(axis=1), 1)
    rep = logsumexp(means, axis=1)
    return np.where(valid, att, 0.0), np.where(valid, rep, 0.0), valid


def _layout_for(variant, Zb, yb, prototypes):
    if variant == "scl":
        return scl_layout(Zb, yb)
    if variant == "l1":
        return l1_layout(Zb, yb)
    if prototypes is None:
        raise InvalidSpecError(f"variant {variant!r} needs prototypes")
    C = prototypes.c if isinstance(prototypes, PrototypeSet) else np.asarray(prototypes)
    if variant == "bcl":
        return bcl_layout(Zb, yb, C)
    if variant == "l3":
        return l3_layout(Zb, yb, C)
    raise InvalidSpecError(f"unknown contrastive variant {variant!r}")


def anchor_terms(z: UnitConfiguration, batch: Batch, variant: str, tau: float, prototypes=None):
    """Attraction, repulsion and validity for every batch position."""
    Zb, yb = batch_view(z, batch)
    if variant == "l2":
        return l2_terms(Zb, yb, tau)
    layout = _layout_for(variant, Zb, yb, prototypes)
    att, rep = contrast_terms(Zb, layout, tau)
    return att, rep, layout.valid


def anchor_losses(z, batch, variant, tau, prototypes=None) -> np.ndarray:
    att, rep, _ = anchor_terms(z, batch, variant, tau, prototypes)
    return att + rep


def _position(batch: Batch, i: int) -> int:
    hits = np.flatnonzero(np.asarray(batch.indices) == i)
    if hits.size == 0:
        raise InvalidSpecError(f"anchor {i} is not in the batch")
    return int(hits[0])


def _single_anchor(z, batch, i, variant, tau, prototypes=None):
    pos = _position(batch, i)
    att, rep, valid = anchor_terms(z, batch, variant, tau, prototypes)
    if not valid[pos]:
        raise NoPositiveError(f"anchor {i} has no positive in the batch")
    return float(att[pos] + rep[pos])


def scl_instance_loss(z: UnitConfiguration, batch: Batch, i: int, tau: float) -> float:
    return _single_anchor(z, batch, i, "scl", tau)


def averaged_loss_L1(z: UnitConfiguration, batch: Batch, i: int, tau: float) -> float:
    return _single_anchor(z, batch, i, "l1", tau)


def averaged_loss_L2(z: UnitConfiguration, batch: Batch, i: int, tau: float) -> float:
    return _single_anchor(z, batch, i, "l2", tau)


def bcl_instance_loss(z: UnitConfiguration, batch: Batch, i: int, prototypes, tau: float) -> float:
    return _single_anchor(z, batch, i, "bcl", tau, prototypes)


def prototype_loss_L3(z_i, label: int, prototypes, tau: float) -> float:
    C = prototypes.c if isinstance(prototypes, PrototypeSet) else np.asarray(prototypes)
    logits = C @ np.asarray(z_i, dtype=float) / tau
    return float(logsumexp(logits) - logits[label])


def class_batch_loss(z, batch: Batch, y: int, tau: float, variant: str = "scl", prototypes=None) -> float:
    """Sum of anchor losses over class ``y``; 0 when the class has at most one member."""
    if batch.size_of(y) <= 1:
        return 0.0
    losses = anchor_losses(z, batch, variant, tau, prototypes)
    _, yb = batch_view(z, batch)
    return float(losses[yb == y].sum())


def batch_loss(z, batch: Batch, tau: float, variant: str = "scl", prototypes=None) -> float:
    """Whole-batch loss as the class-by-class sum of ``class_batch_loss``."""
    losses = anchor_losses(z, batch, variant, tau, prototypes)
    _, yb = batch_view(z, batch)
    total = 0.0
    for y in sorted(batch.classes_present):
        if batch.size_of(y) > 1:
            total += float(losses[yb == y].sum())
    return total


def lc_losses(logits, labels, priors, alpha=1.0) -> np.ndarray:
    """Row-wise logit-compensated cross-entropy, offsets ``log priors``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.atleast_1d(np.asarray(labels))
    adj = logits + np.log(np.asarray(priors, dtype=float))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (adj.shape[1],))
    ce = logsumexp(adj, axis=1) - adj[np.arange(len(labels)), labels]
    return alpha[labels] * ce


def lc_cross_entropy(logits, label: int, priors, alpha=1.0) -> float:
    return float(lc_losses(logits, [label], priors, alpha)[0])


def combined_loss(z: UnitConfiguration, batch: Batch, prototypes, classifier: ClassifierWeights,
                  params: LossParams) -> LossBreakdown:
    """``lam * mean(LC) + mu * mean(BCL)`` over the batch, logits ``W z``."""
    Zb, yb = batch_view(z, batch)
    n = len(yb)
    lc = lc_losses(Zb @ classifier.W.T, yb, classifier.priors)
    att, rep, _ = anchor_terms(z, batch, "bcl", params.tau, prototypes)
    bcl = att + rep
    per_instance = (params.lam * lc + params.mu * bcl) / n
    total = params.lam * lc.mean() + params.mu * bcl.mean()
    return LossBreakdown(
        total=float(total),
        per_instance=per_instance,
        attraction=float(params.mu * att.mean()),
        repulsion=float(params.mu * rep.mean()),
        lc=float(lc.mean()),
        contrastive=float(bcl.mean()),
    )


def contrastive_breakdown(z, batch, variant, tau, prototypes=None) -> LossBreakdown:
    """Mean-reduced breakdown for a single contrastive variant."""
    att, rep, _ = anchor_terms(z, batch, variant, tau, prototypes)
    n = len(batch)
    per = (att + rep) / n
    return LossBreakdown(
        total=float(per.sum()),
        per_instance=per,
        attraction=float(att.sum() / n),
        repulsion=float(rep.sum() / n),
        contrastive=float(per.sum()),
    )
