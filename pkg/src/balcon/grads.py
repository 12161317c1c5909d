"""Hand-derived gradients of the contrastive losses and a finite-difference oracle.

Gradients are taken of the *summed* batch loss (sum over anchors, singleton
anchors contribute 0) with respect to the raw parameters ``w`` (``z = w/|w|``)
and, for prototype variants, the raw prototype parameters. Every vector
appears in the loss both as an anchor and as a key for other anchors, so the
similarity-matrix gradient is chained to both sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .embedding import PrototypeSet, RawConfiguration, normalize_rows, sphere_project_gradient
from .errors import InvalidSpecError, NoPositiveError, NonFiniteError
from .longtail import Batch
from .losses import (
    ClassifierWeights,
    LossParams,
    bcl_layout,
    contrast_terms,
    l1_layout,
    l2_terms,
    l3_layout,
    lc_losses,
    scl_layout,
)

VARIANTS = ("scl", "l1", "l2", "l3", "bcl", "combined")


@dataclass(frozen=True, eq=False)
class GradientField:
    loss: float
    dw: np.ndarray          # N x h, gradient w.r.t. raw parameters
    dz: np.ndarray          # N x h, gradient w.r.t. unit vectors (all roles)
    dz_anchor: np.ndarray   # N x h, anchor-role part only
    dproto: np.ndarray | None = None     # K x h, w.r.t. raw prototype parameters
    dproto_z: np.ndarray | None = None   # K x h, w.r.t. unit prototypes
    dW: np.ndarray | None = None         # K x h, classifier weights (combined only)
    anchor_negative_norms: np.ndarray | None = None  # n_batch x K
    per_class_negative_norm: dict | None = None


def _negative_norms(Zb, yb, keys, key_labels, weights, tau, K):
    """Norm of each negative class's projected pull on each anchor.

    Row ``i``, column ``c`` is ``|sum_{k in c} (x_k - (z_i.x_k) z_i) w_ik| / tau``;
    own-class entries are 0.
    """
    n = len(yb)
    out = np.zeros((n, K))
    dots = Zb @ keys.T
    for c in range(K):
        wc = weights * (key_labels == c)[None, :]
        if not wc.any():
            continue
        v = wc @ keys - (wc * dots).sum(axis=1)[:, None] * Zb
        out[:, c] = np.linalg.norm(v, axis=1) / tau
    out[np.arange(n), yb] = 0.0
    return out


def _sim_gradient(Zb, yb, variant, tau, C):
    """Loss, d loss / d(scaled similarity), keys and the softmax weights."""
    n = len(yb)
    if variant == "l2":
        att, rep, valid = l2_terms(Zb, yb, tau)
        s = Zb @ Zb.T / tau
        off = ~np.eye(n, dtype=bool)
        same = yb[:, None] == yb[None, :]
        pos = same & off
        classes = np.unique(yb)
        member = yb[None, :] == classes[:, None]
        counts = member.sum(axis=1)[None, :] - (yb[:, None] == classes[None, :])
        sums = np.where(off, s, 0.0) @ member.T
        means = np.where(counts > 0, sums / np.maximum(counts, 1), -np.inf)
        q = softmax(means, axis=1)
        cls_idx = np.searchsorted(classes, yb)
        # weight each key by its class's softmax share over that class's size
        per_key = q[:, cls_idx] / np.maximum(counts[:, cls_idx], 1)
        weights = np.where(off, per_key, 0.0)
        G = weights - pos / np.maximum(pos.sum(axis=1, keepdims=True), 1)
        G *= valid[:, None]
        return float(np.sum(att + rep)), G, Zb, n, weights * valid[:, None], yb
    if variant == "scl":
        layout = scl_layout(Zb, yb)
    elif variant == "l1":
        layout = l1_layout(Zb, yb)
    elif variant == "bcl":
        layout = bcl_layout(Zb, yb, C)
    elif variant == "l3":
        layout = l3_layout(Zb, yb, C)
    else:
        raise InvalidSpecError(f"unknown contrastive variant {variant!r}")
    att, rep = contrast_terms(Zb, layout, tau)
    s = Zb @ layout.keys.T / tau
    weights = softmax(s + layout.logw, axis=1) * layout.valid[:, None]
    G = weights - layout.pos / np.maximum(layout.npos, 1)[:, None]
    G *= layout.valid[:, None]
    if layout.n_batch:
        key_labels = np.concatenate([yb, np.arange(layout.keys.shape[0] - layout.n_batch)])
    else:
        key_labels = np.arange(layout.keys.shape[0])
    return float(np.sum(att + rep)), G, layout.keys, layout.n_batch, weights, key_labels


def contrastive_gradient(raw: RawConfiguration, batch: Batch, variant: str, tau: float,
                         proto_raw=None) -> GradientField:
    """Gradient of the summed batch loss of one contrastive variant."""
    idx = np.asarray(batch.indices)
    z_all = normalize_rows(raw.w)
    Zb, yb = z_all[idx], raw.labels[idx]
    uses_proto = variant in ("bcl", "l3")
    C = P = None
    if uses_proto:
        if proto_raw is None:
            raise InvalidSpecError(f"variant {variant!r} needs prototypes")
        P = np.asarray(proto_raw, dtype=float)
        C = normalize_rows(P)
    loss, G, keys, n_batch, weights, key_labels = _sim_gradient(Zb, yb, variant, tau, C)
    Gs = G / tau
    dZb_anchor = Gs @ keys
    dZb = dZb_anchor.copy()
    if n_batch:
        dZb += Gs[:, :n_batch].T @ Zb
    dz = np.zeros_like(z_all)
    dz_anchor = np.zeros_like(z_all)
    np.add.at(dz, idx, dZb)
    np.add.at(dz_anchor, idx, dZb_anchor)
    dw = sphere_project_gradient(raw.w, z_all, dz)
    dproto = dproto_z = None
    if uses_proto:
        dproto_z = Gs[:, n_batch:].T @ Zb
        dproto = sphere_project_gradient(P, C, dproto_z)
    norms = _negative_norms(Zb, yb, keys, key_labels, weights, tau, raw.K)
    per_class = {c: float(norms[yb != c, c].sum()) for c in range(raw.K)}
    return GradientField(loss, dw, dz, dz_anchor, dproto, dproto_z, None, norms, per_class)


def scl_gradient(z, raw: RawConfiguration, batch: Batch, tau: float,
                 allow_singletons: bool = False) -> GradientField:
    """SCL gradient; anchors without positives raise unless ``allow_singletons``."""
    if not allow_singletons:
        lonely = [y for y in batch.classes_present if batch.size_of(y) < 2]
        if lonely:
            raise NoPositiveError(f"classes {sorted(lonely)} have a single instance in the batch")
    return contrastive_gradient(raw, batch, "scl", tau)


def bcl_gradient(z, raw: RawConfiguration, batch: Batch, prototypes, tau: float,
                 proto_raw=None) -> GradientField:
    """BCL gradient. ``proto_raw`` defaults to the unit prototypes themselves."""
    if proto_raw is None:
        proto_raw = prototypes.c if isinstance(prototypes, PrototypeSet) else prototypes
    return contrastive_gradient(raw, batch, "bcl", tau, proto_raw)


def lc_gradient(Zb, yb, W, priors, alpha=1.0):
    """Summed LC loss and its gradients w.r.t. the unit embeddings and ``W``."""
    logits = Zb @ W.T
    losses = lc_losses(logits, yb, priors, alpha)
    p = softmax(logits + np.log(priors), axis=1)
    p[np.arange(len(yb)), yb] -= 1.0
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (W.shape[0],))[yb]
    dlogits = p * a[:, None]
    return float(losses.sum()), dlogits @ W, dlogits.T @ Zb


def combined_gradient(raw: RawConfiguration, batch: Batch, proto_raw, classifier: ClassifierWeights,
                      params: LossParams) -> GradientField:
    """Gradient of ``lam * mean(LC) + mu * mean(BCL)`` over the batch."""
    idx = np.asarray(batch.indices)
    n = idx.size
    bcl = contrastive_gradient(raw, batch, "bcl", params.tau, proto_raw)
    z_all = normalize_rows(raw.w)
    lc_sum, dZb_lc, dW = lc_gradient(z_all[idx], raw.labels[idx], classifier.W, classifier.priors)
    dz = params.mu / n * bcl.dz
    np.add.at(dz, idx, params.lam / n * dZb_lc)
    dw = sphere_project_gradient(raw.w, z_all, dz)
    loss = params.lam * lc_sum / n + params.mu * bcl.loss / n
    return GradientField(
        loss=float(loss),
        dw=dw,
        dz=dz,
        dz_anchor=params.mu / n * bcl.dz_anchor,
        dproto=params.mu / n * bcl.dproto,
        dproto_z=params.mu / n * bcl.dproto_z,
        dW=params.lam / n * dW,
        anchor_negative_norms=bcl.anchor_negative_norms,
        per_class_negative_norm=bcl.per_class_negative_norm,
    )


def finite_difference(loss_fn, params, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of a flat parameter vector."""
    x = np.array(params, dtype=float).ravel()
    g = np.empty_like(x)
    for j in range(x.size):
        orig = x[j]
        x[j] = orig + step
        fp = loss_fn(x.copy())
        x[j] = orig - step
        fm = loss_fn(x.copy())
        x[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"loss is not finite around coordinate {j}")
        g[j] = (fp - fm) / (2.0 * step)
    return g


def relative_error(analytic, numeric) -> float:
    a = np.ravel(analytic)
    b = np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)
