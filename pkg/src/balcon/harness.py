"""Mini-batch gradient descent on free embeddings, prototypes and classifier weights."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .embedding import PrototypeSet, RawConfiguration, normalize, normalize_rows
from .errors import DivergedError, InvalidSpecError
from .grads import VARIANTS, combined_gradient, contrastive_gradient
from .longtail import Batch, LongTailSpec, class_counts, init_embeddings, make_rng, sample_batch
from .losses import ClassifierWeights, LossParams, anchor_losses, combined_loss
from .simplex import SimplexReport, measure

DIVERGENCE_LIMIT = 1e6
SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    loss_variant: str = "bcl"
    steps: int = 5000
    batch_size: int = 64
    lr: float = 0.5
    lr_schedule: str = "constant"
    tau: float = 1.0
    lam: float = 2.0
    mu: float = 0.6
    seed: int = 0
    measure_every: int = 100
    momentum: float = 0.0

    def __post_init__(self):
        if self.loss_variant not in VARIANTS:
            raise InvalidSpecError(f"loss_variant must be one of {VARIANTS}, got {self.loss_variant!r}")
        if self.steps < 0:
            raise InvalidSpecError("steps must be >= 0")
        if self.batch_size < 2:
            raise InvalidSpecError("batch_size must be >= 2")
        if not self.lr > 0:
            raise InvalidSpecError(f"lr must be > 0, got {self.lr}")
        if self.lr_schedule not in SCHEDULES:
            raise InvalidSpecError(f"lr_schedule must be one of {SCHEDULES}")
        if self.measure_every < 1:
            raise InvalidSpecError("measure_every must be >= 1")
        if not 0 <= self.momentum < 1:
            raise InvalidSpecError("momentum must lie in [0, 1)")
        LossParams(self.tau, self.lam, self.mu)

    @property
    def loss_params(self) -> LossParams:
        return LossParams(self.tau, self.lam, self.mu)

    def learning_rate(self, step: int) -> float:
        if self.lr_schedule == "cosine" and self.steps > 0:
            return 0.5 * self.lr * (1.0 + math.cos(math.pi * step / self.steps))
        return self.lr


@dataclass(frozen=True)
class Measurement:
    step: int
    loss: float
    bound_slack: float
    report: SimplexReport


@dataclass(eq=False)
class TrainTrace:
    measurements: list[Measurement]
    final: RawConfiguration
    prototypes: PrototypeSet
    classifier: ClassifierWeights | None = None
    batch_losses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def last(self) -> Measurement:
        return self.measurements[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("step", "loss", "slack") + SimplexReport.columns())
        for m in self.measurements:
            writer.writerow([m.step, fmt(m.loss), fmt(m.bound_slack)] + [fmt(v) for v in m.report.as_tuple()])
        return buf.getvalue()


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def dataset_loss_and_slack(raw: RawConfiguration, proto_raw, classifier, cfg: TrainConfig):
    """Mean loss over the whole dataset as one batch, and the matching bound slack.

    Slack is per anchor: BCL-family runs compare against the closed-form
    collapsed-simplex value, SCL and L1 against their batch-wise bounds.
    """
    z = normalize(raw)
    full = Batch.full(raw.labels)
    protos = PrototypeSet.from_raw(proto_raw)
    v = cfg.loss_variant
    N = raw.N
    if v == "combined":
        bd = combined_loss(z, full, protos, classifier, cfg.loss_params)
        slack = bd.contrastive - bounds.theorem3_bound(raw.K, 1, cfg.tau) if raw.K > 1 else math.nan
        return bd.total, slack
    loss = float(anchor_losses(z, full, v, cfg.tau, protos).sum() / N)
    if v == "bcl" and raw.K > 1:
        slack = loss - bounds.theorem3_bound(raw.K, 1, cfg.tau)
    elif v == "scl":
        slack = sum(bounds.theorem1_bound(z, full, y, cfg.tau).slack for y in sorted(full.classes_present)) / N
    elif v == "l1" and len(full.classes_present) > 1:
        slack = sum(bounds.theorem2_bound(z, full, y, cfg.tau).slack for y in sorted(full.classes_present)) / N
    else:
        slack = math.nan
    return loss, slack


def _measure(step, w, labels, K, P, W, priors, cfg):
    raw = RawConfiguration(w, labels, K)
    classifier = ClassifierWeights(W, priors) if W is not None else None
    loss, slack = dataset_loss_and_slack(raw, P, classifier, cfg)
    return Measurement(step, loss, slack, measure(normalize(raw)))


def train(data: RawConfiguration, proto: PrototypeSet, classifier: ClassifierWeights | None,
          cfg: TrainConfig) -> TrainTrace:
    """Run ``cfg.steps`` SGD updates; deterministic given ``cfg.seed``.

    Batch losses are mean-reduced over anchors. Raises ``DivergedError`` (with
    the trace up to the last good state) when a loss turns non-finite or
    exceeds ``DIVERGENCE_LIMIT``.
    """
    if cfg.batch_size > data.N:
        raise InvalidSpecError(f"batch_size={cfg.batch_size} exceeds dataset size {data.N}")
    if proto.c.shape != (data.K, data.h):
        raise InvalidSpecError("prototypes must be K x h")
    if cfg.loss_variant == "combined" and classifier is None:
        raise InvalidSpecError("the combined variant needs classifier weights")
    labels, K = data.labels, data.K
    w = np.array(data.w)
    P = np.array(proto.c)
    W = np.array(classifier.W) if classifier is not None else None
    priors = classifier.priors if classifier is not None else None
    vel_w = np.zeros_like(w)
    vel_P = np.zeros_like(P)
    vel_W = np.zeros_like(W) if W is not None else None

    measurements = [_measure(0, w, labels, K, P, W, priors, cfg)]
    batch_losses = np.empty(cfg.steps)

    def snapshot(n_done):
        return TrainTrace(
            measurements=list(measurements),
            final=RawConfiguration(w, labels, K),
            prototypes=PrototypeSet.from_raw(P),
            classifier=ClassifierWeights(W, priors) if W is not None else None,
            batch_losses=batch_losses[:n_done].copy(),
        )

    for step in range(cfg.steps):
        batch = sample_batch(labels, cfg.batch_size, make_rng(cfg.seed, step))
        raw = RawConfiguration(w, labels, K)
        if cfg.loss_variant == "combined":
            g = combined_gradient(raw, batch, P, ClassifierWeights(W, priors), cfg.loss_params)
            loss, dw, dP, dW = g.loss, g.dw, g.dproto, g.dW
        else:
            g = contrastive_gradient(raw, batch, cfg.loss_variant, cfg.tau, P)
            n = len(batch)
            loss, dw = g.loss / n, g.dw / n
            dP = g.dproto / n if g.dproto is not None else None
            dW = None
        if not np.isfinite(loss) or abs(loss) > DIVERGENCE_LIMIT:
            raise DivergedError(f"loss {loss!r} at step {step}", snapshot(step))
        batch_losses[step] = loss
        lr = cfg.learning_rate(step)
        vel_w = cfg.momentum * vel_w + dw
        w = w - lr * vel_w
        if dP is not None:
            vel_P = cfg.momentum * vel_P + dP
            P = P - lr * vel_P
        if dW is not None:
            vel_W = cfg.momentum * vel_W + dW
            W = W - lr * vel_W
        done = step + 1
        if done % cfg.measure_every == 0 or done == cfg.steps:
            m = _measure(done, w, labels, K, P, W, priors, cfg)
            if not np.isfinite(m.loss):
                raise DivergedError(f"dataset loss {m.loss!r} at step {done}", snapshot(done))
            measurements.append(m)
    return snapshot(cfg.steps)


def smoothed_is_nonincreasing(values, window: int = 50, rtol: float = 1e-3) -> bool:
    """Moving average over ``window`` entries never rises by more than ``rtol``
    times its starting value; the slack absorbs SGD noise at the plateau."""
    values = np.asarray(values, dtype=float)
    if values.size < window + 1:
        window = max(values.size, 1)
    smooth = np.convolve(values, np.ones(window) / window, mode="valid")
    return bool(np.all(np.diff(smooth) <= rtol * abs(smooth[0])))


@dataclass(frozen=True)
class Problem:
    data: RawConfiguration
    prototypes: PrototypeSet
    classifier: ClassifierWeights
    counts: tuple


def make_problem(spec: LongTailSpec, h: int, seed: int) -> Problem:
    """Embeddings, prototypes and classifier drawn from independent seeded streams."""
    counts = class_counts(spec)
    data = init_embeddings(counts, h, seed)
    rng = np.random.default_rng([int(seed), 1])
    protos = PrototypeSet(normalize_rows(rng.standard_normal((spec.K, h))))
    W = 0.1 * rng.standard_normal((spec.K, h))
    return Problem(data, protos, ClassifierWeights.from_counts(W, counts), tuple(counts))


@dataclass(eq=False)
class GeometryComparison:
    first: TrainTrace
    second: TrainTrace
    first_report: SimplexReport
    second_report: SimplexReport

    @property
    def spread_ratio(self) -> float:
        a = self.first_report.gram_offdiag_spread
        b = self.second_report.gram_offdiag_spread
        return a / b if b > 0 else math.inf

    def summary(self, names=("scl", "bcl")) -> dict:
        return {
            "variants": list(names),
            "spread": {names[0]: self.first_report.gram_offdiag_spread,
                       names[1]: self.second_report.gram_offdiag_spread},
            "spread_ratio": self.spread_ratio,
            "final": {names[0]: self.first_report.__dict__, names[1]: self.second_report.__dict__},
        }


def compare_geometries(cfg_scl: TrainConfig, cfg_bcl: TrainConfig, spec: LongTailSpec, h: int,
                       data_seed: int | None = None) -> GeometryComparison:
    """Train both arms from the same initial state; ratio is spread(first)/spread(second)."""
    seed = cfg_scl.seed if data_seed is None else data_seed
    prob = make_problem(spec, h, seed)
    a = train(prob.data, prob.prototypes, prob.classifier, cfg_scl)
    b = train(prob.data, prob.prototypes, prob.classifier, cfg_bcl)
    return GeometryComparison(a, b, a.last.report, b.last.report)
