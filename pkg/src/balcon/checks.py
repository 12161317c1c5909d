"""Monte Carlo verification suites behind ``check-bounds`` and ``check-grads``."""

from __future__ import annotations

import numpy as np

from . import bounds
from .embedding import PrototypeSet, RawConfiguration, UnitConfiguration, normalize, normalize_rows
from .grads import contrastive_gradient, finite_difference, relative_error
from .longtail import Batch, make_rng, sample_batch
from .losses import anchor_losses
from .simplex import SimplexSpec, build_regular_simplex


def random_unit_configuration(rng, N, K, h):
    """Labels uniform over classes, points scattered around random class directions.

    The concentration is drawn per configuration so trials range from near
    collapse (small slack) to fully random.
    """
    labels = rng.integers(0, K, size=N)
    centers = normalize_rows(rng.standard_normal((K, h)))
    kappa = rng.uniform(0.0, 8.0)
    z = normalize_rows(kappa * centers[labels] + rng.standard_normal((N, h)))
    return UnitConfiguration(z, labels, K)


def bound_trial(trial: int, cfg: dict, _loss_shift: float = 0.0) -> dict:
    rng = make_rng(cfg["seed"], trial)
    N = int(rng.integers(cfg["N_range"][0], cfg["N_range"][1] + 1))
    K = int(rng.integers(cfg["K_range"][0], cfg["K_range"][1] + 1))
    h = int(rng.integers(max(K - 1, 1), max(cfg["h_max"], K - 1) + 1))
    z = random_unit_configuration(rng, N, K, h)
    batch = Batch.full(z.labels)
    tol, tau = cfg["tolerance"], cfg["tau"]
    record = {"trial": trial, "N": N, "K": K, "h": h}
    for name, fn in (("theorem1", bounds.theorem1_bound), ("theorem2", bounds.theorem2_bound)):
        slacks = []
        if name == "theorem2" and len(batch.classes_present) < 2:
            record[name] = {"classes": 0, "min_slack": None, "violations": 0}
            continue
        for y in sorted(batch.classes_present):
            if batch.size_of(y) > 1:
                slacks.append(fn(z, batch, y, tau, _loss_shift=_loss_shift).slack)
        record[name] = {
            "classes": len(slacks),
            "min_slack": min(slacks) if slacks else None,
            "violations": sum(s < -tol for s in slacks),
        }
    return record


def equality_cases(cfg: dict) -> list[dict]:
    """Constructed configurations where each bound must be attained."""
    out = []
    tau = cfg["tau"]
    for K in cfg["equality_K"]:
        h = max(K - 1, 1)
        zeta = build_regular_simplex(SimplexSpec(K, h), seed=cfg["seed"])
        # long-tailed counts: equality does not depend on class sizes
        counts = [max(1, round(8 * 4.0 ** (-k / max(K - 1, 1)))) for k in range(K)]
        labels = np.repeat(np.arange(K), counts)
        z = UnitConfiguration(zeta[labels], labels, K)
        rep = bounds.theorem3_report(z, PrototypeSet(zeta), tau)
        rel = abs(rep.slack) / abs(rep.bound)
        out.append({"case": "theorem3_collapsed_simplex", "K": K, "N": int(labels.size),
                    "loss": rep.loss, "bound": rep.bound, "rel_err": rel,
                    "ok": rel <= cfg["equality_rtol"]})

        # equal class sizes give Q1 and Q3 for the class-averaged bound
        labels = np.repeat(np.arange(K), 3)
        z = UnitConfiguration(zeta[labels], labels, K)
        batch = Batch.full(labels)
        slack = max(abs(bounds.theorem2_bound(z, batch, y, tau).slack) for y in range(K))
        out.append({"case": "theorem2_collapsed_balanced", "K": K, "max_abs_slack": slack,
                    "ok": slack <= 1e-9 * max(1.0, K)})

        # one class collapsed, every negative at its antipode gives Q1 and Q2
        u = zeta[0]
        labels = np.array([0] * 4 + [1 + k % (K - 1) for k in range(5)])
        zz = np.where((labels == 0)[:, None], u, -u)
        z = UnitConfiguration(zz, labels, K)
        slack = abs(bounds.theorem1_bound(z, Batch.full(labels), 0, tau).slack)
        out.append({"case": "theorem1_collapsed_antipodal", "K": K, "abs_slack": slack, "ok": slack <= 1e-9})
    return out


def _grad_problem(rng, cfg):
    N = int(rng.integers(4, cfg["N_max"] + 1))
    K = int(rng.integers(2, cfg["K_max"] + 1))
    h = int(rng.integers(1, cfg["h_max"] + 1))
    labels = rng.integers(0, K, size=N)
    w = rng.standard_normal((N, h))
    P = rng.standard_normal((K, h))
    n_batch = int(rng.integers(2, N + 1))
    batch = sample_batch(labels, n_batch, rng)
    return RawConfiguration(w, labels, K), P, batch


def grad_trial(trial: int, cfg: dict) -> dict:
    """Analytic vs central-difference gradients for every configured variant."""
    rng = make_rng(cfg["seed"], trial)
    raw, P, batch = _grad_problem(rng, cfg)
    tau = float(cfg["taus"][trial % len(cfg["taus"])])
    step = cfg["step"]
    N, h, K = raw.N, raw.h, raw.K
    errors = {}
    for variant in cfg["variants"]:
        g = contrastive_gradient(raw, batch, variant, tau, P)

        def loss_w(x, variant=variant):
            z = normalize(RawConfiguration(x.reshape(N, h), raw.labels, K))
            return float(anchor_losses(z, batch, variant, tau, PrototypeSet.from_raw(P)).sum())

        errors[f"{variant}_dw"] = relative_error(g.dw, finite_difference(loss_w, raw.w.ravel(), step))
        if g.dproto is not None:
            z = normalize(raw)

            def loss_p(x, variant=variant):
                return float(anchor_losses(z, batch, variant, tau, PrototypeSet.from_raw(x.reshape(K, h))).sum())

            errors[f"{variant}_dproto"] = relative_error(g.dproto, finite_difference(loss_p, P.ravel(), step))
    return {"trial": trial, "N": N, "K": K, "h": h, "tau": tau, "batch": len(batch),
            "rel_err": errors, "max_rel_err": max(errors.values()) if errors else 0.0}


def summarize_grads(records, cfg) -> dict:
    errs = [r["max_rel_err"] for r in records]
    return {
        "max_rel_err": max(errs) if errs else 0.0,
        "median_rel_err": float(np.median(errs)) if errs else 0.0,
        "n_trials": len(records),
        "seed": cfg["seed"],
        "threshold": cfg["threshold"],
        "passed": (max(errs) if errs else 0.0) <= cfg["threshold"],
    }

