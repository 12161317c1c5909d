"""JSON experiment configs: one flat object per run, validated before any work.

Unknown keys are rejected. Every error names the offending field.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import BalconError, ConfigError
from .harness import TrainConfig
from .longtail import LongTailSpec, class_counts

_number = (int, float)


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _at_least(n):
    return lambda x: x >= n


def _range_pair(x):
    return isinstance(x, list) and len(x) == 2 and all(isinstance(v, int) for v in x) and x[0] <= x[1]


# field -> (accepted types, default, check, description of the check)
DATA_FIELDS = {
    "K": (int, 10, _at_least(1), ">= 1"),
    "n_max": (int, 100, _at_least(1), ">= 1"),
    "beta": (_number, 1.0, _at_least(1), ">= 1"),
    "profile": (str, "exponential", lambda s: s in ("exponential", "step"), "'exponential' or 'step'"),
    "h": (int, 16, _at_least(1), ">= 1"),
}

TRAIN_FIELDS = {
    "loss_variant": (str, "bcl", lambda s: s in ("scl", "l1", "l2", "l3", "bcl", "combined"),
                     "one of scl, l1, l2, l3, bcl, combined"),
    "steps": (int, 5000, _nonneg, ">= 0"),
    "batch_size": (int, 64, _at_least(2), ">= 2"),
    "lr": (_number, 50.0, _positive, "> 0"),
    "lr_schedule": (str, "constant", lambda s: s in ("constant", "cosine"), "'constant' or 'cosine'"),
    "momentum": (_number, 0.0, lambda m: 0 <= m < 1, "in [0, 1)"),
    "tau": (_number, 1.0, _positive, "> 0"),
    "lambda": (_number, 2.0, _nonneg, ">= 0"),
    "mu": (_number, 0.6, _nonneg, ">= 0"),
    "measure_every": (int, 100, _at_least(1), ">= 1"),
}

COMMON_FIELDS = {
    "seed": (int, 0, _nonneg, ">= 0"),
    "out": (str, None, lambda s: bool(s), "a non-empty path"),
}

SCHEMAS = {
    "train": {**COMMON_FIELDS, **DATA_FIELDS, **TRAIN_FIELDS},
    "compare": {
        **COMMON_FIELDS, **DATA_FIELDS,
        **{k: v for k, v in TRAIN_FIELDS.items() if k != "loss_variant"},
        "variants": (list, ["scl", "bcl"],
                     lambda v: len(v) == 2 and all(x in ("scl", "l1", "l2", "l3", "bcl", "combined") for x in v),
                     "a pair of loss variants"),
    },
    "check-bounds": {
        **COMMON_FIELDS,
        "trials": (int, 1000, _nonneg, ">= 0"),
        "N_range": (list, [8, 64], lambda r: _range_pair(r) and r[0] >= 2, "[lo, hi] with 2 <= lo <= hi"),
        "K_range": (list, [2, 10], lambda r: _range_pair(r) and r[0] >= 2, "[lo, hi] with 2 <= lo <= hi"),
        "h_max": (int, 16, _at_least(1), ">= 1"),
        "tau": (_number, 1.0, _positive, "> 0"),
        "tolerance": (_number, 1e-9, _nonneg, ">= 0"),
        "equality_K": (list, [2, 4, 10, 50], lambda v: all(isinstance(k, int) and k >= 2 for k in v),
                       "a list of integers >= 2"),
        "equality_rtol": (_number, 1e-6, _nonneg, ">= 0"),
    },
    "check-grads": {
        **COMMON_FIELDS,
        "trials": (int, 100, _nonneg, ">= 0"),
        "N_max": (int, 16, _at_least(2), ">= 2"),
        "h_max": (int, 8, _at_least(1), ">= 1"),
        "K_max": (int, 5, _at_least(2), ">= 2"),
        "taus": (list, [0.1, 1.0], lambda v: len(v) > 0 and all(isinstance(t, _number) and t > 0 for t in v),
                 "a non-empty list of positive numbers"),
        "variants": (list, ["scl", "bcl"], lambda v: len(v) > 0 and all(x in ("scl", "l1", "l2", "l3", "bcl") for x in v),
                     "a non-empty list of contrastive variants"),
        "step": (_number, 1e-5, _positive, "> 0"),
        "threshold": (_number, 1e-4, _nonneg, ">= 0"),
    },
}


def _type_ok(value, types):
    if isinstance(value, bool):
        return False
    return isinstance(value, types)


def validate(command: str, doc) -> dict:
    """Fill defaults and check every field of a config object for ``command``."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    schema = SCHEMAS[command]
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"unknown field(s) for {command}: {', '.join(unknown)}")
    out = {}
    for key, (types, default, check, expect) in schema.items():
        value = doc.get(key, default)
        if value is None and default is None:
            out[key] = None
            continue
        if not _type_ok(value, types):
            raise ConfigError(f"field '{key}': expected {_type_name(types)}, got {json.dumps(value)}")
        if not check(value):
            raise ConfigError(f"field '{key}': must be {expect} (got {json.dumps(value)})")
        out[key] = float(value) if types is _number else value
    if command in ("train", "compare"):
        try:
            spec = LongTailSpec(out["K"], out["n_max"], out["beta"], out["profile"])
            n_total = sum(class_counts(spec))
        except BalconError as exc:
            raise ConfigError(f"fields K/n_max/beta/profile: {exc}") from None
        if out["batch_size"] > n_total:
            raise ConfigError(f"field 'batch_size': {out['batch_size']} exceeds dataset size {n_total}")
    return out


def _type_name(types):
    if types is _number:
        return "a number"
    return {int: "an integer", str: "a string", list: "a list"}.get(types, str(types))


def load(command: str, path) -> tuple[dict, bytes]:
    """Parse and validate a config file; returns the values and the raw bytes."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: config is not valid UTF-8") from None
    try:
        return validate(command, doc), raw
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def longtail_spec(cfg: dict) -> LongTailSpec:
    return LongTailSpec(cfg["K"], cfg["n_max"], cfg["beta"], cfg["profile"])


def train_config(cfg: dict, variant: str | None = None) -> TrainConfig:
    return TrainConfig(
        loss_variant=variant or cfg["loss_variant"],
        steps=cfg["steps"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        lr_schedule=cfg["lr_schedule"],
        tau=cfg["tau"],
        lam=cfg["lambda"],
        mu=cfg["mu"],
        seed=cfg["seed"],
        measure_every=cfg["measure_every"],
        momentum=cfg["momentum"],
    )
