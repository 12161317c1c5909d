"""Command-line front door.

    balcon train        --config cfg.json [--out DIR] [--seed N]
    balcon check-bounds --config cfg.json [--out DIR] [--seed N]
    balcon check-grads  --config cfg.json [--out DIR] [--seed N]
    balcon compare      --config cfg.json [--out DIR] [--seed N]

Exit codes: 0 success, 1 config error, 2 divergence, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import checks
from . import config as cfgmod
from .embedding import save_config
from .errors import ConfigError, DivergedError
from .harness import compare_geometries, fmt, make_problem, train

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("balcon")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _write_lines(path: Path, records) -> None:
    path.write_text("".join(_dumps(r) + "\n" for r in records))


def _prototypes_doc(protos) -> dict:
    K, h = protos.c.shape
    return {"K": int(K), "h": int(h), "c": [[float(x) for x in row] for row in protos.c]}


def _write_trace(out: Path, prefix: str, trace) -> None:
    (out / f"{prefix}trace.csv").write_text(trace.to_csv())
    save_config(trace.final, out / f"{prefix}final.json")
    (out / f"{prefix}prototypes.json").write_text(_dumps(_prototypes_doc(trace.prototypes)) + "\n")


def cmd_train(cfg: dict, out: Path) -> int:
    prob = make_problem(cfgmod.longtail_spec(cfg), cfg["h"], cfg["seed"])
    tc = cfgmod.train_config(cfg)
    try:
        trace = train(prob.data, prob.prototypes, prob.classifier, tc)
    except DivergedError as exc:
        log.error("diverged: %s", exc)
        if exc.trace is not None:
            _write_trace(out, "", exc.trace)
        return EXIT_DIVERGED
    _write_trace(out, "", trace)
    m = trace.last
    log.info("step %d loss %s spread %s", m.step, fmt(m.loss), fmt(m.report.gram_offdiag_spread))
    return EXIT_OK


def cmd_check_bounds(cfg: dict, out: Path, _loss_shift: float = 0.0) -> int:
    """``_loss_shift`` perturbs every loss value; a test hook for mutation checks."""
    records = [checks.bound_trial(t, cfg, _loss_shift) for t in range(cfg["trials"])]
    _write_lines(out / "bounds.jsonl", records)
    eq = checks.equality_cases(cfg)
    _write_lines(out / "equality.jsonl", eq)
    v1 = sum(r["theorem1"]["violations"] for r in records)
    v2 = sum(r["theorem2"]["violations"] for r in records)
    eq_fail = sum(not e["ok"] for e in eq)

    def min_slack(name):
        vals = [r[name]["min_slack"] for r in records if r[name]["min_slack"] is not None]
        return min(vals) if vals else None

    summary = {
        "trials": cfg["trials"],
        "tolerance": cfg["tolerance"],
        "violations": {"theorem1": v1, "theorem2": v2},
        "min_slack": {"theorem1": min_slack("theorem1"), "theorem2": min_slack("theorem2")},
        "equality_failures": eq_fail,
        "passed": v1 == 0 and v2 == 0 and eq_fail == 0,
    }
    (out / "summary.json").write_text(_dumps(summary) + "\n")
    log.info("violations: theorem1=%d theorem2=%d, equality failures=%d", v1, v2, eq_fail)
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def cmd_check_grads(cfg: dict, out: Path) -> int:
    records = [checks.grad_trial(t, cfg) for t in range(cfg["trials"])]
    _write_lines(out / "grads.jsonl", records)
    summary = checks.summarize_grads(records, cfg)
    (out / "grads.json").write_text(_dumps(summary) + "\n")
    log.info("max_rel_err %.3g median %.3g over %d trials", summary["max_rel_err"],
             summary["median_rel_err"], summary["n_trials"])
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def cmd_compare(cfg: dict, out: Path) -> int:
    v1, v2 = cfg["variants"]
    names = (v1, v2) if v1 != v2 else (f"{v1}_1", f"{v2}_2")
    try:
        cmp = compare_geometries(cfgmod.train_config(cfg, v1), cfgmod.train_config(cfg, v2),
                                 cfgmod.longtail_spec(cfg), cfg["h"], cfg["seed"])
    except DivergedError as exc:
        log.error("diverged: %s", exc)
        return EXIT_DIVERGED
    _write_trace(out, f"{names[0]}_", cmp.first)
    _write_trace(out, f"{names[1]}_", cmp.second)
    (out / "summary.json").write_text(_dumps(cmp.summary(names)) + "\n")
    log.info("spread %s=%s %s=%s ratio=%s", names[0], fmt(cmp.first_report.gram_offdiag_spread),
             names[1], fmt(cmp.second_report.gram_offdiag_spread), fmt(cmp.spread_ratio))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "check-bounds": cmd_check_bounds,
    "check-grads": cmd_check_grads,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balcon", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="output directory (overrides the config's 'out')")
        p.add_argument("--seed", type=int, help="override the config seed")
    return parser


def run(command: str, config_path, out=None, seed=None) -> int:
    try:
        cfg, raw = cfgmod.load(command, config_path)
        if seed is not None:
            if seed < 0:
                raise ConfigError("--seed: must be >= 0")
            cfg["seed"] = seed
        out_dir = out or cfg["out"]
        if not out_dir:
            raise ConfigError("no output directory: pass --out or set 'out' in the config")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_bytes(raw)
    t0 = time.perf_counter()
    code = COMMANDS[command](cfg, out_dir)
    log.info("%s finished in %.1fs with exit code %d", command, time.perf_counter() - t0, code)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
