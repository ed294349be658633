"""Command line entry point ``dwlab``.

Exit codes: 0 ok, 2 validation failure, 3 blow-up outcome, 4 internal error.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config, pipeline, selftest

EXIT_OK, EXIT_VALIDATION, EXIT_BLOWUP, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("dwlab")


class ValidationFailed(Exception):
    pass


def _load_valid(path: str) -> tuple[dict, config.ValidationResult]:
    try:
        cfg = config.load(path)
    except (OSError, config.SchemaError) as exc:
        raise ValidationFailed(str(exc)) from exc
    report = config.validate(cfg)
    for w in report.warnings:
        log.warning("%s", w)
    if not report.ok:
        raise ValidationFailed("; ".join(report.errors))
    return cfg, report


def _run_dir(args) -> Path:
    if args.run:
        return Path(args.run)
    if not args.config:
        raise ValidationFailed("either --config or --run is required")
    cfg = config.load(args.config)
    return pipeline.run_dir(pipeline.out_root(args.out), cfg)


def cmd_validate(args) -> int:
    try:
        cfg = config.load(args.config)
    except (OSError, config.SchemaError) as exc:
        print(json.dumps({"ok": False, "errors": [str(exc)], "warnings": []}, indent=2))
        return EXIT_VALIDATION
    report = config.validate(cfg)
    print(json.dumps(report.as_dict(), indent=2, ensure_ascii=False))
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_run(args) -> int:
    cfg, _ = _load_valid(args.config)
    summary, code = pipeline.execute(cfg, pipeline.out_root(args.out))
    print(json.dumps({k: summary.get(k) for k in ("outcome", "alpha_star", "slope", "predicted_exponent",
                                                  "pass", "sup_E5", "max_identity_residual")},
                     indent=2, default=str))
    return code


def cmd_stage(stage):
    def handler(args) -> int:
        rdir = _run_dir(args)
        if not (rdir / "config.json").exists():
            raise ValidationFailed(f"{rdir} holds no run (config.json missing)")
        result = stage(rdir)
        keep = {k: v for k, v in result.items() if k not in ("profile", "ratio")}
        print(json.dumps(pipeline._clean(keep), indent=2, default=str))
        return EXIT_OK
    return handler


def cmd_rates(args) -> int:
    if args.action == "predict":
        cfg, _ = _load_valid(args.config)
        print(json.dumps(config.rates_for(cfg).as_dict(), indent=2))
        return EXIT_OK
    return cmd_stage(pipeline.rates_stage)(args)


def _set_path(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node.setdefault(part, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def expand_sweep(plan: dict) -> list[dict]:
    """Cartesian product of ``plan['grid']`` (dotted paths to value lists) applied to ``plan['base']``."""
    base = plan.get("base", {})
    axes = plan.get("grid", {})
    prefix = plan.get("id", "sweep")
    keys = list(axes)
    configs = []
    for i, combo in enumerate(itertools.product(*(axes[k] for k in keys))):
        raw = copy.deepcopy(base)
        for key, val in zip(keys, combo):
            _set_path(raw, key, val)
        raw["id"] = f"{prefix}-{i:03d}"
        configs.append(raw)
    return configs


def _sweep_worker(raw: dict, root: str) -> dict:
    cfg = config.normalize(raw)
    summary, code = pipeline.execute(cfg, Path(root))
    p = None
    if cfg["nonlinearity"]:
        term = cfg["nonlinearity"][0]
        p = term.get("p1", term.get("p"))
    return {"id": cfg["id"], "beta": cfg["coeffs"]["beta"], "p": p,
            "predicted_exponent": summary.get("predicted_exponent"),
            "fitted_slope": summary.get("slope"), "pass": bool(summary.get("pass")) and code == 0,
            "outcome": summary["outcome"]}


def cmd_sweep(args) -> int:
    try:
        plan = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationFailed(str(exc)) from exc
    raws = expand_sweep(plan)
    for raw in raws:
        report = config.validate(config.normalize(raw))
        if not report.ok:
            raise ValidationFailed(f"{raw['id']}: " + "; ".join(report.errors))
    root = pipeline.out_root(args.out)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, raws, [str(root)] * len(raws)))
    else:
        rows = [_sweep_worker(raw, str(root)) for raw in raws]
    lines = ["beta,p,predicted_exponent,fitted_slope,pass"]
    for row in rows:
        lines.append(",".join("" if row[k] is None else str(row[k])
                              for k in ("beta", "p", "predicted_exponent", "fitted_slope", "pass")))
    out = root / "sweeps" / plan.get("id", "sweep") / "sweep.csv"
    pipeline.write_atomic(out, "\n".join(lines) + "\n")
    print(out)
    for row in rows:
        print(f"{row['id']}: beta={row['beta']} slope={row['fitted_slope']} pass={row['pass']}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    return EXIT_OK if selftest.run_all() else EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dwlab", description="Damped-wave diffusion-phenomenon laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration (JSON)")
        p.add_argument("--out", help="output root (default: $DWLAB_OUT or ./dwlab_out)")
        p.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep")
        return p

    common(sub.add_parser("validate", help="check a configuration")).set_defaults(func=cmd_validate)
    common(sub.add_parser("run", help="simulate and post-process one run")).set_defaults(func=cmd_run)
    for name, stage in (("decompose", pipeline.decompose_stage), ("energy", pipeline.energy_stage)):
        p = common(sub.add_parser(name, help=f"{name} stage on a persisted run"), config_required=False)
        p.add_argument("--run", help="run directory (instead of --config)")
        p.set_defaults(func=cmd_stage(stage))
    p = common(sub.add_parser("rates", help="fit rates of a run, or 'rates predict'"), config_required=False)
    p.add_argument("action", nargs="?", choices=("fit", "predict"), default="fit")
    p.add_argument("--run", help="run directory (instead of --config)")
    p.set_defaults(func=cmd_rates)
    common(sub.add_parser("sweep", help="cartesian sweep of runs")).set_defaults(func=cmd_sweep)
    common(sub.add_parser("selftest", help="invariant suite"), config_required=False).set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationFailed as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except config.SchemaError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # internal errors map to a distinct exit code
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
