"""Command line: ``run``, ``check`` and ``validate``.

Exit codes: 0 success, 1 internal failure, 2 invalid config or
parameters, 3 undersampled or insufficient data, 4 rerun mismatch.
Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfg
from .errors import (DomainError, HitPoissonError, InsufficientData, ParameterError, PhaseSpaceMismatch,
                     RangeError, Undersampled)
from .runner import execute, first_difference, render_json, write_outputs

log = logging.getLogger("hitpoisson")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_UNDERSAMPLED, EXIT_MISMATCH = 0, 1, 2, 3, 4


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_status": code, **extra}), file=sys.stderr)
    return code


def _classify(exc: Exception) -> int:
    if isinstance(exc, cfg.ConfigError):
        return _fail(EXIT_INVALID, "config", str(exc), key=exc.key)
    if isinstance(exc, (ParameterError, DomainError, RangeError, PhaseSpaceMismatch)):
        return _fail(EXIT_INVALID, "validation", str(exc))
    if isinstance(exc, (Undersampled, InsufficientData)):
        return _fail(EXIT_UNDERSAMPLED, "undersampled", str(exc))
    return _fail(EXIT_FAIL, type(exc).__name__, str(exc))


def _overrides(args) -> dict:
    return {"seed": args.seed, "threads": args.threads}


def _with_output_dir(values: dict, output_dir: str | None) -> dict:
    if output_dir:
        values = dict(values, output_path=str(Path(output_dir) / Path(values.get("output_path", "report")).name))
    return values


def cmd_validate(args) -> int:
    raw = _with_output_dir(cfg.load(args.config), args.output_dir)
    res = cfg.resolve(raw, _overrides(args))
    print(render_json({"valid": True, "config": res.values}), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    raw = _with_output_dir(cfg.load(args.config), args.output_dir)
    res = cfg.resolve(raw, _overrides(args))
    log.info("running %s on %s", res.values["experiment"], res.spec.kind)
    report, csv_text = execute(res)
    json_path, csv_path = write_outputs(report, csv_text, res.values["output_path"])
    print(json.dumps({"report": str(json_path), "table": str(csv_path)}))
    return EXIT_OK


def _raw_from_report(report: dict) -> dict:
    raw = {k: v for k, v in report["config"].items() if v is not None}
    for k in ("r0", "ratio", "count"):
        raw.pop(k, None)
    if not raw.get("radii"):
        raw.pop("radii", None)
    raw["seed"] = report["seed"]
    return raw


def cmd_check(args) -> int:
    path = Path(args.report)
    try:
        old = json.loads(path.read_text(encoding="utf-8"))
        raw = _raw_from_report(old)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_INVALID, "report", f"cannot read report: {exc}")
    threads = args.threads if args.threads is not None else int(old.get("threads", 1))
    res = cfg.resolve(raw, {"threads": threads})
    statistical = threads > 1 or int(old.get("threads", 1)) > 1
    mode = "statistical" if statistical else "exact"
    new, csv_text = execute(res)
    diff = first_difference(old, dict(new, csv_file=old.get("csv_file")), statistical)
    if diff is None and not statistical:
        # byte-level comparison of both files
        if path.read_bytes() != render_json(dict(new, csv_file=old.get("csv_file"))).encode("utf-8"):
            diff = "report bytes"
        elif old.get("csv_file"):
            csv_file = path.with_name(old["csv_file"])
            if csv_file.exists() and csv_file.read_bytes() != csv_text.encode("utf-8"):
                diff = "csv"
    if diff is not None:
        return _fail(EXIT_MISMATCH, "mismatch", f"first differing field: {diff}", field=diff, mode=mode)
    print(json.dumps({"reproduced": True, "mode": mode, "threads": threads}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hitpoisson", description="Poisson statistics of visits to small balls.")
    ap.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the experiment of a config"), ("validate", "check a config only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--output-dir")
    p = sub.add_parser("check", help="rerun a report and compare its outputs")
    p.add_argument("report")
    p.add_argument("--threads", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "check": cmd_check}[args.command]
    try:
        return handler(args)
    except HitPoissonError as exc:
        return _classify(exc)
    except OSError as exc:
        return _fail(EXIT_FAIL, "io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
