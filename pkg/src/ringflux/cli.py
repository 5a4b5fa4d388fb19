"""Command-line experiment runner.

    ringflux run <config.yaml> [--seed N] [--workers N] [--output DIR]
    ringflux validate <config.yaml>
    ringflux report <output_dir> [<output_dir> ...]

Exit codes: 0 pass, 1 validation error, 2 runtime failure, 3 at least one
acceptance check failed.  All randomness flows from the config seed; two
runs with the same config are byte-identical except provenance timestamps.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import traceback

import yaml

from . import __version__
from .config import RunConfig, validate, validate_dict
from .experiments import RUNNERS

SCHEMA_VERSION = 1


def _load_config(path: str) -> tuple[RunConfig | None, list[dict]]:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    diags = validate_dict(raw)
    if any(d["level"] == "error" for d in diags):
        return None, diags
    return RunConfig.from_dict(raw), diags


def write_results(outdir: str, payload: dict) -> str:
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    path = os.path.join(outdir, "results.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_provenance(outdir: str, cfg: RunConfig, final: bool, error: str | None = None) -> str:
    from .dynamics import BACKEND

    path = os.path.join(outdir, "provenance.json")
    with open(path, "w") as fh:
        json.dump({
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "code_version": __version__,
            "backend": BACKEND,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "final": final,
            "error": error,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_run(args) -> int:
    cfg, diags = _load_config(args.config)
    for d in diags:
        print(f"{d['level']}: {d['message']}", file=sys.stderr)
    if cfg is None:
        return 1
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output is not None:
        cfg.output_dir = args.output
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 1
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    write_provenance(outdir, cfg, final=False)
    try:
        payload = RUNNERS[cfg.experiment](cfg, outdir)
    except Exception as exc:  # noqa: BLE001 - report and flag non-final
        traceback.print_exc()
        write_provenance(outdir, cfg, final=False, error=str(exc))
        return 2
    write_results(outdir, payload)
    write_provenance(outdir, cfg, final=True)
    status = payload["pass"]
    npass = sum(1 for c in payload["checks"] if c["pass"] is True)
    nfail = sum(1 for c in payload["checks"] if c["pass"] is False)
    print(f"{cfg.experiment}: {npass} checks passed, {nfail} failed "
          f"(overall: {'pass' if status else 'n/a' if status is None else 'FAIL'})")
    return 0 if status is not False else 3


def cmd_validate(args) -> int:
    with open(args.config) as fh:
        raw = yaml.safe_load(fh)
    diags = validate_dict(raw)
    for d in diags:
        print(f"{d['level']}: {d['message']}")
    if not diags:
        print("ok")
    return 1 if any(d["level"] == "error" for d in diags) else 0


def cmd_report(args) -> int:
    """Aggregate results.json files into one (kappa, a) grid table."""
    rows = []
    for outdir in args.dirs:
        rpath = os.path.join(outdir, "results.json")
        ppath = os.path.join(outdir, "provenance.json")
        if not os.path.exists(rpath):
            print(f"warning: {rpath} missing (non-final run?)", file=sys.stderr)
            continue
        with open(rpath) as fh:
            res = json.load(fh)
        model = {}
        if os.path.exists(ppath):
            with open(ppath) as fh:
                model = json.load(fh).get("config", {}).get("model", {})
        rows.append((model.get("kappa"), model.get("a"), res["experiment"],
                     res["pass"], outdir))
    rows.sort(key=lambda r: (str(r[0]), str(r[1]), r[2]))
    out = args.output or "grid.csv"
    with open(out, "w") as fh:
        fh.write("kappa,a,experiment,pass,dir\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    for kappa, a, exp, ok, d in rows:
        print(f"kappa={kappa} a={a} {exp}: {'pass' if ok else 'n/a' if ok is None else 'FAIL'} ({d})")
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ringflux", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None,
                       help="replica chunks to process concurrently (results "
                            "are worker-independent; this build runs them sequentially)")
    p_run.add_argument("--output", default=None)
    p_run.set_defaults(func=cmd_run)
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=cmd_validate)
    p_rep = sub.add_parser("report", help="aggregate run outputs into a grid")
    p_rep.add_argument("dirs", nargs="+")
    p_rep.add_argument("--output", default=None)
    p_rep.set_defaults(func=cmd_report)
    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
