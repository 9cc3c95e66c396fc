"""Command-line driver.

Subcommands:
    run          execute one configured chain into a run directory
    compare      build the efficiency table from several run directories
    verify       run the property suites (fast | full)
    lis-inspect  print the adapted subspace eigenvalues and d_F history

The default output root is $DRGMC_OUTPUT_ROOT (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import config as config_mod
from . import runio
from .diagnostics import summary_table, table_to_csv, table_to_text
from .harness import run_from_config
from .verify import run_verify

OUTPUT_ROOT_ENV = "DRGMC_OUTPUT_ROOT"

_OVERRIDABLE = {
    "model": str, "algorithm": str, "nx": int, "ny": int, "snr": float,
    "h": float, "h_r": float, "h_perp": float, "n_leapfrog": int,
    "eps": float, "gamma_r": int, "gamma_perp": int, "rank": int,
    "threshold": float, "max_rank": int, "iterations": int, "burn_in": int,
    "n_lag": int, "m_max": int, "delta_lis": float, "n_b": int,
    "seed": int, "data_seed": int, "sigma_u": float, "s_0": float,
    "lin_n": int, "lin_m": int,
}


def _output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _build_parser():
    parser = argparse.ArgumentParser(prog="drgmc",
                                     description="Dimension-robust MCMC runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one chain")
    p_run.add_argument("--config", help="YAML config file")
    p_run.add_argument("--out", help="run directory (default: auto under output root)")
    for key, typ in _OVERRIDABLE.items():
        p_run.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)

    p_cmp = sub.add_parser("compare", help="efficiency table across runs")
    p_cmp.add_argument("runs", nargs="+", help="run directories (pCN baseline required)")
    p_cmp.add_argument("--out", help="directory for table.csv/table.txt")
    p_cmp.add_argument("--baseline", default="pcn")

    p_ver = sub.add_parser("verify", help="run property suites")
    p_ver.add_argument("--level", choices=("fast", "full"), default="fast")
    p_ver.add_argument("--json", dest="json_path", help="write the report here")

    p_lis = sub.add_parser("lis-inspect", help="dump LIS eigenvalues and d_F history")
    p_lis.add_argument("run", help="run directory of an adaptive chain")
    return parser


def cmd_run(args):
    if args.config:
        cfg = config_mod.from_yaml(args.config)
    else:
        cfg = config_mod.RunConfig()
    overrides = {k: getattr(args, k) for k in _OVERRIDABLE if getattr(args, k) is not None}
    if overrides:
        data = cfg.to_dict()
        data.update(overrides)
        cfg = config_mod.from_dict(data)
    if args.out:
        run_dir = Path(args.out)
    elif cfg.out_dir:
        run_dir = Path(cfg.out_dir)
    else:
        run_dir = _output_root() / f"{cfg.algorithm}_{cfg.model}_seed{cfg.seed}_{cfg.hash()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    started = runio.timestamp()
    try:
        record = run_from_config(cfg)
    except Exception as exc:
        runio.write_manifest(run_dir, cfg, started, runio.timestamp(),
                             incomplete=True, error=repr(exc))
        print(f"run failed, partial outputs flagged incomplete: {exc}", file=sys.stderr)
        return 1
    runio.write_run(run_dir, record, cfg, summary_extra={"started": started})
    summary = json.loads((run_dir / "summary.json").read_text())
    print(f"run complete: {run_dir}")
    print(f"  AP {summary['AP']:.3f}  minESS {summary['minESS']:.1f}  "
          f"PDEsolns {summary['PDEsolns']}  wall {summary['wall_time']:.1f}s")
    return 0


def cmd_compare(args):
    records = {}
    for run in args.runs:
        record, _cfg = runio.load_record(run)
        records[record.meta["algorithm"]] = record
    if args.baseline not in records:
        print(f"baseline '{args.baseline}' missing from supplied runs", file=sys.stderr)
        return 1
    rows = summary_table(records, baseline=args.baseline)
    out_dir = Path(args.out) if args.out else _output_root() / "compare"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "table.csv").write_text(table_to_csv(rows))
    (out_dir / "table.txt").write_text(table_to_text(rows))
    print(table_to_text(rows), end="")
    print(f"tables written to {out_dir}")
    return 0


def cmd_verify(args):
    t0 = time.perf_counter()
    report = run_verify(args.level)
    report["seconds"] = round(time.perf_counter() - t0, 3)
    text = json.dumps(report, indent=1)
    if args.json_path:
        Path(args.json_path).write_text(text)
    print(text)
    return 0 if report["passed"] else 1


def cmd_lis_inspect(args):
    run_dir = Path(args.run)
    lis_path = run_dir / "lis.json"
    if not lis_path.exists():
        print(f"{run_dir}: no LIS data (not an adaptive run?)", file=sys.stderr)
        return 1
    payload = json.loads(lis_path.read_text())
    print(f"updates m={payload['m']}  rank r={payload['r']}  "
          f"final d_F={payload['d_f']:.3e}  frozen={payload['frozen']}")
    print("eigenvalues:")
    for i, lam in enumerate(payload["eigenvalues"]):
        print(f"  {i + 1:3d}  {lam:.6e}")
    print("history (update, m, r, d_F):")
    for i, (m, r, d_f) in enumerate(payload["history"]):
        print(f"  {i:3d}  {m:3d}  {r:3d}  {d_f:.6e}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "compare": cmd_compare, "verify": cmd_verify,
                "lis-inspect": cmd_lis_inspect}
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
