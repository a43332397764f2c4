"""Command-line entry point: ``spde-lab {run,list-checks,simulate,sample-invariant}``.

Exit codes for ``run``: 0 when every check passes, 1 when any check fails,
2 on a configuration or certification error (nothing is simulated then).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import (ConfigError, apply_overrides, as_plain, config_hash, load, validate)
from .drift import CertificationFailed
from .integrator import PathConfig, set_threads, simulate_path
from .report import ANCHORS
from .rng import derive_stream
from .runner import make_model, run_checks
from .semigroup import InvariantConfig, sample_invariant

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def list_checks() -> str:
    """One line per inequality-suite check: name, equation tag and statement."""
    lines = []
    for name, (tag, statement) in ANCHORS.items():
        lines.append(f"{name} → {tag}: {statement}")
    return "\n".join(lines)


def _resolve(args) -> dict:
    raw = load(args.config)
    raw = apply_overrides(raw, args.set or [])
    if getattr(args, "seed", None) is not None:
        raw.setdefault("simulation", {})["seed"] = int(args.seed)
    return validate(raw)


def _threads(args) -> None:
    n = args.threads
    if n is None and os.environ.get("SPDE_LAB_THREADS"):
        n = int(os.environ["SPDE_LAB_THREADS"])
    set_threads(n)


def _outdir(args, cfg) -> Path:
    out = Path(args.output or cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary_text(cfg, ctx, reports) -> str:
    cert = ctx.cert
    n_pass = sum(r.passed for r in reports)
    head = [
        f"spde-lab {__version__}",
        f"config_hash {ctx.hash}",
        f"seed {ctx.seed}",
        f"certificate zeta1={cert.zeta1:.9g} zeta2={cert.zeta2:.9g} zeta={cert.zeta:.9g} "
        f"zeta_alpha={cert.zeta_alpha:.9g}",
        f"checks {n_pass}/{len(reports)} passed",
        "",
    ]
    return "\n".join(head + [r.summary_line() for r in reports]) + "\n"


def cmd_run(args) -> int:
    try:
        cfg = _resolve(args)
        _threads(args)
        out = _outdir(args, cfg)
        ctx, reports = run_checks(cfg)
    except (ConfigError, CertificationFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    formats = cfg["output"]["formats"]
    (out / "config.json").write_text(
        json.dumps({"config": as_plain(cfg), "config_hash": ctx.hash}, sort_keys=True, indent=2)
        + "\n")
    # report.jsonl is always written; a run without its record is not a run
    with open(out / "report.jsonl", "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    text = _summary_text(cfg, ctx, reports)
    if "summary" in formats:
        (out / "summary.txt").write_text(text)
    if "trajectory" in formats:
        sim = cfg["simulation"]
        t_final = cfg["output"].get("trajectory_t_final", 1.0 / ctx.cert.zeta)
        pc = PathConfig(sim["dt"], t_final, sim["scheme"], ctx.seed, 0,
                        derive_stream("trajectory"))
        traj = simulate_path(np.zeros(ctx.spec.n_modes), pc, ctx.model, ctx.spec)
        traj.to_csv(out / "trajectory.csv")
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_list_checks(args) -> int:
    print(list_checks())
    return EXIT_OK


def _write_csv(path: Optional[str], header: str, data: np.ndarray) -> None:
    target = sys.stdout if path in (None, "-") else open(path, "w")
    try:
        np.savetxt(target, data, delimiter=",", header=header, comments="", fmt="%.17g")
    finally:
        if target is not sys.stdout:
            target.close()


def cmd_simulate(args) -> int:
    try:
        cfg = _resolve(args)
        _threads(args)
        model = make_model(cfg)
    except (ConfigError, CertificationFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sim = cfg["simulation"]
    n = model.n_modes
    x0 = np.zeros(n)
    if args.x0:
        vals = [float(v) for v in args.x0.split(",")]
        if len(vals) > n:
            print(f"error: x0 has {len(vals)} entries, n_modes={n}", file=sys.stderr)
            return EXIT_CONFIG
        x0[:len(vals)] = vals
    t_final = args.t_final if args.t_final is not None else 1.0 / model.cert.zeta
    seed = sim["seed"]
    rows = []
    for j in range(args.paths):
        pc = PathConfig(sim["dt"], t_final, sim["scheme"], seed, j, derive_stream("trajectory"))
        traj = simulate_path(x0, pc, model, model.spec)
        if args.binary:
            traj.to_binary(f"{args.binary}.{j}" if args.paths > 1 else args.binary)
            continue
        rows.append(np.column_stack([np.full(traj.times.size, j), traj.times, traj.states]))
    if not args.binary:
        header = "path,t," + ",".join(f"x_{k + 1}" for k in range(n))
        _write_csv(args.output, header, np.vstack(rows))
    return EXIT_OK


def cmd_sample_invariant(args) -> int:
    try:
        cfg = _resolve(args)
        _threads(args)
        model = make_model(cfg)
    except (ConfigError, CertificationFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    s = cfg["simulation"]
    icfg = InvariantConfig(n_draws=args.n_draws or s["n_draws"], burn_in=s.get("burn_in"),
                           thinning=s.get("thinning"), dt=s.get("invariant_dt", s["dt"]),
                           scheme=s["scheme"], seed=s["seed"],
                           stream=derive_stream("invariant"), provenance=s["provenance"])
    ens = sample_invariant(model, cfg=icfg)
    header = ",".join(f"x_{k + 1}" for k in range(model.n_modes))
    _write_csv(args.output, header, ens.draws)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spde-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output_help):
        sp.add_argument("config", help="TOML experiment configuration")
        sp.add_argument("--seed", type=int, help="override simulation.seed")
        sp.add_argument("--threads", type=int, help="worker threads (default: SPDE_LAB_THREADS "
                                                    "or hardware parallelism)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config value, e.g. simulation.dt=0.005")
        sp.add_argument("--output", "-o", help=output_help)

    r = sub.add_parser("run", help="certify the problem and run its checks")
    common(r, "output directory (default: output.directory)")
    r.add_argument("--quiet", "-q", action="store_true", help="do not echo the summary")
    r.set_defaults(func=cmd_run)

    lc = sub.add_parser("list-checks", help="list checks with their equation anchors")
    lc.set_defaults(func=cmd_list_checks)

    s = sub.add_parser("simulate", help="dump sample paths as CSV")
    common(s, "CSV file (default: stdout)")
    s.add_argument("--paths", type=int, default=1)
    s.add_argument("--t-final", type=float)
    s.add_argument("--x0", help="comma-separated initial coordinates (default 0)")
    s.add_argument("--binary", help="write binary dumps to this path instead of CSV")
    s.set_defaults(func=cmd_simulate)

    si = sub.add_parser("sample-invariant", help="dump invariant-measure draws as CSV")
    common(si, "CSV file (default: stdout)")
    si.add_argument("--n-draws", type=int)
    si.set_defaults(func=cmd_sample_invariant)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
