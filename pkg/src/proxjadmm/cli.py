"""Command line entry point: ``proxjadmm random-trials | merge | interp``.

Every command is seeded and writes CSV.  On failure the last line on
stderr reads ``error: <kind>: <message>`` and the exit code is nonzero
(1 for runtime failures, 2 for bad arguments or configuration).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .cbf import CENTRALIZED, DECENTRALIZED, MODES, NOMINAL, merge_scene, simulate, trajectory_csv_text
from .centralized import solve_centralized
from .config import ConfigError, load_config
from .coordinator import run_admm, select_params
from .generators import random_pairwise_problem
from .local import ProxParams
from .online import interpolation_csv_text, interpolation_endpoints, interpolation_experiment
from .problem import CoupledProblem
from .smoothing import SmoothingConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

REL_TOL = 1e-3


class UsageError(Exception):
    pass


def make_params(problem: CoupledProblem, cfg: dict) -> ProxParams:
    a = cfg["admm"]
    params = select_params(problem, gamma=a["gamma"], rho=a["rho"], mode=a["mode"], margin=a["margin"],
                           tau_factor=a["tau_factor"])
    return replace(params, qp_tol=cfg["qp"]["tol"], qp_max_iter=int(cfg["qp"]["max_iter"]))


def _write(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise UsageError(f"expected on or off, got {value!r}")
    return value == "on"


# --- random-trials ----------------------------------------------------------

def first_stay_below(errors: Sequence[float], tol: float = REL_TOL) -> Optional[int]:
    """First iteration from which the error stays at or below ``tol``."""
    k = None
    for i in range(len(errors) - 1, -1, -1):
        if errors[i] > tol:
            break
        k = i
    return k


def random_trials(num_agents: int, trials: int, seed: int, cfg: dict, iters: int,
                  workers: Optional[int] = None) -> List[List[float]]:
    """Per trial, the relative objective error ``|F(x^k) - F*| / |F*|`` for ``k = 0..iters``."""
    if num_agents < 2:
        raise UsageError("random-trials needs at least 2 agents")
    r = cfg["random"]
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        problem = random_pairwise_problem(num_agents, rng, dims=r["dims"], rows=r["rows"], beta=r["beta"],
                                          box=r["box"], chord_ratio=r["chord_ratio"],
                                          slack_range=tuple(r["slack_range"]))
        opt = solve_centralized(problem).objective
        state = run_admm(problem, make_params(problem, cfg), max_iter=iters, stop_tol=0.0, workers=workers)
        denom = max(abs(opt), 1e-300)
        errs = [abs(h.total_objective - opt) / denom for h in state.history]
        errs += [errs[-1]] * (iters + 1 - len(errs))
        out.append(errs)
    return out


def trials_csv_text(errors: List[List[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration"] + [f"trial{k}" for k in range(len(errors))])
    for i in range(len(errors[0]) if errors else 0):
        w.writerow([i] + [repr(e[i]) for e in errors])
    return buf.getvalue()


def cmd_random_trials(args, cfg) -> int:
    iters = args.iters if args.iters is not None else int(cfg["admm"]["max_iter"])
    errors = random_trials(args.agents, args.trials, args.seed, cfg, iters, args.threads)
    _write(args.out, trials_csv_text(errors))
    reached = [first_stay_below(e) for e in errors]
    hit = [k for k in reached if k is not None]
    summary = {"agents": args.agents, "trials": args.trials, "reached": len(hit),
               "iterations_to_tol": reached, "median": float(np.median(hit)) if hit else None}
    print(json.dumps(summary))
    return EXIT_OK


# --- merge ------------------------------------------------------------------

def _parse_modes(text: str) -> List[str]:
    if text == "all":
        return list(MODES)
    modes = [m.strip() for m in text.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown mode {m!r}; choose from {', '.join(MODES)} or all")
    return modes


def cmd_merge(args, cfg) -> int:
    modes = _parse_modes(args.mode)
    warm = _on_off(args.warm)
    mcfg = dict(cfg["merge"])
    if args.iters is not None:
        mcfg["M"] = args.iters
    steps = args.steps if args.steps is not None else int(mcfg["steps"])
    rng = np.random.default_rng(args.seed)
    scene = merge_scene(mcfg, rng)
    params = lambda p: make_params(p, cfg)
    out = args.out
    logs = {}
    for mode in modes:
        logs[mode] = simulate(scene, steps, mode, warm=warm, params=params, workers=args.threads)
        _write(os.path.join(out, f"merge_{mode}.csv"), trajectory_csv_text(logs[mode], scene.dt))
    if len(modes) > 1:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        extra = ["oracle_violation_same_state", "gap_bound"] if DECENTRALIZED in logs else []
        w.writerow(["step"] + [f"violation_{m}" for m in modes] + [f"min_h_{m}" for m in modes] + extra)
        for t in range(steps):
            row = [t] + [repr(logs[m][t].violation) for m in modes] + [repr(logs[m][t].min_h) for m in modes]
            if extra:
                d = logs[DECENTRALIZED][t]
                row += [repr(d.oracle_violation), repr(d.gap_bound)]
            w.writerow(row)
        _write(os.path.join(out, "comparison.csv"), buf.getvalue())
    if DECENTRALIZED in logs:
        other = simulate(scene, steps, DECENTRALIZED, warm=not warm, params=params, workers=args.threads)
        warm_log, cold_log = (logs[DECENTRALIZED], other) if warm else (other, logs[DECENTRALIZED])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "warm_start_violation", "warm_end_violation", "cold_start_violation",
                    "cold_end_violation"])
        for a, b in zip(warm_log, cold_log):
            w.writerow([a.t, repr(a.start_violation), repr(a.end_violation), repr(b.start_violation),
                        repr(b.end_violation)])
        _write(os.path.join(out, "warm_cold.csv"), buf.getvalue())
    summary = {m: {"min_h": min(s.min_h for s in logs[m]), "total_violation": sum(s.violation for s in logs[m])}
               for m in modes}
    print(json.dumps(summary))
    return EXIT_OK


# --- interp -----------------------------------------------------------------

def cmd_interp(args, cfg) -> int:
    icfg = cfg["interp"]
    steps = args.steps if args.steps is not None else int(icfg["steps"])
    if steps < 1:
        raise UsageError("steps must be at least 1")
    smooth = _on_off(args.smoothing)
    rng = np.random.default_rng(args.seed)
    p1, p2 = interpolation_endpoints(rng, icfg["agents"], icfg["dims"], icfg["beta"])
    tables = {"exact": interpolation_experiment(p1, p2, steps)}
    if smooth:
        cs = cfg["smoothing"]["c"]
        for c in (cs if isinstance(cs, list) else [cs]):
            tables[f"smooth_c{c:g}"] = interpolation_experiment(p1, p2, steps, SmoothingConfig(float(c)))
    _write(args.out, interpolation_csv_text(tables))
    summary = {}
    for name, rows in tables.items():
        ratios = [r.dual_step / r.dual_bound for r in rows[1:] if not math.isnan(r.dual_bound) and r.dual_bound > 0]
        summary[name] = {"max_primal_step": max((r.primal_step for r in rows[1:]), default=0.0),
                         "max_dual_over_bound": max(ratios) if ratios else None}
    print(json.dumps(summary))
    return EXIT_OK


# --- plumbing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config overriding the packaged defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker threads for the per-agent solves")
    common.add_argument("--params", choices=["theory", "practical"], default=None,
                        help="proximal weight rule (overrides admm.mode from the config)")

    parser = argparse.ArgumentParser(prog="proxjadmm", description="Decentralized online ADMM experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("random-trials", parents=[common], help="convergence on random coupled instances")
    p.add_argument("--agents", type=int, default=8)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--iters", type=int, default=None, help="ADMM iterations per trial")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_random_trials)

    p = sub.add_parser("merge", parents=[common], help="two-lane merging simulation")
    p.add_argument("--mode", default="all", help="comma separated subset of nominal,centralized,decentralized or all")
    p.add_argument("--warm", default="on", help="on|off")
    p.add_argument("--iters", type=int, default=None, help="ADMM rounds per control step")
    p.add_argument("--steps", type=int, default=None, help="simulation steps")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("interp", parents=[common], help="primal and dual solutions along interpolated constraints")
    p.add_argument("--steps", type=int, default=None, help="grid points in [0, 1]")
    p.add_argument("--smoothing", default="on", help="on|off (exact mode always runs)")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_interp)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return _fail("usage", "invalid arguments", EXIT_USAGE)
    try:
        cfg = load_config(args.config)
        if args.params is not None:
            cfg["admm"]["mode"] = args.params
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_FAILURE)
    except Exception as exc:  # noqa: BLE001 - report any solver failure in the parsable format
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
