"""Command-line entry point.

Exit codes: 0 success, 2 configuration error (argparse usage errors also
exit 2), 3 an experiment ran but its consistency check failed, 1 anything
else (for example an unreadable checkpoint).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import scipy.fft as sfft

from .config import ConfigError, RunConfig, dump_config, parse_config
from .diagnostics import PreconditionError, record_from_arrays
from .experiments import (
    ExperimentAssertion,
    ExperimentError,
    gronwall_linear_response,
    initial_datum,
    run_decay_study,
    run_dichotomy_sweep,
    run_inviscid_limit,
)
from .ground_state import compute_thresholds
from .integrator import Status, continue_run, integrate, load_checkpoint, save_checkpoint
from .io import TimeSeriesWriter, write_manifest, write_summary, write_timeseries

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_ASSERTION = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration (defaults when omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(prog="cglflow", description="Energy-critical CGL/NLS experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate one trajectory")
    sub.add_parser("sweep", parents=[common], help="amplitude x theta dichotomy sweep")
    inv = sub.add_parser("inviscid", parents=[common], help="theta -> pi/2 limit against NLS")
    inv.add_argument("--floor", type=float, default=None, help="splitting-error floor for the final check")
    sub.add_parser("decay", parents=[common], help="sub-threshold decay study")
    sub.add_parser("gronwall", parents=[common], help="weak-strong perturbation growth")
    sub.add_parser("thresholds", parents=[common], help="print ||grad W||^2 and E(W)")
    res = sub.add_parser("resume", parents=[common], help="continue a run from a checkpoint")
    res.add_argument("checkpoint", type=Path)
    return parser


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _fail(code: int, msg: str) -> int:
    print(f"cglflow: {msg}", file=sys.stderr)
    return code


def _checkpointer(out: Path, cadence: float, z):
    """Observer writing checkpoint_<k>.bin each time t crosses a multiple of cadence."""
    state = {"next": cadence}

    def obs(run_state, rec):
        if cadence > 0 and run_state.t >= state["next"] - 1e-12:
            k = int(round(run_state.t / cadence))
            save_checkpoint(out / f"checkpoint_{k:06d}.bin", run_state, z, rec.s_accumulator)
            state["next"] = (math.floor(run_state.t / cadence + 1e-9) + 1) * cadence

    return obs


def _finish_run(out: Path, final, z, records) -> dict:
    save_checkpoint(out / "checkpoint_final.bin", final, z, records[-1].s_accumulator)
    return {
        "status": final.status.label,
        "t_final": final.t,
        "t_event": final.t_event,
        "steps": final.step_index,
        "records": len(records),
        "message": final.message,
    }


def _cmd_run(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    grid = cfg.grid
    amplitude = cfg.experiment.amplitudes[0]
    u0 = initial_datum(cfg.experiment.family, grid, amplitude)
    refs = compute_thresholds(grid.d)
    with TimeSeriesWriter(out / "timeseries.csv", grid.d) as writer:
        observers = [writer, _checkpointer(out, cfg.output.checkpoint_cadence, cfg.z)]
        final, records = integrate(u0, cfg.z, cfg.stepper, observers, cfg.output.record_cadence or None, refs)
    outcome = _finish_run(out, final, cfg.z, records)
    _say(args, f"{final.status.label} at t={final.t:.6g} after {final.step_index} steps")
    return EXIT_OK, outcome


def _cmd_resume(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    state, z, s_accum = load_checkpoint(args.checkpoint)
    if state.status is Status.MAX_TIME and cfg.stepper.max_time > state.t:
        state = replace(state, status=Status.RUNNING, t_event=None)
    values = state.u.values
    first = record_from_arrays(state.u.grid, values, sfft.fftn(values, norm="ortho"), state.t)
    first = replace(first, s_accumulator=s_accum)
    refs = compute_thresholds(state.u.grid.d)
    with TimeSeriesWriter(out / "timeseries.csv", state.u.grid.d) as writer:
        observers = [writer, _checkpointer(out, cfg.output.checkpoint_cadence, z)]
        final, records = continue_run(state, z, cfg.stepper, observers,
                                      cfg.output.record_cadence or None, refs, first_record=first)
    outcome = _finish_run(out, final, z, records)
    outcome["resumed_from"] = str(args.checkpoint)
    outcome["resumed_at"] = state.t
    _say(args, f"{final.status.label} at t={final.t:.6g} after {final.step_index} steps")
    return EXIT_OK, outcome


def _cmd_sweep(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.experiment
    result = run_dichotomy_sweep(spec, jobs=args.jobs, check=False)
    for cell in result.cells:
        write_timeseries(out / f"cell_{cell.index:03d}.csv", cell.records, spec.grid.d)
    rows = result.summary_rows()
    write_summary(out / "summary.csv", rows)
    for row in rows:
        _say(args, f"cell {row['cell']:3d}  a={row['amplitude']:<6g} theta={row['theta']:.4f}  "
                   f"expected={row['expected']:<12s} outcome={row['outcome']}")
    outcome = {"cells": len(rows), "misclassified": [c.index for c in result.misclassified]}
    if result.misclassified:
        for c in result.misclassified:
            print(f"cglflow: misclassified cell {c.index}: amplitude={c.amplitude}, theta={c.theta:.6g}, "
                  f"expected {c.expected}, got {c.outcome}", file=sys.stderr)
        return EXIT_ASSERTION, outcome
    return EXIT_OK, outcome


def _cmd_inviscid(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    res = run_inviscid_limit(cfg.experiment, floor=args.floor)
    rows = [{"theta": th, "cos_theta": c, "err_l2": e, "err_h1": h, "defect_bound": b, "energy_final": ef}
            for th, c, e, h, b, ef in zip(res.thetas, res.cos_thetas, res.err_l2, res.err_h1,
                                          res.defect_bound, res.energy_final)]
    write_summary(out / "inviscid.csv", rows)
    for r in rows:
        _say(args, f"theta={r['theta']:.6f}  err_L2={r['err_l2']:.4e}  bound={r['defect_bound']:.4e}")
    outcome = {"slope": res.slope, "monotone_tail": res.monotone_tail, "floor": res.floor,
               "below_floor": res.below_floor}
    _say(args, f"log-log slope {res.slope}")
    if not res.monotone_tail or res.below_floor is False:
        return _fail(EXIT_ASSERTION, "inviscid-limit check failed: "
                     f"monotone={res.monotone_tail}, below_floor={res.below_floor}"), outcome
    return EXIT_OK, outcome


def _cmd_decay(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    rep = run_decay_study(cfg.experiment)
    write_summary(out / "decay.csv", [{"t": t, "h1": h, "s_accum": s}
                                      for t, h, s in zip(rep.times, rep.h1, rep.s_accumulator)])
    outcome = {"status": rep.status, "t_event": rep.t_event, "decay_rate": rep.decay_rate,
               "final_quarter_increment": rep.final_quarter_increment}
    _say(args, f"{rep.status} at t={rep.t_event}; rate {rep.decay_rate}; "
               f"final-quarter S increment {rep.final_quarter_increment:.3e}")
    if not rep.conclusive or rep.final_quarter_increment >= 0.01:
        return _fail(EXIT_ASSERTION, "decay study inconclusive"), outcome
    return EXIT_OK, outcome


def _cmd_gronwall(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    ratio, one, two = gronwall_linear_response(cfg.experiment)
    write_summary(out / "gronwall.csv", [{"t": t, "w_h1": w, "ratio": r}
                                         for t, w, r in zip(one.times, one.w_h1, one.ratio)])
    outcome = {"epsilon": one.epsilon, "gronwall_constant": one.gronwall_constant,
               "within_bound": one.within_bound and two.within_bound, "linear_response": ratio}
    _say(args, f"C={one.gronwall_constant:.4g}  within bound: {outcome['within_bound']}  "
               f"doubling response {ratio:.6f}")
    if not outcome["within_bound"] or abs(ratio - 2.0) > 0.2:
        return _fail(EXIT_ASSERTION, "weak-strong growth check failed"), outcome
    return EXIT_OK, outcome


def _cmd_thresholds(args, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    refs = compute_thresholds(cfg.grid.d)
    print(f"d = {refs.d}")
    print(f"grad_norm_sq_W = {refs.grad_norm_sq_W:.15g}")
    print(f"energy_W = {refs.energy_W:.15g}")
    return EXIT_OK, {"grad_norm_sq_W": refs.grad_norm_sq_W, "energy_W": refs.energy_W}


_COMMANDS = {
    "run": _cmd_run,
    "resume": _cmd_resume,
    "sweep": _cmd_sweep,
    "inviscid": _cmd_inviscid,
    "decay": _cmd_decay,
    "gronwall": _cmd_gronwall,
    "thresholds": _cmd_thresholds,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    if args.jobs < 1:
        return _fail(EXIT_CONFIG, f"--jobs must be >= 1 (got {args.jobs})")

    writes = args.command != "thresholds"
    out = args.out or Path(cfg.output.directory)
    if writes:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        code, outcome = _COMMANDS[args.command](args, cfg, out)
    except (ExperimentAssertion, PreconditionError) as exc:
        code, outcome = _fail(EXIT_ASSERTION, str(exc)), {"error": str(exc)}
    except (ExperimentError, ValueError, OSError) as exc:
        code, outcome = _fail(1, f"{type(exc).__name__}: {exc}"), {"error": str(exc)}
    if writes:
        (out / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
        outcome["exit_code"] = code
        write_manifest(out / "manifest.json", cfg.to_dict(), args.command,
                       time.perf_counter() - t0, outcome)
    return code


if __name__ == "__main__":
    sys.exit(main())
