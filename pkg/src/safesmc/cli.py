"""Command-line front end: ``safesmc run | demo | sweep | verify``.

Exit status of ``run`` and ``demo``:

* 0 the run completed and stayed safe
* 1 usage or configuration error
* 2 safety violation (min h below the tolerance)
* 3 the safeguard became infeasible (the time is printed)
* 4 any other runtime failure

The remaining monitors are reported in the summary without affecting the
status of a run. ``verify`` exits 0 when every monitor passes, 2 on a safety
violation and 4 when another monitor fails.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, csvio
from .config import DEMOS, SWEEPABLE, ScenarioConfig, build, demo_text, load_config, load_demo
from .errors import (
    ConfigError,
    DegenerateDenominator,
    InfeasibleSafeguard,
    InvalidParameters,
    SafeSMCError,
)
from .sim import SimResult, invasiveness, run, total_variation
from .verify import verify_log

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNSAFE = 2
EXIT_INFEASIBLE = 3
EXIT_FAILURE = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Running and summarizing


@dataclass
class RunOutcome:
    result: Optional[SimResult]
    error: Optional[BaseException]
    wall_time: float
    report: dict
    exit_code: int


def execute(cfg: ScenarioConfig, *, safeguard_enabled: Optional[bool] = None,
            remark3_fallback: bool = False) -> RunOutcome:
    """Run a configured scenario, verify it and classify the outcome."""
    enabled = cfg.safeguard_enabled if safeguard_enabled is None else safeguard_enabled
    t0 = time.perf_counter()
    error: Optional[BaseException] = None
    try:
        result = run(cfg.scenario, cfg.sim, safeguard_enabled=enabled, remark3_fallback=remark3_fallback)
    except InvalidParameters:
        raise
    except SafeSMCError as exc:
        error = exc
        result = getattr(exc, "result", None)
    wall = time.perf_counter() - t0
    report = summarize(cfg, result, error, wall, enabled)
    return RunOutcome(result, error, wall, report, _exit_code(report, error))


def _exit_code(report: dict, error: Optional[BaseException]) -> int:
    if isinstance(error, (InfeasibleSafeguard, DegenerateDenominator)):
        return EXIT_INFEASIBLE
    if error is not None:
        return EXIT_FAILURE
    ver = report.get("verification", {})
    if not ver.get("safety", {}).get("passed", False):
        return EXIT_UNSAFE
    return EXIT_OK


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def summarize(cfg: ScenarioConfig, result: Optional[SimResult], error: Optional[BaseException],
              wall: float, enabled: bool) -> dict:
    out: dict = {
        "scenario": cfg.name,
        "source": cfg.source,
        "version": __version__,
        "safeguard_enabled": enabled,
        "status": "failed" if result is None else result.status,
        "error": None if error is None else f"{type(error).__name__}: {error}",
        "wall_time_s": wall,
        "dt": cfg.sim.dt,
        "t_end": cfg.sim.t_end,
        "integrator": cfg.sim.integrator.value,
    }
    if result is None or len(result.trajectory) == 0:
        return out
    ev, traj = result.events, result.trajectory
    out["events"] = {
        "t1": _num(ev.t1),
        "reset_times": [float(t) for t in ev.reset_times],
        "reset_count": ev.reset_count,
        "t_omega": _num(ev.t_omega),
        "reach_time": _num(ev.reach_time),
        "infeasible_at": _num(ev.infeasible_at),
        "channel": ev.channel,
        "omega_exits": ev.omega_exits,
        "fallback_steps": ev.fallback_steps,
        "min_h": _num(ev.min_h),
    }
    out["metrics"] = {
        "t_final": float(traj.t[-1]),
        "x_final": [float(v) for v in traj.x[-1]],
        "x_final_norm2": float(np.linalg.norm(traj.x[-1])),
        "x_final_norm_inf": float(np.abs(traj.x[-1]).max()),
        "invasiveness": invasiveness(traj),
        "total_variation": total_variation(traj),
    }
    out["verification"] = verify_log(traj, result.scenario, result.status)
    return out


def _fmt(v, spec=".6g") -> str:
    return "-" if v is None else format(v, spec)


def report_text(report: dict) -> str:
    """Plain-text rendering of a summary produced by :func:`summarize`."""
    lines = [
        f"scenario        {report['scenario']}  ({report['source']})",
        f"safeguard       {'on' if report['safeguard_enabled'] else 'off'}",
        f"integrator      {report['integrator']}, dt={report['dt']:g}, t_end={report['t_end']:g}",
        f"status          {report['status']}",
    ]
    if report.get("error"):
        lines.append(f"error           {report['error']}")
    ev = report.get("events")
    if ev:
        resets = ", ".join(f"{t:.4f}" for t in ev["reset_times"]) or "none"
        lines += [
            f"channel j       {_fmt(ev['channel'], '')}",
            f"t1 (risky)      {_fmt(ev['t1'], '.4f')}",
            f"resets          {ev['reset_count']} [{resets}]",
            f"t_omega         {_fmt(ev['t_omega'], '.4f')}",
            f"reach time      {_fmt(ev['reach_time'], '.4f')}",
            f"min h           {_fmt(ev['min_h'], '.6g')}",
        ]
        if ev["infeasible_at"] is not None:
            lines.append(f"infeasible at   t={ev['infeasible_at']:.6g}")
        if ev["fallback_steps"]:
            lines.append(f"fallback steps  {ev['fallback_steps']}")
    met = report.get("metrics")
    if met:
        lines += [
            f"x(t_final)      [{', '.join(f'{v:.6g}' for v in met['x_final'])}] at t={met['t_final']:.6g}",
            f"int |u_s| dt    {met['invasiveness']:.6g}",
            f"total variation {met['total_variation']:.6g}",
        ]
    ver = report.get("verification")
    if ver:
        lines.append("")
        lines += verification_lines(ver)
    lines.append(f"wall time       {report['wall_time_s']:.3f} s")
    return "\n".join(lines) + "\n"


def verification_lines(ver: dict) -> list[str]:
    def verdict(entry: dict, key: str = "passed") -> str:
        return "PASS" if entry[key] else "FAIL"

    out = []
    if "safety" in ver:
        s = ver["safety"]
        first = "" if s["first_violation"] is None else f", first violation t={s['first_violation']:.6g}"
        out.append(f"[{verdict(s)}] safety       min h = {s['min_h']:.6g} (tol {s['tol']:g}){first}")
    if "inequality" in ver:
        r = ver["inequality"]
        note = " (no active samples with u_s != 0)" if r["vacuous"] else ""
        out.append(f"[{verdict(r)}] inequality   min residual = {_fmt(r['min_residual'])} "
                   f"over {r['n_samples']} samples{note}")
    if "barrier" in ver:
        b = ver["barrier"]
        out.append(f"[{verdict(b)}] barrier      min residual = {_fmt(b['min_residual'])} "
                   f"(tol {b['tol']:.3g}, {b['n_samples']} samples)")
    if "barrier_strict" in ver:
        b = ver["barrier_strict"]
        tag = "ok  " if b["within_tol"] else "note"
        out.append(f"[{tag}] barrier*     min residual = {_fmt(b['min_residual'])} "
                   f"(tol {b['tol']:.3g}, chatter bands excluded; diagnostic only)")
    if "lyapunov" in ver:
        ly = ver["lyapunov"]
        if ly["exempt"]:
            out.append(f"[EXEMPT] lyapunov   {ly['reason']}")
        else:
            out.append(f"[{verdict(ly)}] lyapunov     {ly['violations']} violations over {ly['checked']} "
                       f"steps (tol {ly['tol']:.3g})")
    if "upsilon" in ver:
        u = ver["upsilon"]
        out.append(f"[{verdict(u)}] upsilon      range [{u['lo']:.6g}, {u['hi']:.6g}] "
                   f"within ({u['bound_lo']:.6g}, {u['bound_hi']:.6g})")
    if "reaching" in ver:
        r = ver["reaching"]
        out.append(f"[{verdict(r)}] reaching     t = {_fmt(r['reach_time'], '.4f')} <= bound {r['bound']:.6g}")
    if "passed" in ver:
        out.append(f"overall         {'PASS' if ver['passed'] else 'FAIL'}")
    return out


PLOT_SCRIPT = '''"""Plot a safesmc trajectory CSV. Usage: python {name} [CSV]"""
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else {csv!r}
data = np.genfromtxt(path, delimiter=",", names=True)
center, radius = {center!r}, {radius!r}

fig, ax = plt.subplots(2, 2, figsize=(10, 8))
ax[0, 0].plot(data["x1"], data["x2"])
ax[0, 0].add_patch(plt.Circle(center, radius, color="r", alpha=0.3))
ax[0, 0].set_aspect("equal")
ax[0, 0].set_xlabel("x1")
ax[0, 0].set_ylabel("x2")
ax[0, 1].plot(data["t"], data["u1"], label="u1")
ax[0, 1].plot(data["t"], data["u2"], label="u2")
ax[0, 1].legend()
ax[1, 0].plot(data["t"], data["h"], label="h")
ax[1, 0].plot(data["t"], data["z"], label="z")
ax[1, 0].legend()
ax[1, 1].plot(data["t"], data["V_smc"], label="V_smc")
ax[1, 1].plot(data["t"], data["V_z"], ":", label="V_z")
ax[1, 1].legend()
for a in ax.flat[1:]:
    a.set_xlabel("t [s]")
fig.tight_layout()
plt.show()
'''


def write_outputs(cfg: ScenarioConfig, outcome: RunOutcome, out_dir: Path, plot_script: bool = False) -> list[Path]:
    paths = cfg.outputs(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if outcome.result is not None and len(outcome.result.trajectory) > 0 and paths.csv is not None:
        csvio.write_csv(outcome.result.trajectory, paths.csv)
        written.append(paths.csv)
    if paths.summary is not None:
        paths.summary.write_text(report_text(outcome.report), encoding="utf-8")
        written.append(paths.summary)
    if paths.json is not None:
        paths.json.write_text(json.dumps({**outcome.report, "exit_code": outcome.exit_code}, indent=2) + "\n",
                              encoding="utf-8")
        written.append(paths.json)
    script = paths.plot_script
    if script is None and plot_script:
        script = out_dir / f"{cfg.name}_plot.py"
    if script is not None and paths.csv is not None:
        safety = cfg.data["safety"]
        script.write_text(PLOT_SCRIPT.format(name=script.name, csv=paths.csv.name,
                                             center=tuple(safety["center"]), radius=safety["radius"]),
                          encoding="utf-8")
        written.append(script)
    return written


def _override(cfg: ScenarioConfig, dt: Optional[float], t_end: Optional[float]) -> ScenarioConfig:
    if dt is None and t_end is None:
        return cfg
    data = copy.deepcopy(cfg.data)
    if dt is not None:
        data["sim"]["dt"] = dt
    if t_end is not None:
        data["sim"]["t_end"] = t_end
    return build(data, source=cfg.source)


def _run_and_report(cfg: ScenarioConfig, args) -> int:
    cfg = _override(cfg, args.dt, args.t_end)
    outcome = execute(cfg, safeguard_enabled=False if args.no_safeguard else None,
                      remark3_fallback=args.remark3_fallback)
    if not args.quiet:
        sys.stdout.write(report_text(outcome.report))
    if not args.no_files:
        for p in write_outputs(cfg, outcome, Path(args.out_dir), plot_script=args.plot_script):
            if not args.quiet:
                print(f"wrote {p}")
    if outcome.exit_code == EXIT_INFEASIBLE:
        err = outcome.error
        print(err, file=sys.stderr)
    elif outcome.exit_code == EXIT_UNSAFE:
        saf = outcome.report["verification"]["safety"]
        print(f"safety violation: min h = {saf['min_h']:.6g}, first at t={saf['first_violation']:.6g}s",
              file=sys.stderr)
    elif outcome.error is not None:
        print(f"run failed: {outcome.error}", file=sys.stderr)
    return outcome.exit_code


# ---------------------------------------------------------------------------
# Subcommands


def cmd_run(args) -> int:
    return _run_and_report(load_config(args.config), args)


def cmd_demo(args) -> int:
    if args.list:
        for name in DEMOS:
            first = demo_text(name).splitlines()[0].lstrip("# ").strip()
            print(f"{name:20s} {first}")
        return EXIT_OK
    if args.name is None:
        raise UsageError("demo: a demo name or --list is required")
    if args.name not in DEMOS:
        raise UsageError(f"demo: unknown demo {args.name!r}; choose one of {', '.join(DEMOS)}")
    if args.write_config:
        Path(args.write_config).write_text(demo_text(args.name), encoding="utf-8")
        print(f"wrote {args.write_config}")
        return EXIT_OK
    return _run_and_report(load_demo(args.name), args)


def _sweep_one(data: dict, source: str, parameter: str, value: float, out_dir: Optional[str]) -> dict:
    """Worker: one sweep point. Returns a table row; never raises."""
    row = {"value": value, "min_h": None, "reach_time": None, "resets": None, "invasiveness": None,
           "status": "", "exit_code": None}
    try:
        cfg = build(data, source=source).with_value(parameter, value)
    except (ConfigError, InvalidParameters) as exc:
        row["status"] = f"invalid: {exc}"
        row["exit_code"] = EXIT_USAGE
        return row
    try:
        outcome = execute(cfg)
    except InvalidParameters as exc:
        row["status"] = f"invalid: {exc}"
        row["exit_code"] = EXIT_USAGE
        return row
    rep = outcome.report
    ev = rep.get("events", {})
    row.update(min_h=ev.get("min_h"), reach_time=ev.get("reach_time"), resets=ev.get("reset_count"),
               invasiveness=rep.get("metrics", {}).get("invasiveness"), exit_code=outcome.exit_code)
    row["status"] = {EXIT_OK: "ok", EXIT_UNSAFE: "unsafe", EXIT_INFEASIBLE: "infeasible"}.get(
        outcome.exit_code, "failed")
    if outcome.exit_code == EXIT_INFEASIBLE:
        row["status"] += f" at t={outcome.error.t:.4g}"
    if out_dir is not None:
        tag = f"{cfg.name}__{parameter}={value:g}"
        named = build({**copy.deepcopy(cfg.data),
                       "output": {"csv": f"{tag}.csv", "summary": f"{tag}.txt", "json": f"{tag}.json",
                                  "plot_script": None}}, source=cfg.source)
        write_outputs(named, outcome, Path(out_dir))
    return row


def trend(values: Sequence[float], ys: Sequence[Optional[float]]) -> str:
    pts = sorted((v, y) for v, y in zip(values, ys) if y is not None)
    if len(pts) < 2:
        return "insufficient data"
    d = np.diff([y for _, y in pts])
    if np.all(d >= 0):
        return "non-decreasing"
    if np.all(d <= 0):
        return "non-increasing"
    return "non-monotone"


def sweep_table(parameter: str, rows: list[dict]) -> str:
    head = f"{parameter:>10s} {'min_h':>12s} {'reach_time':>11s} {'resets':>6s} {'int|u_s|dt':>12s}  status"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['value']:>10g} {_fmt(r['min_h'], '12.6g'):>12s} {_fmt(r['reach_time'], '11.4f'):>11s} "
            f"{_fmt(r['resets'], '6d'):>6s} {_fmt(r['invasiveness'], '12.6g'):>12s}  {r['status']}"
        )
    values = [r["value"] for r in rows]
    lines.append("")
    lines.append(f"invasiveness vs {parameter}: {trend(values, [r['invasiveness'] for r in rows])}")
    lines.append(f"min_h vs {parameter}: {trend(values, [r['min_h'] for r in rows])}")
    hs = [r["min_h"] for r in rows if r["min_h"] is not None]
    if len(hs) >= 2:
        lines.append(f"min_h spread across runs: {max(hs) - min(hs):.3g}")
    return "\n".join(lines) + "\n"


def run_sweep(cfg: ScenarioConfig, parameter: str, values: Sequence[float], *, workers: int = 1,
              out_dir: Optional[str] = None) -> list[dict]:
    """Run one scenario per value; rows come back in the order of ``values``."""
    if not values:
        raise UsageError("sweep: the list of values is empty")
    if parameter not in SWEEPABLE:
        raise UsageError(f"sweep: cannot sweep {parameter!r}; choose one of {', '.join(SWEEPABLE)}")
    jobs = [(cfg.data, cfg.source, parameter, float(v), out_dir) for v in values]
    if workers <= 1 or len(jobs) == 1:
        return [_sweep_one(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_one, *job) for job in jobs]
        return [f.result() for f in futures]


def cmd_sweep(args) -> int:
    cfg = load_demo(args.config[len("demo:"):]) if args.config.startswith("demo:") else load_config(args.config)
    cfg = _override(cfg, None, args.t_end)
    try:
        values = [float(v) for chunk in args.values for v in chunk.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"sweep: values must be numbers ({exc})") from exc
    workers = args.workers if args.workers is not None else min(len(values) or 1, os.cpu_count() or 1)
    rows = run_sweep(cfg, args.parameter, values, workers=workers, out_dir=args.out_dir)
    sys.stdout.write(sweep_table(args.parameter, rows))
    if args.json:
        Path(args.json).write_text(json.dumps({"scenario": cfg.name, "parameter": args.parameter, "rows": rows},
                                              indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    try:
        traj = csvio.read_csv(args.csv)
    except (OSError, ValueError, SafeSMCError) as exc:
        raise ConfigError(f"{args.csv}: {exc}") from exc
    ver = verify_log(traj, cfg.scenario)
    sys.stdout.write("\n".join([f"trajectory      {args.csv} ({len(traj)} samples)"] + verification_lines(ver)) + "\n")
    if args.json:
        Path(args.json).write_text(json.dumps(ver, indent=2) + "\n", encoding="utf-8")
    if not ver["safety"]["passed"]:
        return EXIT_UNSAFE
    return EXIT_OK if ver["passed"] else EXIT_FAILURE


# ---------------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-safeguard", action="store_true", help="run the plain sliding mode controller")
    p.add_argument("--remark3-fallback", action="store_true",
                   help="on infeasibility, set the whole input to zero until the state leaves the risky band")
    p.add_argument("--out-dir", default=".", help="directory for CSV and summary files (default: .)")
    p.add_argument("--no-files", action="store_true", help="print the summary only")
    p.add_argument("--plot-script", action="store_true", help="also write a matplotlib script for the CSV")
    p.add_argument("--dt", type=float, help="override the step size")
    p.add_argument("--t-end", type=float, help="override the horizon")
    p.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="safesmc", description="Safe sliding mode control simulator and verifier.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate a scenario file")
    p.add_argument("config", help="TOML scenario file")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("demo", help="run a built-in scenario")
    p.add_argument("name", nargs="?", help=f"one of: {', '.join(DEMOS)}")
    p.add_argument("--list", action="store_true", help="list the built-in scenarios")
    p.add_argument("--write-config", metavar="PATH", help="write the scenario file instead of running it")
    _add_run_flags(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("sweep", help="run one scenario per parameter value")
    p.add_argument("config", help="TOML scenario file, or demo:NAME")
    p.add_argument("parameter", help=f"one of: {', '.join(SWEEPABLE)}")
    p.add_argument("values", nargs="*", help="values (space or comma separated)")
    p.add_argument("--workers", type=int, help="worker processes (default: one per CPU)")
    p.add_argument("--out-dir", help="write each run's CSV and summary here")
    p.add_argument("--json", help="write the table as JSON")
    p.add_argument("--t-end", type=float, help="override the horizon")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check a trajectory CSV against its scenario file")
    p.add_argument("csv")
    p.add_argument("config")
    p.add_argument("--json", help="write the machine-readable report here")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidParameters) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SafeSMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
