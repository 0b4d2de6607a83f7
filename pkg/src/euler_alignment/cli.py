"""Command-line driver: run, sweep, verify, fit, plot.

Exit status: 0 on success, 2 when a run ends in a detected blow-up (a
documented outcome, not a crash), 1 on any error including a usage error.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from pathlib import Path

from .alignment import periodized_kernel
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    emit_config,
    load_preset,
    parse_config,
    preset_names,
)
from .diagnostics import DiagnosticsCollector, fit_decay_rate, smallness_monitor
from .integrate import run as integrate_run
from .io import emit_timeseries, read_checkpoint, read_timeseries, write_checkpoint
from .states import SigmaState, make_perturbation_ic, sigma_of_rho
from .oracles import verification_report

__all__ = ["cli_main", "main", "execute_run"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load_config(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = parse_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _output_dir(cfg: RunConfig, args) -> Path:
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    env = os.environ.get("EULER_ALIGN_OUTPUT_DIR")
    if env:
        return Path(env)
    return Path(cfg.output_dir or "runs/unnamed")


def execute_run(cfg: RunConfig, out_dir: Path, quiet: bool = False):
    """Integrate one configured trajectory and persist its artifacts.

    Returns (summary, records, out_dir).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = cfg.make_grid()
    params = cfg.model_params()
    kernel = cfg.kernel_spec()
    step_cfg = cfg.step_config()

    if cfg.checkpoint:
        prim, ck_params = read_checkpoint(cfg.checkpoint)
        for name in ("gamma", "beta"):
            if abs(getattr(ck_params, name) - getattr(params, name)) > 1e-12:
                raise ConfigError(
                    f"checkpoint {name}={getattr(ck_params, name)} does not "
                    f"match config {name}={getattr(params, name)}"
                )
        if abs(ck_params.alpha.alpha - params.alpha.alpha) > 1e-12:
            raise ConfigError("checkpoint alpha does not match config alpha")
        if prim.grid != grid:
            raise ConfigError(
                f"checkpoint grid {prim.grid!r} does not match config {grid!r}"
            )
    else:
        prim = make_perturbation_ic(
            grid, cfg.delta, cfg.seed, mode_cap=cfg.mode_cap, params=params
        )

    if cfg.form == "sigma":
        ic = SigmaState(sigma_of_rho(prim.rho, params.gamma), prim.u, prim.t)
    else:
        ic = prim

    table = periodized_kernel(kernel, grid) if cfg.heavy else None
    collector = DiagnosticsCollector(
        params, table, eps_v=cfg.eps_v, eps_y=cfg.eps_y, heavy=cfg.heavy
    )
    summary = integrate_run(ic, params, step_cfg, hooks=[collector], kernel=kernel)

    emit_config(cfg, out_dir / "resolved.cfg")
    if "csv" in cfg.formats:
        emit_timeseries(collector.records, out_dir / "timeseries.csv", dim=grid.dim)
    if "checkpoint" in cfg.formats:
        final = summary.final_state
        if isinstance(final, SigmaState):
            final = final.to_primitive(params.gamma)
        write_checkpoint(final, params, out_dir / "final.checkpoint")

    if not quiet:
        print(
            f"[{out_dir}] status={summary.status} steps={summary.steps} "
            f"t={summary.t:.6g}"
        )
        if summary.event is not None:
            ev = summary.event
            print(
                f"  blow-up: monitor={ev.monitor} value={ev.value:.3e} "
                f"threshold={ev.threshold:.3e} at t={ev.t:.6g}"
            )
    return summary, collector.records, out_dir


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    summary, _, _ = execute_run(cfg, _output_dir(cfg, args))
    if summary.status == "completed":
        return 0
    if summary.status == "blowup":
        return 2
    print(f"error: run ended with status {summary.status}", file=sys.stderr)
    return 1


_SWEEP_PARAMS = {
    "delta": "delta",
    "alpha": "alpha",
    "gamma": "gamma",
    "beta": "beta",
}


def _sweep_worker(payload):
    cfg, out_dir = payload
    summary, records, _ = execute_run(cfg, Path(out_dir), quiet=True)
    row = {
        "status": summary.status,
        "steps": summary.steps,
        "t_final": summary.t,
        "mu": float("nan"),
        "r2": float("nan"),
        "sup_ratio": float("nan"),
    }
    try:
        series = [(r.t, r.kinetic + r.l2_rho_dev) for r in records]
        t0, t1 = series[0][0], series[-1][0]
        mu, r2 = fit_decay_rate(series, t0 + 0.5 * (t1 - t0))
        row["mu"], row["r2"] = mu, r2
    except (ValueError, IndexError):
        pass
    try:
        rep = smallness_monitor(records)
        if rep.ratio is not None:
            row["sup_ratio"] = rep.ratio
    except ValueError:
        pass
    return row


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.param not in _SWEEP_PARAMS:
        raise ConfigError(
            f"sweep parameter must be one of {sorted(_SWEEP_PARAMS)}"
        )
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {exc}") from exc
    if not values:
        raise ConfigError("empty --values list")

    root = _output_dir(cfg, args)
    root.mkdir(parents=True, exist_ok=True)
    jobs = []
    for v in values:
        sub = root / f"{args.param}={v:g}"
        section = "ic" if args.param == "delta" else "model"
        cfg_v = apply_overrides(cfg, [f"{section}.{args.param}={v!r}"])
        jobs.append((cfg_v, str(sub)))

    if args.parallel > 1:
        with multiprocessing.Pool(args.parallel) as pool:
            rows = pool.map(_sweep_worker, jobs)
    else:
        rows = [_sweep_worker(j) for j in jobs]

    summary_path = root / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        fh.write("param,value,status,steps,t_final,mu,r2,sup_ratio\n")
        for v, row in zip(values, rows):
            fh.write(
                f"{args.param},{v:.17g},{row['status']},{row['steps']},"
                f"{row['t_final']:.17g},{row['mu']:.17g},{row['r2']:.17g},"
                f"{row['sup_ratio']:.17g}\n"
            )
    print(f"sweep summary: {summary_path}")
    for v, row in zip(values, rows):
        print(
            f"  {args.param}={v:g}: {row['status']}, mu={row['mu']:.4g}, "
            f"r2={row['r2']:.4g}, sup_ratio={row['sup_ratio']:.4g}"
        )
    return 0 if all(r["status"] == "completed" for r in rows) else 2


def _cmd_verify(args) -> int:
    report = verification_report(fast=args.fast, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2)
    for gate, ok in report["gates"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {gate}")
    print(f"report: {out}")
    return 0 if report["all_passed"] else 1


def _cmd_fit(args) -> int:
    data = read_timeseries(args.csv)
    cols = [c.strip() for c in args.columns.split(",") if c.strip()]
    for c in cols:
        if c not in data:
            raise ConfigError(f"column {c!r} not in {args.csv}")
    t = data["t"]
    v = sum(data[c] for c in cols)
    t_start = args.t_start if args.t_start is not None else t[0] + 0.5 * (t[-1] - t[0])
    mu, r2 = fit_decay_rate(list(zip(t, v)), t_start)
    print(f"columns: {'+'.join(cols)}")
    print(f"t_start: {t_start:.17g}")
    print(f"mu: {mu:.17g}")
    print(f"r2: {r2:.17g}")
    return 0


_PLOT_SCRIPTS = {
    "plot_energy.py": """\
#!/usr/bin/env python3
\"\"\"Energy and dissipation plot (generated; reads only the CSV).\"\"\"
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

d = np.genfromtxt(__CSV__, delimiter=",", names=True)
fig, ax = plt.subplots(figsize=(7, 4.5))
ax.semilogy(d["t"], d["kinetic"] + d["internal"], label="energy")
ax.semilogy(d["t"], d["dissipation_alignment"], label="alignment dissipation")
if np.any(d["dissipation_damping"] > 0):
    ax.semilogy(d["t"], d["dissipation_damping"], label="damping dissipation")
ax.set_xlabel("t")
ax.legend()
fig.tight_layout()
fig.savefig("energy.png", dpi=150)
print("wrote energy.png")
""",
    "plot_decay.py": """\
#!/usr/bin/env python3
\"\"\"Decay plot (generated; reads only the CSV).\"\"\"
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

d = np.genfromtxt(__CSV__, delimiter=",", names=True)
low = d["kinetic"] + d["l2_rho_dev"]
high = d["hs_sigma"] ** 2 + d["hs_u"] ** 2
fig, ax = plt.subplots(figsize=(7, 4.5))
ax.semilogy(d["t"], low, label="kinetic + l2_rho_dev")
ax.semilogy(d["t"], high, label="hs_sigma^2 + hs_u^2")
mask = d["t"] >= d["t"][0] + 0.5 * (d["t"][-1] - d["t"][0])
if np.all(low[mask] > 0):
    slope, icept = np.polyfit(d["t"][mask], np.log(low[mask]), 1)
    ax.semilogy(d["t"][mask], np.exp(icept + slope * d["t"][mask]), "k--",
                label="fit mu=%.3g" % -slope)
ax.set_xlabel("t")
ax.legend()
fig.tight_layout()
fig.savefig("decay.png", dpi=150)
print("wrote decay.png")
""",
    "plot_monitors.py": """\
#!/usr/bin/env python3
\"\"\"Regularity monitor plot (generated; reads only the CSV).\"\"\"
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

d = np.genfromtxt(__CSV__, delimiter=",", names=True)
fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
axes[0].plot(d["t"], d["grad_u_inf"], label="sup |grad u|")
axes[0].plot(d["t"], d["sigma_holder"], label="sigma Holder proxy")
axes[0].legend()
axes[1].plot(d["t"], d["rho_min"], label="min rho")
axes[1].legend()
axes[2].plot(d["t"], d["mass"] - d["mass"][0], label="mass drift")
axes[2].plot(d["t"], d["momentum_x"] - d["momentum_x"][0],
             label="momentum drift")
axes[2].legend()
axes[2].set_xlabel("t")
fig.tight_layout()
fig.savefig("monitors.png", dpi=150)
print("wrote monitors.png")
""",
}


def _cmd_plot(args) -> int:
    data = read_timeseries(args.csv)  # validates the file parses
    if "t" not in data:
        raise ConfigError(f"{args.csv} lacks a 't' column")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = str(Path(args.csv).resolve())
    for name, template in _PLOT_SCRIPTS.items():
        (out / name).write_text(template.replace("__CSV__", repr(csv_path)))
    print(f"wrote {', '.join(_PLOT_SCRIPTS)} in {out}")
    return 0


def _build_parser() -> _Parser:
    p = _Parser(prog="euler-align", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_opts(sp):
        sp.add_argument("--config", help="path to a run config file")
        sp.add_argument(
            "--preset",
            help=f"preset name ({', '.join(preset_names())})",
        )
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
        sp.add_argument("--output-dir", help="override the output directory")

    sp = sub.add_parser("run", help="integrate a single trajectory")
    add_config_opts(sp)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("sweep", help="run a parameter grid")
    add_config_opts(sp)
    sp.add_argument("--param", required=True, help="delta | alpha | gamma | beta")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--parallel", type=int, default=1, help="worker processes")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("verify", help="run the oracle verification suite")
    sp.add_argument("--out", default="verification_report.json")
    sp.add_argument("--fast", action="store_true", help="reduced sizes")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("fit", help="fit an exponential decay rate on a CSV")
    sp.add_argument("--csv", required=True)
    sp.add_argument(
        "--columns",
        default="kinetic,l2_rho_dev",
        help="columns to sum before fitting",
    )
    sp.add_argument("--t-start", type=float, default=None)
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("plot", help="emit self-contained plot scripts")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=_cmd_plot)

    return p


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
