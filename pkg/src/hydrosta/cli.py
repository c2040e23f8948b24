"""Command-line entry point: ``hydrosta <subcommand> ...``.

Every simulation is stored under ``<out>/runs/<config-hash>/``; an identical
config (including the seed) reuses the stored artifacts instead of
overwriting them.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, chatter_predict, lyapunov_check, performance_indices,
                       settling_time)
from .config import (ConfigError, ScenarioConfig, canonical_json, config_hash, load_config,
                     merge, preset, save_config)
from .controller import GainDesignError
from .sim import SimTrace, SimulationBlowUp, make_design, make_gains, run
from .synthesis import InfeasibleDesignError, SynthesisError, bound_psi, compute_L, save_design
from .trajectory import max_abs_derivative

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_BLOWUP = 4

SWEEP_KEYS = {"rho": ("sta", "rho"), "k1": ("sta", "k1"), "k2": ("sta", "k2"),
              "L": ("sta", "L"), "K_s": ("relay", "K_s"), "seed": ("noise", "seed")}


# ---------------------------------------------------------------- helpers

def resolve_config(args) -> ScenarioConfig:
    configs = getattr(args, "config", None) or []
    if isinstance(configs, str):
        configs = [configs]
    if configs:
        cfg = load_config(configs[0])
    else:
        cfg = preset(getattr(args, "preset", None) or "paper-nominal")
    return apply_cli_overrides(cfg, args)


def apply_cli_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    over: dict = {}
    if getattr(args, "seed", None) is not None:
        over["noise"] = {"seed": int(args.seed)}
    if getattr(args, "controller", None):
        over["controller"] = args.controller
    if getattr(args, "out", None):
        over["output_dir"] = str(args.out)
    return merge(cfg, over) if over else cfg


def parse_sweep(text: str) -> tuple[tuple[str, str], list[float]]:
    """``"rho=2,5,10,20"`` or ``"section.key=v1,v2"`` to a key path and values."""
    if "=" not in text:
        raise ConfigError(f"sweep must look like name=v1,v2,...; got {text!r}")
    name, values = text.split("=", 1)
    name = name.strip()
    if name in SWEEP_KEYS:
        path = SWEEP_KEYS[name]
    elif name.count(".") == 1:
        path = tuple(name.split("."))
    else:
        raise ConfigError(f"unknown sweep key {name!r}; use one of {sorted(SWEEP_KEYS)} "
                          "or section.key")
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep values in {text!r}") from exc
    if not vals:
        raise ConfigError("sweep needs at least one value")
    return path, vals


def sweep_config(cfg: ScenarioConfig, path: tuple[str, str], value: float) -> ScenarioConfig:
    section, key = path
    if section == "noise" and key == "seed":
        value = int(value)
    return merge(cfg, {section: {key: value}})


def default_window(cfg: ScenarioConfig) -> tuple[float, float]:
    """Last four seconds of the run, ``[10, 14]`` for the 14 s profile."""
    return (max(0.0, cfg.horizon - 4.0), cfg.horizon)


def step_settling(cfg: ScenarioConfig, trace) -> float | None:
    prof = cfg.profile
    if prof.get("preset") != "step":
        return None
    a = {"q0": 0.0, "q1": 0.05, "t_step": 0.5, **prof.get("args", {})}
    return settling_time(trace["t"], trace["q_true"], a["q1"], a["t_step"], a["q0"])


def run_report(cfg: ScenarioConfig, trace) -> dict:
    window = default_window(cfg)
    perf = performance_indices(trace, window, stroke=cfg.plant.stroke)
    u = np.asarray(trace["u"])
    rep = {
        "config_hash": config_hash(cfg),
        "name": cfg.name,
        "controller": cfg.controller,
        "seed": cfg.noise.seed,
        "performance": perf.to_dict(),
        "max_abs_u": float(np.max(np.abs(u))),
        "max_du": float(np.max(np.abs(np.diff(u)))) if u.size > 1 else 0.0,
        "wall_time_s": trace.meta.get("wall_time_s"),
        "warnings": trace.meta.get("warnings", []),
    }
    ts = step_settling(cfg, trace)
    if ts is not None:
        rep["settling_time"] = ts
    return rep


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default),
                    encoding="utf-8")
    return path


def run_dir(cfg: ScenarioConfig) -> Path:
    return Path(cfg.output_dir) / "runs" / config_hash(cfg)


def simulate_cached(cfg: ScenarioConfig, plot: bool = True) -> tuple[Path, dict, bool]:
    """Run ``cfg`` unless its artifacts exist. Returns ``(dir, report, cached)``."""
    d = run_dir(cfg)
    trace_path, report_path = d / "trace.csv", d / "report.json"
    if trace_path.exists() and report_path.exists():
        return d, json.loads(report_path.read_text()), True
    trace = run(cfg)
    d.mkdir(parents=True, exist_ok=True)
    save_config(cfg, d / "config.yaml")
    trace.write(trace_path)
    report = run_report(cfg, trace)
    write_json(report_path, report)
    if plot:
        from .plots import plot_trace
        plot_trace(trace, d / "panels.svg", title=f"{cfg.name} [{config_hash(cfg)}]")
    return d, report, False


def _sweep_worker(cfg_dict: dict) -> tuple[str, dict | None, str | None]:
    cfg = ScenarioConfig.from_dict(cfg_dict)
    try:
        d, report, _ = simulate_cached(cfg)
        return str(d), report, None
    except SimulationBlowUp as exc:
        return str(run_dir(cfg)), None, str(exc)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6g}"
    return str(v)


def print_table(rows: list[tuple], header: tuple) -> None:
    cols = [header] + [tuple(_fmt(c) for c in r) for r in rows]
    widths = [max(len(str(r[i])) for r in cols) for i in range(len(header))]
    for j, r in enumerate(cols):
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
        if j == 0:
            print("  ".join("-" * w for w in widths))


# ---------------------------------------------------------------- commands

def cmd_synthesize(args) -> int:
    cfg = resolve_config(args)
    design = make_design(cfg)
    gains, warnings = make_gains(cfg)
    p = cfg.plant
    q_ddot = max_abs_derivative(cfg.reference(), 2)
    L_bound = compute_L(0.0, abs(design.kappa), q_ddot)
    out = Path(cfg.output_dir) / "synthesis" / config_hash(cfg)
    out.mkdir(parents=True, exist_ok=True)
    extra = {
        "config_hash": config_hash(cfg),
        "sta": gains.to_dict(),
        "psi_bound": bound_psi(p),
        "L_from_reference": L_bound,
        "warnings": warnings,
        "version": __version__,
    }
    save_design(out / "gains.json", design, extra)
    rows = [
        ("h_slow", abs(design.h1), "pole region"),
        ("h_fast", abs(design.h2), "pole region"),
        ("theta [deg]", math.degrees(design.theta), "pole region"),
        ("Psi", design.Psi, "friction uncertainty"),
        ("Psi bound (friction slope)", bound_psi(p), "friction uncertainty"),
        ("gamma1", design.gamma1, "sliding surface"),
        ("gamma2", design.gamma2, "sliding surface"),
        ("kappa", design.kappa, "sliding surface"),
        ("alpha", design.alpha, "sliding surface"),
        ("mu(M)", design.mu_M, "quadratic stability"),
        ("k1", gains.k1, "STA gains"),
        ("k2", gains.k2, "STA gains"),
        ("lambda_max(M_k)", gains.lambda_max_Mk, "STA gains"),
        ("L (configured)", gains.L, "STA scaling"),
        ("L from reference bound", L_bound, "STA scaling"),
        ("rho threshold 2 L lambda_max", gains.rho_threshold, "STA scaling"),
        ("rho", gains.rho, "STA scaling"),
    ]
    print_table(rows, ("parameter", "value", "design step"))
    eigs = ", ".join(f"{z.real:.4g}{z.imag:+.4g}j" for z in design.closed_loop_eigs)
    print(f"closed-loop eigenvalues: {eigs}")
    print(f"certificate passed: {design.certificate.get('passed')}")
    for w in warnings:
        print(f"warning: {w}")
    print(f"gains written to {out / 'gains.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    if args.sweep:
        return _simulate_sweep(cfg, args)
    try:
        d, report, cached = simulate_cached(cfg, plot=not args.no_plot)
    except SimulationBlowUp as exc:
        d = run_dir(cfg)
        if exc.trace is not None:
            exc.trace.write(d / "partial_trace.csv")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    tag = "cached" if cached else "new"
    print(f"{tag} run {report['config_hash']}: {d}")
    perf = report["performance"]
    rows = [(k, perf[k]) for k in ("M_e", "mu_e", "sigma_e", "ISE", "steady_state_pct", "N")]
    rows += [("max|u|", report["max_abs_u"]), ("max|du|", report["max_du"])]
    if "settling_time" in report:
        rows.append(("settling time [s]", float(report["settling_time"])))
    print(f"window {perf['window']}")
    print_table(rows, ("index", "value"))
    return EXIT_OK


def _simulate_sweep(cfg: ScenarioConfig, args) -> int:
    path, values = parse_sweep(args.sweep)
    cfgs = [sweep_config(cfg, path, v) for v in values]
    jobs = [c.to_dict() for c in cfgs]
    workers = min(len(jobs), os.cpu_count() or 1, args.jobs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    rows, summary, blew = [], [], False
    for v, c, (d, rep, err) in zip(values, cfgs, results):
        if rep is None:
            blew = True
            rows.append((v, "blow-up", "-", "-", d))
            summary.append({"value": v, "error": err, "run": d})
            continue
        ts = rep.get("settling_time", float("nan"))
        rows.append((v, float(ts), rep["max_abs_u"], rep["performance"]["mu_e"], d))
        summary.append({"value": v, "run": d, "settling_time": ts,
                        "max_abs_u": rep["max_abs_u"], "mu_e": rep["performance"]["mu_e"]})
    name = ".".join(path)
    print_table(rows, (name, "settling [s]", "max|u|", "mu_e [m]", "run"))
    tag = config_hash(cfg) + "_" + "-".join(f"{v:g}" for v in values)
    out = Path(cfg.output_dir) / "sweeps" / f"{name}_{tag}"
    write_json(out / "sweep.json", {"parameter": name, "base_hash": config_hash(cfg),
                                    "results": summary})
    if not args.no_plot:
        from .plots import plot_sweep
        traces = [SimTrace.from_csv(Path(s["run"]) / "trace.csv") for s in summary
                  if "error" not in s]
        vals = [s["value"] for s in summary if "error" not in s]
        plot_sweep(traces, vals, out / "sweep.svg", name=path[1])
    print(f"sweep summary written to {out / 'sweep.json'}")
    return EXIT_BLOWUP if blew else EXIT_OK


def cmd_compare(args) -> int:
    configs = args.config or []
    if len(configs) > 2:
        raise ConfigError("compare takes at most two configs")
    if len(configs) == 2:
        a = apply_cli_overrides(load_config(configs[0]), args)
        b = apply_cli_overrides(load_config(configs[1]), args)
    else:
        a = resolve_config(args)
        if a.controller == "vgsta":
            a = merge(a, {"controller": "issta"})
        b = merge(a, {"controller": "vgsta"})
    keys = ("profile", "horizon", "dt_control")
    if any(canonical_json(getattr(a, k)) != canonical_json(getattr(b, k)) for k in keys):
        raise ConfigError("compared configs must share profile, horizon and dt_control")
    try:
        da, ra, _ = simulate_cached(a, plot=not args.no_plot)
        db, rb, _ = simulate_cached(b, plot=not args.no_plot)
    except SimulationBlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    ta, tb = SimTrace.from_csv(da / "trace.csv"), SimTrace.from_csv(db / "trace.csv")
    t_smooth = smooth_window(a)
    sa = performance_indices(ta, t_smooth, a.plant.stroke)
    sb = performance_indices(tb, t_smooth, b.plant.stroke)
    la, lb = f"{a.controller}:{a.name}", f"{b.controller}:{b.name}"
    u_a, u_b = ra["max_abs_u"], rb["max_abs_u"]
    report = {
        "a": {"label": la, "run": str(da), "report": ra, "smooth": sa.to_dict()},
        "b": {"label": lb, "run": str(db), "report": rb, "smooth": sb.to_dict()},
        "smooth_window": list(t_smooth),
        "mu_e_ratio_smooth": max(sa.mu_e, sb.mu_e) / max(min(sa.mu_e, sb.mu_e), 1e-300),
        "control_amplitude": {"a": u_a, "b": u_b, "b_not_smaller": u_b >= u_a},
    }
    out = Path(a.output_dir) / "compare" / f"{config_hash(a)}_{config_hash(b)}"
    write_json(out / "report.json", report)
    if not args.no_plot:
        from .plots import plot_overlay
        plot_overlay([ta, tb], [la, lb], out / "overlay.svg")
    pa, pb = ra["performance"], rb["performance"]
    rows = [(f"{k} {pa['window']}", pa[k], pb[k]) for k in ("M_e", "mu_e", "sigma_e", "ISE",
                                                             "steady_state_pct")]
    rows += [(f"mu_e smooth {list(t_smooth)}", sa.mu_e, sb.mu_e), ("max|u|", u_a, u_b)]
    print_table(rows, ("index", la, lb))
    if u_b < u_a:
        print("note: second controller's max|u| is below the first's in this realization")
    print(f"comparison written to {out / 'report.json'}")
    return EXIT_OK


def smooth_window(cfg: ScenarioConfig) -> tuple[float, float]:
    """From 0 up to the sample before the first position jump of the reference."""
    prof = cfg.reference()
    jumps = [t for t in prof.discontinuities(0) if 0.0 < t <= cfg.horizon]
    end = jumps[0] - cfg.dt_control if jumps else cfg.horizon
    return (0.0, end)


def cmd_analyze(args) -> int:
    trace = SimTrace.from_csv(args.trace)
    window = tuple(args.window) if args.window else (10.0, 14.0)
    report = {"trace": str(args.trace),
              "performance": performance_indices(trace, window, args.stroke).to_dict()}
    if args.lyapunov:
        cfg = resolve_config(args)
        design = make_design(cfg)
        s_band = 10.0 * cfg.sta.k2 * cfg.sta.rho ** 2 * cfg.dt_control ** 2
        lyap = lyapunov_check(trace, design, s_band=s_band)
        report["lyapunov"] = lyap.to_dict()
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    if args.out:
        write_json(Path(args.out), report)
    print(text)
    return EXIT_OK


def cmd_chatter(args) -> int:
    cfg = resolve_config(args)
    k1 = args.k1 if args.k1 is not None else cfg.sta.k1
    k2 = args.k2 if args.k2 is not None else cfg.sta.k2
    rho = args.rho if args.rho is not None else cfg.sta.rho
    L = args.L if args.L is not None else cfg.sta.L
    T_s = args.Ts if args.Ts is not None else 1.0 / abs(cfg.synthesis.h2)
    omega = args.omega if args.omega is not None else 1.0 / T_s
    pred = chatter_predict(k1, k2, rho, L, T_s, omega)
    rows = [(k, v) for k, v in pred.to_dict().items()]
    print_table(rows, ("quantity", "value"))
    if args.decades:
        print()
        sweep = []
        for i in range(args.decades * 4 + 1):
            ts = T_s * 10.0 ** (-i / 4.0)
            sweep.append((ts, chatter_predict(k1, k2, rho, L, ts, omega).phi_d))
        print_table(sweep, ("T_s [s]", "phi_d [rad]"))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_trace
    trace = SimTrace.from_csv(args.trace)
    out = Path(args.out) if args.out else Path(args.trace).with_suffix(".svg")
    plot_trace(trace, out, title=Path(args.trace).stem)
    print(f"plot written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydrosta",
                                     description="IS-STA synthesis and simulation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario(p, multi=False):
        if multi:
            p.add_argument("--config", action="append", help="YAML config (repeatable)")
        else:
            p.add_argument("--config", help="YAML config file")
        p.add_argument("--preset", help="named preset (default paper-nominal)")
        p.add_argument("--seed", type=int, help="noise seed override")
        p.add_argument("--out", help="output directory (default from config)")

    p = sub.add_parser("synthesize", help="solve the pole-region LMI and check STA gains")
    scenario(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="run a closed-loop scenario")
    scenario(p)
    p.add_argument("--controller", choices=("issta", "vgsta", "relay"))
    p.add_argument("--sweep", help="parameter sweep, e.g. rho=2,5,10,20")
    p.add_argument("--jobs", type=int, default=4, help="parallel sweep workers")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="IS-STA against VG-STA (or two configs)")
    scenario(p, multi=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="performance indices of a stored trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"))
    p.add_argument("--stroke", type=float, default=0.2)
    p.add_argument("--lyapunov", action="store_true",
                   help="also run the Lyapunov decrease check (needs the scenario)")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("chatter", help="describing-function chatter prediction")
    p.add_argument("--config")
    p.add_argument("--preset")
    for name in ("k1", "k2", "rho", "L", "Ts", "omega"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--decades", type=int, default=0,
                   help="also tabulate phi_d while shrinking T_s over this many decades")
    p.set_defaults(func=cmd_chatter)

    p = sub.add_parser("plot", help="render SVG panels for a stored trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GainDesignError, AnalysisError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleDesignError, SynthesisError) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationBlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
