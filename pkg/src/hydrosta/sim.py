"""Fixed-step closed-loop simulation.

The plant is integrated with classical RK4 at ``dt_plant``; the controller
runs every ``dt_control`` and its command is held in between. Measurement
noise is drawn once per control sample from a seeded PCG64 generator and
added to the measured position and pressure only.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .baseline import VGSTAController
from .config import ScenarioConfig, config_hash
from .controller import (GainDesignError, ISSTAController, RelayController, StaGains,
                         design_sta_gains, sta_lyapunov, _sym2_eigs)
from .plant import PressureDomainError, nonlinear_rhs, valve_opening
from .synthesis import SurfaceDesign, SynthesisInput, solve_region_lmi
from .trajectory import sample

COLUMNS = ("t", "r", "rdot", "q_meas", "q_true", "qdot_true", "P_meas", "P_true", "e1", "s",
           "u", "u_tilde", "command", "g", "noise_q", "noise_P", "v_int", "z_int")
RNG_NAME = "numpy.random.PCG64"


class SimulationBlowUp(RuntimeError):
    """Non-finite or unphysical plant state; carries the time stamp and partial trace."""

    def __init__(self, t: float, reason: str, trace: "SimTrace | None" = None):
        super().__init__(f"simulation blow-up at t = {t:.6g} s: {reason}")
        self.t = t
        self.reason = reason
        self.trace = trace


@dataclass
class SimTrace:
    columns: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("trace columns differ in length")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def error(self) -> np.ndarray:
        """True tracking error ``q_true - r``."""
        return self.columns["q_true"] - self.columns["r"]

    def window(self, t_start: float, t_end: float) -> np.ndarray:
        t = self.columns["t"]
        return (t >= t_start - 1e-12) & (t <= t_end + 1e-12)

    def to_csv(self, path) -> None:
        names = [c for c in COLUMNS if c in self.columns]
        names += sorted(c for c in self.columns if c not in COLUMNS)
        data = np.column_stack([self.columns[c] for c in names])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")

    def write(self, path) -> tuple[Path, Path]:
        """CSV trace plus a ``.meta.json`` sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_csv(path)
        meta_path = path.with_suffix(".meta.json")
        meta_path.write_text(json.dumps(self.meta, indent=2, sort_keys=True), encoding="utf-8")
        return path, meta_path

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            names = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls({n: data[:, i].copy() for i, n in enumerate(names)}, meta)


def _schedule(items) -> Callable[[float], float]:
    items = tuple(items)

    def value(t: float) -> float:
        total = 0.0
        for t0, t1, v in items:
            if t0 <= t < t1:
                total += v
        return total

    return value


def make_gains(cfg: ScenarioConfig) -> tuple[StaGains, list[str]]:
    """STA gains from the config; a sub-threshold rho is allowed when not enforced."""
    st = cfg.sta
    warnings = []
    try:
        return design_sta_gains(st.k1, st.k2, st.L, st.rho), warnings
    except GainDesignError as exc:
        if st.enforce_scaling or "violates" not in str(exc):
            raise
        warnings.append(str(exc))
    M_k = sta_lyapunov(st.k1, st.k2)
    return StaGains(st.k1, st.k2, st.rho, st.L, M_k, _sym2_eigs(M_k)[1]), warnings


def make_design(cfg: ScenarioConfig) -> SurfaceDesign:
    s = cfg.synthesis
    inp = SynthesisInput(cfg.plant, Psi=s.Psi, h1=s.h1, h2=s.h2, theta=s.theta, margin=s.margin)
    return solve_region_lmi(inp, solver=s.solver)


def make_controller(cfg: ScenarioConfig, design: SurfaceDesign | None, gains: StaGains | None):
    p = cfg.plant
    if cfg.controller == "vgsta":
        v = cfg.vgsta
        return VGSTAController(p, b_hat=v.b_hat, error_reference=v.error_reference,
                               differentiator=v.differentiator, deadzone_comp=v.deadzone_comp,
                               D_s=v.D_s, prefilter=v.prefilter, u_limit=v.u_limit)
    if cfg.controller == "relay":
        return RelayController(p, design, cfg.relay.K_s, u_limit=cfg.relay.u_limit)
    o = cfg.issta
    return ISSTAController(p, design, gains, deadzone_comp=o.deadzone_comp, D_s=o.D_s,
                           prefilter=o.prefilter, mu_c=o.mu_c, u_limit=o.u_limit)


def run(cfg: ScenarioConfig, design: SurfaceDesign | None = None,
        gains: StaGains | None = None) -> SimTrace:
    """Simulate one scenario. Raises :class:`SimulationBlowUp` on divergence."""
    warnings: list[str] = []
    if cfg.controller in ("issta", "relay") and design is None:
        design = make_design(cfg)
    if cfg.controller == "issta" and gains is None:
        gains, warnings = make_gains(cfg)
    ctrl = make_controller(cfg, design, gains)

    p = cfg.plant
    prof = cfg.reference()
    F_L = _schedule(cfg.F_L)
    dP = _schedule(cfg.delta_P)
    n, n_sub = cfg.n_steps, cfg.n_sub
    dtc = cfg.dt_control
    h = dtc / n_sub
    linear = cfg.plant_mode == "linear"
    valve = cfg.valve_dynamics and not linear
    std = cfg.noise.std
    use_q = "q" in cfg.noise.channels
    use_P = "P" in cfg.noise.channels
    rng = np.random.Generator(np.random.PCG64(cfg.noise.seed))

    out = {c: np.zeros(n) for c in COLUMNS}
    x = [float(v) for v in cfg.initial_state]
    if linear:
        x[3] = x[4] = 0.0
    t_start = time.perf_counter()

    kh = 4.0 * p.E / p.V_t

    def rhs(y, U, fl, dp):
        if linear:
            # scalar form of linear_derivative, with F_L in newtons
            return (y[1], (-p.sigma * y[1] + p.A * y[2] - fl) / p.m,
                    kh * (-p.A * y[1] - p.C_qp * y[2] + p.C_q * U) + dp, 0.0, 0.0)
        return nonlinear_rhs(y[1], y[2], y[3], y[4], U, fl, dp, p, valve)

    k = 0
    try:
        for k in range(n):
            t = k * dtc
            r = sample(prof, t)
            draw = rng.standard_normal(2) * std
            nq = float(draw[0]) if use_q else 0.0
            nP = float(draw[1]) if use_P else 0.0
            q_meas = x[0] + nq
            P_meas = x[2] + nP
            o = ctrl.step(q_meas, P_meas, r, dtc)
            U = o["command"]
            if linear:
                g = U
            else:
                g = valve_opening(x[3] if valve else U, p)
            row = (t, r, sample(prof, t, 1), q_meas, x[0], x[1], P_meas, x[2], o["e1"], o["s"],
                   o["u"], o["u_tilde"], U, g, nq, nP, o["v_int"], o["z_int"])
            for c, v in zip(COLUMNS, row):
                out[c][k] = v
            for j in range(n_sub):
                tj = t + j * h
                fl, dp = F_L(tj), dP(tj)
                k1 = rhs(x, U, fl, dp)
                y = [x[i] + 0.5 * h * k1[i] for i in range(5)]
                k2 = rhs(y, U, fl, dp)
                y = [x[i] + 0.5 * h * k2[i] for i in range(5)]
                k3 = rhs(y, U, fl, dp)
                y = [x[i] + h * k3[i] for i in range(5)]
                k4 = rhs(y, U, fl, dp)
                x = [x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                     for i in range(5)]
            if not all(math.isfinite(v) for v in x):
                raise SimulationBlowUp((k + 1) * dtc, "non-finite plant state")
    except PressureDomainError as exc:
        partial = SimTrace({c: v[:k] for c, v in out.items()}, _meta(cfg, warnings, t_start))
        raise SimulationBlowUp(k * dtc, str(exc), partial) from exc
    except SimulationBlowUp as exc:
        exc.trace = SimTrace({c: v[:k + 1] for c, v in out.items()},
                             _meta(cfg, warnings, t_start))
        raise
    meta = _meta(cfg, warnings, t_start)
    meta["final_state"] = list(x)
    if design is not None:
        meta["design"] = {"gamma1": design.gamma1, "gamma2": design.gamma2,
                          "kappa": design.kappa, "alpha": design.alpha, "a23": design.a23}
    if gains is not None:
        meta["sta"] = gains.to_dict()
    return SimTrace(out, meta)


def _meta(cfg: ScenarioConfig, warnings: list[str], t_start: float) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "config_name": cfg.name,
        "controller": cfg.controller,
        "seed": cfg.noise.seed,
        "rng": RNG_NAME,
        "noise_std": cfg.noise.std,
        "versions": {"hydrosta": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "warnings": list(warnings),
        "wall_time_s": time.perf_counter() - t_start,
    }


@dataclass
class ReducedStaTrace:
    t: np.ndarray
    s: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    rho: float
    k1: float
    k2: float
    dt: float


def square_wave(L: float, period: float = 1.0) -> Callable[[float], float]:
    """``+L`` on the first half period, ``-L`` on the second."""
    if period <= 0:
        raise ValueError("period must be > 0")

    def f(t: float) -> float:
        return L if (t % period) < 0.5 * period else -L

    return f


def run_reduced_sta(rho: float, k1: float, k2: float, delta_z: Callable[[float], float],
                    dt: float, horizon: float, s0: float = 1.0, z0: float = 0.0,
                    L: float | None = None) -> ReducedStaTrace:
    """Explicit-Euler simulation of the standalone super-twisting loop

    ``s' = -k1 rho |s|^(1/2) sign(s) + z``, ``z' = -k2 rho^2 sign(s) + delta_z(t)``.

    When ``L`` is given the perturbation is checked against ``|delta_z| <= L``.
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be > 0")
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    s = np.empty(n + 1)
    z = np.empty(n + 1)
    d = np.empty(n + 1)
    s[0], z[0] = s0, z0
    a, b = k1 * rho, k2 * rho * rho
    sk, zk = float(s0), float(z0)
    for i in range(n + 1):
        di = float(delta_z(t[i]))
        if L is not None and abs(di) > L * (1 + 1e-12):
            raise ValueError(f"|delta_z| = {abs(di)} exceeds L = {L} at t = {t[i]}")
        d[i] = di
        if i == n:
            break
        sg = 1.0 if sk > 0 else (-1.0 if sk < 0 else 0.0)
        s_next = sk + dt * (-a * math.sqrt(abs(sk)) * sg + zk)
        zk = zk + dt * (-b * sg + di)
        sk = s_next
        s[i + 1], z[i + 1] = sk, zk
    return ReducedStaTrace(t, s, z, d, rho, k1, k2, dt)
