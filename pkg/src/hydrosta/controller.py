"""Velocity-free integral-sliding-surface super-twisting controller (IS-STA).

The controller reads position, load pressure and the position reference
only. The sliding variable is

    s = eta - int(v) + (kappa + alpha) e1,    v = -gamma1 e1 - gamma2 eta,

with ``eta = tau P`` and ``alpha = 4 tau E A / V_t``, and the control is

    u = -(V_t / (4 tau E C_q)) [k1 rho |s|^(1/2) sign(s) + gamma1 e1
                                + (gamma2 - 4 E C_qp / V_t) eta + w],
    w' = k2 rho^2 sign(s).

Dead-zone inverse and a critically damped prefilter condition ``u`` before
it reaches the valve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .plant import PlantParams, sign
from .synthesis import SurfaceDesign


class GainDesignError(ValueError):
    pass


def sta_lyapunov(k1: float, k2: float) -> np.ndarray:
    """Closed-form solution of ``A_k' M + M A_k = -I`` for ``A_k = [[-k1, 1], [-k2, 0]]``."""
    b = -0.5
    a = (1.0 - 2.0 * k2 * b) / (2.0 * k1)
    c = (a - k1 * b) / k2
    return np.array([[a, b], [b, c]])


def _sym2_eigs(M: np.ndarray) -> tuple[float, float]:
    a, b, c = M[0, 0], M[0, 1], M[1, 1]
    mid = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    return mid - rad, mid + rad


@dataclass(frozen=True)
class StaGains:
    k1: float
    k2: float
    rho: float
    L: float
    M_k: np.ndarray
    lambda_max_Mk: float

    @property
    def rho_threshold(self) -> float:
        return 2.0 * self.L * self.lambda_max_Mk

    def to_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "rho": self.rho, "L": self.L,
                "M_k": self.M_k.tolist(), "lambda_max_Mk": self.lambda_max_Mk,
                "rho_threshold": self.rho_threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "StaGains":
        return cls(d["k1"], d["k2"], d["rho"], d["L"], np.array(d["M_k"]), d["lambda_max_Mk"])


def design_sta_gains(k1: float, k2: float, L: float, rho: float) -> StaGains:
    """Validate STA gains and the scaling condition ``rho > 2 L lambda_max(M_k)``."""
    if not (k1 > 0 and k2 > 0):
        raise GainDesignError(f"A_k is not Hurwitz for k1={k1}, k2={k2}")
    if L < 0:
        raise GainDesignError("L must be >= 0")
    if rho <= 0:
        raise GainDesignError("rho must be > 0")
    M_k = sta_lyapunov(k1, k2)
    lam_min, lam_max = _sym2_eigs(M_k)
    if lam_min <= 0:
        raise GainDesignError("Lyapunov solution M_k is not positive definite")
    threshold = 2.0 * L * lam_max
    if not rho > threshold:
        raise GainDesignError(f"rho = {rho} violates rho > 2 L lambda_max(M_k) = {threshold:.6g}")
    return StaGains(k1, k2, rho, L, M_k, lam_max)


class ErrorCoordinates(NamedTuple):
    e1: float
    eta: float
    s: float


@dataclass(frozen=True)
class ControllerState:
    v_integral: float = 0.0
    z_integral: float = 0.0
    prefilter: tuple[float, float] = (0.0, 0.0)
    last_u: float = 0.0


def input_gain(params: PlantParams) -> float:
    """``4 tau E C_q / V_t``: gain from ``u`` to the sliding-variable rate."""
    return 4.0 * params.tau * params.E * params.C_q / params.V_t


def error_coordinates(q: float, P: float, r: float, params: PlantParams,
                      design: SurfaceDesign, state: ControllerState) -> ErrorCoordinates:
    e1 = q - r
    eta = params.tau * P
    s = eta - state.v_integral + (design.kappa + design.alpha) * e1
    return ErrorCoordinates(e1, eta, s)


def control_step(coords: ErrorCoordinates, design: SurfaceDesign, gains: StaGains,
                 params: PlantParams, dt: float, state: ControllerState,
                 freeze_integral: bool = False) -> tuple[float, ControllerState]:
    """One sampled IS-STA update; integrals are advanced by explicit Euler.

    ``freeze_integral`` holds the STA integral (anti-windup while the valve
    command is saturated); the virtual-control integral always advances.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    e1, eta, s = coords
    p = params
    b = input_gain(p)
    sgn = sign(s)
    w = state.z_integral
    bracket = (gains.k1 * gains.rho * math.sqrt(abs(s)) * sgn + design.gamma1 * e1
               + (design.gamma2 - 4.0 * p.E * p.C_qp / p.V_t) * eta + w)
    u = -bracket / b
    v = -design.gamma1 * e1 - design.gamma2 * eta
    new_w = w if freeze_integral else w + gains.k2 * gains.rho ** 2 * sgn * dt
    return u, replace(state, v_integral=state.v_integral + v * dt, z_integral=new_w, last_u=u)


def relay_control(coords: ErrorCoordinates, design: SurfaceDesign, params: PlantParams,
                  K_s: float) -> float:
    """First-order relay law that makes the surface reachable: ``s' = -K_s sign(s) + pert``."""
    e1, eta, s = coords
    p = params
    b = input_gain(p)
    return -(K_s * sign(s) + design.gamma1 * e1
             + (design.gamma2 - 4.0 * p.E * p.C_qp / p.V_t) * eta) / b


def advance_virtual_integral(coords: ErrorCoordinates, design: SurfaceDesign,
                             state: ControllerState, dt: float) -> ControllerState:
    v = -design.gamma1 * coords.e1 - design.gamma2 * coords.eta
    return replace(state, v_integral=state.v_integral + v * dt)


def deadzone_inverse(u: float, D_s: float) -> float:
    """Feed-forward dead-zone compensation ``u + D_s/2 sign(u)``."""
    if D_s < 0:
        raise ValueError("D_s must be >= 0")
    return 0.5 * D_s * sign(u) + u


def prefilter_step(u_tilde: float, mu_c: float, dt: float,
                   state: tuple[float, float]) -> tuple[float, tuple[float, float]]:
    """Critically damped lag ``1/(mu_c s + 1)^2`` discretized exactly under zero-order hold.

    Returns the filter output at the end of the step and the new internal
    state ``(f1, f2)``; the output is ``f2``.
    """
    if mu_c <= 0 or dt <= 0:
        raise ValueError("mu_c and dt must be > 0")
    f1, f2 = state
    h = dt / mu_c
    a = math.exp(-h)
    f1n = a * f1 + (1.0 - a) * u_tilde
    f2n = a * f2 + h * a * f1 + (1.0 - a - h * a) * u_tilde
    return f2n, (f1n, f2n)


class ISSTAController:
    """Stateful wrapper around the IS-STA step functions.

    ``step`` consumes measured position, measured load pressure and the
    position reference. There is deliberately no velocity argument.
    """

    def __init__(self, params: PlantParams, design: SurfaceDesign, gains: StaGains, *,
                 deadzone_comp: bool = True, D_s: float = 0.2, prefilter: bool = True,
                 mu_c: float | None = None, u_limit: float = 1.0,
                 initial_v_integral: float = 0.0):
        self.params = params
        self.design = design
        self.gains = gains
        self.deadzone_comp = deadzone_comp
        self.D_s = D_s
        self.use_prefilter = prefilter
        # default: the valve time constant
        self.mu_c = mu_c if mu_c is not None else 1.0 / params.omega_0
        self.u_limit = u_limit
        self.state = ControllerState(v_integral=initial_v_integral)
        self._saturated = False

    def step(self, q: float, P: float, r: float, dt: float) -> dict:
        coords = error_coordinates(q, P, r, self.params, self.design, self.state)
        u, self.state = control_step(coords, self.design, self.gains, self.params, dt,
                                     self.state, freeze_integral=self._saturated)
        u_tilde = deadzone_inverse(u, self.D_s) if self.deadzone_comp else u
        if self.use_prefilter:
            cmd, pf = prefilter_step(u_tilde, self.mu_c, dt, self.state.prefilter)
            self.state = replace(self.state, prefilter=pf)
        else:
            cmd = u_tilde
        self._saturated = abs(cmd) >= self.u_limit
        cmd = min(max(cmd, -self.u_limit), self.u_limit)
        return {"e1": coords.e1, "s": coords.s, "eta": coords.eta, "u": u,
                "u_tilde": u_tilde, "command": cmd, "v_int": self.state.v_integral,
                "z_int": self.state.z_integral}


class RelayController:
    """Relay reachability law with the same surface; used to check reachability."""

    def __init__(self, params: PlantParams, design: SurfaceDesign, K_s: float,
                 u_limit: float = 1.0, initial_v_integral: float = 0.0):
        self.params = params
        self.design = design
        self.K_s = K_s
        self.u_limit = u_limit
        self.state = ControllerState(v_integral=initial_v_integral)

    def step(self, q: float, P: float, r: float, dt: float) -> dict:
        coords = error_coordinates(q, P, r, self.params, self.design, self.state)
        u = relay_control(coords, self.design, self.params, self.K_s)
        self.state = advance_virtual_integral(coords, self.design, self.state, dt)
        cmd = min(max(u, -self.u_limit), self.u_limit)
        return {"e1": coords.e1, "s": coords.s, "eta": coords.eta, "u": u, "u_tilde": u,
                "command": cmd, "v_int": self.state.v_integral, "z_int": 0.0}
