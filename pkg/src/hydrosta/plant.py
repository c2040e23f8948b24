"""Hydraulic cylinder actuator model.

Servo-valve, orifice, pressure build-up, piston mechanics and Stribeck
friction, plus the linearized three-state model used for control design.

All functions are pure: they take the state and parameters and return
derivatives, with no hidden state. Units are SI throughout; the valve
input and orifice opening are normalized to [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np


class PressureDomainError(ValueError):
    """Load pressure outside the physical range ``|P| <= P_S``."""


def sign(x: float) -> float:
    # sign(0) = 0: deterministic selection from the Filippov set [-1, 1]
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the actuator.

    Only ``P_S`` (10 MPa) and ``stroke`` (0.20 m) describe the reference
    test bench. Every other default is a plausible placeholder for a
    small laboratory cylinder and should be replaced by identified values
    for any quantitative use.

    ``C_q`` and ``C_qp`` default to the linearization at zero opening and
    zero load pressure (see :func:`linearize`).

    The friction set is chosen so that the friction-slope bound
    ``vartheta F_s / m`` equals 0.5 while the breakaway force stays small.
    ``tau`` scales pressure so that the sampled super-twisting residual in
    ``s`` maps to a negligible acceleration through ``A / (tau m)``.
    """

    m: float = 20.0  # kg
    sigma: float = 20.0  # N s/m
    A: float = 1.0e-3  # m^2
    E: float = 1.2e9  # Pa
    V_t: float = 1.5e-3  # m^3
    C_L: float = 2.0e-13  # m^3/(s Pa)
    K_f: float = 3.0e-7  # m^3/(s sqrt(Pa))
    P_S: float = 1.0e7  # Pa
    F_c: float = 0.007  # N
    F_s: float = 0.01  # N
    chi: float = 0.01  # m/s
    iota: float = 2.0
    vartheta: float = 1000.0  # s/m
    omega_0: float = 4000.0  # rad/s
    zeta_v: float = 0.8
    c_d: float = 0.1
    c_s: float = 0.9
    C_qp: float | None = None
    C_q: float | None = None
    tau: float = 3.0e-7
    stroke: float = 0.20  # m

    def __post_init__(self) -> None:
        if self.C_q is None or self.C_qp is None:
            c_q, c_qp = _linearize_raw(self.K_f, self.P_S, 0.0, 0.0)
            if self.C_q is None:
                object.__setattr__(self, "C_q", c_q)
            if self.C_qp is None:
                object.__setattr__(self, "C_qp", c_qp)
        self.validate()

    def validate(self) -> None:
        positive = ("m", "sigma", "A", "E", "V_t", "K_f", "P_S", "vartheta",
                    "chi", "omega_0", "tau", "stroke", "C_q")
        for name in positive:
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not self.F_s > self.F_c >= 0.0:
            raise ValueError(f"need F_s > F_c >= 0, got F_s={self.F_s}, F_c={self.F_c}")
        if not 0.0 <= self.c_d < self.c_s <= 1.0:
            raise ValueError(f"need 0 <= c_d < c_s <= 1, got c_d={self.c_d}, c_s={self.c_s}")
        if self.zeta_v < 0.0:
            raise ValueError("zeta_v must be >= 0")
        if self.iota == 0.0:
            raise ValueError("iota must be nonzero")
        if self.C_L < 0.0 or self.C_qp < 0.0:
            raise ValueError("C_L and C_qp must be >= 0")

    @property
    def alpha(self) -> float:
        """Velocity-to-pressure coupling ``4 tau E A / V_t`` in scaled units."""
        return 4.0 * self.tau * self.E * self.A / self.V_t

    @property
    def a23(self) -> float:
        """Scaled-pressure-to-acceleration gain ``A / (tau m)``."""
        return self.A / (self.tau * self.m)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PlantParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown plant parameters: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class PlantState:
    """Plant state. ``nu``/``nu_dot`` are only integrated with valve dynamics on."""

    q: float = 0.0
    q_dot: float = 0.0
    P: float = 0.0
    nu: float = 0.0
    nu_dot: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.q, self.q_dot, self.P, self.nu, self.nu_dot)

    @classmethod
    def from_sequence(cls, values) -> "PlantState":
        return cls(*(float(v) for v in values))


def valve_opening(nu: float, params: PlantParams) -> float:
    """Orifice opening for a spool position, with overlap dead-zone and saturation."""
    mag = abs(nu)
    if mag >= params.c_s + params.c_d:
        return params.c_s * sign(nu)
    if mag < params.c_d:
        return 0.0
    return nu - params.c_d * sign(nu)


def orifice_flow(g: float, P: float, params: PlantParams) -> float:
    """Load flow through the valve orifice [m^3/s]."""
    if abs(P) > params.P_S:
        raise PressureDomainError(
            f"load pressure {P:.6g} Pa exceeds supply pressure {params.P_S:.6g} Pa")
    sg = sign(g)
    if sg == 0.0:
        return 0.0
    return g * params.K_f * math.sqrt(0.5 * (params.P_S - sg * P))


def friction_force(q_dot: float, params: PlantParams) -> float:
    """Smoothed Coulomb + Stribeck + viscous friction [N]."""
    stribeck = math.exp(-(abs(q_dot) ** params.iota) * params.chi ** (-params.iota))
    return (math.tanh(params.vartheta * q_dot)
            * (params.F_c + (params.F_s - params.F_c) * stribeck)
            + params.sigma * q_dot)


def nonlinear_rhs(q_dot: float, P: float, nu: float, nu_dot: float, U: float,
                  F_L: float, delta_P: float, params: PlantParams,
                  valve_dynamics: bool = True) -> tuple[float, float, float, float, float]:
    """Scalar right-hand side used by the integrator (position does not enter)."""
    p = params
    if valve_dynamics:
        nu_ddot = p.omega_0 * p.omega_0 * (U - nu) - 2.0 * p.zeta_v * p.omega_0 * nu_dot
        g = valve_opening(nu, p)
        dnu = nu_dot
    else:
        nu_ddot = 0.0
        dnu = 0.0
        g = valve_opening(U, p)
    Q = orifice_flow(g, P, p)
    P_dot = 4.0 * p.E / p.V_t * (Q - p.A * q_dot - p.C_L * P) + delta_P
    q_ddot = (p.A * P - friction_force(q_dot, p) - F_L) / p.m
    return (q_dot, q_ddot, P_dot, dnu, nu_ddot)


def nonlinear_derivative(state: PlantState, U: float, F_L: float, params: PlantParams,
                         delta_P: float = 0.0, valve_dynamics: bool = True) -> PlantState:
    """Time derivative of the full nonlinear plant.

    With ``valve_dynamics=False`` the valve command ``U`` is applied to the
    orifice directly (unit gain, no lag) and the spool states stay frozen.
    """
    d = nonlinear_rhs(state.q_dot, state.P, state.nu, state.nu_dot, U, F_L, delta_P,
                      params, valve_dynamics)
    return PlantState(*d)


def linear_derivative(x, u: float, params: PlantParams, delta2: float = 0.0,
                      delta3: float = 0.0, F_L: float = 0.0) -> np.ndarray:
    """Linearized model in ``x = (q, q_dot, P)``.

    ``F_L`` enters the acceleration equation additively, as an acceleration,
    exactly as in the design model; callers holding a force in newtons pass
    ``-F_L / m``.
    """
    p = params
    x1, x2, x3 = (float(v) for v in x)
    k = 4.0 * p.E / p.V_t
    return np.array([
        x2,
        -p.sigma / p.m * x2 + p.A / p.m * x3 + delta2 + F_L,
        -k * p.A * x2 - k * p.C_qp * x3 + k * p.C_q * u + delta3,
    ])


def linear_matrices(params: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """State and input matrices of :func:`linear_derivative`."""
    p = params
    k = 4.0 * p.E / p.V_t
    A = np.array([[0.0, 1.0, 0.0],
                  [0.0, -p.sigma / p.m, p.A / p.m],
                  [0.0, -k * p.A, -k * p.C_qp]])
    B = np.array([0.0, 0.0, k * p.C_q])
    return A, B


def _linearize_raw(K_f: float, P_S: float, g0: float, P0: float) -> tuple[float, float]:
    sg = sign(g0)
    omega = math.sqrt(P_S - P0 * sg)
    C_q = K_f * omega / math.sqrt(2.0)
    # Flow-pressure coefficient in the damping convention -dQ/dP >= 0.
    C_qp = g0 * K_f * sg / (2.0 * math.sqrt(2.0) * omega) if sg != 0.0 else 0.0
    return C_q, C_qp


def linearize(params: PlantParams, g0: float, P0: float) -> tuple[float, float]:
    """Flow gain ``C_q`` and flow-pressure coefficient ``C_qp`` at ``(g0, P0)``.

    ``C_qp`` is returned as ``-dQ/dP`` so that it is nonnegative and enters
    the linear model as damping.
    """
    if abs(P0) >= params.P_S:
        raise PressureDomainError(
            f"operating pressure {P0:.6g} Pa must satisfy |P0| < P_S = {params.P_S:.6g} Pa")
    return _linearize_raw(params.K_f, params.P_S, g0, P0)


def at_operating_point(params: PlantParams, g0: float, P0: float) -> PlantParams:
    C_q, C_qp = linearize(params, g0, P0)
    return replace(params, C_q=C_q, C_qp=C_qp)


def stored_energy(q_dot: float, P: float, params: PlantParams) -> float:
    """Kinetic plus hydraulic compression energy ``m q_dot^2/2 + V_t P^2/(8E)``."""
    return 0.5 * params.m * q_dot * q_dot + params.V_t * P * P / (8.0 * params.E)
