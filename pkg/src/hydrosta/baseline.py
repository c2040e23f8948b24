"""Variable-gain super-twisting baseline (VG-STA) for comparison runs.

Output-feedback scheme: a critically damped reference model, input/output
state-variable filters feeding a norm observer, a fourth-order
variable-gain differentiator of the tracking error, and a super-twisting
law whose gains follow the norm-observer bound.

The law is designed for a unit high-frequency gain from its output to the
third derivative of position. The plant command is the raw law output
divided by ``b_hat``. Dividing by the true gain ``(A/m)(4 E C_q / V_t)``
makes the sampled loop unstable at 2 kHz because ``k1_tilde`` is of order
1e4, so ``b_hat`` defaults to ``INPUT_SCALE`` times that gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .controller import deadzone_inverse, prefilter_step
from .plant import PlantParams, sign


def _spow(x: float, p: float) -> float:
    """Signed power ``|x|^p sign(x)``; ``p = 0`` gives ``sign(x)``."""
    if p == 0.0:
        return sign(x)
    return math.copysign(abs(x) ** p, x) if x != 0.0 else 0.0


@dataclass(frozen=True)
class VgstaParams:
    model_pole: float = 25.0
    filter_pole: float = 5.0
    delta_k: float = 0.01
    eps_k: float = 1.0e-3
    observer_decay: float = 0.8
    observer_bias: float = 10.0
    observer_gain: float = 1.5
    # L_vgst = l_x |x_hat| + l_u |u| + l_0
    l_x: float = 1.2
    l_u: float = 2.0
    l_0: float = 7.0
    # rho_2 = r_e2 |e2_hat| + r_e1 |e1| + x_hat + 1
    r_e2: float = 10.0
    r_e1: float = 5.0
    rho_1: float = 0.0  # unused by the gain formulas, kept for the record

    def __post_init__(self) -> None:
        if self.model_pole <= 0 or self.filter_pole <= 0:
            raise ValueError("filter poles must be > 0")
        if self.eps_k <= 0 or self.delta_k <= 0:
            raise ValueError("eps_k and delta_k must be > 0")


@dataclass(frozen=True)
class VgstaState:
    model: tuple[float, float] = (0.0, 0.0)
    w_u: tuple[float, float] = (0.0, 0.0)
    w_y: tuple[float, float] = (0.0, 0.0)
    e_hat: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    x_hat: float = 0.0
    integral: float = 0.0


def reference_model_step(r: float, dt: float, state: tuple[float, float],
                         pole: float = 25.0) -> tuple[float, tuple[float, float]]:
    """``y_m = pole^2 / (s + pole)^2 r`` with unity DC gain, exact under ZOH."""
    return prefilter_step(r, 1.0 / pole, dt, state)


def io_filter_step(x: float, dt: float, state: tuple[float, float],
                   pole: float = 5.0) -> tuple[float, tuple[float, float]]:
    """``1 / (s + pole)^2`` applied to ``x`` (DC gain ``1/pole^2``)."""
    y, new = prefilter_step(x, 1.0 / pole, dt, state)
    return y / (pole * pole), new


def io_filters_step(u: float, q: float, dt: float, state_u: tuple[float, float],
                    state_y: tuple[float, float], pole: float = 5.0):
    """Returns ``(w_u, w_y, new_state_u, new_state_y)``."""
    w_u, su = io_filter_step(u, dt, state_u, pole)
    w_y, sy = io_filter_step(q, dt, state_y, pole)
    return w_u, w_y, su, sy


def norm_observer_step(w_u: float, w_y: float, u: float, dt: float, x_hat: float,
                       vp: VgstaParams = VgstaParams()) -> tuple[float, float]:
    """Explicit-Euler observer step. Returns ``(x_hat_next, L_vgst)``.

    ``L_vgst`` uses the current ``x_hat`` (before the update).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    L = vp.l_x * abs(x_hat) + vp.l_u * abs(u) + vp.l_0
    x_dot = -vp.observer_decay * x_hat + vp.observer_bias + vp.observer_gain * math.hypot(w_u, w_y)
    return x_hat + dt * x_dot, L


DIFFERENTIATOR_FORMS = ("recursive", "verbatim")


def vg_differentiator_rhs(e_hat, e1: float, L: float,
                          form: str = "recursive") -> tuple[float, float, float, float]:
    """Right-hand side of the fourth-order variable-gain differentiator.

    ``form="recursive"`` feeds each stage with the mismatch against the
    previous stage's output, the cascade in which the fractional powers
    ``3/4, 2/3, 1/2, 0`` and the gain powers ``L^(1/4), L^(1/3), L^(1/2), L``
    are homogeneous. ``form="verbatim"`` drives every stage with
    ``e1_hat - e1``; that variant does not converge to the derivatives and is
    kept only for comparison. Both add the linear ``(e1_hat - e1)`` terms.
    """
    e1h, e2h, e3h, e4h = e_hat
    d = e1h - e1
    if form == "verbatim":
        return (
            -3.0 * L ** 0.25 * _spow(d, 0.75) - 2.0 * d + e2h,
            -2.5 * L ** (1.0 / 3.0) * _spow(d, 2.0 / 3.0) - 3.0 * d + e3h,
            -1.5 * L ** 0.5 * _spow(d, 0.5) - 2.0 * d + e4h,
            -1.1 * L * _spow(d, 0.0) - d,
        )
    if form != "recursive":
        raise ValueError(f"form must be one of {DIFFERENTIATOR_FORMS}")
    v0 = -3.0 * L ** 0.25 * _spow(d, 0.75) + e2h
    v1 = -2.5 * L ** (1.0 / 3.0) * _spow(e2h - v0, 2.0 / 3.0) + e3h
    v2 = -1.5 * L ** 0.5 * _spow(e3h - v1, 0.5) + e4h
    v3 = -1.1 * L * _spow(e4h - v2, 0.0)
    return (v0 - 2.0 * d, v1 - 3.0 * d, v2 - 2.0 * d, v3 - d)


def vg_differentiator_step(e1: float, L: float, dt: float, e_hat, form: str = "recursive"):
    """Explicit-Euler step of the fourth-order variable-gain differentiator."""
    if dt <= 0 or L <= 0:
        raise ValueError("need dt > 0 and L > 0")
    d = vg_differentiator_rhs(e_hat, e1, L, form)
    return tuple(x + dt * dx for x, dx in zip(e_hat, d))


def phi1(sigma: float) -> float:
    return _spow(sigma, 0.5) + sigma


def phi2(sigma: float) -> float:
    return 0.5 * sign(sigma) + 1.5 * _spow(sigma, 0.5) + sigma


def variable_gains(rho2: float, vp: VgstaParams = VgstaParams()) -> tuple[float, float]:
    """``(k1_tilde, k2_tilde)`` from the perturbation bound ``rho_2``."""
    eps = vp.eps_k
    k1 = (vp.delta_k + rho2 * rho2 / (4.0 * eps) + 2.0 * eps * rho2 + eps
          + 2.0 * eps * (1.0 + 4.0 * eps * eps))
    k2 = 1.0 + 4.0 * eps * eps + 2.0 * eps * k1
    return k1, k2


def sliding_estimate(e1: float, e2_hat: float, e3_hat: float, pole: float = 25.0) -> float:
    return e3_hat + 2.0 * pole * e2_hat + pole * pole * e1


def vgsta_control_step(e1: float, e2_hat: float, e3_hat: float, x_hat: float, dt: float,
                       integral: float, vp: VgstaParams = VgstaParams()) -> tuple[float, float, float]:
    """One law evaluation. Returns ``(u_vgsta, new_integral, sigma_hat)``."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    sigma = sliding_estimate(e1, e2_hat, e3_hat, vp.model_pole)
    rho2 = vp.r_e2 * abs(e2_hat) + vp.r_e1 * abs(e1) + x_hat + 1.0
    k1, k2 = variable_gains(rho2, vp)
    u = -k1 * phi1(sigma) - integral
    return u, integral + dt * k2 * phi2(sigma), sigma


INPUT_SCALE = 100.0


def high_frequency_gain(params: PlantParams) -> float:
    """Gain from valve command to the third derivative of position."""
    return params.A / params.m * 4.0 * params.E * params.C_q / params.V_t


class VGSTAController:
    """Stateful VG-STA loop. Reads measured position and the reference only."""

    def __init__(self, params: PlantParams, vp: VgstaParams | None = None, *,
                 b_hat: float | None = None, error_reference: str = "model",
                 deadzone_comp: bool = True, D_s: float = 0.2, prefilter: bool = False,
                 mu_c: float | None = None, u_limit: float = 1.0,
                 differentiator: str = "recursive"):
        if differentiator not in DIFFERENTIATOR_FORMS:
            raise ValueError(f"differentiator must be one of {DIFFERENTIATOR_FORMS}")
        if error_reference not in ("model", "raw"):
            raise ValueError("error_reference must be 'model' or 'raw'")
        self.params = params
        self.vp = vp or VgstaParams()
        self.b_hat = b_hat if b_hat is not None else INPUT_SCALE * high_frequency_gain(params)
        self.error_reference = error_reference
        self.differentiator = differentiator
        self.deadzone_comp = deadzone_comp
        self.D_s = D_s
        self.use_prefilter = prefilter
        self.mu_c = mu_c if mu_c is not None else 1.0 / params.omega_0
        self.u_limit = u_limit
        self.state = VgstaState()
        self._pf = (0.0, 0.0)
        self._last_cmd = 0.0

    def step(self, q: float, P: float, r: float, dt: float) -> dict:
        # P is accepted for a uniform controller interface and ignored.
        st, vp = self.state, self.vp
        y_m, model = reference_model_step(r, dt, st.model, vp.model_pole)
        e1 = q - (y_m if self.error_reference == "model" else r)
        w_u, w_y, su, sy = io_filters_step(self._last_cmd, q, dt, st.w_u, st.w_y, vp.filter_pole)
        x_next, L = norm_observer_step(w_u, w_y, self._last_cmd, dt, st.x_hat, vp)
        e_hat = vg_differentiator_step(e1, L, dt, st.e_hat, self.differentiator)
        raw, integral, sigma = vgsta_control_step(e1, st.e_hat[1], st.e_hat[2], st.x_hat, dt,
                                                  st.integral, vp)
        u = raw / self.b_hat
        u_tilde = deadzone_inverse(u, self.D_s) if self.deadzone_comp else u
        if self.use_prefilter:
            cmd, self._pf = prefilter_step(u_tilde, self.mu_c, dt, self._pf)
        else:
            cmd = u_tilde
        cmd = min(max(cmd, -self.u_limit), self.u_limit)
        self._last_cmd = cmd
        self.state = replace(st, model=model, w_u=su, w_y=sy, e_hat=e_hat, x_hat=x_next,
                             integral=integral)
        return {"e1": e1, "s": sigma, "eta": 0.0, "u": u, "u_tilde": u_tilde, "command": cmd,
                "v_int": 0.0, "z_int": integral, "y_m": y_m, "L_vgst": L, "x_hat": st.x_hat}
