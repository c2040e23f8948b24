"""Post-run verification: performance indices, Lyapunov and reachability
checkers, describing-function chatter prediction and an offline robust
differentiator for velocity estimates used in reports only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import sta_lyapunov
from .synthesis import SurfaceDesign, ultimate_bound, ultimate_radius


class AnalysisError(ValueError):
    pass


class ReachabilityPreconditionError(AnalysisError):
    pass


def _column(trace, name: str) -> np.ndarray:
    try:
        return np.asarray(trace[name], dtype=float)
    except KeyError as exc:
        raise AnalysisError(f"trace has no column {name!r}") from exc


# ---------------------------------------------------------------- indices

@dataclass(frozen=True)
class PerformanceReport:
    M_e: float
    mu_e: float
    sigma_e: float
    ISE: float
    steady_state_pct: float
    window: tuple[float, float]
    N: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def error_indices(e: np.ndarray, dt: float, stroke: float = 0.2,
                  window: tuple[float, float] = (0.0, 0.0)) -> PerformanceReport:
    """Indices of an error sample vector.

    ``ISE`` is the rectangle-rule integral ``sum(e^2) dt``.
    """
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        raise AnalysisError("empty error window")
    if stroke <= 0:
        raise AnalysisError("stroke must be > 0")
    a = np.abs(e)
    mu = float(np.mean(a))
    sigma = float(np.sqrt(np.mean((a - mu) ** 2)))
    return PerformanceReport(M_e=float(np.max(a)), mu_e=mu, sigma_e=sigma,
                             ISE=float(np.sum(e * e) * dt),
                             steady_state_pct=100.0 * mu / stroke,
                             window=(float(window[0]), float(window[1])), N=int(e.size))


def performance_indices(trace, window: tuple[float, float] = (10.0, 14.0),
                        stroke: float = 0.2, error: str = "true") -> PerformanceReport:
    """Indices over the samples with ``window[0] <= t <= window[1]``.

    ``error="true"`` uses ``q_true - r``; ``error="measured"`` uses the
    logged controller error ``e1`` (includes measurement noise).
    """
    t = _column(trace, "t")
    if error == "true":
        e = _column(trace, "q_true") - _column(trace, "r")
    elif error == "measured":
        e = _column(trace, "e1")
    else:
        raise AnalysisError("error must be 'true' or 'measured'")
    t0, t1 = window
    if t1 < t0:
        raise AnalysisError("window end precedes its start")
    mask = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    if not mask.any():
        raise AnalysisError(f"window [{t0}, {t1}] contains no samples")
    dt = float(t[1] - t[0]) if t.size > 1 else 0.0
    return error_indices(e[mask], dt, stroke, window)


def settling_time(t: np.ndarray, y: np.ndarray, y_final: float, t_step: float,
                  y_initial: float, band: float = 0.02) -> float:
    """Time after ``t_step`` until ``y`` stays within ``band * |y_final - y_initial|``.

    Returns ``inf`` when the last sample is outside the band.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = band * abs(y_final - y_initial)
    if tol <= 0:
        raise AnalysisError("step size must be nonzero")
    after = t >= t_step
    outside = after & (np.abs(y - y_final) > tol)
    if not after.any():
        raise AnalysisError("no samples after the step")
    if outside[-1]:
        return math.inf
    if not outside.any():
        return 0.0
    last = int(np.nonzero(outside)[0][-1])
    return float(t[last + 1] - t_step)


# ---------------------------------------------------------------- Lyapunov

def reconstruct_errors(trace, design: SurfaceDesign, v_int0: float = 0.0) -> np.ndarray:
    """Error coordinates ``(e1, e2, e3)`` per sample.

    ``e3 = a23 (int v - (kappa + alpha) e1)`` uses the virtual-control
    integral as seen by the controller at that sample: the logged column
    holds the value after the update, so it is shifted by one sample.
    ``e1`` and ``e2`` are the true position and velocity errors.
    """
    e1 = _column(trace, "q_true") - _column(trace, "r")
    e2 = _column(trace, "qdot_true") - _column(trace, "rdot")
    v_after = _column(trace, "v_int")
    v_before = np.concatenate(([v_int0], v_after[:-1]))
    e3 = design.a23 * (v_before - (design.kappa + design.alpha) * e1)
    return np.column_stack([e1, e2, e3])


@dataclass
class LyapunovReport:
    V: np.ndarray
    V_dot: np.ndarray
    radius: float
    bound: float
    floor: float
    t_start: float
    n_checked: int
    violations: list[float] = field(default_factory=list)
    final_norm: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"radius": self.radius, "bound": self.bound, "floor": self.floor,
                "t_start": self.t_start, "n_checked": self.n_checked,
                "n_violations": len(self.violations), "first_violations": self.violations[:20],
                "final_norm": self.final_norm, "V0": float(self.V[0]) if self.V.size else 0.0}


def lyapunov_check(trace, design: SurfaceDesign, beta_M: float = 0.0, theta_V: float = 0.5,
                   rel_tol: float = 1e-9, floor_rel: float = 1e-5,
                   s_band: float | None = None) -> LyapunovReport:
    """Check that ``V = e'Me`` decreases outside the ultimate-bound ball.

    ``V_dot`` is a centered difference. A sample is a violation when
    ``||e||`` is at least the decrease radius, ``V > floor_rel * max(V)``
    and ``V_dot > rel_tol * max(V)``. The floor absorbs the residual of the
    sampled sliding motion. With ``s_band`` given, checking starts once
    ``|s| <= s_band`` first holds: the reaching phase is not covered by the
    decrease argument.
    """
    t = _column(trace, "t")
    if t.size < 3:
        raise AnalysisError("need at least three samples")
    e = reconstruct_errors(trace, design)
    M = np.asarray(design.M, dtype=float)
    V = np.einsum("ij,jk,ik->i", e, M, e)
    dt = float(t[1] - t[0])
    V_dot = np.gradient(V, dt)
    vmax = float(np.max(V))
    tol = rel_tol * vmax
    floor = floor_rel * vmax
    radius = float(ultimate_radius(M, design.mu_M, beta_M, theta_V))
    bound = float(ultimate_bound(M, design.mu_M, beta_M, theta_V))
    norm = np.linalg.norm(e, axis=1)
    check = (norm >= radius) & (V > floor)
    check[0] = check[-1] = False
    k0 = 0
    if s_band is not None:
        inside = np.abs(_column(trace, "s")) <= s_band
        k0 = int(np.argmax(inside)) if inside.any() else t.size
        check[:k0] = False
    bad = check & (V_dot > tol)
    return LyapunovReport(V=V, V_dot=V_dot, radius=radius, bound=bound, floor=floor,
                          t_start=float(t[min(k0, t.size - 1)]), n_checked=int(check.sum()),
                          violations=[float(x) for x in t[bad]], final_norm=float(norm[-1]))


def sta_lyapunov_homogeneous(k1: float, k2: float) -> np.ndarray:
    """Solution of ``A'M + MA = -I`` for ``A = [[-k1/2, 1/2], [-k2, 0]]``.

    ``A`` is the matrix the scaled STA state ``xi`` actually follows, since
    ``d|s|^(1/2)/ds`` carries a factor one half on the first row only.
    """
    if not (k1 > 0 and k2 > 0):
        raise AnalysisError("k1 and k2 must be > 0")
    A = np.array([[-0.5 * k1, 0.5], [-k2, 0.0]])
    # vec(A'M + MA) = (I kron A' + A' kron I) vec(M)
    K = np.kron(np.eye(2), A.T) + np.kron(A.T, np.eye(2))
    M = np.linalg.solve(K, -np.eye(2).reshape(-1)).reshape(2, 2)
    return 0.5 * (M + M.T)


def sta_lyapunov_values(s: np.ndarray, z: np.ndarray, k1: float, k2: float,
                        rho: float, M: np.ndarray | None = None) -> np.ndarray:
    """``xi' M xi`` with ``xi = (|s|^(1/2) sign(s) / rho, z / rho^2)``.

    ``M`` defaults to ``M_k`` from :func:`hydrosta.controller.sta_lyapunov`.
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    M = sta_lyapunov(k1, k2) if M is None else np.asarray(M, dtype=float)
    x1 = np.sign(s) * np.sqrt(np.abs(s)) / rho
    x2 = z / (rho * rho)
    return M[0, 0] * x1 * x1 + 2.0 * M[0, 1] * x1 * x2 + M[1, 1] * x2 * x2


@dataclass(frozen=True)
class ReducedStaReport:
    ball: float
    reach_time: float
    stays: bool
    decrease_fraction: float
    n_outside: int

    def to_dict(self) -> dict:
        return asdict(self)


def reduced_sta_check(rt, ball: float | None = None,
                      M: np.ndarray | None = None) -> ReducedStaReport:
    """Convergence report for a reduced STA trace.

    ``ball`` defaults to ``10 dt rho^2 k2``. ``decrease_fraction`` is the
    share of steps outside the ball where ``V`` does not increase.
    """
    b = 10.0 * rt.dt * rt.rho ** 2 * rt.k2 if ball is None else ball
    inside = np.abs(rt.s) <= b
    outside_idx = np.nonzero(~inside)[0]
    if outside_idx.size == 0:
        reach, stays = 0.0, True
    elif outside_idx[-1] == rt.s.size - 1:
        reach, stays = math.inf, False
    else:
        # entry into the ball after which it is never left again
        reach, stays = float(rt.t[outside_idx[-1] + 1]), True
    V = sta_lyapunov_values(rt.s, rt.z, rt.k1, rt.k2, rt.rho, M)
    dV = np.diff(V)
    out = ~inside[:-1]
    n_out = int(out.sum())
    frac = float(np.mean(dV[out] <= 0.0)) if n_out else 1.0
    return ReducedStaReport(ball=b, reach_time=reach, stays=stays, decrease_fraction=frac,
                            n_outside=n_out)


# ---------------------------------------------------------------- reachability

@dataclass(frozen=True)
class ReachabilityReport:
    K_bar: float
    band: float
    n_checked: int
    violations: tuple[float, ...]
    reach_time: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = list(self.violations[:20])
        d["n_violations"] = len(self.violations)
        return d


def reachability_margin(K_s: float, L3: float, kappa: float, C_e2: float) -> float:
    """``K_bar = K_s - L3 - |kappa| C_e2``."""
    return K_s - L3 - abs(kappa) * C_e2


def reachability_check(trace, K_s: float, L3: float, kappa: float, C_e2: float,
                       band: float | None = None) -> ReachabilityReport:
    """Verify ``s ds/dt <= -K_bar |s|`` sample-wise outside ``|s| <= band``.

    ``ds/dt`` is the forward difference over one sample; ``band`` defaults to
    ``2 K_s dt``, the switching band of a sampled relay.
    """
    K_bar = reachability_margin(K_s, L3, kappa, C_e2)
    if K_bar <= 0:
        raise ReachabilityPreconditionError(
            f"K_bar = K_s - L3 - |kappa| C_e2 = {K_bar:.6g} <= 0")
    t = _column(trace, "t")
    s = _column(trace, "s")
    if t.size < 2:
        raise AnalysisError("need at least two samples")
    dt = float(t[1] - t[0])
    b = 2.0 * K_s * dt if band is None else band
    s_dot = np.diff(s) / dt
    sk = s[:-1]
    check = np.abs(sk) > b
    bad = check & (sk * s_dot > -K_bar * np.abs(sk))
    in_band = np.abs(s) <= b
    reach = float(t[int(np.argmax(in_band))]) if in_band.any() else math.inf
    return ReachabilityReport(K_bar=K_bar, band=b, n_checked=int(check.sum()),
                              violations=tuple(float(x) for x in t[:-1][bad]),
                              reach_time=reach)


# ---------------------------------------------------------------- chatter

GAMMA_125 = math.gamma(1.25)
GAMMA_175 = math.gamma(1.75)


@dataclass(frozen=True)
class ChatterPrediction:
    gamma_a: float
    a_y: float
    a1: float
    phi_d: float
    omega: float
    T_s: float

    def to_dict(self) -> dict:
        return asdict(self)


def df_coefficient(k1: float, L: float) -> float:
    """Describing-function coefficient of the square-root term, ``N_f(a) = gamma_a a^(-1/2)``."""
    return 2.0 * k1 * L * GAMMA_125 / (math.sqrt(math.pi) * GAMMA_175)


def chatter_residual(pred: ChatterPrediction) -> float:
    """Relative residual of the amplitude quadratic at the returned root."""
    c2 = pred.omega ** 2 / pred.T_s ** 2
    terms = (c2 * pred.a_y ** 2, pred.gamma_a ** 2 * pred.a_y, pred.a1 ** 2)
    return abs(terms[0] + terms[1] - terms[2]) / max(terms)


def chatter_predict(k1: float, k2: float, rho: float, L: float, T_s: float,
                    omega: float) -> ChatterPrediction:
    """Predicted chatter amplitude and phase deficit of the sampled STA loop.

    ``a_y`` is the positive root of
    ``(omega^2 / T_s^2) a^2 + gamma_a^2 a - a1^2 = 0``, evaluated in the
    cancellation-free form ``2 a1^2 / (gamma_a^2 + sqrt(gamma_a^4 + 4 c a1^2))``.
    """
    for name, v in (("k1", k1), ("k2", k2), ("rho", rho), ("L", L), ("T_s", T_s),
                    ("omega", omega)):
        if not (v > 0 and math.isfinite(v)):
            raise AnalysisError(f"{name} must be a finite positive number, got {v}")
    gamma_a = df_coefficient(k1, L)
    a1 = 4.0 * k2 * L * L / (math.pi * omega)
    c2 = omega * omega / (T_s * T_s)
    g2 = gamma_a * gamma_a
    a_y = 2.0 * a1 * a1 / (g2 + math.sqrt(g2 * g2 + 4.0 * c2 * a1 * a1))
    ratio = 64.0 * k2 * k2 * rho * rho / (T_s ** 4 * math.pi ** 2 * g2 * g2)
    # sqrt(1 + x) - 1 written as x / (sqrt(1 + x) + 1) to keep precision for small x
    inner = ratio / (math.sqrt(1.0 + ratio) + 1.0)
    phi_d = 0.5 * math.pi - math.atan(math.sqrt(0.5 * inner))
    return ChatterPrediction(gamma_a=gamma_a, a_y=a_y, a1=a1, phi_d=phi_d, omega=omega, T_s=T_s)


# ---------------------------------------------------------------- differentiator

def red_differentiate(f: np.ndarray, dt: float, L: float = 1.0,
                      gains: tuple[float, float, float] = (3.0, 1.5, 1.1),
                      substeps: int = 10) -> np.ndarray:
    """Second-order robust exact differentiator run offline on samples ``f``.

    ``L`` bounds the second derivative's Lipschitz constant. The samples are
    held between grid points and each interval is split into ``substeps``
    explicit-Euler steps. Returns the first-derivative estimate per sample.
    """
    f = np.asarray(f, dtype=float)
    if dt <= 0 or L <= 0 or substeps < 1:
        raise AnalysisError("need dt > 0, L > 0 and substeps >= 1")
    l2, l1, l0 = gains
    c2, c1, c0 = l2 * L ** (1.0 / 3.0), l1 * L ** 0.5, l0 * L
    h = dt / substeps
    z0, z1, z2 = (float(f[0]), 0.0, 0.0) if f.size else (0.0, 0.0, 0.0)
    out = np.empty(f.size)
    for i, fi in enumerate(f.tolist()):
        out[i] = z1
        for _ in range(substeps):
            d = z0 - fi
            ad = abs(d)
            sg = (d > 0) - (d < 0)
            v0 = -c2 * ad ** (2.0 / 3.0) * sg + z1
            d1 = z1 - v0
            v1 = -c1 * math.sqrt(abs(d1)) * ((d1 > 0) - (d1 < 0)) + z2
            d2 = z2 - v1
            v2 = -c0 * ((d2 > 0) - (d2 < 0))
            z0, z1, z2 = z0 + h * v0, z1 + h * v1, z2 + h * v2
    return out


def red_velocity(trace, L: float = 1.0, gains: tuple[float, float, float] = (3.0, 1.5, 1.1),
                 substeps: int = 10, column: str = "q_meas") -> np.ndarray:
    """Velocity estimate from the measured position column, for plots and reports."""
    t = _column(trace, "t")
    q = _column(trace, column)
    if t.size < 2:
        raise AnalysisError("need at least two samples")
    return red_differentiate(q, float(t[1] - t[0]), L, gains, substeps)
