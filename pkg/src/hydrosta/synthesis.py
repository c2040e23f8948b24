"""Sliding-surface gain synthesis by LMI pole-region placement.

The virtual-control error dynamics are ``e' = (A_n - B K) e + psi H e`` with
``|psi| <= Psi``. A common quadratic Lyapunov matrix ``M = Y^{-1}`` is
searched together with ``N = K Y`` so that

* ``He((A_n + psi H - B K) Y) < 0`` at ``psi = -Psi`` and ``psi = +Psi``
  (quadratic stability for every admissible ``psi``), and
* the nominal closed-loop eigenvalues lie in the strip
  ``-h_fast <= Re(lambda) <= -h_slow`` and in the cone
  ``|Im(lambda)| <= tan(theta) |Re(lambda)|``.

The numerical SDP is handed to cvxpy; every returned design carries a
certificate recomputed from ``(M, K)`` alone with numpy eigensolves.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .plant import PlantParams


class SynthesisError(RuntimeError):
    pass


class InfeasibleDesignError(SynthesisError):
    def __init__(self, message: str, worst_constraint: str | None = None,
                 worst_value: float | None = None):
        super().__init__(message)
        self.worst_constraint = worst_constraint
        self.worst_value = worst_value


class ConditioningError(SynthesisError):
    pass


THETA_STEP = math.pi / 40
THETA_CAP = math.pi / 4


def build_matrices(params: PlantParams, Psi: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nominal error-system matrices ``(A_n, B, H)``.

    ``Psi`` only scales ``H`` inside the inequalities; it is accepted here to
    mirror how the three matrices are always used together.
    """
    if Psi < 0:
        raise ValueError("Psi must be >= 0")
    A_n = np.array([[0.0, 1.0, 0.0],
                    [0.0, -params.sigma / params.m, 1.0],
                    [0.0, 0.0, 0.0]])
    B = np.array([[0.0], [0.0], [1.0]])
    H = np.zeros((3, 3))
    H[1, 1] = 1.0
    return A_n, B, H


def assign_h2(y_d: float, y_bar2: float) -> float:
    """Fast strip edge from the 63.2 % rise-time construction, ``1 / T_h2``."""
    radicand = (0.632 * y_d) ** 2 - y_bar2 ** 2
    if y_bar2 < 0 or radicand <= 0:
        raise ValueError(f"need 0.632*y_d > y_bar2 >= 0, got y_d={y_d}, y_bar2={y_bar2}")
    return 1.0 / math.sqrt(radicand)


def assign_h1(params: PlantParams, T_h1: float) -> tuple[float, float]:
    """Critically damped mechanical loop with time constant ``T_h1``.

    Returns ``(sigma_h, h1)`` where ``h1 = -1/T_h1`` is the (negative) pole.
    """
    if T_h1 <= 0:
        raise ValueError("T_h1 must be > 0")
    m, tau, sigma = params.m, params.tau, params.sigma
    sigma_h = 2.0 * m * tau / T_h1 - sigma * tau
    if sigma_h < 0:
        warnings.warn(f"sigma_h = {sigma_h:.3g} < 0: requested response is slower than the "
                      "open-loop mechanics", RuntimeWarning, stacklevel=2)
    h1 = -(sigma * tau + sigma_h) / (2.0 * tau * m)
    return sigma_h, h1


def psi_function(x2, params: PlantParams):
    """Friction slope ``psi(x2)`` in acceleration units (divided by ``m``)."""
    x2 = np.asarray(x2, dtype=float)
    p = params
    bracket = p.F_c + (p.F_s - p.F_c) * np.exp(-np.abs(x2) ** p.iota * p.chi ** (-p.iota))
    return np.tanh(p.vartheta * x2) * bracket / (x2 * p.m)


def bound_psi(params: PlantParams) -> float:
    """Supremum of ``psi``, attained as ``x2 -> 0``: ``vartheta F_s / m``."""
    return params.vartheta * params.F_s / params.m


def compute_L(L3: float, kappa: float, q_ddot_bar: float) -> float:
    """STA perturbation bound ``L = L3 + kappa * q_ddot_bar`` (pass ``|kappa|``)."""
    if L3 < 0 or kappa < 0 or q_ddot_bar < 0:
        raise ValueError("L3, kappa and q_ddot_bar must all be >= 0")
    return L3 + kappa * q_ddot_bar


def ultimate_bound(M: np.ndarray, mu_M: float, beta_M: float, theta_V: float = 0.5) -> float:
    """Ultimate bound on ``||e||`` under a matched-free perturbation ``|beta| <= beta_M``."""
    if not 0.0 < theta_V < 1.0:
        raise ValueError("theta_V must lie in (0, 1)")
    if mu_M <= 0:
        raise ValueError("mu_M must be > 0")
    eig = np.linalg.eigvalsh(np.asarray(M, dtype=float))
    if eig[0] <= 0:
        raise ValueError("M must be positive definite")
    return 2.0 * eig[-1] ** 1.5 * beta_M / (theta_V * mu_M * math.sqrt(eig[0]))


def ultimate_radius(M: np.ndarray, mu_M: float, beta_M: float, theta_V: float = 0.5) -> float:
    """Radius outside which ``V = e'Me`` must decrease: ``2 lambda_max beta_M / (theta_V mu)``."""
    lam_max = float(np.linalg.eigvalsh(np.asarray(M, dtype=float))[-1])
    return 2.0 * lam_max * beta_M / (theta_V * mu_M)


@dataclass(frozen=True)
class SynthesisInput:
    params: PlantParams
    Psi: float = 0.5
    h1: float = 1.0
    h2: float = 5.0
    theta: float | None = math.pi / 20
    margin: float = 1e-8

    def __post_init__(self) -> None:
        if self.Psi < 0:
            raise ValueError("Psi must be >= 0")
        if not 0 < self.h_slow < self.h_fast:
            raise ValueError(f"empty strip: need 0 < |h1| < |h2|, got h1={self.h1}, h2={self.h2}")
        if self.theta is not None and not 0 <= self.theta < math.pi / 2:
            raise ValueError("theta must lie in [0, pi/2)")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")

    # Both sign conventions for the strip edges are accepted; only magnitudes matter.
    @property
    def h_slow(self) -> float:
        return abs(self.h1)

    @property
    def h_fast(self) -> float:
        return abs(self.h2)


@dataclass(frozen=True)
class SurfaceDesign:
    M: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    gamma1: float
    gamma2: float
    kappa: float
    alpha: float
    mu_M: float
    closed_loop_eigs: np.ndarray
    h1: float
    h2: float
    theta: float
    Psi: float
    a23: float
    solver: str = ""
    certificate: dict = field(default_factory=dict)

    def R_from_gains(self) -> np.ndarray:
        """Rebuild the feedback row from the surface parameters."""
        return np.array([self.a23 * self.gamma1, self.a23 * (self.kappa + self.alpha), self.gamma2])

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(), "Y": self.Y.tolist(), "K": self.K.tolist(),
            "gamma1": self.gamma1, "gamma2": self.gamma2, "kappa": self.kappa,
            "alpha": self.alpha, "mu_M": self.mu_M, "a23": self.a23,
            "closed_loop_eigs": [[float(z.real), float(z.imag)] for z in self.closed_loop_eigs],
            "h1": self.h1, "h2": self.h2, "theta": self.theta, "Psi": self.Psi,
            "solver": self.solver, "certificate": self.certificate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurfaceDesign":
        eigs = np.array([complex(re, im) for re, im in d["closed_loop_eigs"]])
        return cls(M=np.array(d["M"]), Y=np.array(d["Y"]), K=np.array(d["K"]),
                   gamma1=d["gamma1"], gamma2=d["gamma2"], kappa=d["kappa"], alpha=d["alpha"],
                   mu_M=d["mu_M"], closed_loop_eigs=eigs, h1=d["h1"], h2=d["h2"],
                   theta=d["theta"], Psi=d["Psi"], a23=d["a23"], solver=d.get("solver", ""),
                   certificate=d.get("certificate", {}))


def lyapunov_lhs(M: np.ndarray, K: np.ndarray, A_n: np.ndarray, B: np.ndarray,
                 H: np.ndarray, psi: float) -> np.ndarray:
    """``M A_n + A_n'M - K'B'M - MBK + psi (H'M + MH)``."""
    K = np.atleast_2d(K)
    Acl = A_n - B @ K
    return M @ Acl + Acl.T @ M + psi * (H.T @ M + M @ H)


def decrease_rate(M: np.ndarray, K: np.ndarray, params: PlantParams, Psi: float) -> float:
    """``mu(M)``: smallest eigenvalue of the negated Lyapunov LHS over ``psi = +-Psi``."""
    A_n, B, H = build_matrices(params, Psi)
    return min(float(np.linalg.eigvalsh(-lyapunov_lhs(M, K, A_n, B, H, s))[0])
               for s in (-Psi, Psi))


def in_region(eigs, h_slow: float, h_fast: float, theta: float, tol: float = 1e-6) -> bool:
    for lam in np.atleast_1d(eigs):
        re, im = float(np.real(lam)), float(np.imag(lam))
        if re > -h_slow + tol or re < -h_fast - tol:
            return False
        if abs(im) > math.tan(theta) * abs(re) + tol:
            return False
    return True


def certify(M: np.ndarray, K: np.ndarray, params: PlantParams, Psi: float, h_slow: float,
            h_fast: float, theta: float, margin: float, tol: float = 1e-6) -> dict:
    """Recompute every feasibility check from ``(M, K)`` alone."""
    A_n, B, H = build_matrices(params, Psi)
    K = np.atleast_2d(K)
    Y = np.linalg.inv(M)
    lam_Y = float(np.linalg.eigvalsh((Y + Y.T) / 2)[0])
    decrease = {f"{s:+g}": float(np.linalg.eigvalsh(lyapunov_lhs(M, K, A_n, B, H, s))[-1])
                for s in (-Psi, Psi)}
    threshold = -margin * float(np.linalg.norm(A_n, 2))
    eigs = np.linalg.eigvals(A_n - B @ K)
    report = {
        "lambda_min_Y": lam_Y,
        "decrease_lambda_max": decrease,
        "decrease_threshold": threshold,
        "closed_loop_eigs": [[float(z.real), float(z.imag)] for z in eigs],
        "cond_Y": float(np.linalg.cond(Y)),
        "checks": {
            "Y_positive_definite": lam_Y > 0,
            "decrease_negative": all(v < threshold for v in decrease.values()),
            "eigs_in_region": in_region(eigs, h_slow, h_fast, theta, tol),
        },
    }
    report["passed"] = all(report["checks"].values())
    return report


def _solve_sdp(A_n, B, H, Psi, h_slow, h_fast, theta, solver):
    import cvxpy as cp

    n = A_n.shape[0]
    I = np.eye(n)
    Y = cp.Variable((n, n), symmetric=True)
    N = cp.Variable((1, n))
    t = cp.Variable()

    def he(W):
        return W @ Y + Y @ W.T - B @ N - N.T @ B.T

    S = he(A_n)
    C12 = A_n @ Y - Y @ A_n.T - B @ N + N.T @ B.T
    cone = cp.bmat([[math.sin(theta) * S, math.cos(theta) * C12],
                    [math.cos(theta) * C12.T, math.sin(theta) * S]])
    named = {
        "Y_positive_definite": -Y,
        "lyapunov_psi_minus": he(A_n - Psi * H),
        "lyapunov_psi_plus": he(A_n + Psi * H),
        "strip_slow_edge": S + 2 * h_slow * Y,
        "strip_fast_edge": -(S + 2 * h_fast * Y),
        "cone": (cone + cone.T) / 2,
    }
    constraints = [cp.trace(Y) == 1]
    constraints += [expr << -t * np.eye(expr.shape[0]) for expr in named.values()]
    problem = cp.Problem(cp.Maximize(t), constraints)
    problem.solve(solver=solver)
    if Y.value is None:
        raise InfeasibleDesignError(f"SDP solver returned status {problem.status!r}")
    worst = {k: float(np.linalg.eigvalsh((v.value + v.value.T) / 2)[-1]) for k, v in named.items()}
    return np.array(Y.value), np.array(N.value), float(t.value), worst


def solve_region_lmi(inp: SynthesisInput, solver: str = "CLARABEL") -> SurfaceDesign:
    """Find ``(Y, N)`` meeting the region and robust-stability LMIs and recover the gains.

    With ``inp.theta`` set to ``None`` the cone angle is searched from 0 in
    ``pi/40`` steps up to ``pi/4``, keeping the first feasible value.
    """
    if inp.theta is None:
        return search_theta(inp, solver=solver)
    params = inp.params
    A_n, B, H = build_matrices(params, inp.Psi)
    Y, N, t, worst = _solve_sdp(A_n, B, H, inp.Psi, inp.h_slow, inp.h_fast, inp.theta, solver)
    if t <= 0:
        name = max(worst, key=worst.get)
        raise InfeasibleDesignError(
            f"no design in the requested region (best slack {t:.3g}); most violated "
            f"constraint: {name} (max eigenvalue {worst[name]:.3g})", name, worst[name])
    Y = (Y + Y.T) / 2
    cond = float(np.linalg.cond(Y))
    if cond > 1e10:
        raise ConditioningError(f"Y is ill-conditioned (cond = {cond:.3g})")
    M = np.linalg.inv(Y)
    M = (M + M.T) / 2
    K = N @ M
    cert = certify(M, K, params, inp.Psi, inp.h_slow, inp.h_fast, inp.theta, inp.margin)
    if not cert["passed"]:
        failed = [k for k, ok in cert["checks"].items() if not ok]
        raise InfeasibleDesignError(f"solver output failed certificate checks: {failed}",
                                    failed[0], None)
    k1, k2, k3 = (float(v) for v in K.ravel())
    scale = params.tau * params.m / params.A
    alpha = params.alpha
    return SurfaceDesign(
        M=M, Y=Y, K=K.ravel(),
        gamma1=scale * k1, gamma2=k3, kappa=scale * k2 - alpha, alpha=alpha,
        mu_M=decrease_rate(M, K, params, inp.Psi),
        closed_loop_eigs=np.linalg.eigvals(A_n - B @ np.atleast_2d(K)),
        h1=inp.h1, h2=inp.h2, theta=inp.theta, Psi=inp.Psi, a23=params.a23,
        solver=solver, certificate=cert,
    )


def search_theta(inp: SynthesisInput, solver: str = "CLARABEL") -> SurfaceDesign:
    """Smallest feasible cone angle on the ``pi/40`` grid, capped at ``pi/4``."""
    last: InfeasibleDesignError | None = None
    n_steps = int(round(THETA_CAP / THETA_STEP))
    for i in range(n_steps + 1):
        trial = SynthesisInput(inp.params, inp.Psi, inp.h1, inp.h2, i * THETA_STEP, inp.margin)
        try:
            return solve_region_lmi(trial, solver=solver)
        except InfeasibleDesignError as exc:
            last = exc
    raise InfeasibleDesignError(f"infeasible for every theta up to pi/4: {last}",
                                getattr(last, "worst_constraint", None),
                                getattr(last, "worst_value", None))


def save_design(path, design: SurfaceDesign, extra: dict | None = None) -> None:
    payload = {"surface": design.to_dict()}
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_design(path) -> SurfaceDesign:
    with open(path, encoding="utf-8") as fh:
        return SurfaceDesign.from_dict(json.load(fh)["surface"])
