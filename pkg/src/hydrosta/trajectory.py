"""Piecewise reference profiles: quintic moves, holds, ramps and steps."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

KINDS = ("quintic", "hold", "ramp", "step")
MAX_ORDER = 4


class HorizonError(ValueError):
    """Sample time outside the profile horizon."""


def quintic_segment(q_start: float, q_end: float, t_start: float, t_end: float) -> np.ndarray:
    """Rest-to-rest quintic coefficients in the local time ``t - t_start``.

    Returns ``c`` with ``r(t) = sum(c[k] * (t - t_start)**k)``.
    """
    if not t_end > t_start:
        raise ValueError(f"need t_end > t_start, got [{t_start}, {t_end}]")
    T = t_end - t_start
    h = q_end - q_start
    return np.array([q_start, 0.0, 0.0, 10.0 * h / T**3, -15.0 * h / T**4, 6.0 * h / T**5])


def _poly_derivative(coeffs: np.ndarray, order: int) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    for _ in range(order):
        if c.size <= 1:
            return np.zeros(1)
        c = c[1:] * np.arange(1, c.size)
    return c


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    kind: str
    q_start: float
    q_end: float

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.t_end > self.t_start:
            raise ValueError(f"segment [{self.t_start}, {self.t_end}] is empty")
        if self.kind in ("hold", "step") and self.q_start != self.q_end:
            raise ValueError(f"{self.kind} segment needs q_start == q_end")

    @property
    def coeffs(self) -> np.ndarray:
        if self.kind == "quintic":
            return quintic_segment(self.q_start, self.q_end, self.t_start, self.t_end)
        if self.kind == "ramp":
            slope = (self.q_end - self.q_start) / (self.t_end - self.t_start)
            return np.array([self.q_start, slope])
        return np.array([self.q_start])

    def evaluate(self, t: float, order: int = 0) -> float:
        c = _poly_derivative(self.coeffs, order)
        return float(np.polynomial.polynomial.polyval(t - self.t_start, c))

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "kind": self.kind,
                "q_start": self.q_start, "q_end": self.q_end}


@dataclass(frozen=True)
class ReferenceProfile:
    """Contiguous segment list covering ``[0, T_end]``.

    Sampling at a segment boundary returns the right limit. Derivatives
    across a step or a ramp corner are reported from the segment on the
    right, never as impulses.
    """

    segments: tuple[Segment, ...]
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("profile needs at least one segment")
        if segs[0].t_start != 0.0:
            raise ValueError("profile must start at t = 0")
        for a, b in zip(segs, segs[1:]):
            if a.t_end != b.t_start:
                raise ValueError(f"segments not contiguous at t = {a.t_end} / {b.t_start}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", tuple(s.t_start for s in segs))

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def segment_at(self, t: float) -> Segment:
        if t < 0.0 or t > self.t_end:
            raise HorizonError(f"t = {t} outside [0, {self.t_end}]")
        i = bisect.bisect_right(self._starts, t) - 1
        return self.segments[i]

    def discontinuities(self, order: int = 0) -> list[float]:
        """Boundary times where the order-th derivative jumps."""
        out = []
        for a, b in zip(self.segments, self.segments[1:]):
            if abs(a.evaluate(a.t_end, order) - b.evaluate(b.t_start, order)) > 1e-12:
                out.append(b.t_start)
        return out

    def is_smooth_at(self, t: float) -> bool:
        """False at a position discontinuity (a step)."""
        return t not in self.discontinuities(0)

    def __call__(self, t: float, order: int = 0) -> float:
        return sample(self, t, order)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.segments]

    @classmethod
    def from_list(cls, items: list[dict]) -> "ReferenceProfile":
        return cls(tuple(Segment(**{k: float(v) if k != "kind" else v for k, v in it.items()})
                         for it in items))


def sample(profile: ReferenceProfile, t: float, order: int = 0) -> float:
    """Order-th derivative of the reference at ``t`` (right limit at boundaries)."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
    return profile.segment_at(t).evaluate(t, order)


def sample_array(profile: ReferenceProfile, t: np.ndarray, order: int = 0) -> np.ndarray:
    return np.array([sample(profile, float(ti), order) for ti in np.asarray(t)])


def paper_profile(ramp_target: float = 0.06, step_target: float = 0.1,
                  t_final: float = 14.0) -> ReferenceProfile:
    """The evaluation profile: two quintic moves, a ramp and a final step.

    0 -> 0.1 m on [0, 2], hold to 3 s, 0.1 -> 0.02 m on [3, 5], hold to 6 s,
    ramp to ``ramp_target`` on [6, 8], hold to 9 s, then a step to
    ``step_target`` held until ``t_final``.
    """
    if t_final <= 9.0:
        raise ValueError("t_final must exceed the step time 9 s")
    return ReferenceProfile((
        Segment(0.0, 2.0, "quintic", 0.0, 0.1),
        Segment(2.0, 3.0, "hold", 0.1, 0.1),
        Segment(3.0, 5.0, "quintic", 0.1, 0.02),
        Segment(5.0, 6.0, "hold", 0.02, 0.02),
        Segment(6.0, 8.0, "ramp", 0.02, ramp_target),
        Segment(8.0, 9.0, "hold", ramp_target, ramp_target),
        Segment(9.0, t_final, "step", step_target, step_target),
    ))


def step_profile(q0: float = 0.0, q1: float = 0.05, t_step: float = 0.5,
                 t_final: float = 4.0) -> ReferenceProfile:
    """Single set-point step, used for step-response comparisons."""
    return ReferenceProfile((
        Segment(0.0, t_step, "hold", q0, q0),
        Segment(t_step, t_final, "step", q1, q1),
    ))


def constant_profile(value: float, t_final: float) -> ReferenceProfile:
    return ReferenceProfile((Segment(0.0, t_final, "hold", value, value),))


def max_abs_derivative(profile: ReferenceProfile, order: int, n: int = 20001) -> float:
    """Dense-grid estimate of ``max |r^(order)|``, e.g. the acceleration bound."""
    t = np.linspace(0.0, profile.t_end, n)
    return float(np.max(np.abs(sample_array(profile, t, order))))


PRESETS = {
    "paper": paper_profile,
    "step": step_profile,
}
