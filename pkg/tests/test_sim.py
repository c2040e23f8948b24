import math

import numpy as np
import pytest

from hydrosta.config import merge, preset
from hydrosta.sim import (COLUMNS, RNG_NAME, SimTrace, SimulationBlowUp, run, run_reduced_sta,
                          square_wave)


def _zero_cfg(**extra):
    base = {"horizon": 0.5, "noise": {"enabled": False},
            "profile": {"preset": "constant", "args": {"value": 0.0, "t_final": 0.5}}}
    base.update(extra)
    return merge(preset("paper-linear"), base)


def test_noise_std_convention():
    assert preset("paper-nominal").noise.std == pytest.approx(math.sqrt(1e-9 / 5e-6))
    assert preset("paper-nominal").noise.std == pytest.approx(0.01414, abs=1e-5)


def test_zero_equilibrium(linear_design):
    tr = run(_zero_cfg(), design=linear_design)
    for c in COLUMNS:
        if c != "t":
            assert np.all(tr[c] == 0.0), c
    assert np.all(np.diff(tr["t"]) > 0)
    assert tr.meta["rng"] == RNG_NAME


def test_noise_in_measurements_only(linear_design):
    cfg = merge(_zero_cfg(), {"noise": {"enabled": True}})
    tr = run(cfg, design=linear_design)
    assert np.all(tr["q_true"] + tr["noise_q"] == tr["q_meas"])
    assert np.all(tr["P_true"] + tr["noise_P"] == tr["P_meas"])
    assert np.std(tr["noise_q"]) == pytest.approx(cfg.noise.std, rel=0.05)
    # the true position moves only through the closed loop
    assert np.max(np.abs(tr["q_true"])) < np.max(np.abs(tr["noise_q"]))


def test_command_held_between_control_samples(linear_design):
    cfg = _zero_cfg(initial_state=[0.01, 0, 0, 0, 0])
    tr = run(cfg, design=linear_design)
    assert len(tr) == cfg.n_steps
    assert np.allclose(np.diff(tr["t"]), cfg.dt_control)


def _open_loop_endpoint(n_sub):
    """Linear plant under a slow sinusoidal command held over 1e-4 s intervals."""
    from hydrosta.plant import PlantParams, linear_matrices
    p = PlantParams()
    A, B = linear_matrices(p)
    x = np.array([0.0, 0.0, 1e5])
    h = 1e-4 / n_sub
    for k in range(200):
        u = 0.01 * math.sin(0.02 * k)
        f = lambda y: A @ y + B * u  # noqa: E731
        for _ in range(n_sub):
            k1 = f(x)
            k2 = f(x + h / 2 * k1)
            k3 = f(x + h / 2 * k2)
            k4 = f(x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def test_rk4_fourth_order():
    ref = _open_loop_endpoint(64)
    e1 = np.abs(_open_loop_endpoint(4) - ref)
    e2 = np.abs(_open_loop_endpoint(8) - ref)
    i = int(np.argmax(e1 / np.abs(ref)))
    assert e1[i] / e2[i] == pytest.approx(16.0, rel=0.2)


def test_run_rk4_halving(linear_design):
    ends = []
    for dtp in (1e-5, 5e-6, 2.5e-6):
        cfg = merge(preset("paper-linear"), {"horizon": 0.2, "dt_control": 1e-4,
                                             "dt_plant": dtp,
                                             "initial_state": [0.0, 0, 1e5, 0, 0]})
        tr = run(cfg, design=linear_design)
        ends.append(np.array([tr["q_true"][-1], tr["qdot_true"][-1], tr["P_true"][-1]]))
    d1 = np.abs(ends[0] - ends[1])
    d2 = np.abs(ends[1] - ends[2])
    assert d1[2] / d2[2] == pytest.approx(16.0, rel=0.25)


def test_determinism(linear_design, tmp_path):
    cfg = merge(preset("paper-linear"), {"horizon": 1.0, "noise": {"enabled": True}})
    a = run(cfg, design=linear_design)
    b = run(cfg, design=linear_design)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = run(merge(cfg, {"noise": {"seed": 1}}), design=linear_design)
    assert not np.array_equal(a["noise_q"], c["noise_q"])


def test_trace_round_trip(linear_design, tmp_path):
    tr = run(_zero_cfg(initial_state=[0.01, 0, 0, 0, 0]), design=linear_design)
    path, meta = tr.write(tmp_path / "t.csv")
    back = SimTrace.from_csv(path)
    for c in COLUMNS:
        assert np.array_equal(back[c], tr[c])
    assert back.meta["config_hash"] == tr.meta["config_hash"]


def test_blow_up_reports_time(linear_design):
    # a near-supply pressure and a large pushing load drive P past the supply pressure
    cfg = merge(preset("paper-nominal"), {"horizon": 0.5, "initial_state": [0, 0, 9.99e6, 0, 0],
                                          "relay": {"K_s": 1e6}, "controller": "relay"})
    with pytest.raises(SimulationBlowUp) as info:
        run(merge(cfg, {"F_L": [[0.0, 0.5, -1e6]]}), design=linear_design)
    assert info.value.t >= 0.0
    assert info.value.trace is not None


def test_reduced_sta_origin_stays():
    rt = run_reduced_sta(10.0, 1.1, 2.028, lambda t: 0.0, 1e-4, 1.0, s0=0.0, z0=0.0)
    assert np.all(rt.s == 0.0) and np.all(rt.z == 0.0)


def test_reduced_sta_finite_time_and_dt_halving():
    times = []
    for dt in (2e-4, 1e-4):
        rt = run_reduced_sta(10.0, 1.1, 2.028, lambda t: 0.0, dt, 2.0)
        assert np.max(np.abs(rt.s[rt.t >= 1.0])) <= 10 * dt * 100 * 2.028
        # entry time into a fixed ball does not depend on the step size
        times.append(rt.t[np.argmax(np.abs(rt.s) <= 1e-2)])
    assert times[0] == pytest.approx(times[1], rel=0.1)


def test_reduced_sta_threshold_sweep():
    L = 1.347
    threshold = 2 * L * 1.7066963
    f = square_wave(L, 0.5)
    good = run_reduced_sta(1.05 * threshold, 1.1, 2.028, f, 1e-4, 10.0, L=L)
    weak = run_reduced_sta(0.1 * threshold, 1.1, 2.028, f, 1e-4, 10.0, L=L)
    tail = good.t >= 5.0
    assert np.max(np.abs(good.s[tail])) < 10 * 1e-4 * (1.05 * threshold) ** 2 * 2.028
    assert np.max(np.abs(weak.s[tail])) > np.max(np.abs(good.s[tail]))
    with pytest.raises(ValueError):
        run_reduced_sta(1.0, 1.1, 2.028, lambda t: 2 * L, 1e-3, 0.1, L=L)
