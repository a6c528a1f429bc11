import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from capsule_drive.fourier import _law_from_series, reconstruct
from capsule_drive.model import SLIP, STICK, SystemParams, friction_force
from capsule_drive.simulator import (
    ActuatorLimits,
    CapsuleState,
    ConstraintReport,
    Trajectory,
    check_constraints,
    distance_and_report,
    simulate,
    step,
)
from conftest import draw_feasible_law, draw_params

SYS = SystemParams()
LIM = ActuatorLimits()
TWO_PI = 2 * math.pi


def zero_law():
    return _law_from_series(0.0, np.array([0.0]), np.array([0.0]), 1.0)


def test_zero_control_stays_at_rest():
    traj, report, dist = simulate(zero_law(), SYS, 4 * TWO_PI)
    assert dist == 0.0
    assert np.all(traj.z == 0.0)
    assert np.all(traj.z_dot == 0.0)
    assert np.all(traj.mode == STICK)
    assert report.feasible
    assert report.min_contact_load == pytest.approx(15.5)


def test_trajectory_covers_horizon():
    traj, _, _ = simulate(zero_law(), SYS, 5.0, h=1e-2)
    assert traj.tau[0] == 0.0
    assert traj.tau[-1] == pytest.approx(5.0, abs=1e-12)
    assert np.all(np.diff(traj.tau) > 0)


def test_step_stick_without_breakaway():
    state = CapsuleState(0.0, 0.3, 0.0, STICK)
    nxt = step(state, zero_law(), SYS, 1e-3)
    assert nxt.tau == pytest.approx(1e-3)
    assert nxt.z == 0.3
    assert nxt.z_dot == 0.0
    assert nxt.mode == STICK


def test_step_breakaway_direction():
    # strong positive drive force at tau = 0: u = 3.3 sin(3 tau) gives
    # theta'' = 9.9 at the origin, well past the static friction bound
    law = _law_from_series(0.0, np.array([0, 0, 0.0]), np.array([0, 0, 3.3]), 1.0)
    state = CapsuleState(0.0, 0.0, 0.0, STICK)
    nxt = step(state, law, SYS, 1e-3)
    assert nxt.mode == SLIP
    assert nxt.z_dot > 0.0
    # and the mirrored drive slips backwards
    law_m = _law_from_series(0.0, np.array([0, 0, 0.0]), np.array([0, 0, -3.3]), 1.0)
    nxt_m = step(state, law_m, SYS, 1e-3)
    assert nxt_m.mode == SLIP
    assert nxt_m.z_dot < 0.0


def test_step_loop_matches_vectorized_run():
    rng = np.random.default_rng(101)
    law = draw_feasible_law(rng, K=3, validation_periods=4)
    horizon = TWO_PI
    n = round(horizon / 1e-3)
    h_eff = horizon / n
    state = CapsuleState(0.0, 0.0, 0.0, STICK)
    for _ in range(n):
        state = step(state, law, SYS, h_eff)
    traj, _, _ = simulate(law, SYS, horizon, h=1e-3)
    assert state.z == pytest.approx(traj.z[-1], abs=1e-12)
    assert state.z_dot == pytest.approx(traj.z_dot[-1], abs=1e-12)


def event_reference_final_z(law, system, horizon, rtol=1e-10):
    """Independent oracle: stiff-free integration with located friction events."""
    mu, gamma1 = system.mu, system.gamma + 1.0

    def forces(t):
        theta = law.angle_at(float(t))
        u = law.speed_at(float(t))
        acc = law.accel_at(float(t))
        r_y = gamma1 - acc * math.sin(theta) - u * u * math.cos(theta)
        r_z = acc * math.cos(theta) - u * u * math.sin(theta)
        return r_y, r_z

    t, z, v = 0.0, 0.0, 0.0
    for _ in range(100000):
        if t >= horizon - 1e-12:
            break
        r_y, r_z = forces(t)
        if v == 0.0 and abs(r_z) < mu * r_y:
            # stuck: find the breakaway instant
            def margin(tt):
                ry, rz = forces(tt)
                return mu * ry - abs(rz)

            span = np.linspace(t, horizon, 2000)
            vals = np.array([margin(tt) for tt in span])
            idx = np.flatnonzero(vals <= 0)
            if idx.size == 0:
                return z
            lo_t, hi_t = span[idx[0] - 1], span[idx[0]]
            for _ in range(80):
                mid = 0.5 * (lo_t + hi_t)
                if margin(mid) > 0:
                    lo_t = mid
                else:
                    hi_t = mid
            t = hi_t
            continue
        if v == 0.0:
            sigma = 1.0 if r_z >= 0 else -1.0
        else:
            sigma = 1.0 if v > 0 else -1.0

        def rhs(tt, y):
            ry, rz = forces(tt)
            return [y[1], (rz - sigma * mu * ry) / gamma1]

        def crossing(tt, y):
            return y[1] - (-sigma * 1e-14)

        crossing.terminal = True
        crossing.direction = -sigma
        sol = solve_ivp(rhs, (t, horizon), [z, v], rtol=rtol, atol=1e-12,
                        events=crossing, max_step=0.05)
        z, v = sol.y[0][-1], sol.y[1][-1]
        t = sol.t[-1]
        if sol.status == 1:
            v = 0.0
    return z


def test_final_position_matches_event_located_reference():
    rng = np.random.default_rng(103)
    law = draw_feasible_law(rng, K=3, validation_periods=4)
    ref = event_reference_final_z(law, SYS, TWO_PI)
    _, _, dist = simulate(law, SYS, TWO_PI, h=1e-4, record_every=10**9)
    # clamped zero crossings carry O(h) event error; quantified here
    assert dist == pytest.approx(abs(ref), rel=2e-3, abs=1e-6)


def test_step_refinement():
    rng = np.random.default_rng(107)
    for _ in range(3):
        law = draw_feasible_law(rng, K=3, validation_periods=4)
        _, _, d1 = simulate(law, SYS, 2 * TWO_PI, h=1e-3, record_every=10**9)
        _, _, d2 = simulate(law, SYS, 2 * TWO_PI, h=1e-4, record_every=10**9)
        assert abs(d1 - d2) <= 1e-3 * abs(d2)


def test_record_invariants():
    rng = np.random.default_rng(109)
    law = draw_feasible_law(rng, K=3, validation_periods=4)
    traj, _, _ = simulate(law, SYS, 4 * TWO_PI, h=1e-3)
    stick = traj.mode == STICK
    assert np.all(traj.z_dot[stick] == 0.0)
    assert np.all((traj.mode == STICK) | (traj.mode == SLIP))
    bound = SYS.mu * traj.r_y
    assert np.all(np.abs(traj.f_z) <= bound + 1e-12)
    # friction records match the pointwise law
    for i in range(0, len(traj), 997):
        f, mode = friction_force(float(traj.z_dot[i]), float(traj.r_y[i]),
                                 float(traj.r_z[i]), SYS)
        assert traj.f_z[i] == pytest.approx(f, abs=1e-14)
        assert traj.mode[i] == mode


def test_determinism_bitwise():
    rng = np.random.default_rng(113)
    law = draw_feasible_law(rng, K=3, validation_periods=4)
    t1, r1, d1 = simulate(law, SYS, 3 * TWO_PI)
    t2, r2, d2 = simulate(law, SYS, 3 * TWO_PI)
    assert d1 == d2
    assert r1 == r2
    for name in ("tau", "theta", "z", "z_dot", "f_z"):
        assert np.array_equal(getattr(t1, name), getattr(t2, name))


def test_constraint_arithmetic():
    # leap bound for gamma = 14.5
    assert math.sqrt(1 + SYS.gamma) == pytest.approx(3.9370039370059056, abs=1e-12)
    # constant speed at the motor limit: torque margin 0.7*|25 - 10.85*3.4| = 8.323
    law = _law_from_series(2 * 3.4, np.array([0.0]), np.array([0.0]), 1.0)
    _, report, _ = simulate(law, SYS, TWO_PI, limits=LIM)
    assert report.max_speed_excess == pytest.approx(0.0, abs=1e-12)
    assert report.max_leap_excess == pytest.approx(3.4 - math.sqrt(15.5), abs=1e-12)
    # |theta'' + sin theta| <= 1 while 0.7*|25 - 10.85*3.4| = 8.323
    assert report.max_torque_deficit == pytest.approx(1.0 - 8.323, abs=1e-6)
    # the speed bound binds before the leap bound
    assert LIM.speed_max < math.sqrt(1 + SYS.gamma)


def test_torque_rejection():
    # u = 3.3 sin(3 tau) demands more torque than the motor line allows
    law = _law_from_series(0.0, np.array([0, 0, 0.0]), np.array([0, 0, 3.3]), 1.0)
    report = check_constraints(law, LIM, SYS, TWO_PI)
    assert report.max_torque_deficit > 0
    assert not report.feasible


def test_angle_drift_extension():
    # constant control c: theta = c*tau winds up linearly across periods
    c = 0.01
    law = _law_from_series(2 * c, np.array([0.0]), np.array([0.0]), 1.0)
    short = check_constraints(law, LIM, SYS, TWO_PI, angle_horizon=24 * TWO_PI)
    full = check_constraints(law, LIM, SYS, 24 * TWO_PI)
    assert short.max_angle_excess == pytest.approx(full.max_angle_excess, abs=1e-9)
    assert short.max_angle_excess == pytest.approx(24 * c * TWO_PI - math.pi / 3, abs=1e-9)


def test_contact_loss_reported():
    # speed beyond sqrt(1+gamma) lifts the platform: negative contact load
    law = _law_from_series(0.0, np.array([4.2]), np.array([0.0]), 1.0)
    report = check_constraints(law, LIM, SYS, TWO_PI)
    assert report.min_contact_load < 0
    assert report.max_leap_excess > 0
    assert not report.feasible


def test_distance_and_report_matches_simulate():
    rng = np.random.default_rng(127)
    law = draw_feasible_law(rng, K=3, validation_periods=4)
    d1, rep1 = distance_and_report(law, SYS, LIM, 2 * TWO_PI)
    _, rep2, d2 = simulate(law, SYS, 2 * TWO_PI)
    assert d1 == d2
    assert rep1 == rep2


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(131)
    law = draw_feasible_law(rng, K=3, validation_periods=4)
    traj, _, _ = simulate(law, SYS, TWO_PI, h=1e-2)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    back = Trajectory.from_csv(path)
    for name in ("tau", "theta", "theta_dot", "theta_ddot", "z", "z_dot", "r_y", "r_z", "f_z"):
        assert np.array_equal(getattr(traj, name), getattr(back, name)), name
    assert np.array_equal(traj.mode, back.mode)


def test_capsule_state_validation():
    with pytest.raises(ValueError):
        CapsuleState(0.0, 0.0, 0.5, STICK)


def test_report_feasibility_tolerance():
    report = ConstraintReport(1e-10, -1, -1, -1, 5.0)
    assert report.feasible
    report = ConstraintReport(1e-6, -1, -1, -1, 5.0)
    assert not report.feasible
    assert report.violation_sum == pytest.approx(1e-6)
