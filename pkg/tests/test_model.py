import math

import numpy as np
import pytest

from capsule_drive.model import (
    SLIP,
    STICK,
    PendulumSample,
    ScalingContext,
    SystemParams,
    capsule_accel,
    contact_load,
    friction_force,
    friction_force_arrays,
    horizontal_force,
)

SYS = SystemParams(gamma=14.5, mu=0.17)


def test_contact_load_examples():
    assert contact_load(PendulumSample(0, 0, 0), SYS) == pytest.approx(15.5)
    # leap threshold: theta_dot = sqrt(1 + gamma) zeroes the contact load
    assert contact_load(PendulumSample(0, math.sqrt(15.5), 0), SYS) == pytest.approx(0.0, abs=1e-12)
    got = contact_load(PendulumSample(math.pi / 6, 1.0, 2.0), SYS)
    assert got == pytest.approx(13.63397459621556, abs=1e-12)


def test_horizontal_force_examples():
    assert horizontal_force(PendulumSample(0, 0, 0)) == 0.0
    assert horizontal_force(PendulumSample(0, 0, 1.0)) == pytest.approx(1.0)
    assert horizontal_force(PendulumSample(math.pi / 4, 1.0, 1.0)) == pytest.approx(0.0, abs=1e-15)


def test_friction_examples():
    f, mode = friction_force(0.0, 15.5, 0.0, SYS)
    assert (f, mode) == (0.0, STICK)
    f, mode = friction_force(0.5, 15.5, 0.0, SYS)
    assert f == pytest.approx(2.635)
    assert mode == SLIP
    # breakaway: static bound 2.635 below the 3.0 drive force
    f, mode = friction_force(0.0, 15.5, 3.0, SYS)
    assert f == pytest.approx(2.635)
    assert mode == SLIP


def test_capsule_accel_examples():
    s = PendulumSample(0, 0, 1.0)
    assert capsule_accel(s, 0.0, SYS) == pytest.approx(1 / 15.5)
    assert capsule_accel(s, 2.635, SYS) == pytest.approx((1 - 2.635) / 15.5)
    # stick: f_z equals the drive force, acceleration is exactly zero
    r_z = horizontal_force(PendulumSample(0.3, 0.2, 0.1))
    assert capsule_accel(PendulumSample(0.3, 0.2, 0.1), r_z, SYS) == 0.0


def test_stick_and_slip_invariants():
    rng = np.random.default_rng(61)
    for _ in range(500):
        sample = PendulumSample(rng.uniform(-1, 1), rng.uniform(-3, 3), rng.uniform(-20, 20))
        r_y = contact_load(sample, SYS)
        r_z = horizontal_force(sample)
        z_dot = rng.choice([0.0, rng.uniform(-1, 1)])
        f, mode = friction_force(z_dot, r_y, r_z, SYS)
        if mode == STICK:
            assert abs(f) < SYS.mu * r_y
            assert capsule_accel(sample, f, SYS) == 0.0
        else:
            assert abs(abs(f) - abs(SYS.mu * r_y)) < 1e-14


def test_friction_arrays_match_scalar():
    rng = np.random.default_rng(67)
    z_dot = rng.uniform(-1, 1, 200)
    z_dot[::5] = 0.0
    theta = rng.uniform(-1, 1, 200)
    theta_dot = rng.uniform(-3, 3, 200)
    theta_ddot = rng.uniform(-20, 20, 200)
    sample = PendulumSample(theta, theta_dot, theta_ddot)
    r_y = contact_load(sample, SYS)
    r_z = horizontal_force(sample)
    f_arr, m_arr = friction_force_arrays(z_dot, r_y, r_z, SYS)
    for i in range(200):
        f, m = friction_force(float(z_dot[i]), float(r_y[i]), float(r_z[i]), SYS)
        assert f_arr[i] == pytest.approx(f, abs=1e-15)
        assert m_arr[i] == m


def test_static_case():
    s = PendulumSample(0.0, 0.0, 0.0)
    r_y = contact_load(s, SYS)
    r_z = horizontal_force(s)
    f, mode = friction_force(0.0, r_y, r_z, SYS)
    assert r_y == SYS.gamma + 1.0
    assert r_z == 0.0
    assert f == 0.0 and mode == STICK
    assert capsule_accel(s, f, SYS) == 0.0


def test_dimensional_consistency():
    scale = ScalingContext(l=0.1, m=0.04, g=9.81)
    Om = scale.Omega
    M = SYS.gamma * scale.m
    rng = np.random.default_rng(71)
    for _ in range(200):
        theta = rng.uniform(-math.pi, math.pi)
        theta_dot = rng.uniform(-4, 4)
        theta_ddot = rng.uniform(-25, 25)
        sample = PendulumSample(theta, theta_dot, theta_ddot)
        r_y = contact_load(sample, SYS)
        r_z = horizontal_force(sample)
        # dimensional reaction forces, Newton
        td = theta_dot * Om
        tdd = theta_ddot * Om * Om
        R_y = (M + scale.m) * scale.g - scale.m * scale.l * tdd * math.sin(theta) \
            - scale.m * scale.l * td**2 * math.cos(theta)
        R_x = scale.m * scale.l * tdd * math.cos(theta) - scale.m * scale.l * td**2 * math.sin(theta)
        assert r_y * scale.force_scale == pytest.approx(R_y, rel=1e-10, abs=1e-12)
        assert r_z * scale.force_scale == pytest.approx(R_x, rel=1e-10, abs=1e-12)
        # capsule equation: (M+m) xdd - m l tdd cos + m l td^2 sin = -F_x
        f_z = 0.4 * r_z
        z_dd = capsule_accel(sample, f_z, SYS)
        lhs = (M + scale.m) * z_dd * Om * Om * scale.l \
            - scale.m * scale.l * tdd * math.cos(theta) \
            + scale.m * scale.l * td**2 * math.sin(theta)
        assert lhs == pytest.approx(-f_z * scale.force_scale, rel=1e-10, abs=1e-12)


def test_scaling_context():
    scale = ScalingContext(l=0.1, m=0.04, g=9.81)
    assert scale.Omega == pytest.approx(math.sqrt(98.1))
    assert scale.to_tau(1.0) == pytest.approx(scale.Omega)
    assert scale.to_seconds(scale.to_tau(2.5)) == pytest.approx(2.5)
    assert scale.position_m(3.78) == pytest.approx(0.378)
    assert ScalingContext.from_dict(scale.to_dict()) == scale


def test_param_validation():
    with pytest.raises(ValueError):
        SystemParams(gamma=-1.0)
    with pytest.raises(ValueError):
        SystemParams(mu=-0.1)
    with pytest.raises(ValueError):
        ScalingContext(l=0.0)
