"""Dimensionless pendulum-capsule plant: reaction forces and Coulomb friction.

All quantities are scaled by the pendulum mass, its length and the
gravitational frequency Omega = sqrt(g/l); `ScalingContext` carries the
conversion back to SI units.  Functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STICK = 0
SLIP = 1
MODE_NAMES = {STICK: "stick", SLIP: "slip"}

# |z'| below this threshold counts as the z' = 0 friction branch; fixed-step
# integration never lands exactly on zero velocity.
VELOCITY_EPS = 1e-8


@dataclass(frozen=True)
class SystemParams:
    """Mass ratio capsule/pendulum and friction coefficient."""

    gamma: float = 14.5
    mu: float = 0.17

    def __post_init__(self):
        if not (self.gamma > 0.0):
            raise ValueError(f"mass ratio gamma must be positive, got {self.gamma}")
        if self.mu < 0.0:
            raise ValueError(f"friction coefficient must be non-negative, got {self.mu}")


@dataclass(frozen=True)
class PendulumSample:
    """Pendulum angle and its first two dimensionless time derivatives."""

    theta: float
    theta_dot: float
    theta_ddot: float


@dataclass(frozen=True)
class ScalingContext:
    """Pendulum length, mass and gravity; the single dimensional/dimensionless bridge."""

    l: float = 0.1
    m: float = 0.04
    g: float = 9.81

    def __post_init__(self):
        if self.l <= 0.0 or self.m <= 0.0 or self.g <= 0.0:
            raise ValueError("length, mass and gravity must all be positive")

    @property
    def Omega(self) -> float:
        return math.sqrt(self.g / self.l)

    @property
    def force_scale(self) -> float:
        """Newtons per unit of dimensionless force."""
        return self.m * self.Omega**2 * self.l

    @property
    def torque_scale(self) -> float:
        """Newton-metres per unit of dimensionless torque."""
        return self.m * self.g * self.l

    def to_tau(self, t):
        return self.Omega * t

    def to_seconds(self, tau):
        return tau / self.Omega

    def position_m(self, z):
        return z * self.l

    def velocity_m_s(self, z_dot):
        return z_dot * self.Omega * self.l

    def to_dict(self) -> dict:
        return {"l": self.l, "m": self.m, "g": self.g, "Omega": self.Omega}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingContext":
        return cls(l=float(data["l"]), m=float(data["m"]), g=float(data["g"]))


def contact_load(sample: PendulumSample, params: SystemParams):
    """Vertical reaction between capsule and ground (negative means lift-off)."""
    return (
        (params.gamma + 1.0)
        - sample.theta_ddot * np.sin(sample.theta)
        - sample.theta_dot**2 * np.cos(sample.theta)
    )


def horizontal_force(sample: PendulumSample):
    """Horizontal force the swinging pendulum exerts on the capsule."""
    return sample.theta_ddot * np.cos(sample.theta) - sample.theta_dot**2 * np.sin(sample.theta)


def friction_force(z_dot: float, r_y: float, r_z: float, params: SystemParams,
                   eps: float = VELOCITY_EPS):
    """Coulomb friction on the capsule and the resolved contact mode.

    Moving: kinetic friction opposing the velocity.  At rest: static
    friction holds (stick) until the driving force reaches the friction
    bound, then breakaway slip in the driving direction.
    """
    bound = params.mu * r_y
    if abs(z_dot) > eps:
        return bound * _sign(z_dot), SLIP
    if abs(r_z) >= bound:
        return bound * _sign(r_z), SLIP
    return r_z, STICK


def friction_force_arrays(z_dot, r_y, r_z, params: SystemParams, eps: float = VELOCITY_EPS):
    """Vectorized `friction_force`; returns (f_z, mode) arrays."""
    bound = params.mu * np.asarray(r_y)
    moving = np.abs(z_dot) > eps
    breakaway = ~moving & (np.abs(r_z) >= bound)
    f_z = np.where(moving, bound * np.sign(z_dot),
                   np.where(breakaway, bound * np.sign(r_z), r_z))
    mode = np.where(moving | breakaway, SLIP, STICK)
    return f_z, mode


def capsule_accel(sample: PendulumSample, f_z, params: SystemParams):
    """Capsule acceleration; exactly zero in stick where f_z equals the drive force."""
    return (horizontal_force(sample) - f_z) / (params.gamma + 1.0)


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0
