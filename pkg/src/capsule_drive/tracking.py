"""Closed-loop tracking simulation of the dimensional capsule-pendulum plant.

The pendulum (mounted upright on the motor shaft) follows a reference angle
produced by a control law; a discrete PID loop with friction and gravity
compensation commands the motor, whose torque saturates along its
torque-speed line.  The capsule couples through the reaction forces and the
same Coulomb friction structure as the dimensionless model, written here
directly in SI units so the two formulations can be checked against each
other under scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fourier import ControlLaw
from .model import MODE_NAMES, SLIP, STICK, VELOCITY_EPS, ScalingContext

RPM = 2.0 * math.pi / 60.0


class TrackingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional plant: masses, geometry, friction and the motor envelope."""

    M: float = 0.58
    m: float = 0.04
    l: float = 0.1
    g: float = 9.81
    k_spring: float = 0.0
    c_damp: float = 0.0
    mu: float = 0.17
    M_max: float = 1.5
    omega_max: float = 330.0 * RPM

    def __post_init__(self):
        if min(self.M, self.m, self.l, self.g) <= 0:
            raise ValueError("masses, length and gravity must be positive")
        if self.k_spring < 0 or self.c_damp < 0 or self.mu < 0:
            raise ValueError("stiffness, damping and friction must be non-negative")
        if self.M_max <= 0 or self.omega_max <= 0:
            raise ValueError("motor stall torque and no-load speed must be positive")

    @property
    def zeta(self) -> float:
        """Torque-speed slope of the motor."""
        return self.M_max / self.omega_max

    def scaling(self) -> ScalingContext:
        return ScalingContext(l=self.l, m=self.m, g=self.g)

    def to_dict(self) -> dict:
        return {"M": self.M, "m": self.m, "l": self.l, "g": self.g,
                "k_spring": self.k_spring, "c_damp": self.c_damp, "mu": self.mu,
                "M_max": self.M_max, "omega_max": self.omega_max}

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalParams":
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class PIDGains:
    """Controller gains, compensation coefficients and loop rate."""

    Kp: float = 8.0
    Ki: float = 2.0
    Kd: float = 0.12
    u_f: float = 0.0
    u_0: float = 0.0
    loop_rate: float = 100.0

    def __post_init__(self):
        if self.loop_rate <= 0:
            raise ValueError("loop rate must be positive")
        if min(self.Kp, self.Ki, self.Kd) < 0:
            raise ValueError("gains must be non-negative")

    def to_dict(self) -> dict:
        return {"Kp": self.Kp, "Ki": self.Ki, "Kd": self.Kd,
                "u_f": self.u_f, "u_0": self.u_0, "loop_rate": self.loop_rate}

    @classmethod
    def from_dict(cls, data: dict) -> "PIDGains":
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass
class TrackingResult:
    """Recorded closed-loop run plus its tracking-error summary."""

    t: np.ndarray
    theta_ref: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    x_dot: np.ndarray
    torque: np.ndarray
    rmse_full: float
    rmse_per_period: list

    CSV_HEADER = "t,theta_ref,theta,x,x_dot,torque"

    def to_csv(self, path):
        cols = [c.tolist() for c in (self.t, self.theta_ref, self.theta,
                                     self.x, self.x_dot, self.torque)]
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for i in range(self.t.size):
                fh.write(",".join(repr(col[i]) for col in cols) + "\n")

    def summary(self) -> dict:
        return {"rmse_full": self.rmse_full, "rmse_per_period": self.rmse_per_period}


def controller_output(e: float, e_integral: float, e_derivative: float,
                      theta: float, theta_dot: float, gains: PIDGains) -> float:
    """PID law plus friction and gravity compensation terms."""
    comp = gains.u_f * _sign(theta_dot) + gains.u_0 * math.sin(theta)
    return gains.Kp * e + gains.Ki * e_integral + gains.Kd * e_derivative + comp


class PIDController:
    """Discrete PID with measurement-side filtered derivative and anti-windup.

    The derivative acts on the measured angle through a first-order filter
    with a two-tick time constant (no kick on reference steps); the
    integrator freezes while the saturation clamp is active.
    """

    def __init__(self, gains: PIDGains, physical: PhysicalParams, tick_dt: float):
        self.gains = gains
        self.physical = physical
        self.tick_dt = tick_dt
        self.alpha = math.exp(-0.5)  # tick_dt / (2 * tick_dt)
        self.integral = 0.0
        self.deriv = 0.0
        self._prev = None

    def tick(self, reference: float, measured: float, plant_speed: float):
        """One controller update; returns (commanded, applied) torque."""
        e = reference - measured
        d_raw = 0.0 if self._prev is None else (measured - self._prev) / self.tick_dt
        self.deriv = self.alpha * self.deriv + (1.0 - self.alpha) * d_raw
        self._prev = measured
        commanded = controller_output(e, self.integral, -self.deriv, measured,
                                      self.deriv, self.gains)
        applied = motor_saturate(commanded, plant_speed, self.physical)
        if applied == commanded:
            self.integral += e * self.tick_dt
        return commanded, applied


def motor_saturate(command: float, theta_dot: float, params: PhysicalParams) -> float:
    """Clamp the commanded torque to the motor's speed-dependent envelope."""
    available = max(0.0, params.M_max - params.zeta * abs(theta_dot))
    return max(-available, min(available, command))


def friction_force_dimensional(x_dot: float, R_y: float, R_x: float, mu: float,
                               eps: float):
    """Coulomb friction on the capsule in SI units; returns (force, mode)."""
    bound = mu * R_y
    if abs(x_dot) > eps:
        return bound * _sign(x_dot), SLIP
    if abs(R_x) >= bound:
        return bound * _sign(R_x), SLIP
    return R_x, STICK


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def track_simulate(law: ControlLaw, physical: PhysicalParams, gains: PIDGains,
                   duration: float, phys_step: float = 1e-4,
                   ideal_tracking: bool = False, coupled: bool = True,
                   encoder_bits: int | None = None, record_every: int = 1) -> TrackingResult:
    """Integrate the coupled plant under discrete PID control.

    The reference angle is the control law's analytic angle evaluated at
    the dimensionless time Omega*t.  The controller runs at `loop_rate`
    with zero-order hold between ticks, and the motor envelope is applied
    against the instantaneous plant speed at every physics step.
    `ideal_tracking` bypasses the pendulum state entirely and drives the
    capsule with the reference signals, which reduces the run to a
    dimensional mirror of the dimensionless simulator.  `coupled=False`
    drops the capsule-acceleration term from the pendulum equation.
    """
    scale = physical.scaling()
    Om = scale.Omega
    M, m, l, g = physical.M, physical.m, physical.l, physical.g
    ml = m * l
    ml2 = m * l * l
    mgl = m * g * l
    mu = physical.mu
    eps_v = VELOCITY_EPS * Om * l

    n_steps = max(1, round(duration / phys_step))
    h = duration / n_steps
    ticks = max(1, round(1.0 / (gains.loop_rate * h)))
    tick_dt = ticks * h
    controller = PIDController(gains, physical, tick_dt)
    quant = (2.0 * math.pi / (1 << encoder_bits)) if encoder_bits else None

    def reference(t):
        tau = Om * t
        return law.angle_at(tau), Om * law.speed_at(tau), Om * Om * law.accel_at(tau)

    def pendulum_only_acc(th, thd, torque):
        return (mgl * math.sin(th) - physical.k_spring * th
                - physical.c_damp * thd + torque) / ml2

    def coupled_acc(th, thd, xd_sign, torque):
        cos_t = math.cos(th)
        sin_t = math.sin(th)
        a01 = -ml * (cos_t + xd_sign * mu * sin_t)
        b0 = (-ml * thd * thd * sin_t - xd_sign * mu * (M + m) * g
              + xd_sign * mu * ml * thd * thd * cos_t)
        b1 = mgl * sin_t - physical.k_spring * th - physical.c_damp * thd + torque
        a10 = -ml * cos_t if coupled else 0.0
        det = (M + m) * ml2 - a01 * a10
        xdd = (b0 * ml2 - a01 * b1) / det
        thdd = ((M + m) * b1 - a10 * b0) / det
        return xdd, thdd

    def reactions(th, thd, thdd):
        R_y = (M + m) * g - ml * thdd * math.sin(th) - ml * thd * thd * math.cos(th)
        R_x = ml * thdd * math.cos(th) - ml * thd * thd * math.sin(th)
        return R_y, R_x

    rec_idx = np.arange(0, n_steps + 1, record_every, dtype=np.int64)
    if rec_idx[-1] != n_steps:
        rec_idx = np.append(rec_idx, n_steps)
    rec = {name: np.empty(rec_idx.size) for name in
           ("theta_ref", "theta", "x", "x_dot", "torque")}
    rec_pos = 0

    x = xd = 0.0
    th, thd, _ = reference(0.0) if ideal_tracking else (0.0, 0.0, 0.0)
    mode = STICK
    u_cmd = 0.0

    for step_i in range(n_steps + 1):
        t = step_i * h
        if ideal_tracking:
            th, thd, thdd_ref = reference(t)
        if step_i % ticks == 0 and not ideal_tracking:
            meas = th if quant is None else round(th / quant) * quant
            u_cmd, _ = controller.tick(law.angle_at(Om * t), meas, thd)
        torque = 0.0 if ideal_tracking else motor_saturate(u_cmd, thd, physical)

        if rec_pos < rec_idx.size and step_i == rec_idx[rec_pos]:
            rec["theta_ref"][rec_pos] = law.angle_at(Om * t)
            rec["theta"][rec_pos] = th
            rec["x"][rec_pos] = x
            rec["x_dot"][rec_pos] = xd
            rec["torque"][rec_pos] = torque
            rec_pos += 1
        if step_i == n_steps:
            break

        # resolve the friction branch at the step start
        if ideal_tracking:
            thdd0 = thdd_ref
        elif mode == STICK:
            thdd0 = pendulum_only_acc(th, thd, torque)
        else:
            _, thdd0 = coupled_acc(th, thd, _sign(xd), torque)
        R_y, R_x = reactions(th, thd, thdd0)
        if mode == STICK:
            if abs(R_x) >= mu * R_y:
                mode = SLIP
                sigma = _sign(R_x) if xd == 0.0 else _sign(xd)
            else:
                sigma = 0.0
        else:
            sigma = _sign(xd) if xd != 0.0 else _sign(R_x)

        if ideal_tracking:
            if mode == STICK:
                pass  # capsule pinned; pendulum follows the reference
            else:
                x, xd = _rk4_capsule_prescribed(x, xd, t, h, sigma, reference,
                                                M, m, ml, g, mu)
        else:
            if mode == STICK:
                k1 = pendulum_only_acc(th, thd, torque)
                k2 = pendulum_only_acc(th + 0.5 * h * thd, thd + 0.5 * h * k1, torque)
                k3 = pendulum_only_acc(th + 0.5 * h * thd + 0.25 * h * h * k1,
                                       thd + 0.5 * h * k2, torque)
                k4 = pendulum_only_acc(th + h * thd + 0.5 * h * h * k2, thd + h * k3, torque)
                th = th + h * thd + h * h / 6.0 * (k1 + k2 + k3)
                thd = thd + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                x, xd, th, thd = _rk4_coupled(x, xd, th, thd, h, sigma, torque, coupled_acc)
        if mode == SLIP and (sigma * xd) <= eps_v:
            xd = 0.0
            mode = STICK
        if not (math.isfinite(th) and math.isfinite(thd) and math.isfinite(xd)):
            raise TrackingDivergedError("tracking diverged")

    t_rec = rec_idx * h
    ref_series = rec["theta_ref"]
    diff = ref_series - rec["theta"]
    rmse_full = float(np.sqrt(np.mean(diff * diff)))
    period_s = law.period / Om
    slack = t_rec[-1] - t_rec[-2] if t_rec.size > 1 else 0.0
    n_periods = int(math.floor((t_rec[-1] - t_rec[0] + slack) / period_s + 1e-12))
    per_period = []
    for i in range(n_periods):
        keep = (t_rec >= i * period_s) & (t_rec < (i + 1) * period_s)
        if np.any(keep):
            d = diff[keep]
            per_period.append(float(np.sqrt(np.mean(d * d))))
    return TrackingResult(
        t=t_rec, theta_ref=rec["theta_ref"], theta=rec["theta"], x=rec["x"],
        x_dot=rec["x_dot"], torque=rec["torque"],
        rmse_full=rmse_full, rmse_per_period=per_period,
    )


def _rk4_coupled(x, xd, th, thd, h, sigma, torque, coupled_acc):
    def f(state):
        _, xdv, thv, thdv = state
        xdd, thdd = coupled_acc(thv, thdv, sigma, torque)
        return np.array([xdv, xdd, thdv, thdd])

    y = np.array([x, xd, th, thd])
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return float(y[0]), float(y[1]), float(y[2]), float(y[3])


def _rk4_capsule_prescribed(x, xd, t, h, sigma, reference, M, m, ml, g, mu):
    """Capsule step with the pendulum signals taken from the reference law."""

    def acc(tt, _xd):
        th, thd, thdd = reference(tt)
        R_y = (M + m) * g - ml * thdd * math.sin(th) - ml * thd * thd * math.cos(th)
        R_x = ml * thdd * math.cos(th) - ml * thd * thd * math.sin(th)
        return (R_x - sigma * mu * R_y) / (M + m)

    k1 = acc(t, xd)
    k2 = acc(t + 0.5 * h, xd + 0.5 * h * k1)
    k3 = acc(t + 0.5 * h, xd + 0.5 * h * k2)
    k4 = acc(t + h, xd + h * k3)
    x_new = x + h * xd + h * h / 6.0 * (k1 + k2 + k3)
    xd_new = xd + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x_new, xd_new
