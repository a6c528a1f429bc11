import numpy as np
import pytest

from capsule_drive.fourier import (
    ControlBounds,
    ControlParams,
    HarmonicBasisSpec,
    ShapeCoordinates,
    SpanParams,
    ZeroStartInfeasibleError,
    _law_from_series,
    reconstruct,
)
from capsule_drive.model import SystemParams
from capsule_drive.simulator import ActuatorLimits, check_constraints, simulate

HALF_PI = np.pi / 2


def draw_params(rng, K=None, omega=None, bounds=(-3.4, 3.4), zero_start=False):
    """One random ControlParams; zero-start draws are retried until solvable."""
    for _ in range(50):
        k = K if K is not None else int(rng.choice([1, 2, 3, 6]))
        w = omega if omega is not None else float(rng.uniform(0.25, 2.0))
        n_angles = 2 * k - 1
        phi = rng.uniform(0.0, np.pi, size=n_angles)
        phi[-1] = rng.uniform(0.0, 2 * np.pi)
        if zero_start:
            phi[0] = HALF_PI
            p = rng.uniform(0.55, 1.0)
            q = rng.uniform(0.6, 1.0)
        else:
            p = rng.uniform(0.05, 1.0)
            q = rng.uniform(0.05, 1.0)
        params = ControlParams(
            basis=HarmonicBasisSpec(k, w),
            shape=ShapeCoordinates(tuple(phi)),
            span=SpanParams(p, q),
            bounds=ControlBounds(*bounds),
            zero_start=zero_start,
        )
        if not zero_start:
            return params
        try:
            reconstruct(params)
            return params
        except ZeroStartInfeasibleError:
            continue
    raise RuntimeError("could not draw a solvable zero-start parameter set")


def draw_feasible_law(rng, K=3, omega=1.0, system=None, limits=None,
                      min_distance=0.05, validation_periods=24):
    """Random drift-free control law that satisfies every actuator constraint.

    Amplitudes are rescaled until the constraint report passes; draws whose
    net displacement is negligible are rejected so that relative-error
    comparisons on the final position stay meaningful.
    """
    system = system or SystemParams()
    limits = limits or ActuatorLimits()
    period = 2 * np.pi / omega
    weights = np.arange(1, K + 1, dtype=float)  # favor acceleration-rich shapes
    for _ in range(200):
        a = rng.normal(size=K) * weights
        b = rng.normal(size=K) * weights
        speed_target = rng.uniform(1.5, 3.3)
        for shrink in range(12):
            law = _law_from_series(0.0, a, b, omega)
            t = np.linspace(0, period, 4096, endpoint=False)
            peak = np.max(np.abs(law.speed_at(t)))
            scale = speed_target / peak
            law = _law_from_series(0.0, scale * a, scale * b, omega)
            report = check_constraints(law, limits, system, period, h=1e-3,
                                       angle_horizon=validation_periods * period)
            if report.feasible:
                break
            speed_target *= 0.7
        else:
            continue
        _, _, dist = simulate(law, system, validation_periods * period, h=1e-3,
                              limits=limits, record_every=10**9)
        if dist >= min_distance:
            return law
    raise RuntimeError("could not draw a feasible control with measurable travel")


@pytest.fixture
def make_params():
    return draw_params
