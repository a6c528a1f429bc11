"""Fourier series control optimization for a pendulum capsule drive."""

from .fourier import (
    AngleCoefficients,
    ControlBounds,
    ControlLaw,
    ControlParams,
    DegenerateShapeError,
    FourierCoefficients,
    HarmonicBasisSpec,
    ShapeCoordinates,
    SpanParams,
    ZeroStartInfeasibleError,
    angles_from_unit_vector,
    evaluate_hat,
    extremes_of_hat,
    lift,
    range_targets,
    reconstruct,
    unit_vector_from_angles,
)
from .model import (
    PendulumSample,
    ScalingContext,
    SystemParams,
    capsule_accel,
    contact_load,
    friction_force,
    horizontal_force,
)

__version__ = "0.1.0"
