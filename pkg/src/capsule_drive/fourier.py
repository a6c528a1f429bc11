"""Truncated Fourier waveforms as bounded control laws.

A control waveform is parametrized by a point on a unit hypersphere (its
shape), two span parameters locating its range inside the admissible
interval, and a harmonic basis (count and fundamental frequency).  The
module provides:

- `unit_vector_from_angles()` / `angles_from_unit_vector()`: hyperspherical
  coordinates of the amplitude vector.
- `evaluate_hat()` / `extremes_of_hat()`: the unit-amplitude waveform and
  its exact range over one period.
- `range_targets()`: supremum/infimum of the range from the span parameters.
- `reconstruct()`: the affine map from shape + span to a `ControlLaw` with
  analytic angle (antiderivative) and acceleration (derivative) series.
- `lift()`: exact re-expression of a solution in a doubled basis at half
  the fundamental frequency, used to seed staged optimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


class DegenerateShapeError(ValueError):
    """Raised when a shape vector is (numerically) zero."""


class ZeroStartInfeasibleError(ValueError):
    """Raised when no amplitude of the first cosine term yields u(0) = 0."""


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class HarmonicBasisSpec:
    """Number of harmonics and fundamental frequency of the waveform."""

    K: int
    omega: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"harmonic count K must be a positive integer, got {self.K}")
        if not (self.omega > 0.0):
            raise ValueError(f"fundamental frequency must be positive, got {self.omega}")

    @property
    def period(self) -> float:
        return TWO_PI / self.omega


@dataclass(frozen=True)
class ShapeCoordinates:
    """Hyperspherical angles of the amplitude direction.

    For K harmonics there are 2K-1 angles; all but the last lie in
    [0, pi], the last in [0, 2*pi).
    """

    phi: tuple

    def __post_init__(self):
        phi = tuple(float(v) for v in self.phi)
        object.__setattr__(self, "phi", phi)
        if len(phi) % 2 == 0 or len(phi) < 1:
            raise ValueError(f"expected an odd number of angles (2K-1), got {len(phi)}")
        for i, v in enumerate(phi[:-1]):
            if not (0.0 <= v <= math.pi):
                raise ValueError(f"phi[{i}] = {v} outside [0, pi]")
        if not (0.0 <= phi[-1] < TWO_PI):
            raise ValueError(f"last angle {phi[-1]} outside [0, 2*pi)")

    def __len__(self):
        return len(self.phi)


@dataclass(frozen=True)
class SpanParams:
    """Range-placement parameters: p locates the supremum, q the relative span."""

    p: float
    q: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if not (0.0 < self.q <= 1.0):
            raise ValueError(f"q must lie in (0, 1], got {self.q}")


@dataclass(frozen=True)
class ControlBounds:
    """Admissible control interval [u_min, u_max]."""

    u_min: float
    u_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max):
            raise ValueError(f"u_min must be below u_max, got [{self.u_min}, {self.u_max}]")


@dataclass(frozen=True)
class ControlParams:
    """Complete optimization point describing one control waveform."""

    basis: HarmonicBasisSpec
    shape: ShapeCoordinates
    span: SpanParams
    bounds: ControlBounds
    zero_start: bool = False

    def __post_init__(self):
        expected = 2 * self.basis.K - 1
        if len(self.shape) != expected:
            raise ValueError(
                f"{len(self.shape)} shape angles for K={self.basis.K}; expected {expected}"
            )
        if self.zero_start and abs(self.shape.phi[0] - HALF_PI) > 1e-9:
            raise ValueError("zero-start waveforms pin the first angle to pi/2")

    @property
    def dimension(self) -> int:
        """Free parameters: 2K+1, or 2K when u(0)=0 pins the first angle."""
        return 2 * self.basis.K + (0 if self.zero_start else 1)

    def to_dict(self) -> dict:
        return {
            "basis": {"K": self.basis.K, "omega": self.basis.omega, "period": self.basis.period},
            "shape": {"phi": list(self.shape.phi)},
            "span": {"p": self.span.p, "q": self.span.q},
            "bounds": {"u_min": self.bounds.u_min, "u_max": self.bounds.u_max},
            "zero_start": self.zero_start,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlParams":
        basis = HarmonicBasisSpec(K=int(data["basis"]["K"]), omega=float(data["basis"]["omega"]))
        return cls(
            basis=basis,
            shape=ShapeCoordinates(tuple(data["shape"]["phi"])),
            span=SpanParams(float(data["span"]["p"]), float(data["span"]["q"])),
            bounds=ControlBounds(float(data["bounds"]["u_min"]), float(data["bounds"]["u_max"])),
            zero_start=bool(data.get("zero_start", False)),
        )


@dataclass(frozen=True)
class FourierCoefficients:
    """Real trigonometric series a0/2 + sum a_k cos(k w t) + b_k sin(k w t)."""

    a0: float
    a: np.ndarray
    b: np.ndarray
    omega: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).copy()
        b = np.asarray(self.b, dtype=float).copy()
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("cosine and sine amplitude arrays must be 1-D and equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and math.isfinite(self.a0)):
            raise ValueError("coefficients must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def K(self) -> int:
        return self.a.size

    def to_dict(self) -> dict:
        return {"a0": self.a0, "a": self.a.tolist(), "b": self.b.tolist(), "omega": self.omega}

    @classmethod
    def from_dict(cls, data: dict) -> "FourierCoefficients":
        return cls(float(data["a0"]), data["a"], data["b"], float(data["omega"]))


@dataclass(frozen=True)
class AngleCoefficients:
    """Antiderivative series: drift_rate*s + constant + harmonic terms."""

    drift_rate: float
    constant: float
    cos: np.ndarray
    sin: np.ndarray
    omega: float

    def __post_init__(self):
        c = np.asarray(self.cos, dtype=float).copy()
        s = np.asarray(self.sin, dtype=float).copy()
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "cos", c)
        object.__setattr__(self, "sin", s)

    def to_dict(self) -> dict:
        return {
            "drift_rate": self.drift_rate,
            "constant": self.constant,
            "cos": self.cos.tolist(),
            "sin": self.sin.tolist(),
            "omega": self.omega,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AngleCoefficients":
        return cls(
            float(data["drift_rate"]),
            float(data["constant"]),
            data["cos"],
            data["sin"],
            float(data["omega"]),
        )


@dataclass(frozen=True)
class ControlLaw:
    """Reconstructed rotational-speed control with analytic angle and acceleration.

    The speed series is periodic; the angle extends over multiple periods
    as theta(j*T + s) = j*per_period_drift + theta(s), which keeps the
    harmonic phases reduced and avoids drift error over long horizons.
    """

    coeffs: FourierCoefficients
    angle_coeffs: AngleCoefficients
    accel_coeffs: FourierCoefficients
    period: float
    per_period_drift: float

    @property
    def omega(self) -> float:
        return self.coeffs.omega

    @property
    def K(self) -> int:
        return self.coeffs.K

    def _reduce(self, tau):
        """Split tau into whole-period index j and in-period remainder s."""
        if isinstance(tau, np.ndarray):
            j = np.floor(tau / self.period)
            return j, tau - j * self.period
        j = math.floor(tau / self.period)
        return j, tau - j * self.period

    def speed_at(self, tau):
        """Control value u(tau) = theta'(tau), periodically extended."""
        _, s = self._reduce(tau)
        return _series_value(self.coeffs, s)

    def accel_at(self, tau):
        """theta''(tau): termwise derivative of the speed series."""
        _, s = self._reduce(tau)
        return _series_value(self.accel_coeffs, s)

    def angle_at(self, tau):
        """theta(tau) with theta(0) = 0 and per-period drift accumulation."""
        j, s = self._reduce(tau)
        ac = self.angle_coeffs
        if isinstance(s, np.ndarray):
            k = np.arange(1, self.K + 1) * ac.omega
            ph = np.outer(k, s)
            harm = ac.cos @ np.cos(ph) + ac.sin @ np.sin(ph)
        else:
            harm = 0.0
            for i in range(self.K):
                w = (i + 1) * ac.omega
                harm += ac.cos[i] * math.cos(w * s) + ac.sin[i] * math.sin(w * s)
        return j * self.per_period_drift + ac.drift_rate * s + ac.constant + harm

    def evaluate(self, tau: np.ndarray, tables=None):
        """Vectorized (theta, speed, accel) sharing one trigonometric table.

        `tables` may carry precomputed (j, s, cos, sin) for the same tau grid
        as produced by `harmonic_tables()`; this is the hot path of the
        simulator where the grid is fixed and the law varies.
        """
        if tables is None:
            tau = np.asarray(tau, dtype=float)
            j, s = self._reduce(tau)
            c, si = harmonic_tables(self.K, self.omega, s)
        else:
            j, s, c, si = tables
        u = 0.5 * self.coeffs.a0 + self.coeffs.a @ c + self.coeffs.b @ si
        ac = self.angle_coeffs
        theta = j * self.per_period_drift + ac.drift_rate * s + ac.constant + ac.cos @ c + ac.sin @ si
        acc = self.accel_coeffs.a @ c + self.accel_coeffs.b @ si
        return theta, u, acc

    def to_dict(self) -> dict:
        return {
            "coeffs": self.coeffs.to_dict(),
            "angle_coeffs": self.angle_coeffs.to_dict(),
            "accel_coeffs": self.accel_coeffs.to_dict(),
            "period": self.period,
            "per_period_drift": self.per_period_drift,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlLaw":
        return cls(
            coeffs=FourierCoefficients.from_dict(data["coeffs"]),
            angle_coeffs=AngleCoefficients.from_dict(data["angle_coeffs"]),
            accel_coeffs=FourierCoefficients.from_dict(data["accel_coeffs"]),
            period=float(data["period"]),
            per_period_drift=float(data["per_period_drift"]),
        )


# ---------------------------------------------------------------------------
# hyperspherical coordinates


def _as_phi_array(phi) -> np.ndarray:
    if isinstance(phi, ShapeCoordinates):
        return np.asarray(phi.phi, dtype=float)
    return np.asarray(phi, dtype=float)


def unit_vector_from_angles(phi) -> np.ndarray:
    """Cascaded sin/cos products mapping 2K-1 angles to a unit vector in R^(2K)."""
    a = _as_phi_array(phi)
    sines = np.cumprod(np.sin(a))
    h = np.empty(a.size + 1)
    h[0] = math.cos(a[0])
    h[1:-1] = sines[:-1] * np.cos(a[1:])
    h[-1] = sines[-1]
    return h


def angles_from_unit_vector(h) -> ShapeCoordinates:
    """Invert the hyperspherical cascade.

    Degenerate tails (all trailing components zero) map to angle 0, the
    canonical representative.
    """
    h = np.asarray(h, dtype=float)
    norm = float(np.linalg.norm(h))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"expected a unit vector, got norm {norm}")
    n = h.size
    tail_sq = np.cumsum(h[::-1] ** 2)[::-1]
    phi = np.empty(n - 1)
    for i in range(n - 2):
        phi[i] = math.atan2(math.sqrt(tail_sq[i + 1]), h[i])
    last = math.atan2(h[-1], h[-2])
    if last < 0.0:
        last += TWO_PI
    phi[-1] = last
    return ShapeCoordinates(tuple(phi))


# ---------------------------------------------------------------------------
# unit waveform evaluation and range


@lru_cache(maxsize=8)
def _hat_basis(K: int, omega: float, n: int) -> np.ndarray:
    """Sampled harmonic basis over one period: rows cos(k w t), sin(k w t)."""
    t = (TWO_PI / omega) * np.arange(n) / n
    ph = np.outer(np.arange(1, K + 1) * omega, t)
    basis = np.empty((2 * K, n))
    basis[0::2] = np.cos(ph)
    basis[1::2] = np.sin(ph)
    basis.setflags(write=False)
    return basis


def harmonic_tables(K: int, omega: float, s: np.ndarray):
    """cos/sin tables of shape (K, len(s)) for harmonics 1..K."""
    ph = np.outer(np.arange(1, K + 1) * omega, s)
    return np.cos(ph), np.sin(ph)


def evaluate_hat(h, omega: float, t):
    """Unit-amplitude waveform: H . [cos(w t), sin(w t), ..., cos(K w t), sin(K w t)]."""
    h = np.asarray(h, dtype=float)
    K = h.size // 2
    if isinstance(t, np.ndarray):
        c, s = harmonic_tables(K, omega, t)
        return h[0::2] @ c + h[1::2] @ s
    acc = 0.0
    for k in range(K):
        w = (k + 1) * omega
        acc += h[2 * k] * math.cos(w * t) + h[2 * k + 1] * math.sin(w * t)
    return acc


def _golden_max(f, a: float, b: float, xtol: float) -> float:
    """Golden-section maximization on [a, b]; returns the best value found."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    invphi2 = (3.0 - math.sqrt(5.0)) / 2.0
    x1 = a + invphi2 * (b - a)
    x2 = a + invphi * (b - a)
    f1 = f(x1)
    f2 = f(x2)
    while (b - a) > xtol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = a + invphi2 * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return max(f1, f2)


def _polished_extremes(h: np.ndarray, omega: float, u_grid: np.ndarray):
    """(min, max) of the waveform from grid samples plus golden refinement.

    Every grid-local extremum within a curvature-bound margin of the grid
    best is refined, so near-tied peaks cannot be missed.
    """
    K = h.size // 2
    n = u_grid.size
    period = TWO_PI / omega
    step = period / n
    curv = (K * omega) ** 2 * float(np.abs(h).sum())  # bound on |u''|
    margin = curv * step * step
    xtol = math.sqrt(2e-13 / max(curv, 1e-9))
    ks = [(k + 1) * omega for k in range(K)]
    hl = h.tolist()

    def waveform(t: float) -> float:
        acc = 0.0
        for k in range(K):
            w = ks[k] * t
            acc += hl[2 * k] * math.cos(w) + hl[2 * k + 1] * math.sin(w)
        return acc

    def refine(sign: float) -> float:
        v = sign * u_grid
        vbest = float(v.max())
        inner = (v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] >= vbest - margin)
        cand = list(np.flatnonzero(inner) + 1)
        if v[0] >= v[-1] and v[0] >= v[1] and v[0] >= vbest - margin:
            cand.append(0)
        if v[-1] >= v[-2] and v[-1] >= v[0] and v[-1] >= vbest - margin:
            cand.append(n - 1)
        best = -math.inf
        for i in cand:
            t0 = i * step
            val = _golden_max(lambda t: sign * waveform(t), t0 - step, t0 + step, xtol)
            best = max(best, val)
        return sign * best

    return refine(-1.0), refine(1.0)


def extremes_of_hat(h, basis: HarmonicBasisSpec):
    """(min, max) of the unit waveform over one period, within 1e-10 of true.

    Dense sampling at 4096*K points per period bounds aliasing for the
    band-limited waveform; golden-section refinement sharpens each
    candidate extremum.
    """
    h = np.asarray(h, dtype=float)
    if float(np.linalg.norm(h)) < 1e-12:
        raise DegenerateShapeError("degenerate shape")
    n = 4096 * basis.K
    u = h @ _hat_basis(basis.K, basis.omega, n)
    return _polished_extremes(h, basis.omega, u)


# ---------------------------------------------------------------------------
# span placement and reconstruction


def range_targets(span: SpanParams, bounds: ControlBounds):
    """(sup, inf) of the reconstructed control range inside the bounds."""
    sup = span.p * bounds.u_max + (1.0 - span.p) * bounds.u_min
    inf = (bounds.u_max - bounds.u_min) * (1.0 - span.q) * span.p + bounds.u_min
    return sup, inf


def _law_from_series(a0: float, a: np.ndarray, b: np.ndarray, omega: float) -> ControlLaw:
    period = TWO_PI / omega
    k = np.arange(1, a.size + 1) * omega
    angle = AngleCoefficients(
        drift_rate=0.5 * a0,
        constant=float(np.sum(b / k)),
        cos=-b / k,
        sin=a / k,
        omega=omega,
    )
    accel = FourierCoefficients(a0=0.0, a=k * b, b=-k * a, omega=omega)
    return ControlLaw(
        coeffs=FourierCoefficients(a0=a0, a=a, b=b, omega=omega),
        angle_coeffs=angle,
        accel_coeffs=accel,
        period=period,
        per_period_drift=0.5 * a0 * period,
    )


def _solve_zero_start(base: np.ndarray, basis: HarmonicBasisSpec, sup_t: float, inf_t: float,
                      ftol: float = 1e-10, bracket: float = 3.0):
    """Find the first cosine amplitude that makes the reconstructed u(0) = 0.

    `base` is the cascade vector with slot 0 zeroed; the free amplitude is
    inserted un-normalized (shape is invariant under positive scaling).
    Bracketed bisection over [-bracket, bracket] on u(0).
    """
    span_t = sup_t - inf_t
    n = 4096 * basis.K
    grid = _hat_basis(basis.K, basis.omega, n)
    rest = base @ grid
    cos_row = grid[0]
    u0_rest = float(base[0::2].sum())  # slot 0 is zero

    def residual(y: float) -> tuple[float, float, float]:
        work = base.copy()
        work[0] = y
        lo, hi = _polished_extremes(work, basis.omega, y * cos_row + rest)
        scale = span_t / (hi - lo)
        return inf_t + scale * (y + u0_rest - lo), lo, hi

    def solved(y: float, lo: float, hi: float):
        h_full = base.copy()
        h_full[0] = y
        scale = span_t / (hi - lo)
        return h_full, scale, inf_t - scale * lo

    f0, lo0, hi0 = residual(0.0)
    if abs(f0) <= ftol:
        return solved(0.0, lo0, hi0)
    f_lo, *_ = residual(-bracket)
    f_hi, *_ = residual(bracket)
    if f_lo * f0 < 0.0:
        a, fa, b_ = -bracket, f_lo, 0.0
    elif f0 * f_hi < 0.0:
        a, fa, b_ = 0.0, f0, bracket
    elif f_lo * f_hi < 0.0:
        a, fa, b_ = -bracket, f_lo, bracket
    else:
        raise ZeroStartInfeasibleError("infeasible zero-start shape")
    mid, fm, lo, hi = a, fa, 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (a + b_)
        fm, lo, hi = residual(mid)
        if abs(fm) <= ftol or (b_ - a) < 1e-15:
            return solved(mid, lo, hi)
        if fa * fm < 0.0:
            b_ = mid
        else:
            a, fa = mid, fm
    return solved(mid, lo, hi)


def reconstruct(params: ControlParams) -> ControlLaw:
    """Affine map of the unit waveform onto its target range.

    The scale is span(u)/span(hat) and the offset pins the range infimum;
    with `zero_start` the first cosine amplitude is solved so that the
    reconstructed control vanishes at tau = 0.
    """
    basis = params.basis
    sup_t, inf_t = range_targets(params.span, params.bounds)
    if params.zero_start:
        base = unit_vector_from_angles(params.shape)
        base[0] = 0.0  # phi[0] = pi/2 exactly; drop the cos rounding dust
        h_full, scale, offset = _solve_zero_start(base, basis, sup_t, inf_t)
    else:
        h_full = unit_vector_from_angles(params.shape)
        lo, hi = extremes_of_hat(h_full, basis)
        scale = (sup_t - inf_t) / (hi - lo)
        offset = inf_t - scale * lo
    a = scale * h_full[0::2]
    b = scale * h_full[1::2]
    return _law_from_series(2.0 * offset, a, b, basis.omega)


# ---------------------------------------------------------------------------
# staged-basis lift


def lift(params: ControlParams) -> ControlParams:
    """Express a K-harmonic solution in the 2K basis at half the frequency.

    New odd harmonics get zero amplitude (angle pairs pinned at pi/2); even
    harmonics inherit the previous amplitudes, so the reconstructed control
    is unchanged.  Zero-start solutions route through the solved amplitude
    vector, because the solved first amplitude lives outside the angle
    cascade and plain angle interleaving would drop it.
    """
    K = params.basis.K
    new_basis = HarmonicBasisSpec(K=2 * K, omega=params.basis.omega / 2.0)
    if params.zero_start:
        law = reconstruct(params)
        h_old = np.empty(2 * K)
        h_old[0::2] = law.coeffs.a
        h_old[1::2] = law.coeffs.b
        h_old /= np.linalg.norm(h_old)
        lifted = np.zeros(4 * K)
        lifted[2::4] = h_old[0::2]
        lifted[3::4] = h_old[1::2]
        new_shape = angles_from_unit_vector(lifted)
    else:
        old = params.shape.phi
        angles = []
        for j in range(K):
            angles.extend((HALF_PI, HALF_PI, old[2 * j]))
            if 2 * j + 1 < len(old):
                angles.append(old[2 * j + 1])
        new_shape = ShapeCoordinates(tuple(angles))
    return ControlParams(
        basis=new_basis,
        shape=new_shape,
        span=params.span,
        bounds=params.bounds,
        zero_start=params.zero_start,
    )


# ---------------------------------------------------------------------------
# sampled-signal helpers


def span_of(values: np.ndarray) -> float:
    """Length of the smallest interval containing the sampled values."""
    return float(np.max(values) - np.min(values))


def shape_of(values: np.ndarray) -> np.ndarray:
    """Samples affinely normalized onto [0, 1]; invariant to positive scaling."""
    lo = np.min(values)
    s = np.max(values) - lo
    if s == 0.0:
        raise DegenerateShapeError("constant samples have no shape")
    return (values - lo) / s


def _series_value(coeffs: FourierCoefficients, s):
    if isinstance(s, np.ndarray):
        c, si = harmonic_tables(coeffs.K, coeffs.omega, s)
        return 0.5 * coeffs.a0 + coeffs.a @ c + coeffs.b @ si
    acc = 0.5 * coeffs.a0
    for k in range(coeffs.K):
        w = (k + 1) * coeffs.omega
        acc += coeffs.a[k] * math.cos(w * s) + coeffs.b[k] * math.sin(w * s)
    return acc
