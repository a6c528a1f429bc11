"""Differential evolution over control parameters and greedy harmonic staging.

Each stage optimizes the hyperspherical shape angles plus the span pair
(p, q) for a fixed harmonic basis, scoring candidates by travel distance
over one control period with penalty-weighted constraint excesses.  The
next stage doubles the harmonic count, halves the fundamental frequency and
seeds its population with the lifted incumbent, so the reported distance
can never decrease across stages.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .fourier import (
    TWO_PI,
    ControlBounds,
    ControlParams,
    DegenerateShapeError,
    HarmonicBasisSpec,
    ShapeCoordinates,
    SpanParams,
    ZeroStartInfeasibleError,
    extremes_of_hat,
    lift,
    reconstruct,
    unit_vector_from_angles,
)
from .model import SystemParams
from .simulator import ActuatorLimits, ConstraintReport, distance_and_report

HALF_PI = 0.5 * math.pi
SPAN_FLOOR = 1e-6  # p, q live in (0, 1]; the optimizer box starts here


@dataclass(frozen=True)
class DEConfig:
    """rand/1/bin settings; population defaults to 20x the problem dimension."""

    population: int | None = None
    mutation: float = 0.8
    crossover: float = 0.9
    generations: int = 300
    seed: int = 42
    penalty: float = 1e3
    workers: int = 1

    def __post_init__(self):
        if not (0.0 < self.mutation <= 2.0):
            raise ValueError(f"mutation factor must lie in (0, 2], got {self.mutation}")
        if not (0.0 <= self.crossover <= 1.0):
            raise ValueError(f"crossover rate must lie in [0, 1], got {self.crossover}")
        if self.generations < 0:
            raise ValueError("generation count must be non-negative")
        if self.penalty <= 0.0:
            raise ValueError("penalty weight must be positive")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")

    def resolved_population(self, dimension: int) -> int:
        np_ = self.population if self.population is not None else 20 * dimension
        if np_ < 4:
            raise ValueError(f"population must be at least 4, got {np_}")
        return np_

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "mutation": self.mutation,
            "crossover": self.crossover,
            "generations": self.generations,
            "seed": self.seed,
            "penalty": self.penalty,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DEConfig":
        pop = data.get("population")
        return cls(
            population=None if pop is None else int(pop),
            mutation=float(data.get("mutation", 0.8)),
            crossover=float(data.get("crossover", 0.9)),
            generations=int(data.get("generations", 300)),
            seed=int(data.get("seed", 42)),
            penalty=float(data.get("penalty", 1e3)),
            workers=int(data.get("workers", 1)),
        )


@dataclass(frozen=True)
class StageSpec:
    """One optimization stage: harmonic count, fundamental frequency, validation length."""

    k: int
    omega: float
    validation_periods: int

    def __post_init__(self):
        if self.k < 1 or self.omega <= 0 or self.validation_periods < 1:
            raise ValueError("stage needs k >= 1, omega > 0 and at least one validation period")


@dataclass(frozen=True)
class StagePlan:
    """Ordered stages; consecutive stages double k and halve omega."""

    stages: tuple
    cost_horizon: str = "period"

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise ValueError("plan needs at least one stage")
        if self.cost_horizon not in ("period", "full"):
            raise ValueError("cost_horizon must be 'period' or 'full'")
        for prev, nxt in zip(stages, stages[1:]):
            if nxt.k != 2 * prev.k or abs(nxt.omega - prev.omega / 2) > 1e-12:
                raise ValueError(
                    f"stage ({nxt.k}, {nxt.omega}) must double k and halve omega of "
                    f"({prev.k}, {prev.omega})"
                )

    @classmethod
    def default(cls) -> "StagePlan":
        return cls(stages=(StageSpec(3, 1.0, 24), StageSpec(6, 0.5, 12), StageSpec(12, 0.25, 6)))

    def truncated(self, n_stages: int) -> "StagePlan":
        return replace(self, stages=self.stages[:max(1, n_stages)])

    def to_dict(self) -> dict:
        return {
            "stages": [{"k": s.k, "omega": s.omega, "validation_periods": s.validation_periods}
                       for s in self.stages],
            "cost_horizon": self.cost_horizon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StagePlan":
        return cls(
            stages=tuple(StageSpec(int(s["k"]), float(s["omega"]), int(s["validation_periods"]))
                         for s in data["stages"]),
            cost_horizon=data.get("cost_horizon", "period"),
        )


@dataclass(frozen=True)
class StageResult:
    """Best solution of one stage, validated over the full horizon."""

    params: ControlParams
    cost: float
    distance: float
    report: ConstraintReport
    evaluations: int
    seed: int
    improved: bool

    def to_dict(self) -> dict:
        return {
            "k": self.params.basis.K,
            "omega": self.params.basis.omega,
            "phi": list(self.params.shape.phi),
            "p": self.params.span.p,
            "q": self.params.span.q,
            "J": self.cost,
            "distance": self.distance,
            "feasible": self.report.feasible,
            "evaluations": self.evaluations,
            "seed": self.seed,
            "improved": self.improved,
        }


# ---------------------------------------------------------------------------
# genome codec


def genome_bounds(k: int, zero_start: bool = True):
    """Coordinate box for the optimizer: angles, then p and q."""
    n_angles = 2 * k - 2 if zero_start else 2 * k - 1
    lo = np.zeros(n_angles + 2)
    hi = np.empty(n_angles + 2)
    if n_angles:
        hi[:n_angles] = math.pi
        hi[n_angles - 1] = TWO_PI
    lo[n_angles:] = SPAN_FLOOR
    hi[n_angles:] = 1.0
    return lo, hi


def genome_to_params(genome, basis: HarmonicBasisSpec, bounds: ControlBounds,
                     zero_start: bool = True) -> ControlParams:
    genome = np.asarray(genome, dtype=float)
    angles = genome[:-2]
    if angles.size:
        gene_phi = (*angles[:-1], angles[-1] % TWO_PI)
    else:
        gene_phi = ()
    phi = (HALF_PI, *gene_phi) if zero_start else gene_phi
    return ControlParams(
        basis=basis,
        shape=ShapeCoordinates(phi),
        span=SpanParams(float(genome[-2]), float(genome[-1])),
        bounds=bounds,
        zero_start=zero_start,
    )


def params_to_genome(params: ControlParams) -> np.ndarray:
    skip = 1 if params.zero_start else 0
    return np.array([*params.shape.phi[skip:], params.span.p, params.span.q])


def drift_free_genome(rng, basis: HarmonicBasisSpec, bounds: ControlBounds,
                      zero_start: bool = True, angle_bound: float = math.pi / 3) -> np.ndarray:
    """Random genome shaped to respect the kinematic envelope.

    Uniform span draws almost never produce a usable candidate: a control
    with nonzero mean winds the pendulum angle up every period, and one
    sized without regard to the angle bound swings far outside it.  Here
    the span pair is solved so the control has zero mean and an angle
    amplitude at a random fraction of the bound (capped by the admissible
    speed), which populates generation zero with candidates that can
    actually break friction.  For zero-start draws the first cosine
    amplitude is chosen so the waveform itself vanishes at zero, making
    zero mean and u(0) = 0 simultaneously attainable.
    """
    from .fourier import _hat_basis

    k = basis.K
    width = bounds.u_max - bounds.u_min
    if zero_start:
        gene_angles = rng.uniform(0.0, math.pi, size=2 * k - 2)
        if gene_angles.size:
            gene_angles[-1] = rng.uniform(0.0, TWO_PI)
        h = unit_vector_from_angles((HALF_PI, *gene_angles))
        h[0] = -float(h[2::2].sum())  # zero-mean and u(0)=0 coincide
    else:
        gene_angles = rng.uniform(0.0, math.pi, size=2 * k - 1)
        gene_angles[-1] = rng.uniform(0.0, TWO_PI)
        h = unit_vector_from_angles(gene_angles)
    amp_frac = rng.uniform(0.5, 1.0)
    fallback = np.array([*gene_angles, rng.uniform(0.5, 1.0), rng.uniform(SPAN_FLOOR, 1.0)])
    try:
        lo, hi = extremes_of_hat(h, basis)
    except DegenerateShapeError:
        return fallback
    if not (lo < 0.0 < hi):
        return fallback
    # angle amplitude of the zero-mean waveform's antiderivative
    grid = _hat_basis(k, basis.omega, 4096 * k)
    freq = np.arange(1, k + 1) * basis.omega
    angle_wave = (h[0::2] / freq) @ grid[1::2] - (h[1::2] / freq) @ grid[0::2]
    angle_amp = float(np.max(np.abs(angle_wave - angle_wave[0])))
    if angle_amp <= 0.0:
        return fallback
    scale = amp_frac * angle_bound / angle_amp
    scale = min(scale, 0.98 * bounds.u_max / hi, 0.98 * bounds.u_min / lo)
    sup_t = scale * hi
    inf_t = scale * lo
    p = (sup_t - bounds.u_min) / width
    q = (sup_t - inf_t) / (sup_t - bounds.u_min)
    if not (SPAN_FLOOR <= p <= 1.0 and SPAN_FLOOR <= q <= 1.0):
        return fallback
    return np.array([*gene_angles, p, q])


# ---------------------------------------------------------------------------
# cost


def cost(params: ControlParams, system: SystemParams, limits: ActuatorLimits,
         horizon: float, h: float = 1e-3, angle_horizon: float | None = None,
         penalty: float = 1e3) -> float:
    """Negative travel distance plus penalty-weighted constraint excesses.

    Controls whose zero-start amplitude cannot be solved are not errors for
    the optimizer; they map to the flat penalty so selection discards them.
    """
    try:
        law = reconstruct(params)
    except (ZeroStartInfeasibleError, DegenerateShapeError):
        return penalty
    dist, report = distance_and_report(law, system, limits, horizon, h, angle_horizon)
    return -dist + penalty * report.violation_sum


@dataclass(frozen=True)
class StageCost:
    """Picklable genome cost for one stage (usable from worker processes)."""

    basis: HarmonicBasisSpec
    bounds: ControlBounds
    system: SystemParams
    limits: ActuatorLimits
    horizon: float
    angle_horizon: float
    h: float
    penalty: float
    zero_start: bool = True

    def __call__(self, genome) -> float:
        params = genome_to_params(genome, self.basis, self.bounds, self.zero_start)
        return cost(params, self.system, self.limits, self.horizon, self.h,
                    self.angle_horizon, self.penalty)


@dataclass(frozen=True)
class ZeroDriftRepair:
    """Trial repair: re-solve q so the reconstructed control has zero mean.

    Any nonzero mean accumulates pendulum angle every period, so the
    multi-period angle check leaves only a hair-thin slice of the (p, q)
    box feasible; recombined trials would practically never land on it.
    Projecting q back onto the zero-mean manifold turns the box into a
    well-conditioned search space.  Trials whose shape cannot support zero
    mean are left alone and culled by the penalty.
    """

    basis: HarmonicBasisSpec
    bounds: ControlBounds
    zero_start: bool = True

    def __call__(self, genome: np.ndarray) -> np.ndarray:
        angles = genome[:-2]
        if angles.size:
            phi = (*angles[:-1], angles[-1] % TWO_PI)
        else:
            phi = ()
        if self.zero_start:
            h = unit_vector_from_angles((HALF_PI, *phi))
            h[0] = -float(h[2::2].sum())
        else:
            h = unit_vector_from_angles(phi)
        try:
            lo, hi = extremes_of_hat(h, self.basis)
        except DegenerateShapeError:
            return genome
        if not (lo < 0.0 < hi):
            return genome
        p = float(genome[-2])
        sup_t = p * self.bounds.u_max + (1.0 - p) * self.bounds.u_min
        if sup_t <= 0.0:
            return genome
        inf_t = sup_t * lo / hi
        if inf_t < self.bounds.u_min:
            return genome
        q = (sup_t - inf_t) / (sup_t - self.bounds.u_min)
        if SPAN_FLOOR <= q <= 1.0:
            repaired = genome.copy()
            repaired[-1] = q
            return repaired
        return genome


# ---------------------------------------------------------------------------
# differential evolution


@dataclass
class DEResult:
    x: np.ndarray
    cost: float
    history: list
    evaluations: int


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold out-of-box coordinates back inside by reflection off the walls."""
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


def de_minimize(fn, lo, hi, config: DEConfig, seeds=(), repair=None) -> DEResult:
    """DE/rand/1/bin with elitist replacement and verbatim seeding.

    All random draws of a generation are taken from the seeded generator
    before any trial is evaluated, so results do not depend on evaluation
    order or parallelism.  A trial replaces its target when it is not worse,
    and the best-so-far cost is therefore non-increasing.  `repair`, when
    given, maps each trial vector (never a seed) back onto a preferred
    manifold after bound reflection.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dim = lo.size
    n_pop = config.resolved_population(dim)
    if len(seeds) > n_pop:
        raise ValueError("more seed individuals than population slots")
    rng = np.random.default_rng(config.seed)

    pop = np.empty((n_pop, dim))
    for i, seed_vec in enumerate(seeds):
        pop[i] = np.asarray(seed_vec, dtype=float)
    pop[len(seeds):] = rng.uniform(lo, hi, size=(n_pop - len(seeds), dim))

    executor = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None

    def evaluate(rows) -> np.ndarray:
        if executor is not None:
            return np.array(list(executor.map(fn, rows, chunksize=8)))
        return np.array([fn(row) for row in rows])

    try:
        costs = evaluate(pop)
        evaluations = n_pop
        best = int(np.argmin(costs))
        history = [float(costs[best])]
        for _ in range(config.generations):
            # draws first: partner indices, crossover mask, forced coordinate
            partners = np.empty((n_pop, 3), dtype=np.int64)
            for i in range(n_pop):
                choice = rng.choice(n_pop - 1, size=3, replace=False)
                choice[choice >= i] += 1
                partners[i] = choice
            cross = rng.random((n_pop, dim)) < config.crossover
            forced = rng.integers(dim, size=n_pop)
            cross[np.arange(n_pop), forced] = True

            mutants = pop[partners[:, 0]] + config.mutation * (
                pop[partners[:, 1]] - pop[partners[:, 2]])
            mutants = _reflect(mutants, lo, hi)
            trials = np.where(cross, mutants, pop)
            if repair is not None:
                trials = np.array([repair(t) for t in trials])

            trial_costs = evaluate(trials)
            evaluations += n_pop
            accept = trial_costs <= costs
            pop[accept] = trials[accept]
            costs[accept] = trial_costs[accept]
            best = int(np.argmin(costs))
            history.append(float(costs[best]))
    finally:
        if executor is not None:
            executor.shutdown()
    return DEResult(x=pop[best].copy(), cost=float(costs[best]),
                    history=history, evaluations=evaluations)


# ---------------------------------------------------------------------------
# greedy staging


def greedy_optimize(plan: StagePlan, system: SystemParams, limits: ActuatorLimits,
                    de_config: DEConfig, h: float = 1e-3, zero_start: bool = True):
    """Run the staged optimization; returns one StageResult per stage.

    Stage n+1 seeds its population with the lifted stage-n solution.  The
    stage winner is validated over the full horizon and kept only if it
    travels at least as far as the carried incumbent; otherwise the lifted
    incumbent is reported unchanged, which makes stage distances exactly
    non-decreasing.
    """
    control_bounds = ControlBounds(-limits.speed_max, limits.speed_max)
    results = []
    incumbent = None
    for index, stage in enumerate(plan.stages):
        basis = HarmonicBasisSpec(stage.k, stage.omega)
        period = basis.period
        validation_horizon = stage.validation_periods * period
        cost_horizon = period if plan.cost_horizon == "period" else validation_horizon
        stage_cost = StageCost(
            basis=basis, bounds=control_bounds, system=system, limits=limits,
            horizon=cost_horizon, angle_horizon=validation_horizon, h=h,
            penalty=de_config.penalty, zero_start=zero_start,
        )
        lo, hi = genome_bounds(stage.k, zero_start)
        stage_seed = de_config.seed + index
        init_rng = np.random.default_rng(stage_seed)
        seeds = []
        lifted = None
        if incumbent is not None:
            lifted = lift(incumbent.params)
            seeds.append(params_to_genome(lifted))
        n_pop = de_config.resolved_population(lo.size)
        while len(seeds) < n_pop:
            seeds.append(drift_free_genome(init_rng, basis, control_bounds, zero_start))
        repair = ZeroDriftRepair(basis, control_bounds, zero_start)
        result = de_minimize(stage_cost, lo, hi, replace(de_config, seed=stage_seed),
                             seeds, repair=repair)

        winner = genome_to_params(result.x, basis, control_bounds, zero_start)
        try:
            law = reconstruct(winner)
            dist, report = distance_and_report(law, system, limits, validation_horizon, h)
        except (ZeroStartInfeasibleError, DegenerateShapeError):
            if incumbent is None:
                raise
            dist, report = -math.inf, None

        if incumbent is not None and dist < incumbent.distance:
            # the lifted control is pointwise the incumbent's; carry its
            # validated distance and report unchanged
            stage_result = StageResult(
                params=lifted,
                cost=-incumbent.distance + de_config.penalty * incumbent.report.violation_sum,
                distance=incumbent.distance,
                report=incumbent.report,
                evaluations=result.evaluations,
                seed=stage_seed,
                improved=False,
            )
        else:
            stage_result = StageResult(
                params=winner,
                cost=-dist + de_config.penalty * report.violation_sum,
                distance=dist,
                report=report,
                evaluations=result.evaluations,
                seed=stage_seed,
                improved=True,
            )
        results.append(stage_result)
        incumbent = stage_result
    return results
