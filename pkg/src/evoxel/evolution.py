"""Closed-loop episodes, fitness, and the generation loop around CMA-ES."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .morphology import MorphologyModel, corner_distances
from .optimizer import CMAES, Candidate, CmaesError
from .snn import PARAMS_PER_NET, GenomeError, OutputMode, SNNController
from .softbody import ACTION_MIN, PhysicsParams, SimulationDiverged, build_world, mean_x, set_action, step

log = logging.getLogger(__name__)

COM_FALL_FRACTION = 0.6
TOP_FALL_FRACTION = 0.5


class FallMode(Enum):
    CLAMP = "clamp"
    DISQUALIFY = "disqualify"


@dataclass(frozen=True)
class SimConfig:
    total_steps: int = 1000
    sample_interval: int = 12
    platform_length: float = 100.0
    normalize_inputs: bool = True
    fall_penalty_mode: FallMode = FallMode.CLAMP
    output_mode: OutputMode = OutputMode.BINARY
    physics: PhysicsParams = field(default_factory=PhysicsParams.load)
    seed: int = 0

    def __post_init__(self):
        if not self.total_steps >= self.sample_interval >= 1:
            raise ValueError("need total_steps >= sample_interval >= 1")

    @property
    def control_ticks(self) -> int:
        return self.total_steps // self.sample_interval

    def describe(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "sample_interval": self.sample_interval,
            "platform_length": self.platform_length,
            "normalize_inputs": self.normalize_inputs,
            "fall_penalty_mode": self.fall_penalty_mode.value,
            "output_mode": self.output_mode.value,
            "physics": self.physics.to_dict(),
            "seed": self.seed,
        }


@dataclass
class FitnessReport:
    fitness: float
    initial_mean_x: float
    final_mean_x: float
    fell: bool
    diverged: bool
    action_trace: np.ndarray  # (ticks, n_actuators)
    telemetry_trace: np.ndarray  # (ticks, n_actuators, 2)
    fall_tick: int | None = None

    @property
    def displacement(self) -> float:
        return self.final_mean_x - self.initial_mean_x


@dataclass(frozen=True)
class RunRecord:
    population_id: int
    generation: int
    best_fitness: float
    best_genome: np.ndarray
    wall_time: float


def fitness_from_positions(initial_x, final_x, platform_length: float = 100.0) -> float:
    """Platform length minus the displacement of the mean point-mass x; 0 is a perfect run."""
    return platform_length - (float(np.mean(final_x)) - float(np.mean(initial_x)))


@dataclass(frozen=True)
class FallReference:
    com_height: float
    top_height: float


def fall_reference(positions, model: MorphologyModel, ground_height: float = 0.0) -> FallReference:
    p = np.asarray(positions, dtype=float)
    return FallReference(
        com_height=float(p[:, 1].mean()) - ground_height,
        top_height=float(p[list(model.top_row), 1].mean()) - ground_height,
    )


def detect_fall(positions, model: MorphologyModel, reference: FallReference,
                ground_height: float = 0.0) -> bool:
    """Fallen if the centre of mass sinks below 60 % of its starting height, or the
    torso top (mean of the top row of masses) below half of its own, which for
    Ubot is the height of the leg tops."""
    p = np.asarray(positions, dtype=float)
    com = float(p[:, 1].mean()) - ground_height
    top = float(p[list(model.top_row), 1].mean()) - ground_height
    return com < COM_FALL_FRACTION * reference.com_height or top < TOP_FALL_FRACTION * reference.top_height


def _check_genome(genome, model: MorphologyModel) -> np.ndarray:
    g = np.asarray(genome, dtype=float).ravel()
    if len(g) != PARAMS_PER_NET * model.n_actuators:
        raise GenomeError(
            f"genome length {len(g)} does not match {model.n_actuators} actuators "
            f"({model.genome_length} expected)"
        )
    return g


def evaluate(genome, model: MorphologyModel, config: SimConfig, frozen_actuator: int | None = None
             ) -> FitnessReport:
    """Simulate one episode with closed-loop SNN control.

    ``frozen_actuator`` overrides that actuator's action to the contracted
    length on every tick, while its network keeps running.
    """
    g = _check_genome(genome, model)
    if frozen_actuator is not None and not 0 <= frozen_actuator < model.n_actuators:
        raise IndexError(f"actuator index {frozen_actuator} out of range")
    params = config.physics
    world = build_world(model, params)
    controller = SNNController.from_genome(g, model.n_actuators, config.output_mode).reset()
    ticks = config.control_ticks
    actions = np.full((ticks, model.n_actuators), ACTION_MIN)
    telemetry = np.zeros((ticks, model.n_actuators, 2))
    x0 = world.position[:, 0].copy()
    ref = fall_reference(world.position, model, params.ground_height)
    fell = False
    fall_tick = None
    diverged = False
    try:
        for tick in range(ticks):
            d = corner_distances(world.position, model, normalize=config.normalize_inputs)
            a = controller.step(d)
            if frozen_actuator is not None:
                a[frozen_actuator] = ACTION_MIN
            telemetry[tick] = d
            actions[tick] = a
            set_action(world, a)
            if not fell and detect_fall(world.position, model, ref, params.ground_height):
                fell, fall_tick = True, tick
            step(world, config.sample_interval)
        remaining = config.total_steps - ticks * config.sample_interval
        if remaining:
            step(world, remaining)
        if not fell and detect_fall(world.position, model, ref, params.ground_height):
            fell, fall_tick = True, ticks
    except SimulationDiverged as exc:
        log.warning("episode diverged: %s", exc)
        diverged = True

    initial = float(np.mean(x0))
    if diverged:
        return FitnessReport(
            fitness=config.platform_length, initial_mean_x=initial, final_mean_x=initial,
            fell=fell, diverged=True, action_trace=actions, telemetry_trace=telemetry,
            fall_tick=fall_tick,
        )
    final = mean_x(world.position)
    fitness = fitness_from_positions(x0, world.position[:, 0], config.platform_length)
    if fell:
        if config.fall_penalty_mode is FallMode.CLAMP:
            fitness = max(fitness, config.platform_length)
        else:
            fitness = 2 * config.platform_length
    return FitnessReport(
        fitness=fitness, initial_mean_x=initial, final_mean_x=final, fell=fell, diverged=False,
        action_trace=actions, telemetry_trace=telemetry, fall_tick=fall_tick,
    )


def evaluate_fitness(genome, model: MorphologyModel, config: SimConfig) -> float:
    return evaluate(genome, model, config).fitness


# -- parallel fitness -----------------------------------------------------------------

def worker_count() -> int:
    cap = os.environ.get("EVOXEL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer EVOXEL_THREADS=%r", cap)
    return n


_worker_state: tuple[MorphologyModel, SimConfig] | None = None


def _init_worker(model, config):
    global _worker_state
    _worker_state = (model, config)


def _worker_eval(genome):
    model, config = _worker_state
    return evaluate(genome, model, config).fitness


class FitnessPool:
    """Evaluates batches of genomes, in worker processes when more than one is allowed.

    Results come back in submission order, so scheduling never changes them.
    """

    def __init__(self, model: MorphologyModel, config: SimConfig, workers: int | None = None):
        self.model = model
        self.config = config
        self.workers = worker_count() if workers is None else workers
        self._pool = None
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(
                max_workers=self.workers, initializer=_init_worker, initargs=(model, config)
            )

    def map(self, genomes) -> list[float]:
        if self._pool is None:
            return [evaluate(g, self.model, self.config).fitness for g in genomes]
        return list(self._pool.map(_worker_eval, list(genomes)))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_evolution(model: MorphologyModel, config: SimConfig, generations: int, population: int = 12,
                  population_id: int = 0, seed: int | None = None, sigma: float = 1.0,
                  pool: FitnessPool | None = None) -> Iterator[RunRecord]:
    """Yield one record per generation, holding that generation's best genome.

    Starts from the all-zero genome with step size ``sigma``. An optimizer
    degeneracy ends the stream early; records already yielded stand.
    """
    if generations <= 0:
        return
    seed = config.seed if seed is None else seed
    es = CMAES(np.zeros(model.genome_length), sigma, population, seed)
    own_pool = pool is None
    pool = pool or FitnessPool(model, config)
    try:
        for gen in range(generations):
            start = time.perf_counter()
            genomes = es.ask()
            fitness = pool.map(genomes)
            best = int(np.argmin(fitness))
            try:
                es.tell([Candidate(g, f) for g, f in zip(genomes, fitness)])
            except CmaesError as exc:
                log.error("population %d stopped at generation %d: %s", population_id, gen, exc)
                yield RunRecord(population_id, gen, float(fitness[best]), genomes[best].copy(),
                                time.perf_counter() - start)
                return
            yield RunRecord(population_id, gen, float(fitness[best]), genomes[best].copy(),
                            time.perf_counter() - start)
    finally:
        if own_pool:
            pool.close()


def run_parallel(model: MorphologyModel, config: SimConfig, n_populations: int, generations: int,
                 population: int = 12, sigma: float = 1.0) -> list[RunRecord]:
    """Independent CMA-ES runs with seeds ``config.seed + i``; no genome exchange."""
    if n_populations < 1:
        raise ValueError("n_populations must be at least 1")
    records: list[RunRecord] = []
    with FitnessPool(model, config) as pool:
        for pid in range(n_populations):
            try:
                records.extend(run_evolution(model, config, generations, population, pid,
                                             seed=config.seed + pid, sigma=sigma, pool=pool))
            except Exception:
                log.exception("population %d failed", pid)
    return records


def best_record(records: list[RunRecord]) -> RunRecord:
    if not records:
        raise ValueError("no records")
    return min(records, key=lambda r: (r.best_fitness, r.population_id, r.generation))


def random_search(model: MorphologyModel, config: SimConfig, n_samples: int, low: float = -3.0,
                  high: float = 3.0, seed: int = 0) -> Candidate:
    """Best of ``n_samples`` uniform random genomes: the baseline evolution must beat."""
    rng = np.random.default_rng(seed)
    genomes = rng.uniform(low, high, size=(n_samples, model.genome_length))
    with FitnessPool(model, config) as pool:
        fitness = pool.map(genomes)
    best = int(np.argmin(fitness))
    return Candidate(genomes[best], float(fitness[best]))


# -- morphological communication probe --------------------------------------------------

@dataclass
class ProbeReport:
    frozen_actuator: int
    divergence: np.ndarray  # fraction of ticks whose action differs, per actuator
    first_divergence: list[int | None]
    baseline: FitnessReport
    frozen: FitnessReport

    @property
    def distal_divergence(self) -> np.ndarray:
        mask = np.ones(len(self.divergence), dtype=bool)
        mask[self.frozen_actuator] = False
        return self.divergence[mask]


def probe_morphological_communication(genome, model: MorphologyModel, config: SimConfig,
                                      frozen_actuator: int) -> ProbeReport:
    """Silence one actuator and measure how every other actuator's action trace changes."""
    if not 0 <= frozen_actuator < model.n_actuators:
        raise IndexError(f"actuator index {frozen_actuator} out of range 0..{model.n_actuators - 1}")
    baseline = evaluate(genome, model, config)
    frozen = evaluate(genome, model, config, frozen_actuator=frozen_actuator)
    differs = baseline.action_trace != frozen.action_trace
    divergence = differs.mean(axis=0)
    first = [int(np.argmax(col)) if col.any() else None for col in differs.T]
    return ProbeReport(frozen_actuator, divergence, first, baseline, frozen)
