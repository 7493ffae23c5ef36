"""Command-line entry point: ``evoxel {evolve,replay,probe,calibrate,plot}``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 numerical failure.
Every command prints a one-line JSON config echo first; it, together with the
seed it contains, determines the outputs. All files go under ``--output-dir``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .evolution import FallMode, SimConfig, best_record, evaluate, probe_morphological_communication, run_parallel
from .morphology import MorphologyModel, RobotError, build_morphology, load_robot
from .optimizer import CmaesError
from .plotting import action_trace_svg, fitness_svg
from .snn import GenomeError, OutputMode, format_genome, read_genome
from .softbody import PhysicsParams, SimulationDiverged, settling_response

log = logging.getLogger("evoxel")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SETTLE_TARGET = 12
SETTLE_TOLERANCE = 4


class InputError(Exception):
    """Unreadable or inconsistent input files."""


class NumericalError(Exception):
    """Simulation or optimizer failure."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    robot_path: str = "ubot"
    physics_path: str | None = None
    generations: int = 20
    population: int = 12
    n_populations: int = 1
    seed: int = 0
    sigma: float = 1.0
    output_dir: str = "."
    steps: int = 1000
    sample_interval: int = 12
    normalize: bool = True
    output_mode: str = OutputMode.BINARY.value
    fall_mode: str = FallMode.CLAMP.value

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> ExperimentConfig:
        names = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in vars(args).items() if k in names})

    def physics(self) -> PhysicsParams:
        try:
            return PhysicsParams.load(self.physics_path)
        except (OSError, ValueError, TypeError) as exc:
            raise InputError(f"cannot load physics parameters: {exc}") from exc

    def model(self) -> MorphologyModel:
        try:
            return build_morphology(load_robot(self.robot_path))
        except RobotError as exc:
            raise InputError(str(exc)) from exc

    def sim_config(self) -> SimConfig:
        try:
            return SimConfig(
                total_steps=self.steps,
                sample_interval=self.sample_interval,
                normalize_inputs=self.normalize,
                fall_penalty_mode=FallMode(self.fall_mode),
                output_mode=OutputMode(self.output_mode),
                physics=self.physics(),
                seed=self.seed,
            )
        except ValueError as exc:
            raise InputError(str(exc)) from exc

    def out(self, name: str) -> Path:
        d = Path(self.output_dir)
        d.mkdir(parents=True, exist_ok=True)
        return d / name


def _num(x) -> str:
    # repr of a plain float round-trips exactly
    return repr(float(x))


def _echo(command: str, cfg: ExperimentConfig, **extra) -> dict:
    doc = {"command": command, **asdict(cfg), **extra}
    print(json.dumps({"config": doc}, sort_keys=True))
    return doc


# -- readers ----------------------------------------------------------------------------

def read_run_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(generations, best_fitness, genomes)`` from a run CSV."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or rows[0][:2] != ["generation", "best_fitness"]:
        raise InputError(f"{path}: missing 'generation,best_fitness' header")
    if len(rows) == 1:
        raise InputError(f"{path}: no data rows")
    try:
        gens = np.array([int(r[0]) for r in rows[1:]])
        fit = np.array([float(r[1]) for r in rows[1:]])
        genomes = np.array([[float(x) for x in r[2:]] for r in rows[1:]])
    except ValueError as exc:
        raise InputError(f"{path}: malformed row: {exc}") from exc
    return gens, fit, genomes


def load_genome_any(path: str | Path) -> np.ndarray:
    """A genome from a one-row CSV, a ``summary.json``, or the best row of a run CSV."""
    path = Path(path)
    try:
        if path.suffix == ".json":
            doc = json.loads(path.read_text(encoding="utf-8"))
            return np.array([float(x) for x in doc["best_genome"]])
        head = path.read_text(encoding="utf-8").split(",", 1)[0]
        if head == "generation":
            _, fit, genomes = read_run_csv(path)
            return genomes[int(np.argmin(fit))]
        return read_genome(path)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read genome from {path}: {exc}") from exc


def _model_genome(cfg: ExperimentConfig, genome_path: str) -> tuple[MorphologyModel, np.ndarray]:
    model = cfg.model()
    genome = load_genome_any(genome_path)
    if len(genome) != model.genome_length:
        raise InputError(
            f"genome has {len(genome)} values but robot {model.grid.name!r} needs {model.genome_length}"
        )
    return model, genome


# -- commands ---------------------------------------------------------------------------

def cmd_evolve(cfg: ExperimentConfig) -> int:
    model, sim = cfg.model(), cfg.sim_config()
    echo = _echo("evolve", cfg)
    records = run_parallel(model, sim, cfg.n_populations, cfg.generations, cfg.population, cfg.sigma)
    if not records:
        raise NumericalError("every population failed before its first generation")
    header = ["generation", "best_fitness"] + [f"g{k}" for k in range(model.genome_length)]
    for pid in range(cfg.n_populations):
        lines = [",".join(header)]
        lines += [
            f"{r.generation},{_num(r.best_fitness)},{format_genome(r.best_genome)}"
            for r in records if r.population_id == pid
        ]
        cfg.out(f"run_{pid}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    best = best_record(records)
    summary = {
        "best_fitness": best.best_fitness,
        "best_population": best.population_id,
        "best_generation": best.generation,
        "best_genome": [float(x) for x in best.best_genome],
        "config": echo,
        "sim": sim.describe(),
    }
    cfg.out("summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    cfg.out("best_genome.csv").write_text(format_genome(best.best_genome) + "\n", encoding="utf-8")
    print(f"best fitness {_num(best.best_fitness)} (population {best.population_id}, generation {best.generation})")
    return EXIT_OK


def cmd_replay(cfg: ExperimentConfig, genome_path: str, svg: bool) -> int:
    model, genome = _model_genome(cfg, genome_path)
    sim = cfg.sim_config()
    _echo("replay", cfg, genome=str(genome_path))
    report = evaluate(genome, model, sim)
    if report.diverged:
        raise NumericalError("simulation diverged during replay")
    lines = ["tick,actuator,action,d_tl,d_br"]
    for t in range(len(report.action_trace)):
        for a in range(model.n_actuators):
            d_tl, d_br = report.telemetry_trace[t, a]
            lines.append(f"{t},{a},{_num(report.action_trace[t, a])},{_num(d_tl)},{_num(d_br)}")
    cfg.out("trace.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if svg:
        labels = [f"{a.actuator_index}: {a.kind.value} {a.cell}" for a in model.actuators]
        cfg.out("actions.svg").write_text(action_trace_svg(report.action_trace, labels), encoding="utf-8")
    state = " (fell)" if report.fell else ""
    print(f"fitness {_num(report.fitness)}{state}")
    print(f"displacement {_num(report.displacement)}")
    return EXIT_OK


def cmd_probe(cfg: ExperimentConfig, genome_path: str, actuator: int) -> int:
    model, genome = _model_genome(cfg, genome_path)
    if not 0 <= actuator < model.n_actuators:
        raise InputError(f"actuator index {actuator} out of range 0..{model.n_actuators - 1}")
    sim = cfg.sim_config()
    _echo("probe", cfg, genome=str(genome_path), actuator=actuator)
    rep = probe_morphological_communication(genome, model, sim, actuator)
    lines = ["actuator,kind,divergence,first_divergence,status"]
    print(f"{'actuator':>8}  {'kind':<10}  {'divergence':>10}  {'first':>5}  status")
    for a in model.actuators:
        i = a.actuator_index
        first = rep.first_divergence[i]
        status = "overridden" if i == actuator else ("diverged" if rep.divergence[i] > 0 else "unchanged")
        lines.append(f"{i},{a.kind.value},{_num(rep.divergence[i])},{'' if first is None else first},{status}")
        print(f"{i:>8}  {a.kind.value:<10}  {rep.divergence[i]:>10.4f}  {'-' if first is None else first:>5}  {status}")
    cfg.out("probe.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"baseline fitness {_num(rep.baseline.fitness)}, frozen fitness {_num(rep.frozen.fitness)}")
    return EXIT_OK


def _sweep(params: PhysicsParams, hold: int) -> list[tuple[float, float, int]]:
    rows = []
    for ks in (0.1, 0.25, 0.5, 1.0, 2.0, 4.0):
        for kd in (0.25, 0.5, 1.0, 2.0):
            p = params.with_(stiffness_actuator=params.stiffness_actuator * ks, damping=params.damping * kd)
            try:
                n = settling_response(p, hold).settling_steps
            except SimulationDiverged:
                n = -1
            rows.append((p.stiffness_actuator, p.damping, n))
    return rows


def cmd_calibrate(cfg: ExperimentConfig, hold: int, sweep: bool) -> int:
    params = cfg.physics()
    _echo("calibrate", cfg, hold=hold, sweep=sweep)
    report = settling_response(params, hold)
    lines = ["tick,target,separation"]
    lines += [f"{int(t)},{_num(target)},{_num(sep)}" for t, target, sep in report.trace]
    cfg.out("settle.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if sweep:
        rows = ["stiffness_actuator,damping,settling_steps"]
        rows += [f"{_num(k)},{_num(d)},{n}" for k, d, n in _sweep(params, hold)]
        cfg.out("sweep.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    n = report.settling_steps
    ok = abs(n - SETTLE_TARGET) <= SETTLE_TOLERANCE
    print(f"settling steps {n} (per swing {report.per_swing}); target {SETTLE_TARGET} +/- {SETTLE_TOLERANCE}: "
          f"{'ok' if ok else 'out of band'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_plot(cfg: ExperimentConfig, run_csvs: list[str]) -> int:
    _echo("plot", cfg, runs=[str(p) for p in run_csvs])
    curves = {}
    for k, path in enumerate(run_csvs):
        gens, fit, _ = read_run_csv(path)
        curves[k] = (gens, fit)
    cfg.out("fitness.svg").write_text(fitness_svg(curves), encoding="utf-8")
    print(f"plotted {len(curves)} run(s)")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, sim: bool = True) -> None:
    p.add_argument("--output-dir", default=".", help="directory for every output file")
    p.add_argument("--physics", dest="physics_path", default=None, help="physics parameter JSON")
    p.add_argument("--verbose", action="store_true")
    if not sim:
        return
    p.add_argument("--robot", dest="robot_path", default="ubot", help="robot JSON path or bundled name")
    p.add_argument("--steps", type=_positive, default=1000, help="physics steps per episode")
    p.add_argument("--sample-interval", type=_positive, default=12, help="physics steps per control tick")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                   help="divide telemetry by its rest-pose value")
    p.add_argument("--output-mode", choices=[m.value for m in OutputMode], default=OutputMode.BINARY.value)
    p.add_argument("--fall-mode", choices=[m.value for m in FallMode], default=FallMode.CLAMP.value)
    p.add_argument("--seed", type=_non_negative, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evoxel", description="Evolve spiking controllers for 2D voxel soft robots.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("evolve", help="run CMA-ES populations and write run CSVs")
    _common(p)
    p.add_argument("--generations", type=_positive, default=20)
    p.add_argument("--population", type=_positive, default=12)
    p.add_argument("--populations", dest="n_populations", type=_positive, default=1)
    p.add_argument("--sigma", type=float, default=1.0, help="initial CMA-ES step size")

    p = sub.add_parser("replay", help="simulate one genome and write its trace")
    _common(p)
    p.add_argument("genome", help="genome CSV row, summary.json or run CSV")
    p.add_argument("--svg", action="store_true", help="also write actions.svg")

    p = sub.add_parser("probe", help="freeze one actuator and measure the others' divergence")
    _common(p)
    p.add_argument("genome", help="genome CSV row, summary.json or run CSV")
    p.add_argument("--actuator", type=_non_negative, default=6, help="actuator to freeze")

    p = sub.add_parser("calibrate", help="measure single-voxel settling time")
    _common(p, sim=False)
    p.add_argument("--hold", type=_positive, default=60, help="steps per square-wave half period")
    p.add_argument("--sweep", action="store_true", help="also sweep stiffness and damping into sweep.csv")

    p = sub.add_parser("plot", help="plot run CSVs into fitness.svg")
    _common(p, sim=False)
    p.add_argument("runs", nargs="+", help="run CSV files")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = ExperimentConfig.from_args(args)
    try:
        if args.command == "evolve":
            if not args.sigma > 0:
                parser.error("--sigma must be positive")
            return cmd_evolve(cfg)
        if args.command == "replay":
            return cmd_replay(cfg, args.genome, args.svg)
        if args.command == "probe":
            return cmd_probe(cfg, args.genome, args.actuator)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args.hold, args.sweep)
        return cmd_plot(cfg, args.runs)
    except (InputError, GenomeError, RobotError) as exc:
        print(f"evoxel: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, SimulationDiverged, CmaesError) as exc:
        print(f"evoxel: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
