import configparser
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import yaml

from saddle_core import LossKind
from saddle_exceptions import ConfigException, ExperimentException, SolverException

SOLVERS = ("md", "mp", "smd-partial", "smd-full", "sublinear", "ssm")
EXPERIMENT_KINDS = ("scaling", "compare")
RADIUS_POLICIES = ("given", "from-planted", "doubling")


@dataclass(frozen=True)
class SolverSettings:
    """Values from config.ini; CLI flags override them."""
    loss: str = "hinge"
    solver: str = "sublinear"
    lam: float = 1e-3
    radius: Optional[float] = None
    iters: int = 10_000
    seed: int = 0
    gap_every: Optional[int] = None
    flush_every: int = 10_000
    sparse_output: bool = False
    experiment_file: str = "experiments.yaml"
    output_dir: str = "results"


def load_settings(config_file) -> SolverSettings:
    """Reads the [Solver] and [Paths] sections. A missing file gives the defaults."""
    defaults = SolverSettings()
    if not config_file or not os.path.exists(config_file):
        return defaults
    config = configparser.ConfigParser()
    try:
        config.read(config_file, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigException(f"Error parsing config file '{config_file}': {e}")

    def read(section, key, getter, fallback):
        try:
            return getter(section, key, fallback=fallback)
        except ValueError:
            raise ConfigException(f"Invalid value for [{section}] {key}: '{config.get(section, key)}'.")

    def optional(section, key, cast):
        text = config.get(section, key, fallback="").strip()
        if not text:
            return None
        try:
            return cast(text)
        except ValueError:
            raise ConfigException(f"Invalid value for [{section}] {key}: '{text}'.")

    settings = SolverSettings(
        loss=config.get("Solver", "loss", fallback=defaults.loss).strip().lower(),
        solver=config.get("Solver", "solver", fallback=defaults.solver).strip().lower(),
        lam=read("Solver", "lambda", config.getfloat, defaults.lam),
        radius=optional("Solver", "radius", float),
        iters=read("Solver", "iters", config.getint, defaults.iters),
        seed=read("Solver", "seed", config.getint, defaults.seed),
        gap_every=optional("Solver", "gap_every", int),
        flush_every=read("Solver", "flush_every", config.getint, defaults.flush_every),
        sparse_output=read("Solver", "sparse_output", config.getboolean, defaults.sparse_output),
        experiment_file=config.get("Paths", "experiment_file", fallback=defaults.experiment_file),
        output_dir=config.get("Paths", "output_dir", fallback=defaults.output_dir),
    )
    if settings.loss not in ("hinge", "softmax"):
        raise ConfigException(f"Invalid value for [Solver] loss: '{settings.loss}'.")
    if settings.solver not in SOLVERS:
        raise ConfigException(f"Invalid value for [Solver] solver: '{settings.solver}'.")
    return settings


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: str
    sizes: List[Tuple[int, int, int]]
    iterations: List[int]
    repetitions: int = 1
    seed: int = 0
    solvers: List[str] = field(default_factory=lambda: ["sublinear"])
    loss: str = "hinge"
    lam: float = 1e-3
    radius_policy: str = "from-planted"
    radius: Optional[float] = None
    output: Optional[str] = None


def _experiment_from_mapping(name, data) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ExperimentException(f"Experiment '{name}' must be a mapping.")
    kind = data.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ExperimentException(f"Experiment '{name}': kind must be one of {EXPERIMENT_KINDS}, got {kind!r}.")
    try:
        sizes = [tuple(int(v) for v in size) for size in data.get("sizes") or []]
        iterations = [int(T) for T in data.get("iterations") or []]
        repetitions = int(data.get("repetitions", 1))
        seed = int(data.get("seed", 0))
        lam = float(data.get("lambda", 1e-3))
        radius = data.get("radius")
        radius = float(radius) if radius is not None else None
    except (TypeError, ValueError) as e:
        raise ExperimentException(f"Experiment '{name}': invalid value ({e}).")

    if not sizes or any(len(size) != 3 or min(size) < 1 for size in sizes):
        raise ExperimentException(f"Experiment '{name}': sizes must be a non-empty list of positive [n, d, k].")
    if kind == "compare" and len(sizes) != 1:
        raise ExperimentException(f"Experiment '{name}': a comparison runs on exactly one size.")
    if not iterations or min(iterations) < 1:
        raise ExperimentException(f"Experiment '{name}': iterations must be a non-empty list of positive counts.")
    if repetitions < 1:
        raise ExperimentException(f"Experiment '{name}': repetitions must be at least 1.")

    solvers = list(data.get("solvers") or (["sublinear"] if kind == "scaling" else []))
    unknown = [s for s in solvers if s not in SOLVERS]
    if not solvers or unknown:
        raise ExperimentException(f"Experiment '{name}': unknown or missing solvers {unknown or solvers}.")
    try:
        loss = LossKind.parse(data.get("loss", "hinge")).value
    except SolverException as e:
        raise ExperimentException(f"Experiment '{name}': {e}")
    policy = data.get("radius_policy", "from-planted")
    if policy not in RADIUS_POLICIES:
        raise ExperimentException(f"Experiment '{name}': radius_policy must be one of {RADIUS_POLICIES}.")
    if policy == "given" and not (radius and radius > 0):
        raise ExperimentException(f"Experiment '{name}': radius_policy 'given' needs a positive radius.")

    return ExperimentSpec(name=name, kind=kind, sizes=sizes, iterations=iterations, repetitions=repetitions,
                          seed=seed, solvers=solvers, loss=loss, lam=lam, radius_policy=policy, radius=radius,
                          output=data.get("output"))


def load_experiments(experiment_file) -> Dict[str, ExperimentSpec]:
    """Loads the YAML experiment definitions."""
    try:
        with open(experiment_file, "r", encoding="utf-8") as f:
            definitions = yaml.safe_load(f)
        if not definitions or not isinstance(definitions, dict):
            raise ExperimentException(f"Experiment file '{experiment_file}' is empty or invalid.")
        experiments = {name: _experiment_from_mapping(name, data) for name, data in definitions.items()}
        print(f"Loaded {len(experiments)} experiments.")
        return experiments
    except FileNotFoundError:
        raise ExperimentException(f"Experiment file not found: '{experiment_file}'.")
    except yaml.YAMLError as e:
        raise ExperimentException(f"Error parsing YAML experiment file: {e}")
