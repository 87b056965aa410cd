"""Run configuration: one JSON document with a schema version and strict keys."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..integrators import StepScheme
from ..learning.train import TrainConfig
from ..potentials import DragForcing, ZeroForcing, truth_potential
from ..rigidbody import BodyParams, BodyState, SystemParams, SystemState
from . import systems

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class SystemSpec:
    """Either a named ``preset`` (with optional keyword ``options``) or explicit bodies."""

    preset: str = None
    options: dict = field(default_factory=dict)
    G: float = 1.0
    bodies: list = None

    def __post_init__(self):
        if (self.preset is None) == (self.bodies is None):
            raise ValueError("give exactly one of 'preset' or 'bodies'")
        if self.preset is not None and self.preset not in systems.SYSTEMS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(systems.SYSTEMS)}")
        if self.bodies is not None:
            allowed = {"mass", "inertia", "q", "p", "R", "Pi"}
            for k, b in enumerate(self.bodies):
                extra = set(b) - allowed
                missing = {"mass", "inertia", "q", "p"} - set(b)
                if extra or missing:
                    raise ValueError(f"body {k}: unknown {sorted(extra)} / missing {sorted(missing)}")

    def build(self):
        if self.preset is not None:
            return systems.SYSTEMS[self.preset](**self.options)
        params = SystemParams(tuple(BodyParams(b["mass"], tuple(b["inertia"])) for b in self.bodies), self.G)
        states = tuple(
            BodyState(b["q"], b["p"], np.array(b.get("R", np.eye(3).tolist())), b.get("Pi", [0.0, 0.0, 0.0]))
            for b in self.bodies
        )
        return params, SystemState(0.0, states)


@dataclass
class TruthSpec:
    quadrupole: bool = True
    drag: list = None
    r_min: float = 0.0

    def build(self, params):
        potential = truth_potential(params, self.quadrupole, self.r_min)
        forcing = DragForcing(*self.drag) if self.drag else ZeroForcing()
        return potential, forcing


@dataclass
class IntegratorSpec:
    scheme: str = "lie_t2"
    h: float = 0.025
    steps: int = 500
    verlet_literal: bool = False
    asym_left: bool = False

    def __post_init__(self):
        self.scheme = StepScheme.parse(self.scheme).value
        if not self.h > 0 or self.steps < 1:
            raise ValueError("need h > 0 and steps >= 1")


@dataclass
class DataSpec:
    L: int = 32
    K: int = 125
    dt: float = 0.1
    fine_h: float = 0.1 / 64
    noise_sigma: float = 1e-3
    seed: int = 0
    train_fraction: float = 0.8


@dataclass
class EvalSpec:
    steps: int = 500
    schemes: list = field(default_factory=lambda: [s.value for s in StepScheme])
    energy_absolute: bool = False


@dataclass
class ConvergenceSpec:
    T: float = 2.0
    hs: list = field(default_factory=lambda: [0.02, 0.01, 0.005, 0.0025])
    top_hs: list = field(default_factory=lambda: [0.04, 0.02, 0.01, 0.005])
    schemes: list = field(default_factory=lambda: [s.value for s in StepScheme])


@dataclass
class RunConfig:
    schema_version: int
    system: SystemSpec
    truth: TruthSpec = field(default_factory=TruthSpec)
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    data: DataSpec = field(default_factory=DataSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSpec = field(default_factory=EvalSpec)
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["train"] = self.train.as_dict()
        return d

    def apply_overrides(self, seed=None, scheme=None, steps=None, h=None, substeps=None):
        if seed is not None:
            self.seed = seed
            self.data.seed = seed
            self.train.seed = seed
        if scheme is not None:
            self.integrator.scheme = StepScheme.parse(scheme).value
            self.train.scheme = self.integrator.scheme
        if steps is not None:
            self.integrator.steps = steps
            self.eval.steps = steps
        if h is not None:
            self.integrator.h = h
        if substeps is not None:
            self.train.substeps = substeps
        return self


_SECTIONS = {
    "system": SystemSpec,
    "truth": TruthSpec,
    "integrator": IntegratorSpec,
    "data": DataSpec,
    "train": TrainConfig,
    "eval": EvalSpec,
    "convergence": ConvergenceSpec,
}


def parse_config(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS) - {"schema_version", "seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    if "system" not in data:
        raise ConfigError("missing 'system' section")
    if "seed" not in data:
        raise ConfigError("missing 'seed'")
    kw = {name: _strict(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    return RunConfig(SCHEMA_VERSION, seed=int(data["seed"]), **kw)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)
