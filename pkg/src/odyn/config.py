"""Experiment configuration: schema, validation and YAML round-trip."""
import copy
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import yaml

from .activations import Activation
from .errors import ConfigError
from .gaussian import EvalStrategy, default_strategy

SCHEMA_VERSION = 1
REGIMES = ("simulate", "ss", "gf", "gf-noise", "mf", "hdmf")
ODE_REGIMES = REGIMES[1:]
SIM_MODES = ("weight", "overlap")


@dataclass
class TeacherConfig:
    mode: str = "orthonormal-rows"
    scale: float = 1.0


@dataclass
class InitConfig:
    sigma0: float = 1.0
    state_file: Optional[str] = None


@dataclass
class StrategyConfig:
    mode: str = "auto"
    order: Optional[int] = None
    n: int = 100_000
    seed: int = 0

    def build(self, act, act_t):
        if self.mode == "auto":
            return default_strategy(act, act_t)
        return EvalStrategy(self.mode, self.order, self.n, self.seed)


@dataclass
class XiConfig:
    strategy: str = "quadrature"
    order: int = 64
    n_samples: int = 4096
    seed: int = 0


@dataclass
class OutputConfig:
    dir: Optional[str] = None
    formats: List[str] = field(default_factory=lambda: ["csv", "json"])
    snapshots: bool = True


@dataclass
class ExperimentConfig:
    d: int = 100
    p: int = 2
    k: int = 1
    gamma: float = 0.1
    delta: float = 0.0
    activation: str = "erf"
    teacher_activation: Optional[str] = None
    regime: str = "simulate"
    mode: str = "overlap"
    T: float = 10.0
    dt: float = 0.01
    method: str = "rk4"
    record_every: Optional[int] = None
    seed: int = 0
    tag: str = "run"
    bound_K: float = 1e6
    step_budget: int = 200_000_000
    mf_noise: bool = False
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    init: InitConfig = field(default_factory=InitConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    xi: XiConfig = field(default_factory=XiConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION

    # ---- derived objects ----
    def act(self):
        return Activation.from_name(self.activation)

    def act_teacher(self):
        return Activation.from_name(self.teacher_activation or self.activation)

    def eval_strategy(self):
        return self.strategy.build(self.act(), self.act_teacher())

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.schema_version == SCHEMA_VERSION,
             f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})")
        for name in ("d", "p", "k"):
            v = getattr(self, name)
            need(isinstance(v, int) and v >= 1, f"{name} must be a positive integer, got {v!r}")
        need(self.k <= self.p, f"k <= p required (realisable setting), got k={self.k}, p={self.p}")
        need(self.k <= self.d, f"k <= d required, got k={self.k}, d={self.d}")
        need(self.gamma > 0, f"gamma must be positive, got {self.gamma}")
        need(self.delta >= 0, f"delta must be nonnegative, got {self.delta}")
        need(self.T >= 0, f"T must be nonnegative, got {self.T}")
        need(self.regime in REGIMES, f"regime must be one of {REGIMES}, got {self.regime!r}")
        need(self.mode in SIM_MODES, f"mode must be one of {SIM_MODES}, got {self.mode!r}")
        need(self.method in ("euler", "rk4"), f"method must be euler or rk4, got {self.method!r}")
        need(0 < self.dt <= 0.1, f"dt must lie in (0, 0.1], got {self.dt}")
        need(self.regime != "mf" or self.d > self.k,
             f"mf regime requires d > k, got d={self.d}, k={self.k}")
        need(self.record_every is None or self.record_every >= 1, "record_every must be >= 1")
        need(self.bound_K > 0, "bound_K must be positive")
        need(self.step_budget >= 1, "step_budget must be >= 1")
        need(self.init.sigma0 >= 0, "init.sigma0 must be nonnegative")
        need(self.teacher.mode in ("orthonormal-rows", "gaussian-rows"),
             f"teacher.mode must be orthonormal-rows or gaussian-rows, got {self.teacher.mode!r}")
        need(self.teacher.scale > 0, "teacher.scale must be positive")
        need(self.strategy.mode in ("auto", "closed-form", "quadrature", "monte-carlo"),
             f"unknown strategy.mode {self.strategy.mode!r}")
        need(self.xi.strategy in ("quadrature", "monte-carlo"), f"unknown xi.strategy {self.xi.strategy!r}")
        need(set(self.output.formats) <= {"csv", "json"}, "output.formats must be a subset of [csv, json]")
        try:
            self.act()
            self.act_teacher()
            if self.strategy.mode != "auto":
                self.eval_strategy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # ---- serialization ----
    def to_dict(self):
        return asdict(self)

    def dump(self):
        """Canonical YAML text (fixed key order, every field present)."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dump())

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return _build(cls, raw, "")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                raw = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(raw).validate()

    def replace(self, **changes):
        new = copy.deepcopy(self)
        for key, val in changes.items():
            if "." in key:
                head, tail = key.split(".", 1)
                setattr(getattr(new, head), tail, val)
            else:
                setattr(new, key, val)
        return new


_NESTED = {
    "teacher": TeacherConfig,
    "init": InitConfig,
    "strategy": StrategyConfig,
    "xi": XiConfig,
    "output": OutputConfig,
}


def _build(cls, raw, prefix):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + u for u in unknown)}")
    kwargs = {}
    for key, val in raw.items():
        sub = _NESTED.get(key) if cls is ExperimentConfig else None
        if sub is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{prefix}{key} must be a mapping")
            val = _build(sub, val, f"{prefix}{key}.")
        kwargs[key] = val
    return cls(**kwargs)


SWEEP_AXES = ("d", "p", "gamma", "delta", "seed")
SWEEP_METRICS = ("sup_risk_gap", "terminal_risk", "plateau_level")


@dataclass
class SweepSpec:
    base: ExperimentConfig
    axes: dict
    metric: str = "terminal_risk"
    reference_regime: str = "ss"
    max_runs: int = 1000
    plateau_fraction: float = 0.2

    def validate(self):
        bad = sorted(set(self.axes) - set(SWEEP_AXES))
        if bad:
            raise ConfigError(f"sweep axes must be among {SWEEP_AXES}, got {bad}")
        if self.metric not in SWEEP_METRICS:
            raise ConfigError(f"metric must be one of {SWEEP_METRICS}, got {self.metric!r}")
        if self.reference_regime not in ODE_REGIMES:
            raise ConfigError(f"reference_regime must be one of {ODE_REGIMES}")
        n = 1
        for vals in self.axes.values():
            if not isinstance(vals, list) or not vals:
                raise ConfigError("each sweep axis needs a non-empty list of values")
            n *= len(vals)
        if n > self.max_runs:
            raise ConfigError(f"sweep has {n} points, above the budget max_runs={self.max_runs}")
        self.base.validate()
        return self

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "base": self.base.to_dict(),
            "axes": self.axes,
            "metric": self.metric,
            "reference_regime": self.reference_regime,
            "max_runs": self.max_runs,
            "plateau_fraction": self.plateau_fraction,
        }

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        known = {"schema_version", "base", "axes", "metric", "reference_regime", "max_runs",
                 "plateau_fraction"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown sweep key(s): {', '.join(unknown)}")
        if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError("unsupported sweep schema_version")
        base = ExperimentConfig.from_dict(raw.get("base", {}))
        return cls(base=base, axes=raw.get("axes", {}),
                   metric=raw.get("metric", "terminal_risk"),
                   reference_regime=raw.get("reference_regime", "ss"),
                   max_runs=raw.get("max_runs", 1000),
                   plateau_fraction=raw.get("plateau_fraction", 0.2)).validate()
