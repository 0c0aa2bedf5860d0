"""JSON run configuration: parsing, validation and defaults."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .analysis import Prop3Config, SamplingConfig
from .control import LOSS_NAMES, LossKind, OptimizerConfig, Schedule
from .errors import ConfigError, FlowRedirectError
from .graph import FAMILIES, GraphSpec
from .simulate import SimConfig

EXPERIMENT_TYPES = ("compare", "r0_sweep", "tau_sweep", "heterogeneity_sweep", "prop3", "simulate_only")
_SAMPLING_KEYS = ("delta_mean", "delta_std", "r0_mean", "r0_std", "gamma_mean", "gamma_std",
                  "alpha_mean", "alpha_std", "beta_p_ratio", "hold_gamma")


@dataclass
class GraphSection:
    family: str = "erdos_renyi"
    params: dict = field(default_factory=dict)
    size: int = 30
    seed: int = 0


@dataclass
class ModelSection:
    kind: str = "SEIR"
    sampling: dict = field(default_factory=dict)


@dataclass
class DiffusionSection:
    tau: float = 1.0
    outrate_range: list = field(default_factory=lambda: [0.0, 0.4])
    theta_half_width: float = 0.1


@dataclass
class OptimizerSection:
    losses: list = field(default_factory=lambda: list(LOSS_NAMES))
    steps: int = 400
    schedule: str = "exp_growth"
    phi: float = 2.5e-3
    rho: float = 250.0
    s0: float = 0.05
    a: float = 20.0
    track_best: bool = True


@dataclass
class SimulationSection:
    horizon: float = 1000.0
    dt: Any = None
    seed_nodes: int = 2
    seed_fraction: float = 0.05


@dataclass
class ExperimentSection:
    type: str = "compare"
    replicates: int = 20
    families: list = field(default_factory=list)
    taus: list = field(default_factory=lambda: [1e-2, 1e-1, 1.0, 10.0, 100.0])
    xs: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    prop3: dict = field(default_factory=dict)


@dataclass
class OutputSection:
    dir: str = "."
    csv: str = "results.csv"
    summary: str = "summary.json"
    report: str = "report.json"
    trajectory: Any = None


@dataclass
class RunConfig:
    graph: GraphSection = field(default_factory=GraphSection)
    model: ModelSection = field(default_factory=ModelSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output: OutputSection = field(default_factory=OutputSection)
    threads: Any = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["sampling"] = {k: v for k, v in asdict(self.sampling()).items() if k in _SAMPLING_KEYS}
        d["experiment"]["prop3"] = asdict(self.prop3())
        return d

    # -- typed views -------------------------------------------------------

    def graph_spec(self, family: str | None = None) -> GraphSpec:
        fam = family or self.graph.family
        params = self.graph.params if fam == self.graph.family else {}
        return GraphSpec(fam, self.graph.size, self.graph.seed, params)

    def sampling(self) -> SamplingConfig:
        lo, hi = self.diffusion.outrate_range
        return SamplingConfig(outrate_lo=lo, outrate_hi=hi, theta_half_width=self.diffusion.theta_half_width,
                              num_seed_nodes=self.simulation.seed_nodes,
                              seed_fraction=self.simulation.seed_fraction, **self.model.sampling)

    def sim(self) -> SimConfig:
        return SimConfig(horizon=self.simulation.horizon, tau=self.diffusion.tau, dt=self.simulation.dt)

    def opt(self) -> OptimizerConfig:
        o = self.optimizer
        return OptimizerConfig(o.steps, Schedule(o.schedule, o.phi, o.rho, o.s0), o.track_best)

    def losses(self) -> tuple[LossKind, ...]:
        return tuple(LossKind(name, self.optimizer.a) for name in self.optimizer.losses)

    def prop3(self) -> Prop3Config:
        return Prop3Config(**self.experiment.prop3)


_SECTIONS = {f.name: f for f in fields(RunConfig)}


def _section(cls, data: Any, name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
    return cls(**data)


def _positive(value, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def _nonneg_int(value, name: str, minimum: int = 0) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")


def parse_config(data: Any) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    kw = {}
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown key '{key}'")
        if key == "threads":
            kw[key] = value
        else:
            kw[key] = _section(_SECTIONS[key].default_factory().__class__, value, key)
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    g, m, d, o, s, e = cfg.graph, cfg.model, cfg.diffusion, cfg.optimizer, cfg.simulation, cfg.experiment
    if g.family not in FAMILIES:
        raise ConfigError(f"graph.family must be one of {FAMILIES}, got {g.family!r}")
    _nonneg_int(g.size, "graph.size", 1)
    _nonneg_int(g.seed, "graph.seed")
    if m.kind not in ("SEIR", "SEPIR"):
        raise ConfigError(f"model.kind must be SEIR or SEPIR, got {m.kind!r}")
    for key in m.sampling:
        if key not in _SAMPLING_KEYS:
            raise ConfigError(f"unknown key 'model.sampling.{key}'")
    _positive(d.tau, "diffusion.tau")
    if (not isinstance(d.outrate_range, list) or len(d.outrate_range) != 2
            or not 0 <= d.outrate_range[0] < d.outrate_range[1]):
        raise ConfigError("diffusion.outrate_range must be [lo, hi] with 0 <= lo < hi")
    _positive(d.theta_half_width, "diffusion.theta_half_width")
    for name in o.losses:
        if name not in LOSS_NAMES:
            raise ConfigError(f"optimizer.losses: unknown loss {name!r}")
    _nonneg_int(o.steps, "optimizer.steps", 1)
    for name in ("phi", "rho", "s0", "a"):
        _positive(getattr(o, name), f"optimizer.{name}")
    _positive(s.horizon, "simulation.horizon")
    if s.dt is not None:
        _positive(s.dt, "simulation.dt")
    _nonneg_int(s.seed_nodes, "simulation.seed_nodes", 1)
    if not 0 < s.seed_fraction <= 1:
        raise ConfigError("simulation.seed_fraction must lie in (0, 1]")
    if e.type not in EXPERIMENT_TYPES:
        raise ConfigError(f"experiment.type must be one of {EXPERIMENT_TYPES}, got {e.type!r}")
    _nonneg_int(e.replicates, "experiment.replicates")
    for fam in e.families:
        if fam not in FAMILIES:
            raise ConfigError(f"experiment.families: unknown family {fam!r}")
    for tau in e.taus:
        _positive(tau, "experiment.taus")
    for x in e.xs:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not 0 <= x <= 1:
            raise ConfigError(f"experiment.xs values must lie in [0, 1], got {x!r}")
    if cfg.threads is not None:
        _nonneg_int(cfg.threads, "threads", 1)
    # construct every typed view once so range errors surface here
    try:
        cfg.graph_spec()
        for fam in e.families:
            cfg.graph_spec(fam)
        cfg.sampling()
        cfg.sim()
        cfg.opt()
        cfg.losses()
        cfg.prop3()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except FlowRedirectError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)
