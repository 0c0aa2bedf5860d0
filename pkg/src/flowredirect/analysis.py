"""Experiment harness: protocol sampling, policy comparisons, sweeps, checks."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import diffusion, spectral
from .control import EPI, QUICKDIFF, LossKind, OptimizerConfig, nodiff, optimize
from .errors import FlowRedirectError, InvalidRange, SkippedPreconditionFailed
from .graph import Graph, GraphSpec, generate, sample_outrates
from .simulate import EigenAligned, ProtocolDefault, SimConfig, final_size, initial_state, simulate, simulate_matrix
from .spectral import EpiParams

log = logging.getLogger(__name__)

Mapper = Callable[[Callable, Iterable], Iterable]


@dataclass(frozen=True)
class SamplingConfig:
    """Distributions of the protocol sample.

    Rates are absolute values of normals. ``x`` (heterogeneity) multiplies the
    standard deviations of the curing rates and of the node reproduction
    numbers; with ``hold_gamma`` the incubation rates sit at their mean.
    """

    outrate_lo: float = 0.0
    outrate_hi: float = 0.4
    theta_half_width: float = 0.1
    delta_mean: float = 0.2
    delta_std: float = 0.05
    r0_mean: float = 1.0
    r0_std: float = 0.35
    gamma_mean: float = 0.25
    gamma_std: float = 0.05
    alpha_mean: float = 0.3
    alpha_std: float = 0.05
    beta_p_ratio: float = 0.5
    hold_gamma: bool = False
    num_seed_nodes: int = 2
    seed_fraction: float = 0.05


@dataclass
class ProtocolSample:
    spec: GraphSpec
    graph: Graph
    f: np.ndarray
    theta_ref: np.ndarray
    params: EpiParams
    node_r0: np.ndarray
    mu_ref: np.ndarray
    seed: int
    x: float
    seed_nodes: tuple[int, ...]
    seed_fraction: float = 0.05

    def initial_condition(self) -> ProtocolDefault:
        return ProtocolDefault(self.seed_nodes, self.seed_fraction, self.mu_ref)


def _abs_normal(rng: np.random.Generator, mean: float, std: float, size: int) -> np.ndarray:
    out = np.abs(rng.normal(mean, std, size))
    while np.any(out == 0):
        zero = out == 0
        out[zero] = np.abs(rng.normal(mean, std, zero.sum()))
    return out


def sample_protocol(spec: GraphSpec, model_kind: str = "SEIR", heterogeneity_x: float = 1.0,
                    seed: int = 0, sampling: SamplingConfig = SamplingConfig()) -> ProtocolSample:
    if not 0 <= heterogeneity_x <= 1:
        raise InvalidRange(f"heterogeneity x must lie in [0, 1], got {heterogeneity_x}")
    graph_ss, rate_ss, theta_ss, epi_ss, node_ss = np.random.SeedSequence([spec.seed, seed]).spawn(5)
    g = generate(replace(spec, seed=int(graph_ss.generate_state(1, np.uint64)[0] >> 1)))
    n = g.node_count
    f = sample_outrates(g, sampling.outrate_lo, sampling.outrate_hi, rate_ss)
    h = sampling.theta_half_width
    theta_ref = np.random.default_rng(theta_ss).uniform(-h, h, g.edge_count)
    mu = diffusion.stationary_distribution(diffusion.diffusion_from_theta(g, theta_ref, f))

    rng = np.random.default_rng(epi_ss)
    x = heterogeneity_x
    delta = _abs_normal(rng, sampling.delta_mean, x * sampling.delta_std, n)
    node_r0 = _abs_normal(rng, sampling.r0_mean, x * sampling.r0_std, n)
    if sampling.hold_gamma:
        gamma = np.full(n, sampling.gamma_mean)
    else:
        gamma = _abs_normal(rng, sampling.gamma_mean, sampling.gamma_std, n)
    if model_kind == "SEIR":
        params = EpiParams(node_r0 * delta / mu, gamma, delta)
    else:
        alpha = _abs_normal(rng, sampling.alpha_mean, sampling.alpha_std, n)
        k = sampling.beta_p_ratio
        beta_i = node_r0 / (mu * (1.0 / delta + k / gamma))
        params = EpiParams(beta_i, gamma, delta, "SEPIR", k * beta_i, alpha)
    nodes = np.random.default_rng(node_ss).choice(n, size=min(sampling.num_seed_nodes, n), replace=False)
    return ProtocolSample(spec, g, f, theta_ref, params, node_r0, mu, seed, x,
                          tuple(sorted(int(v) for v in nodes)), sampling.seed_fraction)


# ---------------------------------------------------------------------------
# records


@dataclass
class ResultRecord:
    experiment_id: str
    family: str
    size: int
    policy: str
    tau: float
    x: float
    r0: float
    final_size: float
    relative_final_size: float
    converged: bool
    seed: int
    runtime: float = field(default=0.0, compare=False)


CSV_COLUMNS = ("experiment_id", "family", "size", "policy", "tau", "x", "r0", "final_size",
               "relative_final_size", "converged", "seed")
POLICIES = ("REF", "EPIPOL", "NODIFFPOL", "QUICKDIFFPOL")


def default_losses(a: float = 20.0) -> tuple[LossKind, ...]:
    return (EPI, nodiff(a), QUICKDIFF)


def _sim_for(sim: SimConfig, tau: float) -> SimConfig:
    return replace(sim, tau=tau)


def compare_policies(sample: ProtocolSample, tau: float, sim: SimConfig = SimConfig(),
                     opt: OptimizerConfig = OptimizerConfig(), losses: Sequence[LossKind] | None = None,
                     experiment_id: str = "") -> list[ResultRecord]:
    """REF plus one optimised policy per loss, all from the same initial condition."""
    losses = default_losses() if losses is None else losses
    sim = _sim_for(sim, tau)
    g, f, p = sample.graph, sample.f, sample.params
    ic = sample.initial_condition()
    exp_id = experiment_id or f"{sample.spec.family}-n{g.node_count}-s{sample.seed}"

    def record(policy, r0, fs, rel, conv, t0):
        return ResultRecord(exp_id, sample.spec.family, g.node_count, policy, tau, sample.x, r0, fs,
                            rel, conv, sample.seed, time.perf_counter() - t0)

    t0 = time.perf_counter()
    ref = final_size(simulate(g, sample.theta_ref, f, p, ic, sim))
    ref_r0 = spectral.r0(g, sample.theta_ref, f, p, tau)
    out = [record("REF", ref_r0, ref.final_size, 1.0, ref.converged, t0)]
    for kind in losses:
        t0 = time.perf_counter()
        try:
            res = optimize(kind, g, sample.theta_ref, f, p, tau, opt)
            rep = final_size(simulate(g, res.theta_star, f, p, ic, sim))
        except FlowRedirectError as exc:
            log.warning("%s %s failed: %s", exp_id, kind.policy, exc)
            out.append(record(kind.policy, math.nan, math.nan, math.nan, False, t0))
            continue
        rel = rep.final_size / ref.final_size if ref.final_size > 0 else math.nan
        out.append(record(kind.policy, res.final_r0, rep.final_size, rel, rep.converged, t0))
    return out


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class R0Point:
    family: str
    seed: int
    r0: float
    final_size: float
    converged: bool


@dataclass
class R0Sweep:
    points: list[R0Point]
    slopes: dict[str, float]

    def spearman(self) -> dict[str, float]:
        by = defaultdict(list)
        for pt in self.points:
            by[pt.family].append((pt.r0, pt.final_size))
        return {fam: float(stats.spearmanr(*zip(*v)).statistic) for fam, v in by.items() if len(v) > 1}


def _r0_point(args) -> R0Point:
    spec, seed, tau, kind, sampling, sim = args
    s = sample_protocol(spec, kind, 1.0, seed, sampling)
    r0 = spectral.r0(s.graph, s.theta_ref, s.f, s.params, tau)
    rep = final_size(simulate(s.graph, s.theta_ref, s.f, s.params, s.initial_condition(), _sim_for(sim, tau)))
    return R0Point(spec.family, seed, r0, rep.final_size, rep.converged)


def sweep_r0_vs_final_size(specs: Sequence[GraphSpec], replicates: int, tau: float = 1.0,
                           model_kind: str = "SEIR", sampling: SamplingConfig = SamplingConfig(),
                           sim: SimConfig = SimConfig(), mapper: Mapper = map) -> R0Sweep:
    jobs = [(spec, r, tau, model_kind, sampling, sim) for spec in specs for r in range(replicates)]
    points = list(mapper(_r0_point, jobs))
    slopes = {}
    for spec in specs:
        pts = [(p.r0, p.final_size) for p in points if p.family == spec.family]
        if len(pts) > 1:
            slopes[spec.family] = float(np.polyfit(*zip(*pts), 1)[0])
    return R0Sweep(points, slopes)


def _compare_job(args) -> list[ResultRecord]:
    spec, kind, x, seed, sampling, tau, sim, opt, losses, exp_id = args
    sample = sample_protocol(spec, kind, x, seed, sampling)
    log.info("running %s", exp_id)
    return compare_policies(sample, tau, sim, opt, losses, exp_id)


def compare_batch(spec: GraphSpec, replicates: int, tau: float = 1.0, model_kind: str = "SEIR",
                  sampling: SamplingConfig = SamplingConfig(), sim: SimConfig = SimConfig(),
                  opt: OptimizerConfig = OptimizerConfig(), losses=None, x: float = 1.0,
                  mapper: Mapper = map) -> list[ResultRecord]:
    jobs = [(spec, model_kind, x, r, sampling, tau, sim, opt, losses,
             f"{spec.family}-n{spec.size}-x{x:g}-tau{tau:g}-r{r}") for r in range(replicates)]
    return [rec for batch in mapper(_compare_job, jobs) for rec in batch]


def sweep_tau(spec: GraphSpec, taus: Sequence[float], replicates: int, model_kind: str = "SEIR",
              sampling: SamplingConfig = SamplingConfig(), sim: SimConfig = SimConfig(),
              opt: OptimizerConfig = OptimizerConfig(), losses=None, mapper: Mapper = map) -> list[ResultRecord]:
    """Same samples at every tau; the simulation step follows ``min(1, tau)``."""
    for tau in taus:
        if not tau > 0:
            raise InvalidRange(f"tau must be positive, got {tau}")
    jobs = [(spec, model_kind, 1.0, r, sampling, tau, replace(sim, dt=None), opt, losses,
             f"{spec.family}-n{spec.size}-x1-tau{tau:g}-r{r}") for tau in taus for r in range(replicates)]
    return [rec for batch in mapper(_compare_job, jobs) for rec in batch]


def sweep_heterogeneity(spec: GraphSpec, xs: Sequence[float], replicates: int, tau: float = 1.0,
                        model_kind: str = "SEIR", sampling: SamplingConfig = SamplingConfig(),
                        sim: SimConfig = SimConfig(), opt: OptimizerConfig = OptimizerConfig(),
                        losses=None, mapper: Mapper = map) -> list[ResultRecord]:
    sampling = replace(sampling, hold_gamma=True)
    out = []
    for x in xs:
        out += compare_batch(spec, replicates, tau, model_kind, sampling, sim, opt, losses, x, mapper)
    return out


# ---------------------------------------------------------------------------
# final-size relations


def km_final_size(r0: float, tol: float = 1e-12) -> float:
    """Largest root in [0, 1) of ``r0 * r + log(1 - r) = 0``, by bisection."""
    if not r0 > 0:
        raise InvalidRange("r0 must be positive")
    if r0 <= 1:
        return 0.0
    lo, hi = 0.0, 1.0
    # h > 0 on (0, root), h < 0 on (root, 1)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if r0 * mid + math.log1p(-mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Prop3Config:
    epsilon: float = 0.1
    ball_radius: float = 0.05
    j0: float = 1e-4
    num_perturbations: int = 20
    target_r0: float | None = None
    shrink: float = 0.5
    j0_floor: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (self.epsilon > 0 and self.ball_radius >= 0 and self.j0 > 0 and self.j0_floor > 0):
            raise InvalidRange("prop3: epsilon, j0 and j0_floor must be positive, ball_radius nonnegative")
        if not 0 < self.shrink < 1:
            raise InvalidRange("prop3: shrink must lie in (0, 1)")
        if self.num_perturbations < 1:
            raise InvalidRange("prop3: num_perturbations must be >= 1")
        if self.target_r0 is not None and not self.target_r0 > 0:
            raise InvalidRange("prop3: target_r0 must be positive")


@dataclass
class Prop3Check:
    r0: float
    final_size: float
    lower: float
    upper: float

    @property
    def satisfied(self) -> bool:
        return self.lower <= self.final_size <= self.upper

    @property
    def margin(self) -> float:
        return min(self.final_size - self.lower, self.upper - self.final_size)


@dataclass
class Prop3Report:
    status: str  # "satisfied", "unsatisfied" or "SkippedPreconditionFailed"
    r0_ref: float
    ball_radius: float = math.nan
    j0: float = math.nan
    fraction_satisfied: float = 0.0
    worst_margin: float = math.nan
    attempts: int = 0
    reason: str = ""
    checks: list[Prop3Check] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("checks")
        return d


def final_size_bounds(j0: float, r0: float, epsilon: float) -> tuple[float, float]:
    if (1 + epsilon) * r0 >= 1:
        raise SkippedPreconditionFailed(f"(1 + eps) R0 = {(1 + epsilon) * r0:.4f} >= 1")
    return j0 / (1 - (1 - epsilon) * r0), j0 / (1 - (1 + epsilon) * r0)


def prop3_single(g: Graph, theta, f, p: EpiParams, j0: float, epsilon: float, sim: SimConfig) -> Prop3Check:
    """Simulate from an eigen-aligned start and compare with the two-sided bound."""
    m = diffusion.diffusion_from_theta(g, theta, f, sim.tau)
    mu = diffusion.stationary_distribution(m)
    r0 = spectral.spectral_radius_perron(spectral.next_gen_matrix(m, p, mu)).rho
    lower, upper = final_size_bounds(j0, r0, epsilon)
    if j0 == 0:
        return Prop3Check(r0, 0.0, lower, upper)
    ld = spectral.large_domain(m, p, mu)
    state = initial_state(EigenAligned(j0, ld.v_eig, mu), mu, p.kind)
    rep = final_size(simulate_matrix(m, p, state, sim))
    return Prop3Check(r0, rep.final_size, lower, upper)


def verify_prop3(sample: ProtocolSample, cfg: Prop3Config = Prop3Config(), sim: SimConfig = SimConfig()) -> Prop3Report:
    """Search shrinking (ball radius, j0) until every perturbation satisfies the bound.

    Raises SkippedPreconditionFailed when R0 at the reference policy is not
    below ``1 / (1 + eps)`` or when the model is not SEIR.
    """
    g, f, p = sample.graph, sample.f, sample.params
    if p.kind != "SEIR":
        raise SkippedPreconditionFailed("the final-size sandwich is checked for SEIR only")
    r0_ref = spectral.r0(g, sample.theta_ref, f, p, sim.tau)
    if cfg.target_r0 is not None:
        p = p.scaled(cfg.target_r0 / r0_ref)
        r0_ref = spectral.r0(g, sample.theta_ref, f, p, sim.tau)
    if r0_ref >= 1 or (1 + cfg.epsilon) * r0_ref >= 1:
        raise SkippedPreconditionFailed(f"R0(M_ref) = {r0_ref:.4f} is too large for eps = {cfg.epsilon}")
    rng = np.random.default_rng(cfg.seed)
    dirs = rng.normal(size=(cfg.num_perturbations, g.edge_count))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.divide(dirs, norms, out=np.zeros_like(dirs), where=norms > 0)

    radius, j0, attempts = cfg.ball_radius, cfg.j0, 0
    report = Prop3Report("unsatisfied", r0_ref)
    while j0 >= cfg.j0_floor:
        attempts += 1
        checks = []
        for d in dirs:
            try:
                checks.append(prop3_single(g, sample.theta_ref + radius * d, f, p, j0, cfg.epsilon, sim))
            except SkippedPreconditionFailed:
                checks.append(Prop3Check(math.nan, math.nan, math.nan, math.nan))
        ok = [c.satisfied for c in checks]
        margins = [c.margin / j0 for c in checks if c.satisfied or math.isfinite(c.margin)]
        report = Prop3Report("satisfied" if all(ok) else "unsatisfied", r0_ref, radius, j0,
                             float(np.mean(ok)), float(min(margins)) if margins else math.nan,
                             attempts, checks=checks)
        if all(ok):
            return report
        radius *= cfg.shrink
        j0 *= cfg.shrink
    return report


# ---------------------------------------------------------------------------
# output


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank quantile: the ``ceil(q n)``-th smallest value."""
    v = sorted(values)
    if not v:
        return math.nan
    return float(np.quantile(v, q, method="inverted_cdf"))


def summarize(records: Sequence[ResultRecord]) -> list[dict]:
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        key = (r.family, r.size, r.policy, r.tau, r.x)
        if math.isfinite(r.relative_final_size):
            groups[key].append(r.relative_final_size)
        else:
            groups.setdefault(key, [])
    out = []
    for (family, size, policy, tau, x), vals in sorted(groups.items(), key=lambda kv: (
            kv[0][0], kv[0][1], kv[0][3], kv[0][4], POLICIES.index(kv[0][2]) if kv[0][2] in POLICIES else 99)):
        out.append({
            "family": family, "size": size, "policy": policy, "tau": tau, "x": x, "count": len(vals),
            "median": nearest_rank(vals, 0.5), "q20": nearest_rank(vals, 0.2), "q25": nearest_rank(vals, 0.25),
            "q75": nearest_rank(vals, 0.75), "q80": nearest_rank(vals, 0.8),
        })
    return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def json_safe(obj):
    """Replace non-finite floats with None (strict JSON has no NaN)."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    return obj


def emit_results(records: Sequence[ResultRecord], path: str | Path, summary_path: str | Path | None = None) -> None:
    """CSV with one row per record, plus a JSON summary of grouped quantiles."""
    path = Path(path)
    ordered = sorted(records, key=lambda r: (r.experiment_id, POLICIES.index(r.policy)
                                             if r.policy in POLICIES else 99, r.seed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in ordered:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    summary_path = path.with_suffix(".summary.json") if summary_path is None else Path(summary_path)
    summary_path.write_text(json.dumps(json_safe(summarize(ordered)), indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_results(path: str | Path) -> list[ResultRecord]:
    types = {f.name: f.type for f in fields(ResultRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                if t == "bool":
                    kw[k] = v == "true"
                elif t == "int":
                    kw[k] = int(v)
                elif t == "float":
                    kw[k] = float(v)
                else:
                    kw[k] = v
            out.append(ResultRecord(**kw))
    return out


def medians(records: Sequence[ResultRecord], key=lambda r: r.policy) -> dict:
    """Nearest-rank median of the finite relative final sizes per group."""
    groups: dict = defaultdict(list)
    for r in records:
        if math.isfinite(r.relative_final_size):
            groups[key(r)].append(r.relative_final_size)
    return {k: nearest_rank(v, 0.5) for k, v in groups.items()}
