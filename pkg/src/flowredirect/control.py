"""Losses on the policy parameters and the gradient-descent optimiser."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffusion, spectral
from .errors import InvalidSpec, NonFiniteLoss
from .graph import Graph
from .spectral import EpiParams

LOSS_NAMES = ("epi", "nodiff", "quickdiff")
POLICY_LABELS = {"epi": "EPIPOL", "nodiff": "NODIFFPOL", "quickdiff": "QUICKDIFFPOL"}
DEFAULT_SHARPNESS = 20.0


@dataclass(frozen=True)
class LossKind:
    name: str
    a: float = DEFAULT_SHARPNESS

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise InvalidSpec(f"unknown loss {self.name!r}; expected one of {LOSS_NAMES}")
        if not self.a > 0:
            raise InvalidSpec("smooth-max sharpness a must be positive")

    @property
    def policy(self) -> str:
        return POLICY_LABELS[self.name]


EPI = LossKind("epi")
QUICKDIFF = LossKind("quickdiff")


def nodiff(a: float = DEFAULT_SHARPNESS) -> LossKind:
    return LossKind("nodiff", a)


def smooth_max(u, a: float) -> float:
    """Exponentially weighted mean ``sum(u exp(a u)) / sum(exp(a u))``."""
    u = np.asarray(u, dtype=float)
    w = np.exp(a * (u - u.max()))
    return float(w @ u / w.sum())


def smooth_max_grad(u, a: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    w = np.exp(a * (u - u.max()))
    w /= w.sum()
    return w * (1.0 + a * (u - w @ u))


def _quickdiff(mu: np.ndarray, p: EpiParams) -> tuple[float, np.ndarray]:
    pairs = [(p.beta, p.delta)]
    if p.kind == "SEPIR":
        pairs.append((p.beta_p, p.gamma))
    value, grad = 0.0, np.zeros_like(mu)
    for b, d in pairs:
        num, den = b @ mu**2, d @ mu
        value += num / den
        grad += 2 * b * mu / den - num * d / den**2
    return value, grad


def _limit_loss(kind: LossKind, mu: np.ndarray, p: EpiParams) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to ``mu``."""
    if kind.name == "nodiff":
        c = p.node_reproduction_weights()
        return smooth_max(c * mu, kind.a), c * smooth_max_grad(c * mu, kind.a)
    return _quickdiff(mu, p)


def loss_value(kind: LossKind, g: Graph, theta, f, p: EpiParams, tau: float = 1.0) -> float:
    if kind.name == "epi":
        return spectral.r0(g, theta, f, p, tau)
    mu = diffusion.stationary_distribution(diffusion.diffusion_from_theta(g, theta, f, tau))
    return _limit_loss(kind, mu, p)[0]


def loss_and_gradient(kind: LossKind, g: Graph, theta, f, p: EpiParams, tau: float = 1.0):
    if kind.name == "epi":
        return spectral.r0_and_gradient(g, theta, f, p, tau)
    mu = diffusion.stationary_distribution(diffusion.diffusion_from_theta(g, theta, f, tau))
    value, dmu = _limit_loss(kind, mu, p)
    return value, diffusion.stationary_jacobian(g, theta, f, tau).T @ dmu


def loss_gradient(kind: LossKind, g: Graph, theta, f, p: EpiParams, tau: float = 1.0) -> np.ndarray:
    return loss_and_gradient(kind, g, theta, f, p, tau)[1]


# ---------------------------------------------------------------------------
# optimiser


@dataclass(frozen=True)
class Schedule:
    """Step size ``s(i)`` for iterate ``i = 1, 2, ...``.

    ``exp_growth``: ``phi * sqrt(N) * exp(log(2) i / rho)`` (doubles every rho steps).
    ``exp_decay``: ``s0 * exp(-log(2) i / rho)``. ``constant``: ``s0``.
    """

    kind: str = "exp_growth"
    phi: float = 2.5e-3
    rho: float = 250.0
    s0: float = 0.05

    def __post_init__(self):
        if self.kind not in ("exp_growth", "constant", "exp_decay"):
            raise InvalidSpec(f"unknown schedule {self.kind!r}")
        if not (self.phi > 0 and self.rho > 0 and self.s0 > 0):
            raise InvalidSpec("schedule parameters must be positive")

    def __call__(self, i: int, n_nodes: int) -> float:
        if self.kind == "exp_growth":
            return self.phi * math.sqrt(n_nodes) * math.exp(math.log(2) * i / self.rho)
        if self.kind == "exp_decay":
            return self.s0 * math.exp(-math.log(2) * i / self.rho)
        return self.s0


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 400
    schedule: Schedule = field(default_factory=Schedule)
    track_best: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidSpec("steps must be >= 1")


@dataclass
class OptimizationResult:
    theta_star: np.ndarray
    loss_history: np.ndarray
    best_iterate_index: int
    final_r0: float
    aborted: bool = False

    @property
    def best_loss(self) -> float:
        return float(self.loss_history[self.best_iterate_index])

    def history_csv_rows(self):
        yield ("iterate", "loss")
        for k, v in enumerate(self.loss_history):
            yield (k, repr(float(v)))


def optimize(kind: LossKind, g: Graph, theta0, f, p: EpiParams, tau: float = 1.0,
             cfg: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    """Plain gradient descent ``theta <- theta - s(i) grad``.

    The loss at the current iterate is recorded before each update, and once
    more after the last one, so ``loss_history`` has ``steps + 1`` entries.
    A non-finite loss or gradient stops the run and flags it as aborted.
    """
    theta = np.array(theta0, dtype=float)
    history: list[float] = []
    best_theta, best_loss, best_idx = theta.copy(), math.inf, 0
    aborted = False
    for i in range(cfg.steps + 1):
        try:
            value, grad = loss_and_gradient(kind, g, theta, f, p, tau)
        except (ArithmeticError, ValueError):
            value, grad = math.nan, None
        if not math.isfinite(value) or grad is None or not np.all(np.isfinite(grad)):
            aborted = True
            break
        history.append(value)
        if value < best_loss:
            best_theta, best_loss, best_idx = theta.copy(), value, i
        if i == cfg.steps:
            break
        theta = theta - cfg.schedule(i + 1, g.node_count) * grad
    if not history:
        raise NonFiniteLoss("loss is not finite at the initial parameter")
    if cfg.track_best or aborted:
        theta_star, idx = best_theta, best_idx
    else:
        theta_star, idx = theta, len(history) - 1
    return OptimizationResult(theta_star, np.array(history), idx,
                              spectral.r0(g, theta_star, f, p, tau), aborted)
