"""Next-generation matrices, their Perron triple, and the gradient of R0.

Both reaction models share one representation of the next-generation
matrix,

    G = diag(mu) * sum_t diag(c_t) F_t1 F_t2 ... F_tk,

where each factor is either a constant diagonal or a resolvent
``(M - diag(d))^-1``. The product rule is applied to this structure, so
SEIR and SEPIR go through the same differentiation code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import diffusion
from .errors import InvalidSpec, NoConvergence, SingularResolvent
from .graph import Graph

ModelKind = Literal["SEIR", "SEPIR"]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class EpiParams:
    """Per-node epidemiological rates.

    ``beta`` is the infection rate (``beta^I`` for SEPIR), ``gamma`` the exit
    rate of the stage feeding I, ``delta`` the curing rate. SEPIR adds the
    pre-symptomatic infectiousness ``beta_p`` and the E -> P rate ``alpha``.
    """

    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    kind: ModelKind = "SEIR"
    beta_p: np.ndarray | None = None
    alpha: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("SEIR", "SEPIR"):
            raise InvalidSpec(f"unknown model kind {self.kind!r}")
        for name in ("beta", "gamma", "delta", "beta_p", "alpha"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.atleast_1d(np.asarray(v, dtype=float))
            object.__setattr__(self, name, v)
            if not np.all(v > 0) or not np.all(np.isfinite(v)):
                raise InvalidSpec(f"{name} must be finite and strictly positive")
        sepir_fields = (self.beta_p is not None, self.alpha is not None)
        if self.kind == "SEPIR" and not all(sepir_fields):
            raise InvalidSpec("SEPIR needs beta_p and alpha")
        if self.kind == "SEIR" and any(sepir_fields):
            raise InvalidSpec("beta_p and alpha are only meaningful for SEPIR")
        n = self.beta.shape[0]
        for name in ("gamma", "delta", "beta_p", "alpha"):
            v = getattr(self, name)
            if v is not None and v.shape != (n,):
                raise InvalidSpec(f"{name} has shape {v.shape}, expected ({n},)")

    @property
    def size(self) -> int:
        return self.beta.shape[0]

    def scaled(self, factor: float) -> "EpiParams":
        """Same model with every infectiousness multiplied by ``factor``."""
        bp = None if self.beta_p is None else self.beta_p * factor
        return EpiParams(self.beta * factor, self.gamma, self.delta, self.kind, bp, self.alpha)

    def node_reproduction_weights(self) -> np.ndarray:
        """Per-node R0 divided by the node population (no diffusion limit)."""
        w = self.beta / self.delta
        if self.kind == "SEPIR":
            w = w + self.beta_p / self.gamma
        return w


# ---------------------------------------------------------------------------
# structure of G


def _terms(p: EpiParams):
    if p.kind == "SEIR":
        return [(p.beta, [("res", "delta"), ("diag", "gamma"), ("res", "gamma")])]
    return [
        (p.beta_p, [("res", "gamma"), ("diag", "alpha"), ("res", "alpha")]),
        (-p.beta, [("res", "delta"), ("diag", "gamma"), ("res", "gamma"), ("diag", "alpha"), ("res", "alpha")]),
    ]


def _resolvent(m: np.ndarray, d: np.ndarray) -> np.ndarray:
    try:
        r = np.linalg.solve(m - np.diag(d), np.eye(m.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent("resolvent (M - diag) is singular") from exc
    if not np.all(np.isfinite(r)):
        raise SingularResolvent("resolvent has non-finite entries")
    return r


class _Factors:
    """Evaluated factors of G for one (M, params) pair."""

    def __init__(self, m: np.ndarray, p: EpiParams):
        self.m = m
        self.p = p
        self.res = {name: _resolvent(m, getattr(p, name)) for name in self._resolvent_names()}
        self.terms = [(coef, [self.value(f) for f in factors], [f[0] == "res" for f in factors])
                      for coef, factors in _terms(p)]

    def _resolvent_names(self):
        return sorted({name for _, fs in _terms(self.p) for kind, name in fs if kind == "res"})

    def value(self, factor):
        kind, name = factor
        return self.res[name] if kind == "res" else np.diag(getattr(self.p, name))

    def matrix(self, mu: np.ndarray) -> np.ndarray:
        n = self.m.shape[0]
        g = np.zeros((n, n))
        for coef, mats, _ in self.terms:
            prod = mats[0]
            for x in mats[1:]:
                prod = prod @ x
            g += (mu * coef)[:, None] * prod
        return g

    def vjp(self, mu: np.ndarray, left: np.ndarray, right: np.ndarray):
        """Sensitivities of ``left @ G @ right`` on ``mu`` and on ``M``."""
        n = self.m.shape[0]
        cot_mu = np.zeros(n)
        sens_m = np.zeros((n, n))
        for coef, mats, is_res in self.terms:
            k = len(mats)
            rights = [None] * (k + 1)
            rights[k] = right
            for j in range(k - 1, -1, -1):
                rights[j] = mats[j] @ rights[j + 1]
            cot_mu += left * coef * rights[0]
            lv = left * mu * coef
            for j in range(k):
                if is_res[j]:
                    # d(R) = -R dM R
                    sens_m -= np.outer(mats[j].T @ lv, mats[j] @ rights[j + 1])
                lv = lv @ mats[j]
        return cot_mu, sens_m

    def jacobian(self, mu: np.ndarray, dmu: np.ndarray, dm: np.ndarray) -> np.ndarray:
        """Forward product rule: ``dG/dtheta_e`` for every edge, shape ``(|E|, N, N)``."""
        n = self.m.shape[0]
        out = np.zeros((dm.shape[0], n, n))
        for coef, mats, is_res in self.terms:
            k = len(mats)
            prefix = [np.eye(n)]
            for x in mats:
                prefix.append(prefix[-1] @ x)
            suffix = [np.eye(n)] * (k + 1)
            for j in range(k - 1, -1, -1):
                suffix[j] = mats[j] @ suffix[j + 1]
            out += (dmu.T * coef)[:, :, None] * prefix[k][None, :, :]
            d_mu = (mu * coef)[:, None]
            for j in range(k):
                if is_res[j]:
                    a = d_mu * (prefix[j] @ mats[j])
                    b = mats[j] @ suffix[j + 1]
                    out -= np.einsum("ij,ejk,kl->eil", a, dm, b, optimize=True)
        return out


def next_gen_matrix(m: np.ndarray, p: EpiParams, mu: np.ndarray) -> np.ndarray:
    """Next-generation matrix of the SEIR or SEPIR reaction-diffusion."""
    return _Factors(m, p).matrix(mu)


# ---------------------------------------------------------------------------
# Perron triple


@dataclass(frozen=True)
class PerronTriple:
    rho: float
    l: np.ndarray
    r: np.ndarray


def power_iteration(a: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000):
    """Dominant eigenpair of a nonnegative matrix.

    A few rounds of normalised repeated squaring give a warm start (safe
    because every entry stays nonnegative), then plain power iteration runs
    until successive estimates of rho agree to ``tol`` and the eigen-residual
    is below 1e-10. Returns ``(rho, x)`` with ``sum(x) == 1``.
    """
    n = a.shape[0]
    b = a / max(a.sum(), np.finfo(float).tiny)
    for _ in range(64):
        b2 = b @ b
        s = b2.sum()
        if not s > 0:
            break
        b2 /= s
        done = np.abs(b2 - b).max() <= 1e-15 * b2.max()
        b = b2
        if done:
            break
    x = b.sum(axis=1)
    if not x.sum() > 0:
        x = np.ones(n)
    x = x / x.sum()
    rho_prev = np.nan
    resid = np.inf
    for _ in range(max_iter):
        y = a @ x
        rho = y.sum()
        if rho == 0:
            return 0.0, x
        resid = np.abs(y - rho * x).max()
        x = y / rho
        if abs(rho - rho_prev) <= tol * rho and resid <= RESIDUAL_TOL * max(1.0, rho):
            return float(rho), x
        rho_prev = rho
    raise NoConvergence("power iteration did not converge", float(resid))


def spectral_radius_perron(g: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> PerronTriple:
    """Spectral radius with left/right Perron vectors, ``sum(r) = 1`` and ``l @ r = 1``."""
    g = np.asarray(g, dtype=float)
    _, r = power_iteration(g, tol, max_iter)
    _, l = power_iteration(g.T, tol, max_iter)
    l = l / (l @ r)
    rho = float(l @ g @ r)
    resid = max(np.abs(g @ r - rho * r).max(), np.abs(l @ g - rho * l).max() / max(1.0, l.max()))
    if resid > RESIDUAL_TOL * max(1.0, rho):
        raise NoConvergence("Perron vectors fail the eigen-residual check", float(resid))
    return PerronTriple(rho, l, r)


# ---------------------------------------------------------------------------
# R0 and its gradient


@dataclass
class R0Evaluation:
    """Everything computed on the way to R0 for one policy parameter."""

    pi: np.ndarray
    m: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    perron: PerronTriple
    factors: _Factors

    @property
    def r0(self) -> float:
        return self.perron.rho


def evaluate_r0(g: Graph, theta, f, p: EpiParams, tau: float = 1.0) -> R0Evaluation:
    pi = diffusion.build_policy(g, theta)
    m = diffusion.build_diffusion(pi, f, tau)
    mu = diffusion.stationary_distribution(m)
    fac = _Factors(m, p)
    ngm = fac.matrix(mu)
    return R0Evaluation(pi, m, mu, ngm, spectral_radius_perron(ngm), fac)


def r0(g: Graph, theta, f, p: EpiParams, tau: float = 1.0) -> float:
    return evaluate_r0(g, theta, f, p, tau).r0


def r0_and_gradient(g: Graph, theta, f, p: EpiParams, tau: float = 1.0) -> tuple[float, np.ndarray]:
    """R0 and ``d R0 / d theta`` = ``l^T (dG/dtheta_e) r`` for every edge.

    The contraction with the Perron vectors is pushed through the factors of
    G in reverse order, so the ``|E| x N x N`` tensor of :func:`next_gen_jacobian`
    is never formed.
    """
    ev = evaluate_r0(g, theta, f, p, tau)
    if g.edge_count == 0:
        return ev.r0, np.zeros(0)
    cot_mu, sens_m = ev.factors.vjp(ev.mu, ev.perron.l, ev.perron.r)
    sens_m += diffusion.stationary_vjp(ev.m, ev.mu, cot_mu)
    return ev.r0, diffusion.theta_vjp(g, ev.pi, f, tau, sens_m)


def next_gen_jacobian(g: Graph, theta, f, p: EpiParams, tau: float = 1.0) -> np.ndarray:
    """Tensor ``dG/dtheta_e``, shape ``(|E|, N, N)``, by the forward product rule."""
    ev = evaluate_r0(g, theta, f, p, tau)
    dmu = diffusion.stationary_jacobian(g, theta, f, tau)
    dm = diffusion.diffusion_derivative(g, ev.pi, f, tau)
    return ev.factors.jacobian(ev.mu, dmu, dm)


# ---------------------------------------------------------------------------
# next-generation matrix with large domain


@dataclass(frozen=True)
class LargeDomainMatrices:
    f_block: np.ndarray
    v_block: np.ndarray
    k: np.ndarray
    rho: float
    v_eig: np.ndarray


def large_domain(m: np.ndarray, p: EpiParams, mu: np.ndarray) -> LargeDomainMatrices:
    """Block matrices on the (E, I) coordinates and ``K = -F V^-1``.

    ``v_eig`` is the power-iteration limit from the uniform vector; K is
    reducible, so it is one nonnegative Perron vector among possibly many.
    """
    if p.kind != "SEIR":
        raise InvalidSpec("the large-domain construction is implemented for SEIR only")
    n = m.shape[0]
    z = np.zeros((n, n))
    f_block = np.block([[z, np.diag(p.beta * mu)], [z, z]])
    v_block = np.block([[m - np.diag(p.gamma), z], [np.diag(p.gamma), m - np.diag(p.delta)]])
    try:
        v_inv = np.linalg.inv(v_block)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent("V block is singular") from exc
    k = -f_block @ v_inv
    # round-off can leave entries like -1e-19 where K is exactly zero
    k = np.where(np.abs(k) <= 1e-14 * np.abs(k).max(), 0.0, k)
    rho, v = power_iteration(np.maximum(k, 0.0))
    v = np.maximum(v, 0.0)
    return LargeDomainMatrices(f_block, v_block, k, rho, v / v.sum())
