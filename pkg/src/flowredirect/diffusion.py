"""Softmax policies, diffusion matrices and stationary distributions.

Conventions: ``pi[n, i]`` is the share of the outflow of node ``n`` sent
along ``n -> i``. The diffusion matrix acts on column vectors of node
populations, ``M[n, i] = f[i] * (pi[i, n] - [i == n]) / tau``, so every
column sums to zero and total mass is conserved.
"""
from __future__ import annotations

import numpy as np

from .errors import IndexMismatch, InvariantViolation, SingularSystem
from .graph import Graph

COLUMN_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10


def _check_theta(g: Graph, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (g.edge_count,):
        raise IndexMismatch(f"theta has shape {theta.shape}, graph has {g.edge_count} edges")
    if not np.all(np.isfinite(theta)):
        raise IndexMismatch("theta contains non-finite values")
    return theta


def build_policy(g: Graph, theta) -> np.ndarray:
    """Row-wise softmax of ``theta`` over each node's out-neighbours."""
    theta = _check_theta(g, theta)
    n = g.node_count
    pi = np.zeros((n, n))
    if g.edge_count == 0:
        return pi
    row_max = np.full(n, -np.inf)
    np.maximum.at(row_max, g.src, theta)
    w = np.exp(theta - row_max[g.src])
    denom = np.zeros(n)
    np.add.at(denom, g.src, w)
    pi[g.src, g.dst] = w / denom[g.src]
    return pi


def build_diffusion(pi: np.ndarray, f, tau: float = 1.0) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    if not tau > 0:
        raise InvariantViolation(f"tau must be positive, got {tau!r}")
    if np.any(f <= 0):
        raise InvariantViolation("outrates must be strictly positive")
    n = pi.shape[0]
    if n == 1:
        return np.zeros((1, 1))
    m = (pi - np.eye(n)).T * (f / tau)[None, :]
    col = np.abs(m.sum(axis=0)).max()
    if col > COLUMN_SUM_TOL * max(1.0, np.abs(m).max()):
        raise InvariantViolation(f"diffusion columns do not sum to zero (max {col:.3e})")
    return m


def diffusion_from_theta(g: Graph, theta, f, tau: float = 1.0) -> np.ndarray:
    return build_diffusion(build_policy(g, theta), f, tau)


def _normalised_system(m: np.ndarray) -> np.ndarray:
    k = np.array(m, dtype=float, copy=True)
    k[-1, :] = 1.0
    return k


def stationary_distribution(m: np.ndarray) -> np.ndarray:
    """Solve ``M mu = 0, sum(mu) = 1`` with the last equation replaced by the normalisation."""
    n = m.shape[0]
    if n == 1:
        return np.ones(1)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        mu = np.linalg.solve(_normalised_system(m), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("stationary system is singular; is M irreducible?") from exc
    residual = np.abs(m @ mu).max()
    if not np.all(mu > 0) or residual > RESIDUAL_TOL * max(1.0, np.abs(m).max()):
        raise SingularSystem(f"degenerate stationary solution (min {mu.min():.3e}, residual {residual:.3e})")
    return mu


def policy_derivative(g: Graph, pi: np.ndarray) -> np.ndarray:
    """``d pi[src(e), :] / d theta_e`` for every edge, shape ``(|E|, N)``.

    Only row ``src(e)`` of ``pi`` depends on ``theta_e``:
    ``d pi[i, n] / d theta_ij = pi[i, n] * ([n == j] - pi[i, j])``.
    """
    rows = pi[g.src].copy()
    d = -rows * pi[g.src, g.dst][:, None]
    d[np.arange(g.edge_count), g.dst] += pi[g.src, g.dst]
    return d


def diffusion_derivative(g: Graph, pi: np.ndarray, f, tau: float = 1.0) -> np.ndarray:
    """Dense tensor ``dM / d theta_e`` of shape ``(|E|, N, N)``; column ``src(e)`` only."""
    f = np.asarray(f, dtype=float)
    n = g.node_count
    dm = np.zeros((g.edge_count, n, n))
    dm[np.arange(g.edge_count), :, g.src] = policy_derivative(g, pi) * (f[g.src] / tau)[:, None]
    return dm


def stationary_jacobian(g: Graph, theta, f, tau: float = 1.0) -> np.ndarray:
    """Jacobian ``d mu / d theta`` of shape ``(N, |E|)`` by implicit differentiation.

    For each edge ``e`` solve ``M x = -(dM_e) mu`` with ``sum(x) = 0``, reusing
    the normalised system of :func:`stationary_distribution`. ``tau`` cancels
    out but is accepted so callers can pass their diffusion settings through.
    """
    pi = build_policy(g, theta)
    m = build_diffusion(pi, f, tau)
    mu = stationary_distribution(m)
    n = g.node_count
    if n == 1 or g.edge_count == 0:
        return np.zeros((n, g.edge_count))
    f = np.asarray(f, dtype=float)
    # dM_e mu = (f_i mu_i / tau) * dpi_row, i = src(e)
    rhs = -(policy_derivative(g, pi) * (f[g.src] * mu[g.src] / tau)[:, None]).T
    rhs[-1, :] = 0.0
    try:
        return np.linalg.solve(_normalised_system(m), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("stationary system is singular") from exc


def stationary_vjp(m: np.ndarray, mu: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Pull ``cotangent . d mu`` back to a sensitivity on ``M``.

    Returns ``S`` with ``cotangent @ dmu == sum(S * dM)`` for any admissible
    ``dM`` (zero column sums).
    """
    if m.shape[0] == 1:
        return np.zeros_like(m)
    z = np.linalg.solve(_normalised_system(m).T, cotangent)
    z[-1] = 0.0
    return -np.outer(z, mu)


def theta_vjp(g: Graph, pi: np.ndarray, f, tau: float, sens_m: np.ndarray) -> np.ndarray:
    """Pull a sensitivity on ``M`` back to a gradient on ``theta``."""
    f = np.asarray(f, dtype=float)
    # sensitivity on pi[i, n] is f_i * S[n, i] / tau
    h = sens_m.T * (f / tau)[:, None]
    p_e = pi[g.src, g.dst]
    row_avg = np.einsum("in,in->i", h, pi)
    return p_e * (h[g.src, g.dst] - row_avg[g.src])


def check_diffusion(m: np.ndarray) -> None:
    """Raise InvariantViolation unless ``m`` is Metzler with zero column sums."""
    off = m - np.diag(np.diag(m))
    if np.any(off < 0):
        raise InvariantViolation("diffusion matrix is not Metzler")
    col = np.abs(m.sum(axis=0)).max() if m.size else 0.0
    if col > COLUMN_SUM_TOL * max(1.0, np.abs(m).max()):
        raise InvariantViolation(f"columns do not sum to zero (max {col:.3e})")
