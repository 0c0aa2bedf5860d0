"""Directed, strongly connected graphs with per-node outrates.

Edges are stored sorted by ``(src, dst)``. That order is the canonical
indexing of the policy parameters: ``theta[k]`` belongs to ``g.edges[k]``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

import networkx as nx
import numpy as np

from .errors import ConnectivityFailure, InvalidRange, InvalidSpec, InvariantViolation, ParseError

OUTRATE_FLOOR = 1e-6
MAX_ATTEMPTS = 1000

FAMILIES = ("erdos_renyi", "waxman", "barabasi_albert", "relaxed_caveman")

_DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "erdos_renyi": {"p": 0.2},
    "waxman": {"alpha": 0.4, "beta": 0.6},
    "barabasi_albert": {"m": 2},
    "relaxed_caveman": {"clique_size": 6, "rewire_p": 0.2, "cliques": None},
}


@dataclass(frozen=True)
class Graph:
    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise InvariantViolation("graph needs at least one node")
        edges = tuple(sorted((int(a), int(b)) for a, b in self.edges))
        if len(set(edges)) != len(edges):
            raise InvariantViolation("duplicate edges")
        for a, b in edges:
            if a == b:
                raise InvariantViolation(f"self-loop on node {a}")
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise InvariantViolation(f"edge {a}->{b} out of range")
        object.__setattr__(self, "edges", edges)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def src(self) -> np.ndarray:
        return np.array([a for a, _ in self.edges], dtype=np.intp)

    @cached_property
    def dst(self) -> np.ndarray:
        return np.array([b for _, b in self.edges], dtype=np.intp)

    @cached_property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for a, b in self.edges:
            out[a].append(b)
        return tuple(tuple(x) for x in out)

    @cached_property
    def in_neighbors(self) -> tuple[tuple[int, ...], ...]:
        inn: list[list[int]] = [[] for _ in range(self.node_count)]
        for a, b in self.edges:
            inn[b].append(a)
        return tuple(tuple(x) for x in inn)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        if self.edges:
            a[self.src, self.dst] = 1.0
        return a


def _reaches_all(n: int, nbrs: tuple[tuple[int, ...], ...]) -> bool:
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == n


def is_strongly_connected(g: Graph) -> bool:
    """Node 0 reaches everything and everything reaches node 0."""
    if g.node_count == 1:
        return True
    return _reaches_all(g.node_count, g.out_neighbors) and _reaches_all(g.node_count, g.in_neighbors)


def check_graph(g: Graph) -> None:
    """Raise InvariantViolation unless ``g`` is usable as a diffusion support."""
    if g.node_count > 1 and any(len(nb) == 0 for nb in g.out_neighbors):
        raise InvariantViolation("some node has no outgoing edge")
    if not is_strongly_connected(g):
        raise InvariantViolation("graph is not strongly connected")


@dataclass(frozen=True)
class GraphSpec:
    family: str
    size: int
    seed: int = 0
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown graph family {self.family!r}; expected one of {FAMILIES}")
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.family])
        if unknown:
            raise InvalidSpec(f"unknown parameters for {self.family}: {sorted(unknown)}")
        if not isinstance(self.size, int) or self.size < 1:
            raise InvalidSpec(f"size must be a positive integer, got {self.size!r}")
        resolved = {**_DEFAULT_PARAMS[self.family], **self.params}
        object.__setattr__(self, "params", resolved)
        self._validate()

    def _validate(self):
        p = self.params
        if self.family == "erdos_renyi":
            _check_prob("p", p["p"])
        elif self.family == "waxman":
            if not p["alpha"] > 0:
                raise InvalidSpec("waxman alpha must be positive")
            _check_prob("beta", p["beta"])
        elif self.family == "barabasi_albert":
            m = p["m"]
            if not isinstance(m, int) or m < 1:
                raise InvalidSpec("barabasi_albert m must be an integer >= 1")
            if self.size > 1 and m >= self.size:
                raise InvalidSpec("barabasi_albert m must be smaller than the graph size")
        else:
            k = p["clique_size"]
            if not isinstance(k, int) or k < 2:
                raise InvalidSpec("relaxed_caveman clique_size must be an integer >= 2")
            _check_prob("rewire_p", p["rewire_p"], allow_zero=True)
            cliques = p["cliques"]
            if cliques is None:
                if self.size % k:
                    raise InvalidSpec(f"size {self.size} is not a multiple of clique_size {k}")
            elif cliques * k != self.size:
                raise InvalidSpec(f"cliques * clique_size = {cliques * k} != size {self.size}")

    @property
    def label(self) -> str:
        return self.family


def _check_prob(name: str, value: float, allow_zero: bool = False) -> None:
    lo_ok = value >= 0 if allow_zero else value > 0
    if not (lo_ok and value <= 1):
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        raise InvalidSpec(f"{name} must lie in {interval}, got {value!r}")


def _draw(spec: GraphSpec, seed: int) -> list[tuple[int, int]]:
    n, p = spec.size, spec.params
    if spec.family == "erdos_renyi":
        # each ordered pair independently
        return list(nx.gnp_random_graph(n, p["p"], seed=seed, directed=True).edges())
    if spec.family == "waxman":
        und = nx.waxman_graph(n, beta=p["beta"], alpha=p["alpha"], seed=seed)
    elif spec.family == "barabasi_albert":
        und = nx.barabasi_albert_graph(n, p["m"], seed=seed) if n > 1 else nx.empty_graph(1)
    else:
        k = p["clique_size"]
        und = nx.relaxed_caveman_graph(n // k, k, p["rewire_p"], seed=seed)
    return [e for a, b in und.edges() if a != b for e in ((a, b), (b, a))]


def generate(spec: GraphSpec, max_attempts: int = MAX_ATTEMPTS) -> Graph:
    """Sample a strongly connected graph, rejecting disconnected draws."""
    rng = np.random.default_rng(spec.seed)
    for _ in range(max_attempts):
        g = Graph(spec.size, tuple(set(_draw(spec, int(rng.integers(2**63 - 1))))))
        try:
            check_graph(g)
        except InvariantViolation:
            continue
        return g
    raise ConnectivityFailure(
        f"{spec.family} with params {dict(spec.params)} and size {spec.size} gave no strongly "
        f"connected graph in {max_attempts} attempts; parameters are probably too sparse"
    )


def sample_outrates(g: Graph, lo: float = 0.0, hi: float = 0.4, seed: int | None = 0) -> np.ndarray:
    """I.i.d. outrates, uniform on ``(max(lo, floor), hi]``."""
    if not (0 <= lo < hi) or not math.isfinite(hi):
        raise InvalidRange(f"need 0 <= lo < hi, got lo={lo!r}, hi={hi!r}")
    lo = max(lo, OUTRATE_FLOOR)
    if lo >= hi:
        raise InvalidRange(f"hi={hi!r} is below the outrate floor {OUTRATE_FLOOR}")
    u = np.random.default_rng(seed).random(g.node_count)
    return hi - (hi - lo) * u


def save_edge_list(path: str | Path, g: Graph, f: Iterable[float]) -> None:
    f = np.asarray(list(f), dtype=float)
    lines = [f"#nodes {g.node_count}"]
    lines += [f"{a} {b}" for a, b in g.edges]
    lines += [f"#outrate {n} {v!r}" for n, v in enumerate(f.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_edge_list(path: str | Path) -> tuple[Graph, np.ndarray]:
    text = Path(path).read_text().splitlines()
    node_count = None
    edges: list[tuple[int, int]] = []
    rates: dict[int, float] = {}
    for lineno, raw in enumerate(text, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "#nodes" and len(parts) == 2:
                node_count = int(parts[1])
            elif parts[0] == "#outrate" and len(parts) == 3:
                rates[int(parts[1])] = float(parts[2])
            elif len(parts) == 2 and not line.startswith("#"):
                edges.append((int(parts[0]), int(parts[1])))
            else:
                raise ValueError(f"unrecognised line {line!r}")
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
    if node_count is None:
        raise ParseError(1, "missing '#nodes K' header")
    g = Graph(node_count, tuple(edges))
    check_graph(g)
    if sorted(rates) != list(range(node_count)):
        raise InvariantViolation("outrate block must list every node exactly once")
    f = np.array([rates[n] for n in range(node_count)])
    if np.any(f <= 0):
        raise InvariantViolation("outrates must be strictly positive")
    return g, f
