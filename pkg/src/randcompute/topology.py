"""Network topologies and the push-routing transition matrix.

Nodes are dense integers ``0..n-1``.  Every generator returns a connected
:class:`Graph`; random families retry with derived seeds until connected.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

MAX_RETRIES = 100


class TopologyError(ValueError):
    """Invalid topology parameters."""


class DisconnectedGraphError(TopologyError):
    """The graph (or every retry of a random family) is disconnected."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...]
    degree: tuple[int, ...]
    self_loop_prob: tuple[float, ...]
    name: str = "graph"
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        *,
        epsilon: float | Iterable[float] = 0.0,
        name: str = "graph",
        meta: Mapping[str, Any] | None = None,
        check_connected: bool = True,
    ) -> "Graph":
        if n < 1:
            raise TopologyError(f"node count must be positive, got {n}")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise TopologyError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise TopologyError(f"self-edge at node {u}; use epsilon for laziness")
            canon.add((min(u, v), max(u, v)))
        edge_tuple = tuple(sorted(canon))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in edge_tuple:
            nbrs[u].append(v)
            nbrs[v].append(u)
        adjacency = tuple(tuple(sorted(a)) for a in nbrs)
        if isinstance(epsilon, (int, float)):
            eps = (float(epsilon),) * n
        else:
            eps = tuple(float(e) for e in epsilon)
            if len(eps) != n:
                raise TopologyError("per-node epsilon must have length n")
        for e in eps:
            if not 0.0 <= e < 1.0:
                raise TopologyError(f"self-loop probability must be in [0, 1), got {e}")
        g = cls(
            n=n,
            edges=edge_tuple,
            adjacency=adjacency,
            degree=tuple(len(a) for a in adjacency),
            self_loop_prob=eps,
            name=name,
            meta=dict(meta or {}),
        )
        if check_connected and not is_connected(g):
            raise DisconnectedGraphError(f"{name} on {n} nodes is disconnected")
        return g

    @property
    def m(self) -> int:
        return len(self.edges)

    def with_epsilon(self, epsilon: float | Iterable[float]) -> "Graph":
        """Same edge set with a different self-loop probability."""
        return Graph.from_edges(
            self.n, self.edges, epsilon=epsilon, name=self.name, meta=self.meta
        )

    def to_edgelist(self) -> str:
        """Canonical text serialization (stable across runs)."""
        lines = [f"# {self.name} n={self.n} m={self.m}"]
        lines.extend(f"{u} {v}" for u, v in self.edges)
        return "\n".join(lines) + "\n"


def is_connected(g: Graph) -> bool:
    return len(_bfs_order(g.adjacency, 0)) == g.n


def _bfs_order(adjacency, start: int) -> list[int]:
    seen = {start}
    order = [start]
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                order.append(v)
                todo.append(v)
    return order


def is_bipartite(g: Graph) -> bool:
    color = [-1] * g.n
    for s in range(g.n):
        if color[s] >= 0:
            continue
        color[s] = 0
        todo = deque([s])
        while todo:
            u = todo.popleft()
            for v in g.adjacency[u]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    todo.append(v)
                elif color[v] == color[u]:
                    return False
    return True


# -- generators ---------------------------------------------------------------


def cycle_edges(n: int) -> list[tuple[int, int]]:
    if n < 3:
        raise TopologyError("cycle needs n >= 3")
    return [(i, (i + 1) % n) for i in range(n)]


def path_edges(n: int) -> list[tuple[int, int]]:
    if n < 2:
        raise TopologyError("path needs n >= 2")
    return [(i, i + 1) for i in range(n - 1)]


def star_edges(n: int) -> list[tuple[int, int]]:
    """Star with the centre at node 0."""
    if n < 2:
        raise TopologyError("star needs n >= 2")
    return [(0, i) for i in range(1, n)]


def complete_edges(n: int) -> list[tuple[int, int]]:
    if n < 2:
        raise TopologyError("complete graph needs n >= 2")
    return list(itertools.combinations(range(n), 2))


def hypercube_edges(n: int) -> list[tuple[int, int]]:
    if n < 2 or n & (n - 1):
        raise TopologyError(f"hypercube needs n a power of two, got {n}")
    dim = n.bit_length() - 1
    return [(u, u ^ (1 << b)) for u in range(n) for b in range(dim) if u < u ^ (1 << b)]


def torus_edges(side: int, dim: int) -> list[tuple[int, int]]:
    """Wrap-around lattice on ``side**dim`` nodes (row-major coordinates)."""
    if side < 2 or dim < 1:
        raise TopologyError("torus needs side >= 2 and dim >= 1")
    n = side**dim
    strides = [side**k for k in range(dim)]
    edges = set()
    for u in range(n):
        for k, s in enumerate(strides):
            coord = (u // s) % side
            v = u + (((coord + 1) % side) - coord) * s
            if u != v:
                edges.add((min(u, v), max(u, v)))
    return sorted(edges)


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """Open rectangular lattice, node ``(r, c) -> r * cols + c``."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise TopologyError("grid needs at least two nodes")
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    return edges


def random_regular_edges(n: int, r: int, rng: random.Random) -> list[tuple[int, int]] | None:
    """One pairing-model draw; ``None`` when it produced a multi-edge or loop."""
    stubs = [u for u in range(n) for _ in range(r)]
    rng.shuffle(stubs)
    edges = set()
    for a, b in zip(stubs[::2], stubs[1::2]):
        if a == b:
            return None
        e = (min(a, b), max(a, b))
        if e in edges:
            return None
        edges.add(e)
    return sorted(edges)


def random_geometric_edges(
    n: int, radius: float, rng: random.Random
) -> tuple[list[tuple[int, int]], list[tuple[float, float]]]:
    pts = [(rng.random(), rng.random()) for _ in range(n)]
    r2 = radius * radius
    edges = [
        (u, v)
        for u, v in itertools.combinations(range(n), 2)
        if (pts[u][0] - pts[v][0]) ** 2 + (pts[u][1] - pts[v][1]) ** 2 <= r2
    ]
    return edges, pts


def read_edgelist(path: str | Path) -> tuple[int, list[tuple[int, int]]]:
    """Parse ``u v`` lines (0-based, ``#`` comments).  Node count is max id + 1."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise TopologyError(f"{path}:{lineno}: {exc}") from None
    if not edges:
        raise TopologyError(f"{path}: no edges")
    return max(max(e) for e in edges) + 1, edges


def _retry(name: str, seed: int, draw):
    for attempt in range(MAX_RETRIES):
        rng = random.Random(f"{name}:{seed}:{attempt}")
        out = draw(rng)
        if out is not None:
            return out, attempt
    raise DisconnectedGraphError(
        f"{name}: no connected draw after {MAX_RETRIES} attempts (seed={seed})"
    )


def build_topology(spec: Mapping[str, Any]) -> Graph:
    """Build a graph from a descriptor such as ``{"kind": "cycle", "n": 8}``.

    Recognised kinds: ``cycle``, ``path``, ``star``, ``complete``, ``hypercube``,
    ``torus`` (``side``/``dim`` or ``n``/``dim``), ``grid`` (``rows``/``cols``),
    ``random_regular`` (``n``, ``r``, ``seed``), ``geometric`` (``n``, ``radius``,
    ``seed``) and ``edges`` (``edges`` list or ``file`` path, optional ``n``).
    An optional ``epsilon`` sets a uniform self-loop probability.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    eps = spec.pop("epsilon", 0.0)
    name = spec.pop("name", kind)

    def need(key: str) -> Any:
        if key not in spec:
            raise TopologyError(f"topology kind {kind!r} requires {key!r}")
        return spec.pop(key)

    meta: dict[str, Any] = {}
    if kind in ("cycle", "path", "star", "complete", "hypercube"):
        n = int(need("n"))
        edges = {
            "cycle": cycle_edges,
            "path": path_edges,
            "star": star_edges,
            "complete": complete_edges,
            "hypercube": hypercube_edges,
        }[kind](n)
    elif kind == "torus":
        dim = int(spec.pop("dim", 2))
        if "side" in spec:
            side = int(spec.pop("side"))
            if "n" in spec and int(spec.pop("n")) != side**dim:
                raise TopologyError("torus: n != side**dim")
        else:
            n_req = int(need("n"))
            side = round(n_req ** (1.0 / dim))
            if side**dim != n_req:
                raise TopologyError(f"torus: n={n_req} is not a perfect {dim}-th power")
        n = side**dim
        edges = torus_edges(side, dim)
        meta.update(side=side, dim=dim)
    elif kind == "grid":
        rows, cols = int(need("rows")), int(need("cols"))
        n = rows * cols
        edges = grid_edges(rows, cols) + [tuple(e) for e in spec.pop("extra_edges", [])]
    elif kind == "random_regular":
        n, r, seed = int(need("n")), int(need("r")), int(need("seed"))
        if not 1 <= r < n or (n * r) % 2:
            raise TopologyError(f"random_regular: invalid n={n}, r={r}")

        def draw(rng):
            # simple draws are rare for larger r; rejection has its own budget
            for _ in range(10_000):
                e = random_regular_edges(n, r, rng)
                if e is not None:
                    break
            else:
                return None
            g = Graph.from_edges(n, e, check_connected=False)
            return e if is_connected(g) else None

        edges, attempt = _retry("random_regular", seed, draw)
        meta.update(seed=seed, attempts=attempt + 1)
    elif kind == "geometric":
        n, radius, seed = int(need("n")), float(need("radius")), int(need("seed"))
        if n < 2 or radius <= 0:
            raise TopologyError("geometric: need n >= 2 and radius > 0")

        def draw(rng):
            e, pts = random_geometric_edges(n, radius, rng)
            g = Graph.from_edges(n, e, check_connected=False)
            return (e, pts) if is_connected(g) else None

        (edges, pts), attempt = _retry("geometric", seed, draw)
        meta.update(seed=seed, attempts=attempt + 1, positions=pts, radius=radius)
    elif kind == "edges":
        if "file" in spec:
            n_file, edges = read_edgelist(spec.pop("file"))
            n = int(spec.pop("n", n_file))
        else:
            edges = [tuple(e) for e in need("edges")]
            n = int(spec.pop("n", max(max(e) for e in edges) + 1))
    else:
        raise TopologyError(f"unknown topology kind {kind!r}")
    spec.pop("seed", None)
    if spec:
        raise TopologyError(f"unexpected topology keys for {kind!r}: {sorted(spec)}")
    return Graph.from_edges(n, edges, epsilon=eps, name=str(name), meta=meta)


# -- derived structure --------------------------------------------------------


def transition_matrix(g: Graph) -> np.ndarray:
    """Row-stochastic push-routing matrix.

    ``P[u, u] = eps(u)`` and ``P[u, v] = (1 - eps(u)) / d(u)`` for each
    neighbour ``v``.  With ``eps = 0`` this is the simple random walk.
    """
    P = np.zeros((g.n, g.n))
    for u in range(g.n):
        eps = g.self_loop_prob[u]
        w = (1.0 - eps) / g.degree[u]
        for v in g.adjacency[u]:
            P[u, v] = w
        P[u, u] = eps
    P.setflags(write=False)
    return P


def validate(g: Graph) -> dict[str, Any]:
    """Degree/connectivity diagnostics; raises on a disconnected graph."""
    if not is_connected(g):
        raise DisconnectedGraphError(f"{g.name}: not connected")
    return {
        "n": g.n,
        "m": g.m,
        "d_min": min(g.degree),
        "d_max": max(g.degree),
        "d_avg": 2 * g.m / g.n,
        "connected": True,
        "bipartite": is_bipartite(g),
        "degree_sum_ok": sum(g.degree) == 2 * g.m,
    }

