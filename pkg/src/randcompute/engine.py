"""Slotted-time push simulator for fixed and flexible random-walk computation.

One call to :meth:`SimState.step` executes a slot in four phases:

1. arrivals at the sources (self-generated packets take the receive path),
2. every node with a non-empty transmission queue sends one uniformly chosen
   packet to a neighbour drawn from the routing matrix,
3. receivers handle deliveries in ascending sender order,
4. root packets at the sink are absorbed; completion is stamped ``t + 1``.

Packets sent in slot ``t`` land in the receivers' queues for slot ``t + 1``.
"""

from __future__ import annotations

import heapq
import math
import random
import warnings
from array import array
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .schema import (
    MASK64,
    ROOT,
    Operand,
    Payload,
    SchemaNodeId,
    SchemaTree,
    combine,
    leaf_payload,
    reference_evaluate,
)
from .topology import Graph, is_bipartite

DEFAULT_SLOT_CAP = 10**8


class EngineError(ValueError):
    pass


class SlotCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ArrivalModel:
    kind: str = "bernoulli"
    beta: float = 0.1
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bernoulli", "clock_drift"):
            raise EngineError(f"unknown arrival model {self.kind!r}")
        if self.kind == "bernoulli" and not 0.0 <= self.beta <= 1.0:
            raise EngineError(f"beta must be in [0, 1], got {self.beta}")
        if self.kind == "clock_drift" and not 0.0 < self.beta <= 1.0:
            raise EngineError(f"beta must be in (0, 1], got {self.beta}")
        if self.gamma < 0:
            raise EngineError(f"gamma must be >= 0, got {self.gamma}")


class Packet:
    __slots__ = ("round", "code", "payload", "birth", "uid", "pos")

    def __init__(self, round, code, payload, birth, uid):
        self.round = round
        self.code = code
        self.payload = payload
        self.birth = birth
        self.uid = uid
        self.pos = -1

    def __repr__(self):
        return f"Packet(round={self.round}, code={self.code}, trace={self.payload.trace!r})"


class NodeState:
    """Transmission queue ``q`` (with key index) and operand buffer ``c``."""

    __slots__ = ("q", "qkey", "c")

    def __init__(self):
        self.q: list[Packet] = []
        self.qkey: dict[int, Packet] = {}
        self.c: dict[int, Packet] = {}


def _mix64(*parts: int) -> int:
    z = 0x2545F4914F6CDD1D
    for p in parts:
        z = (z ^ (p & MASK64)) * 0x9E3779B97F4A7C15 & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        z ^= z >> 31
    return z


def random_mapping(t: SchemaTree, n: int, seed: int) -> dict[SchemaNodeId, int]:
    """Uniform injection of the internal schema nodes into ``range(n)``."""
    ids = t.internal_ids
    if len(ids) > n:
        raise EngineError(f"{len(ids)} internal schema nodes do not fit in {n} network nodes")
    nodes = random.Random(f"mapping:{seed}").sample(range(n), len(ids))
    return dict(zip(ids, nodes))


def spread_sources(n: int, K: int, sink: int) -> list[int]:
    """Deterministic, evenly spaced source placement avoiding the sink when possible."""
    pool = [v for v in range(n) if v != sink] if K < n else list(range(n))
    if K > len(pool):
        raise EngineError(f"cannot place {K} sources on {n} nodes")
    return [pool[(k * len(pool)) // K] for k in range(K)]


class SimState:
    """Mutable simulation state; single-threaded by contract."""

    def __init__(
        self,
        graph: Graph,
        schema: SchemaTree,
        mode: str,
        sources: Sequence[int],
        sink: int,
        arrival: ArrivalModel,
        seed: int,
        mapping: Mapping[tuple[int, int], int] | None = None,
        *,
        cascade: bool = False,
        keep_payloads: bool = True,
        track_routes: bool = False,
    ):
        if mode not in ("fixed", "flexible"):
            raise EngineError(f"mode must be 'fixed' or 'flexible', got {mode!r}")
        n = graph.n
        sources = [int(u) for u in sources]
        if len(sources) != schema.K:
            raise EngineError(f"schema has {schema.K} operands but {len(sources)} sources given")
        if len(set(sources)) != len(sources):
            raise EngineError("sources must be distinct")
        if any(not 0 <= u < n for u in sources):
            raise EngineError("source node out of range")
        if not 0 <= sink < n:
            raise EngineError(f"sink {sink} out of range")

        self.graph = graph
        self.schema = schema
        self.mode = mode
        self.sources = sources
        self.sink = sink
        self.arrival = arrival
        self.seed = seed
        self.cascade = cascade
        self.keep_payloads = keep_payloads

        # dense schema-id codes; root is code 0
        ids = sorted(list(schema.ops) + list(schema.sources))
        self.ids: list[SchemaNodeId] = ids
        self.code = {sid: c for c, sid in enumerate(ids)}
        self.S = len(ids)
        self._parent = [-1] * self.S
        self._sibling = [-1] * self.S
        for sid, c in self.code.items():
            if sid != ROOT:
                self._parent[c] = self.code[(sid[0] - 1, sid[1] >> 1)]
                self._sibling[c] = self.code[(sid[0], sid[1] ^ 1)]
        self._leaf_code = [self.code[sid] for sid in schema.source_ids]

        self.phi: dict[SchemaNodeId, int] | None = None
        self._phi_inv = [-1] * n
        if mode == "fixed":
            if mapping is None:
                raise EngineError("fixed mode requires a mapping")
            phi = {SchemaNodeId(*k): int(v) for k, v in mapping.items()}
            if set(phi) != set(schema.ops):
                raise EngineError("mapping must cover exactly the internal schema nodes")
            if len(set(phi.values())) != len(phi):
                raise EngineError("mapping is not injective")
            for sid, u in phi.items():
                if not 0 <= u < n:
                    raise EngineError(f"mapping target {u} out of range")
                self._phi_inv[u] = self.code[sid]
            self.phi = phi

        self.rng = random.Random(seed)
        self._salt = _mix64(seed, 0xA11CE)
        self.nodes = [NodeState() for _ in range(n)]
        self.slot = 0
        self.round_limit: int | None = None
        self.watch_rounds = 0
        self.watch_done = 0
        self._uid = 0
        self._gen = [0] * schema.K
        self.appearance: list[list[int]] = [[] for _ in range(schema.K)]
        self.completion: dict[int, int] = {}
        self.consumed: list[tuple[int, str, int | None]] = []
        self.mismatches = 0
        self.in_system = 0
        self.in_c = 0
        self.total_series = array("q")
        self.q_series = array("q")
        self.busy = bytearray()
        self.max_queue = [0] * n
        self.max_c = [0] * n
        self.routes = np.zeros((n, n), dtype=np.int64) if track_routes else None
        self.last_sends: list[tuple[int, int, int]] = []

        if arrival.kind == "clock_drift":
            self._drift_rng = [random.Random(f"drift:{seed}:{i}") for i in range(schema.K)]
            self._drift_heap: list[list[tuple[int, int]]] = [[] for _ in range(schema.K)]
            self._drift_next = [1] * schema.K

    # -- helpers ---------------------------------------------------------------

    def operand(self, k: int, round: int) -> Operand:
        """Operand ``k`` (1-based) of ``round``; deterministic in the seed."""
        label = self.schema.labels[k - 1]
        return Operand(f"{label}#{round}", _mix64(self._salt, k, round))

    def reference(self, round: int) -> Payload:
        return reference_evaluate(
            self.schema, [self.operand(k, round) for k in range(1, self.schema.K + 1)], round
        )

    def _new_packet(self, round, code, payload, t) -> Packet:
        self._uid += 1
        return Packet(round, code, payload, t, self._uid)

    def _enqueue(self, u: int, p: Packet) -> None:
        node = self.nodes[u]
        p.pos = len(node.q)
        node.q.append(p)
        node.qkey[p.round * self.S + p.code] = p

    def _unqueue(self, node: NodeState, p: Packet) -> None:
        q = node.q
        last = q.pop()
        if last is not p:
            q[p.pos] = last
            last.pos = p.pos
        del node.qkey[p.round * self.S + p.code]

    def _combine(self, a: Packet, b: Packet, t: int) -> Packet:
        pid, payload = combine(self.schema, self.ids[a.code], a.payload, self.ids[b.code], b.payload)
        self.in_system -= 1
        return self._new_packet(a.round, self.code[pid], payload, t)

    def _place(self, u: int, p: Packet, t: int) -> None:
        if p.code == 0 and u == self.sink:
            self._absorb(p, t)
        else:
            self._enqueue(u, p)

    def _absorb(self, p: Packet, t: int) -> None:
        self.in_system -= 1
        self.completion[p.round] = t + 1
        if p.round <= self.watch_rounds:
            self.watch_done += 1
        ref = self.reference(p.round)
        if ref.trace != p.payload.trace or ref.value != p.payload.value:
            self.mismatches += 1
        if self.keep_payloads:
            self.consumed.append((p.round, p.payload.trace, p.payload.value))

    def _accept(self, u: int, p: Packet, t: int) -> None:
        """Receive path of both algorithms for a packet arriving at ``u``."""
        if p.code == 0:
            self._place(u, p, t)
            return
        S = self.S
        if self.mode == "fixed":
            target = self._phi_inv[u]
            if target >= 0 and self._parent[p.code] == target:
                node = self.nodes[u]
                mate = node.c.pop(p.round * S + self._sibling[p.code], None)
                if mate is None:
                    node.c[p.round * S + p.code] = p
                    self.in_c += 1
                    if len(node.c) > self.max_c[u]:
                        self.max_c[u] = len(node.c)
                else:
                    self.in_c -= 1
                    self._place(u, self._combine(p, mate, t), t)
            else:
                self._place(u, p, t)
            return
        node = self.nodes[u]
        while True:
            mate = node.qkey.get(p.round * S + self._sibling[p.code])
            if mate is None:
                self._place(u, p, t)
                return
            self._unqueue(node, mate)
            p = self._combine(p, mate, t)
            if not self.cascade or p.code == 0:
                self._place(u, p, t)
                return

    # -- arrivals --------------------------------------------------------------

    def _arrivals(self, t: int) -> None:
        limit = self.round_limit
        if self.arrival.kind == "bernoulli":
            beta = self.arrival.beta
            if beta <= 0.0:
                return
            rng = self.rng
            for i in range(self.schema.K):
                if limit is not None and self._gen[i] >= limit:
                    continue
                if rng.random() < beta:
                    self._gen[i] += 1
                    self._emit(i, self._gen[i], t)
            return
        inv_beta = 1.0 / self.arrival.beta
        sd = math.sqrt(self.arrival.gamma)
        for i in range(self.schema.K):
            heap = self._drift_heap[i]
            while (limit is None or self._drift_next[i] <= limit) and (
                self._drift_next[i] * inv_beta - 8.0 * sd <= t
            ):
                seq = self._drift_next[i]
                noise = self._drift_rng[i].gauss(0.0, sd) if sd else 0.0
                heapq.heappush(heap, (max(1, math.floor(seq * inv_beta + noise + 0.5)), seq))
                self._drift_next[i] += 1
            while heap and heap[0][0] <= t:
                _, seq = heapq.heappop(heap)
                self._gen[i] += 1
                self._emit(i, seq, t)

    def _emit(self, i: int, round: int, t: int) -> None:
        k = i + 1
        apps = self.appearance[i]
        while len(apps) < round:
            apps.append(-1)
        apps[round - 1] = t
        payload = leaf_payload(k, self.operand(k, round), round)
        p = self._new_packet(round, self._leaf_code[i], payload, t)
        self.in_system += 1
        self._accept(self.sources[i], p, t)

    # -- slot ------------------------------------------------------------------

    def step(self) -> "SimState":
        t = self.slot
        self._arrivals(t)

        rng = self.rng
        adj = self.graph.adjacency
        eps = self.graph.self_loop_prob
        maxq = self.max_queue
        routes = self.routes
        sends = []
        busy = 0
        for u, node in enumerate(self.nodes):
            q = node.q
            L = len(q)
            if not L:
                continue
            if L >= 2:
                busy = 1
            if L > maxq[u]:
                maxq[u] = L
            e = eps[u]
            if e and rng.random() < e:
                v = u
            else:
                nb = adj[u]
                v = nb[int(rng.random() * len(nb))]
            p = q[int(rng.random() * L)]
            self._unqueue(node, p)
            sends.append((u, v, p))
            if routes is not None:
                routes[u, v] += 1

        for u, v, p in sends:
            if u == v:
                self._enqueue(v, p)
            else:
                self._accept(v, p, t)

        self.last_sends = [(u, v, p.uid) for u, v, p in sends]
        self.busy.append(busy)
        self.total_series.append(self.in_system)
        self.q_series.append(self.in_system - self.in_c)
        self.slot = t + 1
        return self

    # -- inspection -------------------------------------------------------------

    def packets(self):
        """Yield ``(node, where, packet)`` for every packet in the system."""
        for u, node in enumerate(self.nodes):
            for p in node.q:
                yield u, "q", p
            for p in node.c.values():
                yield u, "c", p

    def metrics(self) -> "Metrics":
        return Metrics(
            slots=self.slot,
            K=self.schema.K,
            appearance=[list(a) for a in self.appearance],
            completion=dict(self.completion),
            total_series=np.frombuffer(self.total_series, dtype=np.int64).copy()
            if len(self.total_series)
            else np.zeros(0, dtype=np.int64),
            q_series=np.frombuffer(self.q_series, dtype=np.int64).copy()
            if len(self.q_series)
            else np.zeros(0, dtype=np.int64),
            busy=np.frombuffer(bytes(self.busy), dtype=np.uint8).copy(),
            max_queue=list(self.max_queue),
            max_c=list(self.max_c),
            consumed=list(self.consumed),
            mismatches=self.mismatches,
            routes=None if self.routes is None else self.routes.copy(),
        )


def init(
    graph: Graph,
    schema: SchemaTree,
    mode: str,
    mapping: Mapping[tuple[int, int], int] | str | None,
    sources: Sequence[int] | str,
    sink: int,
    arrival: ArrivalModel,
    seed: int,
    *,
    mapping_seed: int | None = None,
    **kwargs,
) -> SimState:
    """Build a fresh state; ``mapping="random"`` and ``sources="auto"`` are resolved here."""
    if isinstance(sources, str):
        if sources != "auto":
            raise EngineError(f"unknown source policy {sources!r}")
        sources = spread_sources(graph.n, schema.K, sink)
    if mode == "flexible":
        mapping = None
        if schema.K >= 2 and not any(graph.self_loop_prob) and is_bipartite(graph):
            # two last siblings can swap sides forever once arrivals stop
            warnings.warn(
                "flexible mode on a periodic walk: a drained run may never finish",
                RuntimeWarning,
                stacklevel=2,
            )
    elif isinstance(mapping, str):
        if mapping != "random":
            raise EngineError(f"unknown mapping policy {mapping!r}")
        mapping = random_mapping(schema, graph.n, seed if mapping_seed is None else mapping_seed)
    return SimState(graph, schema, mode, sources, sink, arrival, seed, mapping, **kwargs)


def step(s: SimState) -> SimState:
    return s.step()


def run(
    s: SimState,
    slots: int | None = None,
    rounds: int | None = None,
    *,
    drain: bool = True,
    slot_cap: int = DEFAULT_SLOT_CAP,
) -> "Metrics":
    """Advance ``slots`` slots, or until rounds ``1..rounds`` have all completed.

    With ``rounds`` and ``drain`` the sources stop after their ``rounds``-th
    packet, so later rounds never compete with the measured ones.
    """
    if (slots is None) == (rounds is None):
        raise EngineError("give exactly one of slots= or rounds=")
    if slots is not None:
        if slots <= 0:
            raise EngineError("slots must be positive")
        if s.slot + slots > slot_cap:
            raise SlotCapExceeded(f"{slots} slots exceed the cap of {slot_cap}")
        for _ in range(slots):
            s.step()
        return s.metrics()
    if rounds <= 0:
        raise EngineError("rounds must be positive")
    if drain:
        s.round_limit = rounds
    s.watch_rounds = rounds
    s.watch_done = sum(1 for r in s.completion if r <= rounds)
    while s.watch_done < rounds:
        if s.slot >= slot_cap:
            raise SlotCapExceeded(f"slot cap {slot_cap} reached before {rounds} rounds")
        s.step()
    return s.metrics()


@dataclass
class Metrics:
    slots: int
    K: int
    appearance: list[list[int]]
    completion: dict[int, int]
    total_series: np.ndarray
    q_series: np.ndarray
    busy: np.ndarray
    max_queue: list[int]
    max_c: list[int]
    consumed: list[tuple[int, str, int | None]] = field(repr=False)
    mismatches: int = 0
    routes: np.ndarray | None = field(default=None, repr=False)

    def tau_app(self, ell: int) -> int | None:
        """Slot by which every source has produced its first ``ell`` packets."""
        out = 0
        for apps in self.appearance:
            if len(apps) < ell or min(apps[:ell]) < 0:
                return None
            out = max(out, max(apps[:ell]))
        return out

    def tau_f(self, ell: int) -> int | None:
        """Earliest slot by which rounds ``1..ell`` have all reached the sink."""
        try:
            return max(self.completion[r] for r in range(1, ell + 1))
        except KeyError:
            return None

    def tau_bar(self, ell: int) -> float | None:
        tf = self.tau_f(ell)
        return None if tf is None else tf / ell

    def round_latency(self, r: int) -> int | None:
        """Completion slot minus the latest appearance slot of round ``r``."""
        if r not in self.completion:
            return None
        return self.completion[r] - max(apps[r - 1] for apps in self.appearance)

    def c_hat(self, burn_in: float = 0.2) -> float:
        """Post-burn-in fraction of slots in which some queue held >= 2 packets."""
        start = int(len(self.busy) * burn_in)
        window = self.busy[start:]
        return float(window.mean()) if len(window) else 0.0

    def events_csv(self, header: Sequence[str] = ()) -> str:
        lines = [f"# {h}" for h in header]
        lines.append("round,appearance_slot_max,completion_slot")
        rounds = max((len(a) for a in self.appearance), default=0)
        done = 0
        for r in range(1, rounds + 1):
            apps = [a[r - 1] if r <= len(a) else -1 for a in self.appearance]
            app = "" if min(apps) < 0 else str(max(apps))
            comp = self.completion.get(r)
            done += comp is not None
            lines.append(f"{r},{app},{'' if comp is None else comp}")
        lines.append(
            f"# summary slots={self.slots} rounds_generated={rounds} rounds_completed={done} "
            f"mismatches={self.mismatches} c_hat={self.c_hat():.12g}"
        )
        return "\n".join(lines) + "\n"

    def audit_text(self) -> str:
        return "".join(f"{r}\t{trace}\n" for r, trace, _ in sorted(self.consumed))


def check_conservation(s: SimState) -> list[str]:
    """Leaf-cover conservation: each open round's packets partition its generated leaves."""
    covered: dict[int, list[int]] = {}
    for _, _, p in s.packets():
        expect = s.schema.subtree_leaves(s.ids[p.code])
        if p.payload.leaves != expect:
            return [f"packet {p.uid} covers {p.payload.leaves}, schema says {expect}"]
        covered.setdefault(p.round, []).extend(p.payload.leaves)
    problems = []
    rounds = set(covered)
    for i, apps in enumerate(s.appearance):
        rounds.update(r for r, slot in enumerate(apps, 1) if slot >= 0)
    for r in sorted(rounds):
        generated = sorted(
            i + 1
            for i, apps in enumerate(s.appearance)
            if r <= len(apps) and apps[r - 1] >= 0
        )
        have = sorted(covered.get(r, []))
        if r in s.completion:
            if have:
                problems.append(f"round {r} completed but still holds leaves {have}")
        elif have != generated:
            problems.append(f"round {r}: packets cover {have}, generated {generated}")
    return problems

