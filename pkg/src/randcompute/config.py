"""Run configuration: TOML file -> validated :class:`RunConfig`.

Sections and keys (all optional except ``topology`` and ``schema``)::

    [topology]    kind, n, ... (see topology.build_topology), epsilon
    [schema]      complete = K, op | ops   -- or --   expression = "..."
    [network]     mode, sources ("auto" | list), sink, mapping ("random" | table),
                  mapping_seed, cascade
    [arrival]     model ("bernoulli" | "clock_drift"), beta, gamma
    [run]         slots, rounds, seed, burn_in, slot_cap
    [analytics]   mix_eps, laziness, log_base
    [experiment]  slope_threshold, queue_cap, replicas, tolerance, horizon,
                  window_burn_in, betas, beta_low, beta_high, workers
    [bounds]      alpha, alpha_hat, b, D

A mapping table uses ``"level,index"`` keys, e.g. ``"1,0" = 3``.
Unknown keys are errors.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import tomli

from .engine import ArrivalModel, SimState, init
from .schema import SchemaError, SchemaTree, build_schema
from .topology import Graph, TopologyError, build_topology


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


DEFAULTS: dict[str, dict[str, Any]] = {
    "network": {
        "mode": "fixed",
        "sources": "auto",
        "sink": 0,
        "mapping": "random",
        "mapping_seed": 0,
        "cascade": False,
    },
    "arrival": {"model": "bernoulli", "beta": 0.05, "gamma": 0.0},
    "run": {"slots": None, "rounds": 100, "seed": 0, "burn_in": 0.2, "slot_cap": 10**8},
    "analytics": {"mix_eps": 0.25, "laziness": 0.5, "log_base": 2.0},
    "experiment": {
        "slope_threshold": 1e-3,
        "queue_cap": None,
        "replicas": 3,
        "tolerance": 0.01,
        "horizon": 100_000,
        "window_burn_in": 0.4,
        "betas": [],
        "beta_low": 0.01,
        "beta_high": 1.0,
        "workers": 1,
    },
    "bounds": {"alpha": 1.0, "alpha_hat": 1.0, "b": 1.0, "D": 1.0},
}
FREEFORM = ("topology", "schema")
SCHEMA_KEYS = {"complete", "op", "ops", "expression"}


def _merge(raw: Mapping[str, Any]) -> dict[str, Any]:
    for section in raw:
        if section not in DEFAULTS and section not in FREEFORM:
            raise ConfigError(section, "unknown section")
    for section in FREEFORM:
        if section not in raw:
            raise ConfigError(section, "missing required section")
    out: dict[str, Any] = {s: dict(raw[s]) for s in FREEFORM}
    for section, defaults in DEFAULTS.items():
        given = dict(raw.get(section, {}))
        for key in given:
            if key not in defaults:
                raise ConfigError(f"{section}.{key}", "unknown key")
        out[section] = {**copy.deepcopy(defaults), **given}
    unknown = set(out["schema"]) - SCHEMA_KEYS
    if unknown:
        raise ConfigError(f"schema.{sorted(unknown)[0]}", "unknown key")
    return out


def _mapping_from(value: Any) -> dict[tuple[int, int], int] | str:
    if isinstance(value, str):
        if value != "random":
            raise ConfigError("network.mapping", f"expected 'random' or a table, got {value!r}")
        return value
    if not isinstance(value, Mapping):
        raise ConfigError("network.mapping", "expected 'random' or a table")
    out = {}
    for key, node in value.items():
        try:
            level, index = (int(x) for x in str(key).split(","))
        except ValueError:
            raise ConfigError(f"network.mapping.{key}", "keys must look like 'level,index'") from None
        out[(level, index)] = int(node)
    return out


@dataclass
class RunConfig:
    data: dict[str, Any]
    source: str = "<dict>"
    _mapping: dict | str = field(init=False, repr=False)

    def __post_init__(self):
        self.data = _merge(self.data)
        self._mapping = _mapping_from(self.data["network"]["mapping"])
        self._validate()

    # -- accessors ---------------------------------------------------------------

    @property
    def network(self) -> dict[str, Any]:
        return self.data["network"]

    @property
    def run(self) -> dict[str, Any]:
        return self.data["run"]

    @property
    def experiment(self) -> dict[str, Any]:
        return self.data["experiment"]

    @property
    def analytics(self) -> dict[str, Any]:
        return self.data["analytics"]

    @property
    def bounds(self) -> dict[str, float]:
        return self.data["bounds"]

    @property
    def mode(self) -> str:
        return self.network["mode"]

    @property
    def sink(self) -> int:
        return int(self.network["sink"])

    @property
    def beta(self) -> float:
        return float(self.data["arrival"]["beta"])

    @property
    def seed(self) -> int:
        return int(self.run["seed"])

    @property
    def queue_cap(self) -> int:
        cap = self.experiment["queue_cap"]
        return int(cap) if cap is not None else 50 * self.schema.K

    @cached_property
    def graph(self) -> Graph:
        return build_topology(self.data["topology"])

    @cached_property
    def schema(self) -> SchemaTree:
        return build_schema(self.data["schema"])

    def arrival(self, beta: float | None = None) -> ArrivalModel:
        a = self.data["arrival"]
        return ArrivalModel(a["model"], float(a["beta"] if beta is None else beta), float(a["gamma"]))

    # -- validation -------------------------------------------------------------

    def _validate(self) -> None:
        try:
            g = self.graph
        except TopologyError as exc:
            raise ConfigError("topology", str(exc)) from None
        try:
            t = self.schema
        except SchemaError as exc:
            raise ConfigError("schema", str(exc)) from None
        net = self.network
        if net["mode"] not in ("fixed", "flexible"):
            raise ConfigError("network.mode", f"expected 'fixed' or 'flexible', got {net['mode']!r}")
        if not 0 <= int(net["sink"]) < g.n:
            raise ConfigError("network.sink", f"node {net['sink']} out of range (n={g.n})")
        src = net["sources"]
        if isinstance(src, str):
            if src != "auto":
                raise ConfigError("network.sources", "expected 'auto' or a list of nodes")
        else:
            if len(src) != t.K:
                raise ConfigError("network.sources", f"schema needs {t.K} sources, got {len(src)}")
            if len(set(src)) != len(src):
                raise ConfigError("network.sources", "sources must be distinct")
            for u in src:
                if not 0 <= int(u) < g.n:
                    raise ConfigError("network.sources", f"node {u} out of range (n={g.n})")
        if isinstance(self._mapping, dict):
            if set(self._mapping) != set(map(tuple, t.ops)):
                raise ConfigError("network.mapping", "must assign every internal schema node")
            nodes = list(self._mapping.values())
            if len(set(nodes)) != len(nodes):
                raise ConfigError("network.mapping", "two schema nodes map to the same network node")
            for u in nodes:
                if not 0 <= u < g.n:
                    raise ConfigError("network.mapping", f"node {u} out of range (n={g.n})")
        elif net["mode"] == "fixed" and len(t.ops) > g.n:
            raise ConfigError("network.mapping", "more internal schema nodes than network nodes")
        a = self.data["arrival"]
        try:
            self.arrival()
        except ValueError as exc:
            raise ConfigError("arrival", str(exc)) from None
        if not 0.0 <= float(a["beta"]) <= 1.0:
            raise ConfigError("arrival.beta", f"must be in [0, 1], got {a['beta']}")
        r = self.run
        for key in ("slots", "rounds"):
            if r[key] is not None and int(r[key]) <= 0:
                raise ConfigError(f"run.{key}", "must be positive")
        if not 0.0 <= float(r["burn_in"]) < 1.0:
            raise ConfigError("run.burn_in", "must be in [0, 1)")
        an = self.analytics
        if not 0.0 < float(an["mix_eps"]) < 1.0:
            raise ConfigError("analytics.mix_eps", "must be in (0, 1)")
        if not 0.0 <= float(an["laziness"]) < 1.0:
            raise ConfigError("analytics.laziness", "must be in [0, 1)")
        if float(an["log_base"]) <= 1.0:
            raise ConfigError("analytics.log_base", "must exceed 1")
        ex = self.experiment
        if float(ex["tolerance"]) <= 0:
            raise ConfigError("experiment.tolerance", "must be positive")
        if not 0.0 <= float(ex["window_burn_in"]) < 1.0:
            raise ConfigError("experiment.window_burn_in", "must be in [0, 1)")
        for b in ex["betas"]:
            if not 0.0 <= float(b) <= 1.0:
                raise ConfigError("experiment.betas", f"rate {b} outside [0, 1]")
        for key in ("alpha", "alpha_hat"):
            if float(self.bounds[key]) <= 0:
                raise ConfigError(f"bounds.{key}", "must be positive")

    # -- derived ----------------------------------------------------------------

    def with_overrides(self, **sections: Mapping[str, Any]) -> "RunConfig":
        data = copy.deepcopy(self.data)
        for section, values in sections.items():
            data.setdefault(section, {}).update(values)
        return RunConfig(data, self.source)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=str)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def sources(self) -> list[int] | str:
        src = self.network["sources"]
        return src if isinstance(src, str) else [int(u) for u in src]

    def mapping(self) -> dict[tuple[int, int], int] | str:
        return self._mapping

    def build_state(self, seed: int, beta: float | None = None, **kwargs) -> SimState:
        return init(
            self.graph,
            self.schema,
            self.mode,
            self.mapping(),
            self.sources(),
            self.sink,
            self.arrival(beta),
            seed,
            mapping_seed=int(self.network["mapping_seed"]),
            cascade=bool(self.network["cascade"]),
            **kwargs,
        )


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(path), str(exc)) from None
    try:
        return RunConfig(raw, str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}:{exc.path}", exc.message) from None
