"""Power-network data model, JSON model documents and built-in benchmark cases.

A network is the lossless, Kron-reduced swing-equation model: every generator
carries inertia, damping, terminal voltage and mechanical power, and every
edge carries a reduced susceptance ``b``.  One node may be flagged as an
infinite bus (fixed angle 0, no state).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import networkx as nx
import numpy as np

__all__ = [
    "GeneratorParams",
    "PowerNetwork",
    "NetworkError",
    "parse_network",
    "serialize_network",
    "builtin_case",
    "BUILTIN_CASES",
    "POWER_BALANCE_TOL",
]

POWER_BALANCE_TOL = 1e-9
BUILTIN_CASES = ("two_bus", "nine_bus", "new_england_39")


class NetworkError(ValueError):
    """Raised when a model document or network violates the data contract."""


@dataclass(frozen=True)
class GeneratorParams:
    """One generator (or the infinite bus) of the reduced network.

    Attributes:
        id: integer node index used by the edge list.
        inertia_m: dimensionless moment of inertia (p.u.).
        damping_d: damping / droop coefficient (p.u.).
        voltage_v: terminal voltage magnitude (p.u.).
        power_p: effective mechanical power (p.u.).
    """

    id: int
    inertia_m: float
    damping_d: float
    voltage_v: float
    power_p: float


@dataclass(frozen=True)
class PowerNetwork:
    """Immutable lossless swing-equation network.

    ``edges`` are canonical ``(k, j)`` pairs with ``k < j`` sorted ascending,
    and ``susceptance_b[i]`` belongs to ``edges[i]``.
    """

    generators: tuple[GeneratorParams, ...]
    edges: tuple[tuple[int, int], ...]
    susceptance_b: tuple[float, ...]
    infinite_bus: int | None = None
    name: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {g.id: i for i, g in enumerate(self.generators)})

    @property
    def state_generators(self) -> tuple[GeneratorParams, ...]:
        """Generators that carry a state, i.e. all but the infinite bus."""
        return tuple(g for g in self.generators if g.id != self.infinite_bus)

    @property
    def n(self) -> int:
        return len(self.state_generators)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def generator(self, gid: int) -> GeneratorParams:
        return self.generators[self._index[gid]]

    def edge_weights(self) -> np.ndarray:
        """Per-edge coupling ``B_kj V_k V_j``."""
        return np.array(
            [
                b * self.generator(k).voltage_v * self.generator(j).voltage_v
                for (k, j), b in zip(self.edges, self.susceptance_b)
            ]
        )

    def incidence(self) -> np.ndarray:
        """Edge-by-state-generator difference map ``E`` (infinite bus column dropped)."""
        col = {g.id: i for i, g in enumerate(self.state_generators)}
        e = np.zeros((self.n_edges, self.n))
        for row, (k, j) in enumerate(self.edges):
            if k in col:
                e[row, col[k]] = 1.0
            if j in col:
                e[row, col[j]] = -1.0
        return e

    def inertia(self) -> np.ndarray:
        return np.array([g.inertia_m for g in self.state_generators])

    def damping(self) -> np.ndarray:
        return np.array([g.damping_d for g in self.state_generators])

    def power(self) -> np.ndarray:
        return np.array([g.power_p for g in self.state_generators])


def _validate(net: PowerNetwork) -> None:
    ids = [g.id for g in net.generators]
    if len(set(ids)) != len(ids):
        raise NetworkError("duplicate generator id")
    if net.infinite_bus is not None and net.infinite_bus not in ids:
        raise NetworkError(f"infinite bus {net.infinite_bus} is not a listed node")
    for g in net.generators:
        if not g.voltage_v > 0:
            raise NetworkError(f"nonpositive voltage at generator {g.id}")
        if g.id == net.infinite_bus:
            continue
        if not g.inertia_m > 0:
            raise NetworkError(f"nonpositive inertia at generator {g.id}")
        if not g.damping_d > 0:
            raise NetworkError(f"nonpositive damping at generator {g.id}")
    if not net.edges:
        raise NetworkError("network has no edges")
    seen = set()
    for (k, j), b in zip(net.edges, net.susceptance_b):
        if k not in ids or j not in ids:
            raise NetworkError(f"edge ({k}, {j}) references an unknown node")
        if k >= j:
            raise NetworkError(f"edge ({k}, {j}) is not canonical (k < j)")
        if (k, j) in seen:
            raise NetworkError(f"duplicate edge ({k}, {j})")
        seen.add((k, j))
        if not b > 0:
            raise NetworkError(f"nonpositive susceptance on edge ({k}, {j})")
    if list(net.edges) != sorted(net.edges):
        raise NetworkError("edge list is not sorted")
    graph = nx.Graph()
    graph.add_nodes_from(ids)
    graph.add_edges_from(net.edges)
    if not nx.is_connected(graph):
        raise NetworkError("disconnected network graph")
    if net.infinite_bus is None:
        imbalance = sum(g.power_p for g in net.generators)
        if abs(imbalance) > POWER_BALANCE_TOL:
            raise NetworkError(f"power imbalance {imbalance:.3e} without an infinite bus")


def make_network(
    generators, edges, infinite_bus: int | None = None, name: str = ""
) -> PowerNetwork:
    """Build and validate a network from generators and ``(k, j, b)`` triples.

    Edge pairs are canonicalized to ``k < j`` and sorted.
    """
    canon = {}
    for k, j, b in edges:
        key = (min(k, j), max(k, j))
        if key in canon:
            raise NetworkError(f"duplicate edge {key}")
        canon[key] = float(b)
    keys = sorted(canon)
    net = PowerNetwork(
        generators=tuple(generators),
        edges=tuple(keys),
        susceptance_b=tuple(canon[k] for k in keys),
        infinite_bus=infinite_bus,
        name=name,
    )
    _validate(net)
    return net


_GEN_KEYS = {"id", "m", "d", "v", "p"}
_EDGE_KEYS = {"k", "j", "b"}


def _number(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetworkError(f"{what} must be a number")
    return float(value)


def network_from_dict(doc: dict, name: str = "") -> PowerNetwork:
    if not isinstance(doc, dict):
        raise NetworkError("model document must be a JSON object")
    for key in ("generators", "edges"):
        if key not in doc or not isinstance(doc[key], list):
            raise NetworkError(f"model document needs a '{key}' list")
    gens = []
    for item in doc["generators"]:
        if not isinstance(item, dict) or set(item) != _GEN_KEYS:
            raise NetworkError(f"generator entries need exactly the keys {sorted(_GEN_KEYS)}")
        if isinstance(item["id"], bool) or not isinstance(item["id"], int):
            raise NetworkError("generator id must be an integer")
        gens.append(
            GeneratorParams(
                id=item["id"],
                inertia_m=_number(item["m"], "m"),
                damping_d=_number(item["d"], "d"),
                voltage_v=_number(item["v"], "v"),
                power_p=_number(item["p"], "p"),
            )
        )
    edges = []
    for item in doc["edges"]:
        if not isinstance(item, dict) or set(item) != _EDGE_KEYS:
            raise NetworkError(f"edge entries need exactly the keys {sorted(_EDGE_KEYS)}")
        for key in ("k", "j"):
            if isinstance(item[key], bool) or not isinstance(item[key], int):
                raise NetworkError("edge endpoints must be integers")
        edges.append((item["k"], item["j"], _number(item["b"], "b")))
    inf = doc.get("infinite_bus")
    if inf is not None and (isinstance(inf, bool) or not isinstance(inf, int)):
        raise NetworkError("infinite_bus must be an integer id or null")
    return make_network(gens, edges, infinite_bus=inf, name=doc.get("name", name))


def parse_network(text: str) -> PowerNetwork:
    """Parse and validate a JSON model document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"invalid JSON: {exc}") from exc
    return network_from_dict(doc)


def network_to_dict(net: PowerNetwork) -> dict:
    doc = {
        "generators": [
            {"id": g.id, "m": g.inertia_m, "d": g.damping_d, "v": g.voltage_v, "p": g.power_p}
            for g in net.generators
        ],
        "infinite_bus": net.infinite_bus,
        "edges": [{"k": k, "j": j, "b": b} for (k, j), b in zip(net.edges, net.susceptance_b)],
    }
    if net.name:
        doc["name"] = net.name
    return doc


def serialize_network(net: PowerNetwork) -> str:
    return json.dumps(network_to_dict(net), indent=2)


def _two_bus() -> PowerNetwork:
    # single machine against an infinite bus: m=1, d=1, a=0.8, P=0.4
    gens = [
        GeneratorParams(1, 1.0, 1.0, 1.0, 0.4),
        GeneratorParams(2, 0.0, 0.0, 1.0, 0.0),
    ]
    return make_network(gens, [(1, 2, 0.8)], infinite_bus=2, name="two_bus")


def _nine_bus() -> PowerNetwork:
    volts = (1.0566, 1.0502, 1.0170)
    powers = (-0.2464, 0.2086, 0.0378)
    # |Y_kj| of the reduced admittance matrix; conductances are dropped
    gens = [GeneratorParams(i + 1, 2.0, 1.0, v, p) for i, (v, p) in enumerate(zip(volts, powers))]
    # absorb the floating-point residue of the tabulated powers
    gens = _rebalance(gens)
    return make_network(gens, [(1, 2, 0.739), (1, 3, 1.0958), (2, 3, 1.245)], name="nine_bus")


def _rebalance(gens):
    total = sum(g.power_p for g in gens)
    if total == 0.0:
        return gens
    gens = list(gens)
    last = gens[-1]
    gens[-1] = GeneratorParams(last.id, last.inertia_m, last.damping_d, last.voltage_v, last.power_p - total)
    return gens


def _new_england() -> PowerNetwork:
    text = resources.files("gridlyap.data").joinpath("new_england_39.json").read_text()
    return network_from_dict(json.loads(text), name="new_england_39")


def builtin_case(name: str) -> PowerNetwork:
    """Return one of the benchmark networks: ``two_bus``, ``nine_bus``, ``new_england_39``."""
    builders = {"two_bus": _two_bus, "nine_bus": _nine_bus, "new_england_39": _new_england}
    if name not in builders:
        raise NetworkError(f"unknown case {name!r}; expected one of {BUILTIN_CASES}")
    try:
        return builders[name]()
    except FileNotFoundError as exc:
        raise NetworkError(f"bundled data for {name} is missing") from exc
