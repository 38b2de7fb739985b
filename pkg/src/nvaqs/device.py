"""Device constraints: coupling maps, SWAP routing, ZZ crosstalk, shot sampling.

Crosstalk model: an always-on ZZ coupling of strength ``J`` (rad/us) between
listed qubit pairs acts for a dwell time ``tau`` (us) during every gate layer,
so each layer is followed by ``exp(-i J tau Z_i Z_j / 2)`` on every listed pair
whose two qubits are both in use. Spectator qubits are not simulated.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .physics import DephasingSeries
from .qsim import (
    MAX_QUBITS,
    GateOp,
    GroupSpec,
    QuantumState,
    apply_gate,
    build_aqs_circuit,
    sample_shots,
    tomograph_electron,
)

__all__ = [
    "CrosstalkTerm",
    "DeviceProfile",
    "Placement",
    "RoutedCircuit",
    "apply_crosstalk",
    "gate_layers",
    "heavy_hex_27",
    "heavy_hex_127",
    "ideal_simulator",
    "load_profile",
    "route_remote_cu",
    "run_group_on_device",
    "sample_shots",
    "save_profile",
    "shipped_profiles",
    "shortest_path",
]

DEFAULT_KICK = 0.02  # rad of ZZ phase per gate layer


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class CrosstalkTerm:
    pair: tuple[int, int]
    J: float
    tau: float = 1.0

    @property
    def angle(self) -> float:
        return self.J * self.tau


@dataclass(frozen=True)
class Placement:
    """Physical qubits for the electron and each (nucleus, ancilla) pair."""

    electron: int
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        flat = self.qubits
        if len(set(flat)) != len(flat):
            raise ValueError(f"placement reuses a physical qubit: {flat}")

    @property
    def qubits(self) -> list[int]:
        return [self.electron] + [q for pr in self.pairs for q in pr]

    def layout(self, n_pairs: int) -> list[int]:
        """Logical -> physical list for a group of ``n_pairs`` pairs."""
        if n_pairs > len(self.pairs):
            raise ValueError(f"placement has {len(self.pairs)} pairs, group needs {n_pairs}")
        return [self.electron] + [q for pr in self.pairs[:n_pairs] for q in pr]


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    coupling_map: tuple[tuple[int, int], ...] | None
    max_pairs: int
    crosstalk: tuple[CrosstalkTerm, ...] = ()
    gate_error: float = 0.0
    placements: dict = field(default_factory=dict)
    controllable: bool = True
    num_qubits: int | None = None

    def __post_init__(self):
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be >= 1")
        if not 0.0 <= self.gate_error <= 1.0:
            raise ValueError("gate_error must be a probability")
        if self.coupling_map is not None:
            edges = tuple(tuple(sorted((int(a), int(b)))) for a, b in self.coupling_map)
            object.__setattr__(self, "coupling_map", edges)
        verts = self.vertices
        for term in self.crosstalk:
            if verts is not None and not set(term.pair) <= verts:
                raise ValueError(f"crosstalk pair {term.pair} is not on the device")
        for name, pl in self.placements.items():
            if verts is not None and not set(pl.qubits) <= verts:
                raise ValueError(f"placement {name!r} uses qubits outside the coupling map")

    @property
    def vertices(self) -> set[int] | None:
        if self.coupling_map is None:
            return None
        return {q for e in self.coupling_map for q in e}

    def adjacency(self) -> dict[int, list[int]] | None:
        if self.coupling_map is None:
            return None
        adj: dict[int, list[int]] = {}
        for a, b in self.coupling_map:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        return {k: sorted(v) for k, v in adj.items()}

    def with_crosstalk(self, terms) -> "DeviceProfile":
        return DeviceProfile(
            self.name, self.coupling_map, self.max_pairs, tuple(terms), self.gate_error,
            dict(self.placements), self.controllable, self.num_qubits,
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "coupling_map": None if self.coupling_map is None else [list(e) for e in self.coupling_map],
            "max_pairs": self.max_pairs,
            "crosstalk": [{"pair": list(t.pair), "J": t.J, "tau": t.tau} for t in self.crosstalk],
            "gate_error": self.gate_error,
            "controllable": self.controllable,
            "num_qubits": self.num_qubits,
            "placements": {
                k: {"electron": p.electron, "pairs": [list(pr) for pr in p.pairs]} for k, p in self.placements.items()
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DeviceProfile":
        cmap = doc.get("coupling_map")
        return cls(
            name=doc["name"],
            coupling_map=None if cmap is None else tuple(tuple(e) for e in cmap),
            max_pairs=int(doc["max_pairs"]),
            crosstalk=tuple(
                CrosstalkTerm(tuple(c["pair"]), float(c["J"]), float(c.get("tau", 1.0))) for c in doc.get("crosstalk", [])
            ),
            gate_error=float(doc.get("gate_error", 0.0)),
            placements={
                k: Placement(int(v["electron"]), tuple(tuple(pr) for pr in v["pairs"]))
                for k, v in doc.get("placements", {}).items()
            },
            controllable=bool(doc.get("controllable", True)),
            num_qubits=doc.get("num_qubits"),
        )


def save_profile(profile: DeviceProfile, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(profile.to_json(), indent=1))
    return path


def load_profile(path) -> DeviceProfile:
    return DeviceProfile.from_json(json.loads(Path(path).read_text()))


# -- shipped topologies ------------------------------------------------------


def _falcon_edges() -> list[tuple[int, int]]:
    top = [0, 1, 4, 7, 10, 12, 15, 18, 21, 23]
    bottom = [3, 5, 8, 11, 14, 16, 19, 22, 25, 26]
    edges = list(zip(top, top[1:])) + list(zip(bottom, bottom[1:]))
    edges += [(1, 2), (2, 3), (12, 13), (13, 14), (23, 24), (24, 25)]
    edges += [(6, 7), (17, 18), (8, 9), (19, 20)]
    return sorted(tuple(sorted(e)) for e in edges)


def _eagle_edges() -> list[tuple[int, int]]:
    rows = [list(range(0, 14))]
    start = 18
    for _ in range(5):
        rows.append(list(range(start, start + 15)))
        start += 19
    rows.append(list(range(113, 127)))
    col = [dict(enumerate(r)) for r in rows]
    col[6] = {c + 1: q for c, q in enumerate(rows[6])}  # last row starts at column 1
    edges = [e for r in rows for e in zip(r, r[1:])]
    bridge = 14
    for level in range(6):
        cols = (0, 4, 8, 12) if level % 2 == 0 else (2, 6, 10, 14)
        for c in cols:
            edges += [(col[level][c], bridge), (bridge, col[level + 1][c])]
            bridge += 1
        bridge += 15
    return sorted(tuple(sorted(e)) for e in edges)


def heavy_hex_27(kick: float = DEFAULT_KICK) -> DeviceProfile:
    """27-qubit heavy-hex device with the electron on qubit 14.

    Qubit 14 has three neighbours: 11 (left), 16 (right) and the bridge qubit
    13 (top). The default crosstalk sits on the bridge column: the 13-14 edge
    and the 12-14 pair coupled through the bridge. Only placements that launch
    qubits 12 and 13 are exposed to it.
    """
    placements = {
        "default": Placement(14, ((11, 8), (16, 19), (13, 12))),
        "left_right": Placement(14, ((11, 8), (16, 19))),
        "top_left": Placement(14, ((13, 12), (11, 8))),
        "top_right": Placement(14, ((13, 12), (16, 19))),
    }
    crosstalk = (CrosstalkTerm((13, 14), kick), CrosstalkTerm((12, 14), kick))
    return DeviceProfile("heavy_hex_27", tuple(_falcon_edges()), 3, crosstalk, 0.0, placements, True, 27)


def heavy_hex_127(kick: float = DEFAULT_KICK) -> DeviceProfile:
    """127-qubit heavy-hex device with the electron on qubit 62.

    ``six_pair`` puts three nuclei three hops from the electron, so each of
    their controlled-U gates is routed through four SWAPs.
    """
    placements = {
        "default": Placement(62, ((61, 60), (63, 64), (72, 81))),
        "six_pair": Placement(62, ((61, 60), (63, 64), (72, 81), (59, 58), (65, 66), (80, 79))),
    }
    crosstalk = (CrosstalkTerm((62, 72), kick), CrosstalkTerm((62, 81), kick))
    return DeviceProfile("heavy_hex_127", tuple(_eagle_edges()), 3, crosstalk, 0.0, placements, True, 127)


def ideal_simulator() -> DeviceProfile:
    return DeviceProfile("ideal_simulator", None, 10, (), 0.0, {}, True, 32)


def shipped_profiles() -> dict[str, DeviceProfile]:
    return {p.name: p for p in (heavy_hex_27(), heavy_hex_127(), ideal_simulator())}


# -- routing -----------------------------------------------------------------


def shortest_path(adjacency: dict[int, list[int]], start: int, goal: int) -> list[int]:
    """BFS path, neighbours visited in ascending index order."""
    if start == goal:
        return [start]
    parent = {start: None}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adjacency.get(v, ()):
            if w in parent:
                continue
            parent[w] = v
            if w == goal:
                path = [w]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1]
            queue.append(w)
    raise RoutingError(f"qubits {start} and {goal} are disconnected")


def gate_layers(gates) -> list[list[GateOp]]:
    """ASAP layering: each gate goes one layer after the last gate on its qubits."""
    layers: list[list[GateOp]] = []
    level: dict[int, int] = {}
    for g in gates:
        k = max((level.get(q, -1) for q in g.qubits), default=-1) + 1
        if k == len(layers):
            layers.append([])
        layers[k].append(g)
        for q in g.qubits:
            level[q] = k
    return layers


@dataclass(frozen=True)
class RoutedCircuit:
    gates: tuple[GateOp, ...]
    swaps_inserted: int
    cnot_count: int
    depth: int


def _count_cnots(gates) -> int:
    return sum(3 if g.kind == "SWAP" else 2 if g.kind == "CU" else 1 if g.kind == "CX" else 0 for g in gates)


def route_remote_cu(circuit, coupling_map, placement=None) -> RoutedCircuit:
    """Map a logical circuit onto physical qubits, inserting SWAPs for remote two-qubit gates.

    ``placement`` maps logical index -> physical qubit (list, dict or
    :class:`Placement`); ``None`` means identity. For a gate at distance
    ``d`` the control walks ``d - 1`` SWAPs toward the target along a BFS path,
    the gate acts on adjacent qubits, and the SWAPs are undone.
    """
    if isinstance(placement, Placement):
        placement = placement.qubits
    if placement is None:
        phys = lambda q: q  # noqa: E731
    elif isinstance(placement, dict):
        phys = placement.__getitem__
    else:
        mapping = list(placement)
        phys = mapping.__getitem__

    if coupling_map is None:
        adj = None
    elif isinstance(coupling_map, dict):
        adj = coupling_map
    else:
        adj = {}
        for a, b in coupling_map:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        adj = {k: sorted(v) for k, v in adj.items()}

    out: list[GateOp] = []
    swaps = 0
    for g in circuit:
        qs = tuple(phys(q) for q in g.qubits)
        if adj is not None:
            for q in qs:
                if q not in adj:
                    raise RoutingError(f"physical qubit {q} is not on the coupling map")
        if len(qs) == 1 or adj is None:
            out.append(GateOp(g.kind, qs, g.params))
            continue
        c, t = qs
        path = shortest_path(adj, c, t)
        walk = [GateOp("SWAP", (path[i], path[i + 1])) for i in range(len(path) - 2)]
        out += walk
        out.append(GateOp(g.kind, (path[-2], t), g.params))
        out += walk[::-1]
        swaps += 2 * len(walk)
    return RoutedCircuit(tuple(out), swaps, _count_cnots(out), len(gate_layers(out)))


def apply_crosstalk(circuit, profile: DeviceProfile, active=None) -> list[GateOp]:
    """Insert the per-layer ZZ kick of every crosstalk pair inside ``active``.

    ``active`` defaults to the qubits the circuit touches.
    """
    gates = list(circuit)
    active = set(active) if active is not None else {q for g in gates for q in g.qubits}
    terms = [t for t in profile.crosstalk if t.angle != 0.0 and set(t.pair) <= active]
    if not terms:
        return gates
    out: list[GateOp] = []
    for layer in gate_layers(gates):
        out += layer
        out += [GateOp("ZZ", t.pair, (t.angle,)) for t in terms]
    return out


def _depolarize(gates, p: float, rng) -> list[GateOp]:
    """One Pauli-twirl trajectory: after each entangling gate, a random Pauli w.p. ``p`` per qubit."""
    out = []
    for g in gates:
        out.append(g)
        if g.kind in ("CX", "CU", "SWAP"):
            for q in g.qubits:
                if rng.random() < p:
                    out.append(GateOp(("X", "Y", "Z")[rng.integers(3)], (q,)))
    return out


def device_circuit(group: GroupSpec, t: float, profile: DeviceProfile, placement: Placement | None):
    """Physical gate list for one time point, plus the compacted register order."""
    logical = build_aqs_circuit(group, t)
    n_pairs = len(group.pairs)
    if placement is None or profile.coupling_map is None:
        layout = list(range(group.num_qubits))
        routed = RoutedCircuit(tuple(logical), 0, _count_cnots(logical), len(gate_layers(logical)))
    else:
        if group.electron != 0 or list(group.pairs) != [(2 * i + 1, 2 * i + 2) for i in range(n_pairs)]:
            raise ValueError("device runs expect the standard logical qubit order")
        layout = placement.layout(n_pairs)
        routed = route_remote_cu(logical, profile.coupling_map, layout)
    gates = apply_crosstalk(routed.gates, profile)
    extra = sorted({q for g in gates for q in g.qubits} - set(layout))
    register = layout + extra
    return gates, register, routed


def run_group_on_device(
    group: GroupSpec,
    profile: DeviceProfile,
    placement: str | Placement | None,
    times,
    shots: int | None = None,
    rng=None,
    seed: int | None = None,
    trajectories: int = 32,
) -> DephasingSeries:
    """Run a group through routing, crosstalk and optional gate errors.

    Depolarizing errors are averaged over ``trajectories`` Pauli trajectories
    when ``profile.gate_error > 0``; otherwise one deterministic pass is made.
    """
    if isinstance(placement, str):
        placement = profile.placements[placement]
    if len(group.pairs) > profile.max_pairs and (placement is None or len(group.pairs) > len(placement.pairs)):
        raise ValueError(f"group of {len(group.pairs)} pairs exceeds {profile.name} capacity")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    times = np.asarray(times, dtype=float)
    values = np.empty(len(times), dtype=complex)
    n_traj = trajectories if profile.gate_error > 0 else 1
    for i, t in enumerate(times):
        gates, register, _ = device_circuit(group, float(t), profile, placement)
        if len(register) > MAX_QUBITS:
            raise ValueError(f"routed circuit needs {len(register)} qubits")
        index = {q: k for k, q in enumerate(register)}
        local = [GateOp(g.kind, tuple(index[q] for q in g.qubits), g.params) for g in gates]
        acc = 0.0 + 0.0j
        for _ in range(n_traj):
            seq = _depolarize(local, profile.gate_error, rng) if profile.gate_error > 0 else local
            state = QuantumState(len(register))
            for g in seq:
                apply_gate(state, g)
            acc += tomograph_electron(state, 0, shots, rng)
        values[i] = acc / n_traj
    backend = f"noisy:{profile.name}" + ("" if shots is None else f":shots({shots})")
    return DephasingSeries(times, values, backend, group.bz, group.label)
