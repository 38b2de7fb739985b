"""Partition a bath into backend-sized groups and recombine their results.

Nuclei do not interact with each other, so the dephasing factor of the whole
bath is the pointwise product of the factors of any partition of it.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bathgen import BathConfiguration
from .device import DeviceProfile, Placement, run_group_on_device
from .physics import DephasingSeries, dephasing_factor_analytic
from .qsim import GroupSpec, run_group

log = logging.getLogger(__name__)

BACKENDS = ("analytic", "exact-circuit", "shots", "noisy")


class GridMismatchError(ValueError):
    """Series to be combined do not share one time grid."""


@dataclass(frozen=True)
class PlanGroup:
    nuclei: tuple[int, ...]
    profile: str
    controllable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(int(k) for k in self.nuclei))
        if not self.nuclei:
            raise ValueError("empty group")

    @property
    def qubits(self) -> int:
        return 1 + 2 * len(self.nuclei)

    @property
    def label(self) -> str:
        return f"{self.profile}[{self.nuclei[0]}-{self.nuclei[-1]}]"


@dataclass(frozen=True)
class PartitionPlan:
    groups: tuple[PlanGroup, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        seen: set[int] = set()
        for g in self.groups:
            overlap = seen.intersection(g.nuclei)
            if overlap or len(set(g.nuclei)) != len(g.nuclei):
                raise ValueError(f"nuclei {sorted(overlap) or g.nuclei} appear in more than one group")
            seen.update(g.nuclei)

    @property
    def nuclei(self) -> list[int]:
        return sorted(k for g in self.groups for k in g.nuclei)

    def sizes(self, profile: str | None = None) -> list[int]:
        return [len(g.nuclei) for g in self.groups if profile is None or g.profile == profile]

    def validate(self, bath: BathConfiguration, profiles: dict[str, DeviceProfile]) -> None:
        """Check cover, capacity and polarization controllability against ``bath``."""
        if set(self.nuclei) != set(range(len(bath))):
            missing = sorted(set(range(len(bath))) - set(self.nuclei))
            extra = sorted(set(self.nuclei) - set(range(len(bath))))
            raise ValueError(f"plan does not cover the bath (missing {missing[:5]}, unknown {extra[:5]})")
        polarized = np.linalg.norm(bath.polarizations, axis=1) > 0
        for g in self.groups:
            if g.profile not in profiles:
                raise ValueError(f"group {g.label} names unknown profile {g.profile!r}")
            prof = profiles[g.profile]
            if len(g.nuclei) > prof.max_pairs:
                raise ValueError(f"group {g.label} has {len(g.nuclei)} nuclei, above max_pairs={prof.max_pairs}")
            if not (g.controllable and prof.controllable) and polarized[list(g.nuclei)].any():
                raise ValueError(f"group {g.label} holds polarized nuclei on an uncontrollable profile")

    def to_json(self) -> dict:
        return {
            "groups": [
                {"nuclei": list(g.nuclei), "profile": g.profile, "qubits": g.qubits, "controllable": g.controllable}
                for g in self.groups
            ]
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PartitionPlan":
        groups = []
        for item in doc["groups"]:
            g = PlanGroup(tuple(item["nuclei"]), item["profile"], bool(item.get("controllable", True)))
            if "qubits" in item and int(item["qubits"]) != g.qubits:
                raise ValueError(f"group {g.label}: qubits={item['qubits']} but 1 + 2*{len(g.nuclei)} = {g.qubits}")
            groups.append(g)
        return cls(tuple(groups))


def save_plan(plan: PartitionPlan, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(plan.to_json(), indent=1))
    return path


def load_plan(path) -> PartitionPlan:
    return PartitionPlan.from_json(json.loads(Path(path).read_text()))


def _pack(indices, size: int, profile: DeviceProfile) -> list[PlanGroup]:
    return [PlanGroup(tuple(indices[i : i + size]), profile.name, profile.controllable) for i in range(0, len(indices), size)]


def partition_bath(bath: BathConfiguration, device_profile: DeviceProfile, simulator_profile: DeviceProfile) -> PartitionPlan:
    """Greedy packing in distance order: inner nuclei on the device, the rest on the simulator."""
    for prof in (device_profile, simulator_profile):
        if prof.max_pairs < 1:
            raise ValueError(f"profile {prof.name!r} has max_pairs < 1")
    inner = bath.distances < bath.spec.polarization_radius
    device_idx = [int(k) for k in np.flatnonzero(inner)]
    rest = [int(k) for k in np.flatnonzero(~inner)]
    plan = PartitionPlan(
        tuple(_pack(device_idx, device_profile.max_pairs, device_profile) + _pack(rest, simulator_profile.max_pairs, simulator_profile))
    )
    plan.validate(bath, {device_profile.name: device_profile, simulator_profile.name: simulator_profile})
    return plan


def random_partition(n: int, max_size: int, rng: np.random.Generator, profile: str = "ideal_simulator") -> PartitionPlan:
    """Shuffle ``range(n)`` and cut it into groups of random size in ``[1, max_size]``."""
    order = rng.permutation(n)
    groups, i = [], 0
    while i < n:
        size = int(rng.integers(1, max_size + 1))
        groups.append(PlanGroup(tuple(sorted(int(k) for k in order[i : i + size])), profile))
        i += size
    return PartitionPlan(tuple(groups))


def combine_groups(series_list) -> DephasingSeries:
    """Pointwise product of group series that share one exact time grid."""
    series_list = list(series_list)
    if not series_list:
        raise ValueError("nothing to combine")
    if len(series_list) == 1:
        return series_list[0]
    times = series_list[0].times
    values = np.ones(len(times), dtype=complex)
    for s in series_list:
        if s.times.shape != times.shape or not np.array_equal(s.times, times):
            raise GridMismatchError(f"group {s.group!r} uses a different time grid; refusing to resample")
        values *= s.values
    backends = sorted({s.backend for s in series_list})
    groups = "+".join(s.group for s in series_list)
    return DephasingSeries(times, values, "|".join(backends), series_list[0].bz, groups)


# -- execution ---------------------------------------------------------------

_SHOTS = re.compile(r"^shots(?:\((\d+)\))?$")


def parse_backend(text: str, shots: int | None = None) -> tuple[str, int | None]:
    """``analytic``, ``exact-circuit``, ``noisy``, ``shots`` or ``shots(n)`` -> (kind, shots)."""
    text = text.strip()
    m = _SHOTS.match(text)
    if m:
        n = int(m.group(1)) if m.group(1) else shots
        if n is None or n < 2:
            raise ValueError("shot mode needs shots >= 2")
        return "shots", n
    if text not in BACKENDS:
        raise ValueError(f"unknown backend {text!r}; choose from analytic, exact-circuit, shots(n), noisy")
    if text == "noisy":
        return text, shots
    return text, None


@dataclass(frozen=True)
class GroupTask:
    bath: BathConfiguration
    group: PlanGroup
    bz: float
    times: np.ndarray
    backend: str
    shots: int | None
    profile: DeviceProfile
    placement: str | Placement | None
    seed: int


def run_task(task: GroupTask) -> DephasingSeries:
    idx = list(task.group.nuclei)
    label = task.group.label
    if task.backend == "analytic":
        return dephasing_factor_analytic(task.bath.subset(idx), task.bz, task.times, group=label)
    spec = GroupSpec.from_bath(task.bath, idx, task.bz, label=label)
    if task.backend == "exact-circuit":
        return run_group(spec, task.times)
    if task.backend == "shots":
        return run_group(spec, task.times, shots=task.shots, seed=task.seed)
    placement = task.placement if task.profile.coupling_map is not None else None
    return run_group_on_device(spec, task.profile, placement, task.times, shots=task.shots, seed=task.seed)


def group_tasks(
    bath: BathConfiguration,
    plan: PartitionPlan,
    bz: float,
    times,
    profiles: dict[str, DeviceProfile],
    backends: dict[str, str],
    shots: int | None = None,
    placement: str | Placement | None = "default",
    seed: int = 0,
) -> list[GroupTask]:
    """One task per group; each gets its own child seed so results ignore scheduling."""
    times = np.asarray(times, dtype=float)
    children = np.random.SeedSequence(seed).spawn(len(plan.groups))
    tasks = []
    for g, child in zip(plan.groups, children):
        kind, n_shots = parse_backend(backends.get(g.profile, backends.get("*", "analytic")), shots)
        tasks.append(
            GroupTask(bath, g, float(bz), times, kind, n_shots, profiles[g.profile], placement, int(child.generate_state(1)[0]))
        )
    return tasks


def execute_plan(
    bath: BathConfiguration,
    plan: PartitionPlan,
    bz: float,
    times,
    profiles: dict[str, DeviceProfile],
    backends: dict[str, str],
    shots: int | None = None,
    placement: str | Placement | None = "default",
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[DephasingSeries], DephasingSeries]:
    """Run every group and reduce. Any group failure propagates; no partial product is returned."""
    plan.validate(bath, profiles)
    tasks = group_tasks(bath, plan, bz, times, profiles, backends, shots, placement, seed)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]
    log.info("ran %d groups at Bz=%s G", len(results), bz)
    return results, combine_groups(results)
