"""Partitioned analog simulation of NV-centre free-induction decay in a 13C bath."""

__version__ = "0.1.0"

from .bathgen import BathConfiguration, CapacityError, LatticeSpec, default_bath, generate_lattice_sites, sample_bath
from .device import DeviceProfile, apply_crosstalk, route_remote_cu, run_group_on_device, shipped_profiles
from .physics import CONSTANTS, DephasingSeries, dephasing_factor_analytic, dephasing_factor_bruteforce
from .planner import PartitionPlan, combine_groups, execute_plan, partition_bath
from .qsim import GroupSpec, Polarization, gate_params, polarization_oracle, run_group, sample_shots
from .spectral import CherResult, cher, negativity

__all__ = [
    "BathConfiguration",
    "CONSTANTS",
    "CapacityError",
    "CherResult",
    "DephasingSeries",
    "DeviceProfile",
    "GroupSpec",
    "LatticeSpec",
    "PartitionPlan",
    "Polarization",
    "apply_crosstalk",
    "cher",
    "combine_groups",
    "default_bath",
    "dephasing_factor_analytic",
    "dephasing_factor_bruteforce",
    "execute_plan",
    "gate_params",
    "generate_lattice_sites",
    "negativity",
    "partition_bath",
    "polarization_oracle",
    "route_remote_cu",
    "run_group",
    "run_group_on_device",
    "sample_bath",
    "sample_shots",
    "shipped_profiles",
]
