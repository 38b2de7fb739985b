"""Hyperfine couplings and the electron dephasing factor.

Units throughout: angular frequencies in rad/us, times in us, fields in G,
lengths in nm.

The dephasing factor is normalized so that ``phi(0) = 1``::

    phi(t) = 2 <0|rho_NV(t)|1> = <sx> - i <sy>
           = prod_k Tr[U1_k(t)^dag U0_k(t) rho_k]

with the fast electron phase ``exp[i(D + gamma_e Bz) t]`` removed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bathgen import BathConfiguration

TWO_PI = 2.0 * math.pi

MU0_OVER_4PI = 1e-7  # T m / A
HBAR = 1.054572e-34  # J s


def _dipolar_prefactor(gamma_e: float, gamma_c: float) -> float:
    """mu0 hbar gamma_e gamma_C / 4 pi in rad us^-1 nm^3.

    Gyromagnetic ratios come in rad us^-1 G^-1; 1 rad us^-1 G^-1 = 1e10 rad s^-1 T^-1.
    """
    si = MU0_OVER_4PI * HBAR * (gamma_e * 1e10) * (gamma_c * 1e10)  # rad s^-1 m^3
    return si * 1e-6 * 1e27


@dataclass(frozen=True)
class PhysicalConstants:
    D: float = TWO_PI * 2.87e3
    gamma_e: float = TWO_PI * 2.8025
    gamma_c: float = TWO_PI * 1.0704e-3
    dipolar_prefactor: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.dipolar_prefactor is None:
            object.__setattr__(self, "dipolar_prefactor", _dipolar_prefactor(self.gamma_e, self.gamma_c))
        for name in ("D", "gamma_e", "gamma_c", "dipolar_prefactor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


CONSTANTS = PhysicalConstants()


class FermiContactError(ValueError):
    """Nucleus too close to the vacancy for the point-dipole coupling."""


def hyperfine_vector(r, constants: PhysicalConstants = CONSTANTS, min_distance: float = 0.5) -> np.ndarray:
    """Row ``(A_zx, A_zy, A_zz)`` of the dipolar hyperfine tensor for a nucleus at ``r``."""
    return hyperfine_vectors(np.asarray(r, dtype=float).reshape(1, 3), constants, min_distance)[0]


def hyperfine_vectors(positions, constants: PhysicalConstants = CONSTANTS, min_distance: float = 0.5) -> np.ndarray:
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    r = np.linalg.norm(pos, axis=1)
    if np.any(r < min_distance - 1e-12):
        raise FermiContactError(
            f"nucleus at {r.min():.4g} nm lies inside {min_distance} nm; "
            "the dipolar hyperfine form does not apply there"
        )
    e = pos / r[:, None]
    a = -3.0 * e[:, 2:3] * e
    a[:, 2] += 1.0
    return constants.dipolar_prefactor / r[:, None] ** 3 * a


@dataclass(frozen=True)
class PrecessionSpec:
    """Nuclear precession in the two electron branches.

    ``omega0`` is the bare Larmor frequency (about z); ``omega1`` the full
    precession vector in the ``m_S = branch`` manifold.
    """

    omega0: float
    omega1: tuple[float, float, float]
    magnitude: float
    axis: tuple[float, float, float]
    degenerate: bool = False


def precession_spec(a_z, bz: float, constants: PhysicalConstants = CONSTANTS, branch: int = +1) -> PrecessionSpec:
    if bz < 0:
        raise ValueError("Bz must be non-negative")
    if branch not in (+1, -1):
        raise ValueError("branch must be +1 or -1")
    omega0 = constants.gamma_c * bz
    w1 = branch * np.asarray(a_z, dtype=float) + np.array([0.0, 0.0, omega0])
    mag = float(np.linalg.norm(w1))
    if mag == 0.0:
        return PrecessionSpec(omega0, (0.0, 0.0, 0.0), 0.0, (0.0, 0.0, 1.0), degenerate=True)
    return PrecessionSpec(omega0, tuple(map(float, w1)), mag, tuple(map(float, w1 / mag)))


def precession_arrays(bath: BathConfiguration, bz: float, constants: PhysicalConstants = CONSTANTS):
    """Vectorized precession data: ``(omega0, magnitudes (N,), axes (N, 3))``."""
    if bz < 0:
        raise ValueError("Bz must be non-negative")
    omega0 = constants.gamma_c * bz
    if len(bath) == 0:
        return omega0, np.zeros(0), np.zeros((0, 3))
    w1 = hyperfine_vectors(bath.positions, constants, bath.spec.exclusion_radius)
    w1[:, 2] += omega0
    mag = np.linalg.norm(w1, axis=1)
    axes = np.tile([0.0, 0.0, 1.0], (len(mag), 1))
    nz = mag > 0
    axes[nz] = w1[nz] / mag[nz, None]
    return omega0, mag, axes


def bath_precession_specs(bath: BathConfiguration, bz: float, constants: PhysicalConstants = CONSTANTS) -> list[PrecessionSpec]:
    a = hyperfine_vectors(bath.positions, constants, bath.spec.exclusion_radius) if len(bath) else np.zeros((0, 3))
    return [precession_spec(row, bz, constants) for row in a]


@dataclass(frozen=True, eq=False)
class DephasingSeries:
    times: np.ndarray
    values: np.ndarray
    backend: str = "analytic"
    bz: float = float("nan")
    group: str = "all"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        v = np.asarray(self.values, dtype=complex).ravel()
        if t.shape != v.shape:
            raise ValueError("times and values differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bz", float(self.bz))

    def __len__(self) -> int:
        return len(self.times)

    def metadata_line(self) -> str:
        return f"# backend={self.backend},Bz_G={self.bz!r},group={self.group}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.metadata_line() + "\n")
        buf.write("t_us,re_phi,im_phi\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{float(t)!r},{float(v.real)!r},{float(v.imag)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DephasingSeries":
        meta = {"backend": "unknown", "Bz_G": "nan", "group": "all"}
        rows = []
        header_seen = False
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split(","):
                    if "=" in item:
                        k, v = item.split("=", 1)
                        meta[k.strip()] = v.strip()
                continue
            if not header_seen:
                if line.replace(" ", "") != "t_us,re_phi,im_phi":
                    raise ValueError(f"unexpected series header: {line!r}")
                header_seen = True
                continue
            rows.append(next(csv.reader([line])))
        if not header_seen:
            raise ValueError("series CSV has no header")
        try:
            arr = np.array(rows, dtype=float).reshape(-1, 3)
        except ValueError as exc:
            raise ValueError(f"malformed series CSV: {exc}") from exc
        return cls(arr[:, 0], arr[:, 1] + 1j * arr[:, 2], meta["backend"], float(meta["Bz_G"]), meta["group"])


def write_series(series: DephasingSeries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(series.to_csv())
    return path


def read_series(path) -> DephasingSeries:
    return DephasingSeries.from_csv(Path(path).read_text())


def dephasing_factors(omega0: float, magnitudes, axes, polarizations, times) -> np.ndarray:
    """Per-nucleus closed-form factors, shape ``(N, len(times))``."""
    t = np.asarray(times, dtype=float)[None, :]
    m = np.asarray(magnitudes, dtype=float)[:, None]
    u = np.asarray(axes, dtype=float)
    p = np.asarray(polarizations, dtype=float)
    ux, uy, uz = (u[:, j : j + 1] for j in range(3))
    px, py, pz = (p[:, j : j + 1] for j in range(3))
    c0, s0 = np.cos(omega0 * t / 2), np.sin(omega0 * t / 2)
    c1, s1 = np.cos(m * t / 2), np.sin(m * t / 2)
    return (
        (c0 - 1j * pz * s0) * c1
        + uz * (s0 + 1j * pz * c0) * s1
        + 1j * (px * ux + py * uy) * c0 * s1
        + 1j * (px * uy - py * ux) * s0 * s1
    )


def dephasing_factor_analytic(
    bath: BathConfiguration, bz: float, times, constants: PhysicalConstants = CONSTANTS, group: str = "all"
) -> DephasingSeries:
    times = np.asarray(times, dtype=float)
    omega0, mag, axes = precession_arrays(bath, bz, constants)
    if len(bath) == 0:
        values = np.ones(len(times), dtype=complex)
    else:
        values = np.prod(dephasing_factors(omega0, mag, axes, bath.polarizations, times), axis=0)
    return DephasingSeries(times, values, "analytic", float(bz), group)


_I2 = np.eye(2, dtype=complex)
_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def spin_rotation(axis, angle: float) -> np.ndarray:
    """``exp(-i angle (axis . sigma) / 2)`` for a unit axis."""
    n_sigma = np.tensordot(np.asarray(axis, dtype=float), _PAULI, axes=1)
    return math.cos(angle / 2) * _I2 - 1j * math.sin(angle / 2) * n_sigma


def bloch_density(p) -> np.ndarray:
    return 0.5 * (_I2 + np.tensordot(np.asarray(p, dtype=float), _PAULI, axes=1))


def dephasing_factor_bruteforce(bath: BathConfiguration, bz: float, t: float, constants: PhysicalConstants = CONSTANTS) -> complex:
    """Product of ``Tr[U1^dag U0 rho]`` over explicit 2x2 matrices."""
    omega0, mag, axes = precession_arrays(bath, bz, constants)
    u0 = spin_rotation((0.0, 0.0, 1.0), omega0 * t)
    phi = 1.0 + 0.0j
    for m, u, p in zip(mag, axes, bath.polarizations):
        u1 = spin_rotation(u, m * t)
        phi *= np.trace(u1.conj().T @ u0 @ bloch_density(p))
    return complex(phi)
