"""Dense state-vector simulation of the analog-simulation circuit.

Qubit ``q`` is axis ``q`` of the amplitude tensor (qubit 0 is the most
significant bit of the flat index). A group occupies ``1 + 2 * n_pairs``
qubits: the electron on 0, then nucleus ``2i + 1`` and its ancilla ``2i + 2``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .physics import DephasingSeries, PrecessionSpec, spin_rotation

MAX_QUBITS = 24

ONE_QUBIT = {"H", "X", "Y", "Z", "S", "SDG", "RZ", "U", "GU"}
TWO_QUBIT = {"CX", "CU", "SWAP", "ZZ"}
_NPARAMS = {"RZ": 1, "U": 3, "GU": 4, "CU": 4, "ZZ": 1}


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind in ONE_QUBIT:
            arity = 1
        elif self.kind in TWO_QUBIT:
            arity = 2
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != arity or min(self.qubits) < 0:
            raise ValueError(f"invalid qubit indices {self.qubits} for {self.kind}")
        if len(self.params) != _NPARAMS.get(self.kind, 0):
            raise ValueError(f"{self.kind} takes {_NPARAMS.get(self.kind, 0)} parameter(s)")
        if not all(math.isfinite(p) for p in self.params):
            raise ValueError(f"non-finite parameter in {self}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "qubits": list(self.qubits), "params": list(self.params)}


def u_matrix(theta: float, phi: float, lam: float, gamma: float = 0.0) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return cmath.exp(1j * gamma) * np.array(
        [[c, -cmath.exp(1j * lam) * s], [cmath.exp(1j * phi) * s, cmath.exp(1j * (lam + phi)) * c]]
    )


_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "S": np.diag([1, 1j]),
    "SDG": np.diag([1, -1j]),
}


def single_qubit_matrix(gate: GateOp) -> np.ndarray:
    """2x2 matrix of a one-qubit gate, or of the target action of CX/CU."""
    k = gate.kind
    if k in _FIXED:
        return _FIXED[k]
    if k == "CX":
        return _FIXED["X"]
    if k == "RZ":
        h = gate.params[0] / 2
        return np.diag([cmath.exp(-1j * h), cmath.exp(1j * h)])
    if k == "U":
        return u_matrix(*gate.params)
    if k in ("GU", "CU"):
        return u_matrix(*gate.params)
    raise ValueError(f"{k} has no single-qubit matrix")


class QuantumState:
    """Dense amplitude vector, mutated in place by :func:`apply_gate`."""

    def __init__(self, num_qubits: int, amplitudes=None):
        if not 1 <= num_qubits <= MAX_QUBITS:
            raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
        self.num_qubits = num_qubits
        if amplitudes is None:
            amplitudes = np.zeros(2**num_qubits, dtype=complex)
            amplitudes[0] = 1.0
        else:
            amplitudes = np.array(amplitudes, dtype=complex).ravel()
            if amplitudes.size != 2**num_qubits:
                raise ValueError("amplitude vector has the wrong length")
        self.amplitudes = amplitudes

    def copy(self) -> "QuantumState":
        return QuantumState(self.num_qubits, self.amplitudes.copy())

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _halves(axis: int):
    lead = (slice(None),) * axis
    return lead + (0,), lead + (1,)


def _apply_matrix(tensor: np.ndarray, axis: int, m: np.ndarray) -> None:
    i0, i1 = _halves(axis)
    if m[0, 1] == 0 and m[1, 0] == 0:
        if m[0, 0] != 1:
            tensor[i0] *= m[0, 0]
        if m[1, 1] != 1:
            tensor[i1] *= m[1, 1]
        return
    a0 = tensor[i0].copy()
    a1 = tensor[i1]
    if m[0, 0] == 0 and m[1, 1] == 0:
        tensor[i0] = m[0, 1] * a1
        tensor[i1] = m[1, 0] * a0
        return
    tensor[i0] = m[0, 0] * a0 + m[0, 1] * a1
    tensor[i1] *= m[1, 1]
    tensor[i1] += m[1, 0] * a0


def apply_gate(state: QuantumState, gate: GateOp) -> QuantumState:
    n = state.num_qubits
    if max(gate.qubits) >= n:
        raise IndexError(f"{gate.kind} on {gate.qubits} outside a {n}-qubit register")
    t = state.tensor
    k = gate.kind
    if k in ONE_QUBIT:
        _apply_matrix(t, gate.qubits[0], single_qubit_matrix(gate))
    elif k in ("CX", "CU"):
        c, q = gate.qubits
        sub = t[(slice(None),) * c + (1,)]
        _apply_matrix(sub, q - 1 if q > c else q, single_qubit_matrix(gate))
    elif k == "SWAP":
        a, b = sorted(gate.qubits)
        lead_a = (slice(None),) * a
        mid = (slice(None),) * (b - a - 1)
        i01 = lead_a + (0,) + mid + (1,)
        i10 = lead_a + (1,) + mid + (0,)
        tmp = t[i01].copy()
        t[i01] = t[i10]
        t[i10] = tmp
    elif k == "ZZ":
        a, b = sorted(gate.qubits)
        h = gate.params[0] / 2
        same, diff = cmath.exp(-1j * h), cmath.exp(1j * h)
        lead_a = (slice(None),) * a
        mid = (slice(None),) * (b - a - 1)
        for za in (0, 1):
            for zb in (0, 1):
                t[lead_a + (za,) + mid + (zb,)] *= same if za == zb else diff
    return state


def run_circuit(gates, num_qubits: int) -> QuantumState:
    state = QuantumState(num_qubits)
    for g in gates:
        apply_gate(state, g)
    return state


def circuit_unitary(gates, num_qubits: int) -> np.ndarray:
    """Dense unitary of a gate list (columns are images of basis states)."""
    dim = 2**num_qubits
    cols = []
    for j in range(dim):
        basis = np.zeros(dim, dtype=complex)
        basis[j] = 1.0
        state = QuantumState(num_qubits, basis)
        for g in gates:
            apply_gate(state, g)
        cols.append(state.amplitudes)
    return np.stack(cols, axis=1)


def dump_circuit(gates) -> str:
    return json.dumps([g.to_json() for g in gates])


def load_circuit(text: str) -> list[GateOp]:
    return [GateOp(d["kind"], tuple(d["qubits"]), tuple(d.get("params", ()))) for d in json.loads(text)]


# -- controlled-U parameters -------------------------------------------------


@dataclass(frozen=True)
class CircuitGateParams:
    theta: float
    phi: float
    lam: float
    gamma: float
    big_theta: float
    big_phi: float

    def matrix(self) -> np.ndarray:
        return u_matrix(self.theta, self.phi, self.lam, self.gamma)


def _wrap(x: float) -> float:
    """Principal value in (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


def gate_params(spec: PrecessionSpec, t: float) -> CircuitGateParams:
    """Parameters of ``e^{i gamma} U(theta, phi, lam)`` equal to ``U1(t) U0(t)^dag``.

    ``theta`` uses the atan2 form of ``2 acos sqrt(c^2 + s^2 uz^2)`` (same
    value, no precision loss near 0). When ``sin(Omega1 t / 2) < 0`` the
    off-diagonal sign is absorbed by shifting ``phi`` and ``lam`` by pi, which
    keeps ``theta`` in ``[0, pi]``. ``Phi`` is 0 on the z axis.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    ux, uy, uz = spec.axis
    half = spec.magnitude * t / 2
    c, s = math.cos(half), math.sin(half)
    w0t = spec.omega0 * t
    rho_xy = math.hypot(ux, uy)
    theta = 2.0 * math.atan2(abs(s) * rho_xy, math.sqrt(c * c + s * s * uz * uz))
    big_theta = cmath.phase(complex(c, -s * uz))
    big_phi = math.atan2(uy, ux) if rho_xy > 0 else 0.0
    phi = -math.pi / 2 - big_theta + big_phi
    lam = math.pi / 2 - w0t - big_theta - big_phi
    if s < 0:
        phi += math.pi
        lam += math.pi
    gamma = w0t / 2 + big_theta
    return CircuitGateParams(theta, _wrap(phi), _wrap(lam), _wrap(gamma), big_theta, big_phi)


def target_unitary(spec: PrecessionSpec, t: float) -> np.ndarray:
    """``U1(t) U0(t)^dag`` built directly from the precession vectors."""
    u1 = spin_rotation(spec.axis, spec.magnitude * t)
    u0 = spin_rotation((0.0, 0.0, 1.0), spec.omega0 * t)
    return u1 @ u0.conj().T


# -- polarization oracles ----------------------------------------------------

FAMILIES = ("z", "none", "ztheta", "x", "xz")
_FAMILY_DOC = "z: (0,0,1); none: (0,0,0); ztheta: (0,0,cos t); x: (1,0,0); xz: (sin t1 sin t2, 0, cos t1)"


@dataclass(frozen=True)
class Polarization:
    """A nuclear polarization realisable by one of the ancilla oracles."""

    family: str
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        want = {"z": 0, "none": 0, "x": 0, "ztheta": 1, "xz": 2}
        if self.family not in want:
            raise ValueError(f"unsupported polarization family {self.family!r}; supported: {_FAMILY_DOC}")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) != want[self.family]:
            raise ValueError(f"family {self.family!r} takes {want[self.family]} angle(s)")

    def vector(self) -> np.ndarray:
        if self.family == "z":
            return np.array([0.0, 0.0, 1.0])
        if self.family == "none":
            return np.zeros(3)
        if self.family == "x":
            return np.array([1.0, 0.0, 0.0])
        if self.family == "ztheta":
            return np.array([0.0, 0.0, math.cos(self.angles[0])])
        t1, t2 = self.angles
        return np.array([math.sin(t1) * math.sin(t2), 0.0, math.cos(t1)])

    @classmethod
    def from_vector(cls, p, tol: float = 1e-12) -> "Polarization":
        px, py, pz = (float(v) for v in p)
        if abs(py) > tol or px * px + pz * pz > 1.0 + tol:
            raise ValueError(f"no oracle prepares p = {(px, py, pz)}; supported families: {_FAMILY_DOC}")
        if abs(px) <= tol and abs(py) <= tol:
            if abs(pz - 1.0) <= tol:
                return cls("z")
            if abs(pz) <= tol:
                return cls("none")
            return cls("ztheta", (math.acos(max(-1.0, min(1.0, pz))),))
        if abs(px - 1.0) <= tol and abs(pz) <= tol:
            return cls("x")
        t1 = math.acos(max(-1.0, min(1.0, pz)))
        ratio = max(-1.0, min(1.0, px / math.sin(t1)))
        return cls("xz", (t1, math.asin(ratio)))


def polarization_oracle(pol, nucleus: int, ancilla: int) -> list[GateOp]:
    """Gates preparing the nucleus (after tracing out the ancilla) with Bloch vector ``pol``."""
    if not isinstance(pol, Polarization):
        pol = Polarization.from_vector(pol)
    f = pol.family
    if f == "z":
        return []
    if f == "none":
        return [GateOp("H", (nucleus,)), GateOp("CX", (nucleus, ancilla))]
    if f == "ztheta":
        return [GateOp("U", (nucleus,), (pol.angles[0], 0.0, 0.0)), GateOp("CX", (nucleus, ancilla))]
    if f == "x":
        return [GateOp("U", (nucleus,), (math.pi / 2, 0.0, 0.0))]
    t1, t2 = pol.angles
    return [
        GateOp("U", (nucleus,), (t1, 0.0, 0.0)),
        GateOp("U", (ancilla,), (t2, 0.0, 0.0)),
        GateOp("CX", (nucleus, ancilla)),
    ]


def reduced_density(state: QuantumState, qubit: int) -> np.ndarray:
    i0, i1 = _halves(qubit)
    a0 = state.tensor[i0].ravel()
    a1 = state.tensor[i1].ravel()
    r01 = np.vdot(a1, a0)
    return np.array([[np.vdot(a0, a0), r01], [np.conj(r01), np.vdot(a1, a1)]])


def bloch_vector(state: QuantumState, qubit: int) -> np.ndarray:
    rho = reduced_density(state, qubit)
    return np.array([2 * rho[0, 1].real, -2 * rho[0, 1].imag, (rho[0, 0] - rho[1, 1]).real])


# -- the full circuit --------------------------------------------------------


@dataclass(frozen=True)
class GroupSpec:
    """One group of nuclei simulated in a single circuit."""

    specs: tuple[PrecessionSpec, ...]
    polarizations: tuple[Polarization, ...]
    bz: float = float("nan")
    label: str = "group"
    electron: int = 0
    pairs: tuple[tuple[int, int], ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        pols = tuple(p if isinstance(p, Polarization) else Polarization.from_vector(p) for p in self.polarizations)
        object.__setattr__(self, "polarizations", pols)
        if not self.specs:
            raise ValueError("a group needs at least one nucleus")
        if len(pols) != len(self.specs):
            raise ValueError("one polarization per nucleus required")
        pairs = self.pairs
        if pairs is None:
            pairs = tuple((2 * i + 1, 2 * i + 2) for i in range(len(self.specs)))
        pairs = tuple((int(a), int(b)) for a, b in pairs)
        object.__setattr__(self, "pairs", pairs)
        if len(pairs) != len(self.specs):
            raise ValueError("one (nucleus, ancilla) pair per nucleus required")
        flat = [self.electron] + [q for pr in pairs for q in pr]
        if len(set(flat)) != len(flat) or min(flat) < 0:
            raise ValueError(f"group qubit indices must be distinct and non-negative: {flat}")

    @property
    def num_qubits(self) -> int:
        return max([self.electron] + [q for pr in self.pairs for q in pr]) + 1

    @classmethod
    def from_bath(cls, bath, indices, bz: float, constants=None, label: str = "group") -> "GroupSpec":
        from .physics import CONSTANTS, precession_spec, hyperfine_vectors

        constants = constants or CONSTANTS
        idx = np.asarray(indices, dtype=int)
        a = hyperfine_vectors(bath.positions[idx], constants, bath.spec.exclusion_radius)
        specs = tuple(precession_spec(row, bz, constants) for row in a)
        return cls(specs, tuple(bath.polarizations[idx]), float(bz), label)


def build_aqs_circuit(group: GroupSpec, t: float) -> list[GateOp]:
    """State preparation, the Rz layer and the electron-controlled U layer."""
    gates = [GateOp("H", (group.electron,))]
    for pol, (nuc, anc) in zip(group.polarizations, group.pairs):
        gates += polarization_oracle(pol, nuc, anc)
    for spec, (nuc, _) in zip(group.specs, group.pairs):
        gates.append(GateOp("RZ", (nuc,), (spec.omega0 * t,)))
    for spec, (nuc, _) in zip(group.specs, group.pairs):
        p = gate_params(spec, t)
        gates.append(GateOp("CU", (group.electron, nuc), (p.theta, p.phi, p.lam, p.gamma)))
    return gates


def sample_shots(state: QuantumState, basis: str, qubit: int, shots: int, rng: np.random.Generator) -> tuple[int, int]:
    """Measure ``qubit`` in the x or y basis ``shots`` times; returns ``(n_plus, n_minus)``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if basis == "x":
        v = _FIXED["H"]
    elif basis == "y":
        v = _FIXED["H"] @ _FIXED["SDG"]
    else:
        raise ValueError(f"basis must be 'x' or 'y', got {basis!r}")
    rho = v @ reduced_density(state, qubit) @ v.conj().T
    p_plus = min(1.0, max(0.0, float(rho[0, 0].real)))
    n_plus = int(rng.binomial(shots, p_plus))
    return n_plus, shots - n_plus


def tomograph_electron(state: QuantumState, electron: int = 0, shots: int | None = None, rng=None) -> complex:
    """``<sx> - i <sy>`` of the electron qubit, exact or estimated from shots."""
    if shots is None:
        rho = reduced_density(state, electron)
        return complex(2 * rho[0, 1])
    if shots < 2:
        raise ValueError("shot-mode tomography needs at least 2 shots")
    if rng is None:
        raise ValueError("shot mode requires an rng")
    half = shots // 2
    xp, xm = sample_shots(state, "x", electron, half, rng)
    yp, ym = sample_shots(state, "y", electron, shots - half, rng)
    return complex((xp - xm) / half, -(yp - ym) / (shots - half))


def run_group(group: GroupSpec, times, shots: int | None = None, rng=None, seed: int | None = None) -> DephasingSeries:
    """Fresh circuit per time point, then electron tomography.

    ``shots=None`` is exact mode; otherwise ``rng`` (or ``seed``) drives sampling.
    """
    n = group.num_qubits
    if n > MAX_QUBITS:
        raise ValueError(f"group needs {n} qubits, above the {MAX_QUBITS}-qubit capacity")
    if shots is not None and rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    times = np.asarray(times, dtype=float)
    values = np.empty(len(times), dtype=complex)
    for i, t in enumerate(times):
        state = run_circuit(build_aqs_circuit(group, float(t)), n)
        values[i] = tomograph_electron(state, group.electron, shots, rng)
    backend = "exact-circuit" if shots is None else f"shots({shots})"
    return DephasingSeries(times, values, backend, group.bz, group.label)
