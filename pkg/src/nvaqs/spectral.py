"""Spectral quasi-distribution of a pure-dephasing series and its negativity.

For a dephasing factor ``phi(t) = int w(omega) exp(-i omega t) d omega`` the
weights are recovered by the inverse transform

    w(omega) = 1/(2 pi) int phi(t) exp(i omega t) dt.

Only ``t >= 0`` is sampled; negative times are filled in with
``phi(-t) = phi(t)*``, which is what makes ``w`` real. For each nuclear factor
``Tr[M(t) rho]`` with ``M(t) = U1(t)^dag U0(t)`` and Hermitian ``rho``,
``Tr[M^dag rho] = Tr[M rho]*``, so the extension is the literal negative-time
evolution whenever ``M(-t) = M(t)^dag``. That holds when ``U0`` and ``U1``
commute, and more generally whenever ``p_x u_y - p_y u_x = 0`` (unpolarized or
z-polarized nuclei): the closed form gives
``phi(-t) - phi(t)* = 2i (p_x u_y - p_y u_x) sin(W0 t/2) sin(W1 t/2)`` per
nucleus. For transverse polarization the extension is a definition, the one
under which a real quasi-distribution exists at all. Noisy data need not
satisfy ``Im phi(0) = 0``; the origin sample is then replaced by its real
part, the average of ``phi(0)`` and ``phi(0)*``.

The quadrature is a trapezoid rule on the symmetric time grid evaluated on the
frequency grid ``omega_m = 2 pi m / (M dt)``, ``m = -M/2 .. M/2 - 1``. For
``M >= 2 (len(times) - 1)`` this grid is alias-free, so ``sum(w) d omega``
equals ``phi(0)`` and the forward transform returns the interior samples.
``M = 2 (len(times) - 1)`` is the native DFT grid; larger ``M`` interpolates.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .physics import DephasingSeries

IMAG_RESIDUE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CherResult:
    omegas: np.ndarray
    weights: np.ndarray
    negativity: float
    window: str = "none"
    normalization: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def d_omega(self) -> float:
        return float(self.omegas[1] - self.omegas[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        meta = {"window": self.window, **self.metadata}
        buf.write("# " + ",".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        buf.write("omega_rad_per_us,weight\n")
        for w, v in zip(self.omegas, self.weights):
            buf.write(f"{float(w)!r},{float(v)!r}\n")
        buf.write(f"# negativity={float(self.negativity)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CherResult":
        rows, meta = [], {}
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        for line in lines:
            if line.startswith("#"):
                for item in line[1:].split(","):
                    if "=" in item:
                        k, v = item.split("=", 1)
                        meta[k.strip()] = v.strip()
            elif line.startswith("omega"):
                continue
            else:
                rows.append([float(x) for x in line.split(",")])
        arr = np.array(rows, dtype=float).reshape(-1, 2)
        neg = float(meta.pop("negativity", "nan"))
        window = meta.pop("window", "none")
        return cls(arr[:, 0], arr[:, 1], neg, window, metadata=meta)


def write_cher(result: CherResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result.to_csv())
    return path


def read_cher(path) -> CherResult:
    return CherResult.from_csv(Path(path).read_text())


def _uniform_step(times: np.ndarray) -> float:
    if len(times) < 2:
        raise ValueError("need at least two time points")
    if abs(times[0]) > 1e-12:
        raise ValueError("the time grid must start at t = 0")
    steps = np.diff(times)
    dt = float(steps.mean())
    if np.max(np.abs(steps - dt)) > 1e-9 * max(dt, 1.0):
        raise ValueError("the time grid must be uniform")
    return dt


def symmetric_extension(series: DephasingSeries, sigma: float | None = None):
    """Times, values and trapezoid weights on ``[-T, T]`` (window applied)."""
    dt = _uniform_step(series.times)
    n = len(series.times) - 1
    j = np.arange(-n, n + 1)
    values = np.concatenate([np.conj(series.values[:0:-1]), series.values])
    # phi(0) and phi(0)* meet at the origin; noisy data may carry Im phi(0) != 0
    values[n] = values[n].real
    if sigma is not None:
        values = values * np.exp(-((j * dt) ** 2) / (2 * sigma**2))
    weights = np.full(2 * n + 1, dt)
    weights[[0, -1]] = dt / 2
    return j, dt, values, weights


def _parse_window(window, times) -> tuple[float | None, str]:
    if window is None or window == "none":
        return None, "none"
    if isinstance(window, str):
        kind, sigma = window, None
    else:
        kind, sigma = window
    if kind != "gaussian":
        raise ValueError(f"unknown window {window!r}")
    if sigma is None:
        sigma = float(times[-1]) / 3.0
    if not sigma > 0:
        raise ValueError("window sigma must be positive")
    return float(sigma), f"gaussian(sigma={sigma!r})"


def cher(
    series: DephasingSeries,
    num_freqs: int = 2048,
    window=None,
    method: str = "quadrature",
    max_frequency: float | None = None,
    omegas=None,
) -> CherResult:
    """Quasi-distribution ``w(omega)`` of ``series`` on ``num_freqs`` bins.

    ``window`` is ``None``, ``"gaussian"`` (sigma = T/3) or ``("gaussian", sigma)``.
    ``max_frequency`` (rad/us), when given, must stay below the Nyquist limit.
    ``omegas`` replaces the default grid with any uniform grid (quadrature only).
    """
    sigma, label = _parse_window(window, series.times)
    j, dt, values, wts = symmetric_extension(series, sigma)
    if omegas is not None:
        return _cher_custom(series, np.asarray(omegas, dtype=float), j * dt, wts * values, label)
    n = (len(j) - 1) // 2
    if num_freqs % 2 or num_freqs < 2 * n:
        raise ValueError(f"num_freqs must be even and at least {2 * n} for an alias-free grid")
    nyquist = math.pi / dt
    if max_frequency is not None and max_frequency >= nyquist:
        raise ValueError(f"frequency {max_frequency:.4g} rad/us exceeds the Nyquist limit {nyquist:.4g}")
    m = np.arange(-num_freqs // 2, num_freqs // 2)
    d_omega = 2 * math.pi / (num_freqs * dt)
    omegas = m * d_omega
    a = wts * values
    if method == "quadrature":
        raw = np.empty(num_freqs, dtype=complex)
        chunk = 256
        for s in range(0, num_freqs, chunk):
            phase = np.exp(2j * math.pi * np.outer(m[s : s + chunk], j) / num_freqs)
            raw[s : s + chunk] = phase @ a
        raw /= 2 * math.pi
    elif method == "fft":
        buf = np.zeros(num_freqs, dtype=complex)
        buf[j % num_freqs] = a
        raw = np.fft.fftshift(np.fft.ifft(buf)) * num_freqs / (2 * math.pi)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _result(series, omegas, raw, d_omega, label)


def _result(series, omegas, raw, d_omega, label) -> CherResult:
    scale = max(1.0, float(np.abs(raw.real).max()))
    residue = float(np.abs(raw.imag).max())
    if residue > IMAG_RESIDUE_TOL * scale:
        raise ArithmeticError(f"imaginary residue {residue:.3g} in the spectral weights")
    weights = raw.real.copy()
    neg = float(-np.sum(np.minimum(weights, 0.0)) * d_omega)
    meta = {"backend": series.backend, "Bz_G": series.bz, "group": series.group}
    return CherResult(omegas, weights, neg, label, float(np.sum(weights) * d_omega), meta)


def _cher_custom(series, omegas, t, a, label) -> CherResult:
    if omegas.ndim != 1 or len(omegas) < 2:
        raise ValueError("omegas must be a 1-D grid with at least two points")
    steps = np.diff(omegas)
    d_omega = float(steps.mean())
    if d_omega <= 0 or np.max(np.abs(steps - d_omega)) > 1e-9 * d_omega:
        raise ValueError("omegas must be uniform and increasing")
    if np.max(np.abs(omegas)) >= math.pi / (t[1] - t[0]):
        raise ValueError("omegas reach beyond the Nyquist limit of the time grid")
    raw = np.exp(1j * np.outer(omegas, t)) @ a / (2 * math.pi)
    return _result(series, omegas, raw, d_omega, label)


def negativity(result: CherResult) -> float:
    """Total negative weight ``-sum_{w<0} w d omega``."""
    return float(-np.sum(np.minimum(result.weights, 0.0)) * result.d_omega)


def forward_transform(result: CherResult, times) -> np.ndarray:
    """``phi(t) = sum w(omega) exp(-i omega t) d omega``."""
    t = np.asarray(times, dtype=float)
    return np.exp(-1j * np.outer(t, result.omegas)) @ result.weights * result.d_omega


def count_peaks(result: CherResult, rel_height: float = 0.01) -> int:
    """Local maxima above ``rel_height`` times the highest weight."""
    w = result.weights
    floor = rel_height * w.max()
    interior = (w[1:-1] > w[:-2]) & (w[1:-1] >= w[2:]) & (w[1:-1] > floor)
    return int(np.count_nonzero(interior))
