"""Truncated phase-space points z = (xi_k, eta_k), k = 1..K.

The analytic norm counts both components of every mode,
``||z||_rho = sum_k e^{rho k} (|xi_k| + |eta_k|)``, so on a real state
(eta = conj(xi)) it equals ``2 sum_k e^{rho k} |xi_k|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral_basis import FrequencyTable


@dataclass(frozen=True)
class State:
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self) -> None:
        xi = np.asarray(self.xi, dtype=complex).copy()
        eta = np.asarray(self.eta, dtype=complex).copy()
        if xi.shape != eta.shape or xi.ndim != 1:
            raise ValueError(f"xi and eta must be 1-d arrays of equal length, got {xi.shape}, {eta.shape}")
        xi.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)

    @property
    def K(self) -> int:
        return self.xi.shape[0]

    @classmethod
    def zeros(cls, K: int) -> "State":
        return cls(np.zeros(K, complex), np.zeros(K, complex))

    @classmethod
    def real(cls, xi) -> "State":
        xi = np.asarray(xi, dtype=complex)
        return cls(xi, xi.conj())

    @classmethod
    def from_flat(cls, z: np.ndarray) -> "State":
        K = z.shape[0] // 2
        return cls(z[:K], z[K:])

    def flat(self) -> np.ndarray:
        """Concatenation (xi_1..xi_K, eta_1..eta_K)."""
        return np.concatenate([self.xi, self.eta])

    def __add__(self, other: "State") -> "State":
        return State(self.xi + other.xi, self.eta + other.eta)

    def __sub__(self, other: "State") -> "State":
        return State(self.xi - other.xi, self.eta - other.eta)

    def __mul__(self, a: complex) -> "State":
        return State(a * self.xi, a * self.eta)

    __rmul__ = __mul__


def _check_rho(rho: float) -> None:
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")


def _weights(K: int, rho: float) -> np.ndarray:
    return np.exp(rho * np.arange(1, K + 1))


def analytic_norm(z: State, rho: float) -> float:
    _check_rho(rho)
    return float(np.sum(_weights(z.K, rho) * (np.abs(z.xi) + np.abs(z.eta))))


def tail_norm(z: State, rho: float, N: int) -> float:
    """Weighted l1 mass of the modes k >= N."""
    _check_rho(rho)
    if N < 1:
        raise ValueError(f"tail cutoff N must be >= 1, got {N}")
    w = _weights(z.K, rho)[N - 1 :]
    return float(np.sum(w * (np.abs(z.xi[N - 1 :]) + np.abs(z.eta[N - 1 :]))))


def action(z: State, k: int) -> complex:
    if not 1 <= k <= z.K:
        raise IndexError(f"mode {k} outside 1..{z.K}")
    return complex(z.xi[k - 1] * z.eta[k - 1])


def actions(z: State) -> np.ndarray:
    return z.xi * z.eta


def action_distance(z1: State, z0: State, rho: float) -> float:
    """sum_k e^{rho k} | |xi_k(z1)| - |xi_k(z0)| |."""
    if z1.K != z0.K:
        raise ValueError(f"truncations differ: {z1.K} vs {z0.K}")
    return float(np.sum(_weights(z1.K, rho) * np.abs(np.abs(z1.xi) - np.abs(z0.xi))))


def reality_defect(z: State) -> float:
    """max_k |eta_k - conj(xi_k)|."""
    if z.K == 0:
        return 0.0
    return float(np.max(np.abs(z.eta - z.xi.conj())))


def is_real(z: State, tol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.max(np.abs(z.xi), initial=0.0)))
    return reality_defect(z) <= tol * scale


def to_normal_coords(q, p, freq: FrequencyTable) -> State:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != (freq.K,) or p.shape != (freq.K,):
        raise ValueError(f"q and p must have length K={freq.K}, got {q.shape} and {p.shape}")
    w = freq.weights
    xi = (q * w - 1j * p / w) / np.sqrt(2.0)
    return State(xi, xi.conj())


def from_normal_coords(z: State, freq: FrequencyTable) -> tuple[np.ndarray, np.ndarray]:
    if z.K != freq.K:
        raise ValueError(f"state has K={z.K}, table has K={freq.K}")
    w = freq.weights
    q = (z.xi + z.eta) / (np.sqrt(2.0) * w)
    p = 1j * (z.xi - z.eta) * w / np.sqrt(2.0)
    return q.real, p.real


def linear_flow(z: State, freq: FrequencyTable, t: float) -> State:
    """Exact flow of H0: xi_k -> e^{-i omega_k t} xi_k, eta_k -> e^{+i omega_k t} eta_k."""
    ph = np.exp(-1j * freq.omegas * t)
    return State(ph * z.xi, ph.conj() * z.eta)


def random_state(
    K: int,
    rng: np.random.Generator,
    rho: float,
    size: float,
    support: int | None = None,
    decay: float | None = None,
) -> State:
    """Real state with random phases, |xi_k| proportional to e^{-decay k} and ||z||_rho = size.

    Modes k >= support are left at zero.  ``decay`` defaults to 2*rho.
    """
    decay = 2.0 * rho if decay is None else decay
    support = K + 1 if support is None else support
    k = np.arange(1, K + 1)
    amp = np.exp(-decay * k) * (0.5 + rng.random(K))
    amp[k >= support] = 0.0
    xi = amp * np.exp(2j * np.pi * rng.random(K))
    z = State.real(xi)
    n = analytic_norm(z, rho)
    return z * (size / n) if n > 0 else z


def save_state(path: str | Path, z: State, c: float, rho: float) -> None:
    lines = [f"# K {z.K}", f"# c {c!r}", f"# rho {rho!r}"]
    for k in range(z.K):
        a, b = z.xi[k], z.eta[k]
        lines.append(
            f"{k + 1} {a.real:.17g} {a.imag:.17g} {b.real:.17g} {b.imag:.17g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_state(path: str | Path) -> tuple[State, dict]:
    header: dict = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, val = line[1:].split()
            header[key] = int(val) if key == "K" else float(val)
            continue
        k, a, b, c, d = line.split()
        rows.append((int(k), complex(float(a), float(b)), complex(float(c), float(d))))
    K = header.get("K", len(rows))
    xi = np.zeros(K, complex)
    eta = np.zeros(K, complex)
    for k, a, b in rows:
        xi[k - 1] = a
        eta[k - 1] = b
    return State(xi, eta), header
