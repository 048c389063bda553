"""Potential, Dirichlet eigenvalues and Klein-Gordon frequencies.

The eigenbasis on [0, pi] is phi_k(x) = pi**-0.5 * sin(k x), k >= 1, and the
convolution potential V(x) = sum_k v_k cos(k x) only shifts the eigenvalues,
lambda_k = k**2 + v_k.  Nothing here solves an eigenproblem.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PotentialSpec:
    """Decay exponent ``s``, scale ``M`` and unit coefficients v'_k in [-1/2, 1/2].

    Only the unit coefficients are stored; the physical v_k are always derived
    so a potential can be replayed exactly from the sampled values.
    """

    s: float
    M: float
    unit_coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.s > 0:
            raise ValueError(f"decay exponent s must be positive, got {self.s}")
        if not self.M > 0:
            raise ValueError(f"scale M must be positive, got {self.M}")
        object.__setattr__(self, "unit_coeffs", tuple(float(v) for v in self.unit_coeffs))
        for k, v in enumerate(self.unit_coeffs, start=1):
            if not -0.5 <= v <= 0.5:
                raise ValueError(f"unit coefficient v'_{k} = {v} outside [-1/2, 1/2]")

    @property
    def K(self) -> int:
        return len(self.unit_coeffs)

    @classmethod
    def zero(cls, K: int, s: float = 2.0, M: float = 1.0) -> "PotentialSpec":
        return cls(s, M, (0.0,) * K)


def build_potential(spec: PotentialSpec) -> np.ndarray:
    """Return v_k = M (1+k)^(-s) v'_k for k = 1..K."""
    k = np.arange(1, spec.K + 1, dtype=float)
    return spec.M * (1.0 + k) ** (-spec.s) * np.asarray(spec.unit_coeffs, dtype=float)


def sample_potential(s: float, M: float, K: int, rng: np.random.Generator) -> PotentialSpec:
    """Draw v'_k i.i.d. uniform on [-1/2, 1/2]."""
    return PotentialSpec(s, M, tuple(rng.random(K) - 0.5))


def _check_lambda(k, lam) -> None:
    if np.any(np.asarray(lam) <= 0):
        raise ValueError(f"eigenvalue lambda_{k} = k^2 + v_k must be positive, got {lam}")


def frequency(k, c: float, v_k=0.0):
    """omega_k = c sqrt(c^2 + lambda_k).

    For lambda_k / c^2 < 1 the equivalent form c^2 + lambda/(1 + sqrt(1 + lambda/c^2))
    is used; it keeps omega_k - c^2 accurate when c is large.
    """
    if c < 1:
        raise ValueError(f"speed parameter c must be >= 1, got {c}")
    lam = np.asarray(k, dtype=float) ** 2 + np.asarray(v_k, dtype=float)
    _check_lambda(k, lam)
    x = lam / (c * c)
    stable = c * c + lam / (1.0 + np.sqrt(1.0 + x))
    direct = c * np.sqrt(c * c + lam)
    out = np.where(x < 1.0, stable, direct)
    return float(out) if out.ndim == 0 else out


def frequency_direct(k, c: float, v_k=0.0):
    lam = np.asarray(k, dtype=float) ** 2 + np.asarray(v_k, dtype=float)
    out = c * np.sqrt(c * c + lam)
    return float(out) if np.ndim(out) == 0 else out


def frequency_stable(k, c: float, v_k=0.0):
    lam = np.asarray(k, dtype=float) ** 2 + np.asarray(v_k, dtype=float)
    out = c * c + lam / (1.0 + np.sqrt(1.0 + lam / (c * c)))
    return float(out) if np.ndim(out) == 0 else out


def smoothing_multiplier(k, c: float, v_k=0.0):
    """Diagonal symbol (c / sqrt(c^2 + lambda_k))^(1/2) of the smoothing operator."""
    if c < 1:
        raise ValueError(f"speed parameter c must be >= 1, got {c}")
    lam = np.asarray(k, dtype=float) ** 2 + np.asarray(v_k, dtype=float)
    _check_lambda(k, lam)
    out = (1.0 + lam / (c * c)) ** -0.25
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FrequencyTable:
    """lambda_k, omega_k and the (q, p) <-> (xi, eta) weights for k = 1..K at fixed c."""

    c: float
    potential: PotentialSpec
    lambdas: np.ndarray = field(init=False, repr=False)
    omegas: np.ndarray = field(init=False, repr=False)
    multipliers: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.c < 1:
            raise ValueError(f"speed parameter c must be >= 1, got {self.c}")
        k = np.arange(1, self.potential.K + 1)
        v = build_potential(self.potential)
        lam = k**2 + v
        _check_lambda(k, lam)
        m = smoothing_multiplier(k, self.c, v)
        for name, arr in (
            ("lambdas", lam),
            ("omegas", frequency(k, self.c, v)),
            ("multipliers", m),
            ("weights", 1.0 / m),
        ):
            arr = np.atleast_1d(np.asarray(arr, dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def build(cls, c: float, potential: PotentialSpec | int) -> "FrequencyTable":
        if isinstance(potential, int):
            potential = PotentialSpec.zero(potential)
        return cls(float(c), potential)

    @property
    def K(self) -> int:
        return self.potential.K

    def omega(self, k: int) -> float:
        if not 1 <= k <= self.K:
            raise IndexError(f"mode {k} outside table range 1..{self.K}")
        return float(self.omegas[k - 1])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "lambda_k", "omega_k"])
            for k, (lam, om) in enumerate(zip(self.lambdas, self.omegas), start=1):
                w.writerow([k, repr(float(lam)), repr(float(om))])


def omega_gap_limit(j: int, c: float, l: int) -> float:
    """omega_{l+j} - omega_l for v = 0; tends to j*c as l grows."""
    return frequency(l + j, c) - frequency(l, c)


def relative_branch_gap(ks: Sequence[int], c: float, v: Sequence[float] | float = 0.0) -> float:
    """Largest relative difference between the two algebraic forms of omega_k."""
    a = np.asarray(frequency_direct(np.asarray(ks), c, v))
    b = np.asarray(frequency_stable(np.asarray(ks), c, v))
    return float(np.max(np.abs(a - b) / np.abs(b)))


__all__ = [
    "PotentialSpec",
    "FrequencyTable",
    "build_potential",
    "sample_potential",
    "frequency",
    "frequency_direct",
    "frequency_stable",
    "smoothing_multiplier",
    "omega_gap_limit",
    "relative_branch_gap",
]
