"""Closed-form long-run averages of AoS, AoI and the mismatch fraction."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .ctmc import (
    DomainError,
    SymmetricSourceParams,
    check_rate,
    expected_delta0,
    expected_visits_A,
    holding_moments_A,
)


@dataclass(frozen=True)
class SourceBank:
    """Ordered collection of K independent sources sharing one sampling budget."""

    sources: tuple[SymmetricSourceParams, ...]

    def __post_init__(self):
        srcs = tuple(self.sources)
        if not srcs:
            raise DomainError("a source bank needs at least one source")
        for s in srcs:
            if not isinstance(s, SymmetricSourceParams):
                raise DomainError(f"not a SymmetricSourceParams: {s!r}")
        object.__setattr__(self, "sources", srcs)

    @classmethod
    def from_lists(cls, n: Sequence[int], sigma: Sequence[float]) -> "SourceBank":
        if len(n) != len(sigma):
            raise DomainError(f"n and sigma lengths differ ({len(n)} vs {len(sigma)})")
        return cls(tuple(SymmetricSourceParams(k, s) for k, s in zip(n, sigma)))

    def __len__(self):
        return len(self.sources)

    @property
    def n(self) -> np.ndarray:
        return np.array([s.n_states for s in self.sources], dtype=float)

    @property
    def sigma(self) -> np.ndarray:
        return np.array([s.sigma for s in self.sources])

    @property
    def rho(self) -> np.ndarray:
        return self.sigma / (self.n - 1)


def check_allocation(lambdas, K: int, *, feas_tol: float | None = None) -> np.ndarray:
    """Validate an allocation vector (entries in [0, 1]); optionally enforce the budget."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (K,):
        raise DomainError(f"allocation must have length {K}, got shape {lam.shape}")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0) or np.any(lam > 1):
        raise DomainError(f"allocation entries must lie in [0, 1]: {lam}")
    if feas_tol is not None and lam.sum() > 1 + feas_tol:
        raise DomainError(f"allocation exceeds the unit budget: sum={lam.sum()}")
    return lam


def _aos_formula(lam, sigma, r):
    return (2 * lam + r) / (lam + r) ** 2 - (2 * lam + r + sigma) / (lam + r + sigma) ** 2


def aos_mean(lam, params: SymmetricSourceParams) -> float:
    """Long-run mean Age of Staleness at sampling rate ``lam``.

    Finite at ``lam = 0``, where it is the value for an estimate that is never
    refreshed: ``1/rho - 1/(rho + sigma)``.
    """
    lam = check_rate(lam)
    return float(_aos_formula(lam, params.sigma, params.rho))


def aos_mean_via_amc(lam, params: SymmetricSourceParams) -> float:
    """Same quantity built from the per-period renewal cost and Wald's identity.

    ``lam * (E[M] E[H_A^2] / 2 + E[Delta0] E[H_A])``
    """
    lam = check_rate(lam, positive=True)
    m1, m2 = holding_moments_A(lam, params)
    return lam * (0.5 * expected_visits_A(lam, params) * m2 + expected_delta0(lam, params) * m1)


def aoi_mean(lam) -> float:
    lam = check_rate(lam, positive=True)
    return 2.0 / lam


def eq22_fraction(lam, params: SymmetricSourceParams) -> float:
    """``sigma (2 lam + rho + sigma) / (lam + rho + sigma)^2``.

    Literature labels this the average binary freshness, but it equals the
    long-run fraction of time the estimate is WRONG: it is ``(n-1)/n`` at
    ``lam = 0`` and vanishes as ``lam`` grows. The simulator confirms
    ``mean_bf = 1 - eq22_fraction``.
    """
    lam = check_rate(lam)
    s, r = params.sigma, params.rho
    return s * (2 * lam + r + s) / (lam + r + s) ** 2


def bf_mean(lam, params: SymmetricSourceParams) -> float:
    """Long-run fraction of time the estimate is correct."""
    return 1.0 - eq22_fraction(lam, params)


def aos_vector(lambdas, bank: SourceBank) -> np.ndarray:
    """Per-source mean AoS for one allocation or a stack of allocations (..., K)."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape[-1] != len(bank):
        raise DomainError(f"allocation length {lam.shape[-1]} != K={len(bank)}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DomainError("sampling rates must be finite and >= 0")
    return _aos_formula(lam, bank.sigma, bank.rho)


def sum_objective(lambdas, bank: SourceBank):
    """Sum of per-source mean AoS; vectorized over leading axes."""
    out = aos_vector(lambdas, bank).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sum_mismatch(lambdas, bank: SourceBank):
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape[-1] != len(bank):
        raise DomainError(f"allocation length {lam.shape[-1]} != K={len(bank)}")
    s, r = bank.sigma, bank.rho
    out = (s * (2 * lam + r + s) / (lam + r + s) ** 2).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out
