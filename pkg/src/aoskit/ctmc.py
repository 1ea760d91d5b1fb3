"""Symmetric CTMC source model and its two-state absorbing-chain quantities.

Within one delivery period the source is either synchronized with the
current estimate (state ``S``) or not (state ``A``); the period ends when the
next delivery lands, which acts as absorption at rate ``lambda``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when an argument violates a model invariant."""


@dataclass(frozen=True)
class SymmetricSourceParams:
    """n-ary symmetric source: holds each state for Exp(sigma), jumps uniformly."""

    n_states: int
    sigma: float

    def __post_init__(self):
        if isinstance(self.n_states, bool) or int(self.n_states) != self.n_states:
            raise DomainError(f"n_states must be an integer, got {self.n_states!r}")
        if self.n_states < 2:
            raise DomainError(f"n_states must be >= 2, got {self.n_states}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma}")
        object.__setattr__(self, "n_states", int(self.n_states))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def rho(self) -> float:
        return rho(self)


@dataclass(frozen=True)
class AmcModel:
    ipv: np.ndarray
    tsg: np.ndarray
    embedded: np.ndarray
    fundamental: np.ndarray

    @classmethod
    def build(cls, lam: float, params: SymmetricSourceParams) -> "AmcModel":
        return cls(
            ipv=ipv(lam, params),
            tsg=tsg(lam, params),
            embedded=embedded_chain(lam, params),
            fundamental=fundamental_matrix(lam, params),
        )


def check_rate(lam, *, positive: bool = False) -> float:
    """Validate a sampling rate; ``positive`` excludes zero."""
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be finite and >= 0, got {lam}")
    if positive and lam == 0:
        raise DomainError("lambda must be > 0 here (expression diverges at 0)")
    return lam


def rho(params: SymmetricSourceParams) -> float:
    """Rate of returning to one particular state: sigma / (n - 1)."""
    return params.sigma / (params.n_states - 1)


def generator_matrix(params: SymmetricSourceParams) -> np.ndarray:
    n, s = params.n_states, params.sigma
    Q = np.full((n, n), rho(params))
    np.fill_diagonal(Q, -s)
    return Q


def ipv(lam, params: SymmetricSourceParams) -> np.ndarray:
    """Initial probabilities ``[P(S), P(A)]`` at the start of a period.

    ``P(S)`` is the chance that the source sits in the same state at both ends
    of an Exp(lambda) transmission.
    """
    lam = check_rate(lam)
    s, r = params.sigma, rho(params)
    d = lam + s + r
    return np.array([(lam + r) / d, s / d])


def tsg(lam, params: SymmetricSourceParams) -> np.ndarray:
    lam = check_rate(lam)
    s, r = params.sigma, rho(params)
    return np.array([[-s - lam, s], [r, -r - lam]])


def embedded_chain(lam, params: SymmetricSourceParams) -> np.ndarray:
    lam = check_rate(lam, positive=True)
    s, r = params.sigma, rho(params)
    return np.array([[0.0, s / (s + lam)], [r / (r + lam), 0.0]])


def fundamental_matrix(lam, params: SymmetricSourceParams) -> np.ndarray:
    """``(I - D)^-1`` by the 2x2 determinant formula."""
    D = embedded_chain(lam, params)
    a, b = D[0, 1], D[1, 0]
    det = 1.0 - a * b
    return np.array([[1.0, a], [b, 1.0]]) / det


def expected_visits_A_matrix(lam, params: SymmetricSourceParams) -> float:
    """Expected visits to ``A`` per period, ``beta F e2``, via the matrix path."""
    return float(ipv(lam, params) @ fundamental_matrix(lam, params)[:, 1])


def expected_visits_A(lam, params: SymmetricSourceParams) -> float:
    lam = check_rate(lam, positive=True)
    s, r = params.sigma, rho(params)
    return s * (2 * lam + r + s) * (r + lam) / (lam * (lam + r + s) ** 2)


def expected_delta0(lam, params: SymmetricSourceParams) -> float:
    """Mean staleness of a fresh estimate at the instant it is installed.

    It is zero when the source has not moved during the transmission and
    otherwise Exp(lambda + rho) (first return, censored by the sample age).
    """
    lam = check_rate(lam)
    s, r = params.sigma, rho(params)
    return s / ((lam + s + r) * (lam + r))


def holding_moments_A(lam, params: SymmetricSourceParams) -> tuple[float, float]:
    """First two moments of one sojourn in ``A``; the sojourn rate is lambda + rho."""
    lam = check_rate(lam)
    q = lam + rho(params)
    return 1.0 / q, 2.0 / q**2
