"""Dirichlet posterior maintenance and exact Beta-marginal quantiles.

The belief over each arm's pmf is a Dirichlet distribution updated by unit
count increments; each single probability then has a Beta marginal whose cdf
and inverse cdf drive the confidence machinery in :mod:`aps.bounds`. Binary
arms additionally support a uniform prior truncated to a known interval,
whose posterior cdf is an affine rescaling of the Beta cdf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exceptions import DegenerateTruncationError, InputError, UnsupportedConfigError

__all__ = [
    "PriorSpec",
    "PosteriorState",
    "SampleRecord",
    "update_posterior",
    "beta_cdf",
    "beta_quantile",
    "truncated_cdf",
    "truncated_quantile",
]

_TRUNC_MASS_MIN = 1e-300


def _readonly(a: np.ndarray) -> np.ndarray:
    # Always copy: freezing a view would silently lock the caller's array.
    a = np.array(a, copy=True, order="C")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PriorSpec:
    """Per-arm Dirichlet parameters, optionally truncated (binary arms only).

    ``alphas`` has shape (K, L) with strictly positive entries. ``truncation``
    is either None or a (K, 2) array of [lower, upper] limits on the success
    probability; rows may be [0, 1] for untruncated arms. Truncation requires
    L = 2 because only there the posterior stays a (truncated) Beta.
    """

    alphas: np.ndarray
    truncation: np.ndarray | None = None

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if alphas.ndim != 2 or alphas.shape[0] < 1 or alphas.shape[1] < 2:
            raise InputError("alphas must have shape (K, L) with K >= 1, L >= 2")
        if not np.all(alphas > 0):
            raise InputError("all Dirichlet parameters must be strictly positive")
        object.__setattr__(self, "alphas", _readonly(alphas))
        if self.truncation is not None:
            trunc = np.asarray(self.truncation, dtype=np.float64)
            if alphas.shape[1] != 2:
                raise UnsupportedConfigError(
                    "truncated priors are only supported for binary support (L = 2)")
            if trunc.shape != (alphas.shape[0], 2):
                raise InputError("truncation must have shape (K, 2)")
            if not np.all((trunc[:, 0] >= 0) & (trunc[:, 0] < trunc[:, 1])
                          & (trunc[:, 1] <= 1)):
                raise InputError("truncation rows must satisfy 0 <= lo < hi <= 1")
            object.__setattr__(self, "truncation", _readonly(trunc))

    @classmethod
    def uniform(cls, num_arms: int, num_symbols: int) -> "PriorSpec":
        """The default flat prior: every Dirichlet parameter equals one."""
        return cls(np.ones((num_arms, num_symbols)))

    @property
    def num_arms(self) -> int:
        return self.alphas.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.alphas.shape[1]


@dataclass(frozen=True)
class SampleRecord:
    """One observation: arm index, outcome symbol (both 0-based), step index."""

    arm: int
    symbol: int
    step: int


@dataclass(frozen=True)
class PosteriorState:
    """Immutable belief state: prior parameters plus per-(arm, symbol) counts.

    ``alpha`` is the current parameter matrix, ``counts`` the observation
    tallies, and ``step`` the 1-based index of the next sample, so the total
    number of absorbed observations is always ``step - 1``.
    """

    prior_alpha: np.ndarray
    counts: np.ndarray
    step: int = 1
    truncation: np.ndarray | None = None
    alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        prior = np.asarray(self.prior_alpha, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if prior.shape != counts.shape:
            raise InputError("prior_alpha and counts must share a (K, L) shape")
        if np.any(counts < 0):
            raise InputError("counts must be nonnegative")
        if int(counts.sum()) != self.step - 1:
            raise InputError("step must equal 1 + total observation count")
        object.__setattr__(self, "prior_alpha", _readonly(prior))
        object.__setattr__(self, "counts", _readonly(counts))
        object.__setattr__(self, "alpha", _readonly(prior + counts))

    @classmethod
    def from_prior(cls, prior: PriorSpec) -> "PosteriorState":
        return cls(prior.alphas, np.zeros_like(prior.alphas, dtype=np.int64),
                   step=1, truncation=prior.truncation)

    @property
    def num_arms(self) -> int:
        return self.alpha.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.alpha.shape[1]

    @property
    def alpha_totals(self) -> np.ndarray:
        """Per-arm parameter sums (prior mass plus samples seen)."""
        return self.alpha.sum(axis=1)

    @property
    def arm_counts(self) -> np.ndarray:
        """Number of observations absorbed per arm."""
        return self.counts.sum(axis=1)

    def posterior_mean(self) -> np.ndarray:
        return self.alpha / self.alpha_totals[:, None]

    def empirical_pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """Observed frequencies per arm; unsampled arms fall back to uniform.

        Returns (pmf matrix, boolean mask of arms that used the fallback).
        """
        t = self.arm_counts
        starved = t == 0
        safe_t = np.where(starved, 1, t)
        pmf = self.counts / safe_t[:, None]
        pmf[starved] = 1.0 / self.num_symbols
        return pmf, starved


def update_posterior(state: PosteriorState, rec: SampleRecord) -> PosteriorState:
    """Absorb one observation, incrementing a single (arm, symbol) cell."""
    if not (0 <= rec.arm < state.num_arms):
        raise InputError(f"arm index {rec.arm} out of range [0, {state.num_arms})")
    if not (0 <= rec.symbol < state.num_symbols):
        raise InputError(
            f"symbol index {rec.symbol} out of range [0, {state.num_symbols})")
    if rec.step != state.step:
        raise InputError(f"record step {rec.step} does not match state step {state.step}")
    counts = state.counts.copy()
    counts[rec.arm, rec.symbol] += 1
    return PosteriorState(state.prior_alpha, counts, step=state.step + 1,
                          truncation=state.truncation)


def _check_ab(a: float, b: float) -> None:
    if not (a > 0 and b > 0):
        raise InputError("beta parameters must be strictly positive")


def beta_cdf(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    _check_ab(a, b)
    if not (0.0 <= x <= 1.0):
        raise InputError("x must lie in [0, 1]")
    return float(_kernels.betainc(float(a), float(b), float(x)))


def beta_quantile(q: float, a: float, b: float) -> float:
    """Inverse of :func:`beta_cdf` in its first argument, for q in (0, 1).

    Tail-stable: stays accurate in relative terms for q down to 1e-300,
    which the shrinking per-step failure budgets require.
    """
    _check_ab(a, b)
    if not (0.0 < q < 1.0):
        raise InputError("q must lie strictly inside (0, 1); callers clamp endpoints")
    return float(_kernels.beta_quantile(float(q), float(a), float(b)))


def _trunc_mass(a: float, b: float, lo: float, hi: float) -> tuple[float, float]:
    if not lo < hi:
        raise InputError("truncation requires lo < hi")
    flo = _kernels.betainc(a, b, lo)
    fhi = _kernels.betainc(a, b, hi)
    mass = fhi - flo
    if mass < _TRUNC_MASS_MIN:
        raise DegenerateTruncationError(
            f"truncation interval [{lo}, {hi}] carries mass {mass:.3e} "
            "under Beta({:g}, {:g})".format(a, b))
    return flo, mass


def truncated_cdf(x: float, a: float, b: float, lo: float, hi: float) -> float:
    """cdf of a Beta(a, b) variable conditioned on lying inside [lo, hi]."""
    _check_ab(a, b)
    flo, mass = _trunc_mass(float(a), float(b), float(lo), float(hi))
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    return float((_kernels.betainc(float(a), float(b), float(x)) - flo) / mass)


def truncated_quantile(q: float, a: float, b: float, lo: float, hi: float) -> float:
    """Inverse of :func:`truncated_cdf`: Beta quantile of the affine-mapped arg."""
    _check_ab(a, b)
    if not (0.0 < q < 1.0):
        raise InputError("q must lie strictly inside (0, 1)")
    flo, mass = _trunc_mass(float(a), float(b), float(lo), float(hi))
    target = flo + q * mass
    target = min(max(target, 1e-300), 1.0 - 1e-16)
    x = _kernels.beta_quantile(target, float(a), float(b))
    return float(min(max(x, lo), hi))
