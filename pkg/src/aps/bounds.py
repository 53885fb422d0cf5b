"""Shrinking confidence intervals and variance upper confidence bounds.

Each (arm, symbol) probability gets a two-sided Beta-posterior interval at a
per-step failure budget that decays like 1/n; intervals are intersected with
their predecessors so they never grow. The per-arm variance bound is the
optimum of a box-constrained quadratic program over the simplex, solved
exactly by water-filling. Non-Bayesian baseline bounds are provided for
comparison runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import InfeasibleBoxError, InputError, UnsupportedConfigError
from .posterior import PosteriorState, truncated_quantile

__all__ = [
    "DeltaSchedule",
    "IntervalSet",
    "VarianceBound",
    "delta_at",
    "update_intervals",
    "variance_ucb",
    "baseline_ucb",
    "BASELINE_KINDS",
]

_TAIL_MIN = 1e-300

BASELINE_KINDS = ("hoeffding", "empirical-bernstein")


@dataclass(frozen=True)
class DeltaSchedule:
    """Per-step failure budgets delta_n = delta / (K * L * n * (1 + ln N)).

    The total budget is delta = eta * N^(-5/2). Since the harmonic sum H_N is
    at most 1 + ln N, the per-step budgets sum to at most delta over the
    horizon, which is what the union bound over steps needs.
    """

    num_arms: int
    num_symbols: int
    horizon: int
    eta: float

    def __post_init__(self):
        if self.num_arms < 1 or self.num_symbols < 2:
            raise InputError("need K >= 1 arms and L >= 2 symbols")
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        if not (0.0 < self.eta <= 1.0):
            raise InputError("eta must lie in (0, 1]")

    @property
    def delta(self) -> float:
        return self.eta * self.horizon ** -2.5

    @property
    def log_term(self) -> float:
        return 1.0 + math.log(self.horizon)

    def delta_at(self, n: int) -> float:
        """Per-step failure budget at step n (1-based)."""
        if not (1 <= n <= self.horizon):
            raise InputError(f"step {n} outside [1, {self.horizon}]")
        return self.delta / (self.num_arms * self.num_symbols * n * self.log_term)


def delta_at(schedule: DeltaSchedule, n: int) -> float:
    return schedule.delta_at(n)


@dataclass
class IntervalSet:
    """Running per-(arm, symbol) intervals after cumulative intersection.

    ``empty_intersections`` counts refreshes where the fresh quantile interval
    missed the stored one entirely; the stored pair is kept in that case
    (possible only off the high-probability coverage event, so it is a
    diagnostic rather than an error).
    """

    lower: np.ndarray
    upper: np.ndarray
    empty_intersections: int = 0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 2:
            raise InputError("lower/upper must share a (K, L) shape")
        if np.any(self.lower > self.upper):
            raise InputError("need lower <= upper everywhere")
        if np.any(self.lower < 0) or np.any(self.upper > 1):
            raise InputError("intervals must lie inside [0, 1]")

    @classmethod
    def full(cls, num_arms: int, num_symbols: int) -> "IntervalSet":
        return cls(np.zeros((num_arms, num_symbols)),
                   np.ones((num_arms, num_symbols)))

    @property
    def num_arms(self) -> int:
        return self.lower.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.lower.shape[1]

    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, p: np.ndarray) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all((p >= self.lower) & (p <= self.upper)))

    def copy(self) -> "IntervalSet":
        return IntervalSet(self.lower.copy(), self.upper.copy(),
                           self.empty_intersections)


def update_intervals(prev: IntervalSet, state: PosteriorState,
                     schedule: DeltaSchedule,
                     step_override: int | None = None) -> IntervalSet:
    """Fresh two-sided intervals at the state's step, intersected with ``prev``.

    Endpoints come from the Beta (or truncated-Beta) posterior inverse cdf at
    tail mass delta_n / 2 each side. The upper endpoint is computed through
    the swapped lower tail so the tiny tail mass never rides on a ``1 - q``
    float round trip. ``step_override`` substitutes for the state's own step
    when replaying from a snapshot whose counts live inside the parameters.
    """
    if (state.num_arms, state.num_symbols) != (prev.num_arms, prev.num_symbols):
        raise InputError("posterior state and interval set disagree on (K, L)")
    n = min(step_override if step_override is not None else state.step,
            schedule.horizon)
    tail = max(schedule.delta_at(n) / 2.0, _TAIL_MIN)
    K, L = prev.num_arms, prev.num_symbols
    lower = prev.lower.copy()
    upper = prev.upper.copy()
    empties = prev.empty_intersections
    totals = state.alpha_totals
    for k in range(K):
        trunc = None if state.truncation is None else state.truncation[k]
        for l in range(L):
            a = state.alpha[k, l]
            b = totals[k] - a
            if trunc is not None and not (trunc[0] == 0.0 and trunc[1] == 1.0):
                # Symbol 1 is the truncated success probability; symbol 0 is
                # its complement, so its truncation interval flips.
                if l == 1:
                    tlo, thi = trunc[0], trunc[1]
                else:
                    tlo, thi = 1.0 - trunc[1], 1.0 - trunc[0]
                rlo = truncated_quantile(tail, a, b, tlo, thi)
                rhi = truncated_quantile(1.0 - tail, a, b, tlo, thi)
            else:
                rlo, rhi, _ = _kernels.beta_tail_interval(a, b, tail, -1.0, -1.0)
            nlo = max(lower[k, l], rlo)
            nhi = min(upper[k, l], rhi)
            if nlo > nhi:
                empties += 1
            else:
                lower[k, l] = min(max(nlo, 0.0), 1.0)
                upper[k, l] = min(max(nhi, 0.0), 1.0)
    return IntervalSet(lower, upper, empties)


@dataclass(frozen=True)
class VarianceBound:
    """Upper confidence bound on an arm's variance sum, with its witness pmf."""

    value: float
    maximizer: np.ndarray | None = None


def variance_ucb(intervals: IntervalSet, arm: int) -> VarianceBound:
    """Largest sum_l q_l (1 - q_l) over the simplex within the arm's boxes.

    The objective equals 1 - sum q_l^2 on the simplex, so the maximizer is the
    clamped constant vector at the water-filling level; solved exactly.
    """
    if not (0 <= arm < intervals.num_arms):
        raise InputError(f"arm index {arm} out of range")
    lo = np.ascontiguousarray(intervals.lower[arm])
    hi = np.ascontiguousarray(intervals.upper[arm])
    if lo.sum() > 1.0 or hi.sum() < 1.0:
        raise InfeasibleBoxError(
            f"arm {arm} boxes do not intersect the simplex: "
            f"sum lower = {lo.sum():.6g}, sum upper = {hi.sum():.6g}")
    q = np.empty_like(lo)
    u = _kernels.simplex_var_max(lo, hi, q)
    return VarianceBound(float(u), q)


def _vacuous_bound(num_symbols: int) -> VarianceBound:
    return VarianceBound(1.0 - 1.0 / num_symbols,
                         np.full(num_symbols, 1.0 / num_symbols))


def baseline_ucb(state: PosteriorState, schedule: DeltaSchedule, arm: int,
                 kind: str) -> VarianceBound:
    """Non-Bayesian variance bounds used as comparison strategies.

    ``hoeffding``: plug-in variance of the empirical pmf plus a
    sqrt(8 ln(2/delta_n) / (T+1)) deviation, clipped at the vacuous 1 - 1/L.
    ``empirical-bernstein``: Maurer-Pontil style bound on the Bernoulli
    standard deviation, squared and doubled (binary support only).
    """
    if kind in ("hoeffding-style",):
        kind = "hoeffding"
    if kind not in BASELINE_KINDS:
        raise InputError(f"unknown baseline kind {kind!r}; expected {BASELINE_KINDS}")
    if not (0 <= arm < state.num_arms):
        raise InputError(f"arm index {arm} out of range")
    L = state.num_symbols
    if kind == "empirical-bernstein" and L != 2:
        raise UnsupportedConfigError(
            "empirical-bernstein bounds require binary support (L = 2)")
    t = int(state.arm_counts[arm])
    n = min(state.step, schedule.horizon)
    dn = schedule.delta_at(n)
    cap = 1.0 - 1.0 / L
    if kind == "hoeffding":
        if t < 1:
            return _vacuous_bound(L)
        pmf = state.counts[arm] / t
        chat = float(np.sum(pmf * (1.0 - pmf)))
        dev = math.sqrt(8.0 * math.log(2.0 / dn) / (t + 1.0))
        return VarianceBound(min(cap, chat + dev), pmf)
    if t < 2:
        return _vacuous_bound(L)
    ph = state.counts[arm, 1] / t
    sd = math.sqrt(ph * (1.0 - ph))
    dev = math.sqrt(2.0 * math.log(2.0 / dn) / (t - 1.0))
    return VarianceBound(min(cap, 2.0 * (sd + dev) ** 2),
                         np.array([1.0 - ph, ph]))
