"""Sampling strategies and allocation solvers.

Three layers live here: the closed-form oracle split of a budget across arms
proportional to their variance sums, the sequential arm-selection rule that
tracks the ratio of a variance bound to the sample count, and the batched
min-lambda allocator that balances per-category accuracy targets against a
weighted overall-estimate target via nested bisection and water-filling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bounds import DeltaSchedule, IntervalSet, update_intervals, variance_ucb
from .exceptions import InputError
from .posterior import PosteriorState, PriorSpec, SampleRecord, update_posterior

__all__ = [
    "tracking_value",
    "OracleAllocation",
    "oracle_allocate",
    "select_arm",
    "round_largest_remainder",
    "Trajectory",
    "run_bayes_ucb",
    "BatchConstraintSpec",
    "BatchAllocation",
    "batch_allocate",
    "FeasibilityVerdict",
    "check_feasibility",
]

_REL_TOL = 1e-10


def tracking_value(c: float, t: float) -> float:
    """Tracking ratio c / t with the convention that an unsampled arm is
    infinitely urgent (this forces one visit to every arm before ratios are
    compared, including the degenerate c = 0, t = 0 corner)."""
    if c < 0:
        raise InputError("tracking numerator must be nonnegative")
    if t < 0:
        raise InputError("tracking denominator must be nonnegative")
    if t == 0:
        return math.inf
    return c / t


def round_largest_remainder(x: np.ndarray, total: int) -> np.ndarray:
    """Round nonnegative reals summing to ``total`` onto integers that still
    sum to ``total``: floor everything, then hand the leftover units to the
    largest fractional parts (ties to the lowest index)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise InputError("allocations must be nonnegative")
    floors = np.floor(x).astype(np.int64)
    leftover = int(total - floors.sum())
    if leftover < 0:
        # Sum overshoot can only come from float noise; trim the smallest
        # fractional parts instead.
        order = np.argsort(x - floors, kind="stable")
        for i in order:
            if leftover == 0:
                break
            if floors[i] > 0:
                floors[i] -= 1
                leftover += 1
        return floors
    order = np.argsort(-(x - floors), kind="stable")
    floors[order[:leftover]] += 1
    return floors


@dataclass(frozen=True)
class OracleAllocation:
    """Closed-form budget split proportional to the tracking numerators."""

    real: np.ndarray
    integer: np.ndarray
    value: float
    all_zero_fallback: bool = False


def oracle_allocate(c: np.ndarray, budget: int,
                    weights: np.ndarray | None = None) -> OracleAllocation:
    """Split ``budget`` so every arm's tracking ratio is equalized.

    With numerators c_k the optimum is T_k = c_k * N / sum(c) and the common
    ratio is sum(c) / N. Arms with c = 0 receive nothing; an all-zero vector
    falls back to a uniform split with a warning flag. Optional per-arm
    weights rescale the numerators before splitting.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.size < 1:
        raise InputError("c must be a 1-D vector with at least one arm")
    if np.any(c < 0):
        raise InputError("tracking numerators must be nonnegative")
    if budget < 1:
        raise InputError("budget must be >= 1")
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != c.shape or np.any(w < 0):
            raise InputError("weights must be nonnegative and match c's shape")
        c = w * c
    total = c.sum()
    if total == 0.0:
        real = np.full(c.size, budget / c.size)
        return OracleAllocation(real, round_largest_remainder(real, budget),
                                0.0, all_zero_fallback=True)
    real = c * (budget / total)
    return OracleAllocation(real, round_largest_remainder(real, budget),
                            float(total / budget))


def select_arm(bounds: np.ndarray, counts: np.ndarray) -> int:
    """Arm with the largest tracking ratio; ties break to the lowest index."""
    u = np.ascontiguousarray(bounds, dtype=np.float64)
    t = np.ascontiguousarray(counts, dtype=np.int64)
    if u.shape != t.shape or u.ndim != 1 or u.size < 1:
        raise InputError("bounds and counts must be matching 1-D vectors")
    if np.any(u < 0) or np.any(t < 0):
        raise InputError("bounds and counts must be nonnegative")
    return int(_kernels._select_arm(u, t))


@dataclass
class Trajectory:
    """Everything a sequential run produced.

    ``u_trace[n - 1]`` holds the per-arm bounds used at step n; counts and the
    posterior reflect all absorbed samples. ``status`` is "ok" or "env-error"
    (environment failure truncates the run at ``steps`` samples).
    """

    arms: np.ndarray
    symbols: np.ndarray
    u_trace: np.ndarray
    counts: np.ndarray
    estimates: np.ndarray
    starved: np.ndarray
    posterior: PosteriorState
    intervals: IntervalSet
    status: str = "ok"
    error: str | None = None

    @property
    def steps(self) -> int:
        return int(self.arms.size)


def run_bayes_ucb(prior: PriorSpec, schedule: DeltaSchedule, env, budget: int,
                  record_intervals: bool = False) -> Trajectory:
    """Sequential Bayesian-UCB loop: refresh intervals, bound each arm's
    variance, sample the arm with the largest bound-to-count ratio, update
    the posterior.

    ``env`` is any callable mapping an arm index to an outcome symbol in
    [0, L). If it raises, the trajectory is returned truncated with an error
    status instead of propagating.
    """
    if budget < 1:
        raise InputError("budget must be >= 1")
    K, L = prior.num_arms, prior.num_symbols
    state = PosteriorState.from_prior(prior)
    intervals = IntervalSet.full(K, L)
    arms = np.zeros(budget, dtype=np.int64)
    symbols = np.zeros(budget, dtype=np.int64)
    u_trace = np.zeros((budget, K))
    status, err = "ok", None
    steps = 0
    for n in range(1, budget + 1):
        intervals = update_intervals(intervals, state, schedule)
        u = np.array([variance_ucb(intervals, k).value for k in range(K)])
        u_trace[n - 1] = u
        arm = select_arm(u, state.arm_counts)
        try:
            y = int(env(arm))
        except Exception as exc:  # noqa: BLE001 - env contract: truncate, don't crash
            status, err = "env-error", f"{type(exc).__name__}: {exc}"
            break
        if not (0 <= y < L):
            status, err = "env-error", f"environment produced symbol {y} outside [0, {L})"
            break
        state = update_posterior(state, SampleRecord(arm=arm, symbol=y, step=n))
        arms[n - 1] = arm
        symbols[n - 1] = y
        steps = n
    estimates, starved = state.empirical_pmf()
    return Trajectory(arms[:steps], symbols[:steps], u_trace[:steps],
                      state.arm_counts, estimates, starved, state, intervals,
                      status=status, error=err)


@dataclass(frozen=True)
class BatchConstraintSpec:
    """Accuracy targets for constrained batch allocation.

    ``theta`` holds per-category targets (np.inf marks a slack constraint),
    ``theta0`` the target on the weighted overall estimate, ``weights`` the
    population shares, and ``batch_size`` the number of samples to place.
    """

    theta: np.ndarray
    theta0: float
    weights: np.ndarray
    batch_size: int

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if theta.ndim != 1 or theta.shape != w.shape:
            raise InputError("theta and weights must be matching 1-D vectors")
        if not np.all(theta > 0):
            raise InputError("per-category targets must be positive (use inf for slack)")
        if not (self.theta0 > 0):
            raise InputError("overall target must be positive (use inf for slack)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InputError("weights must be nonnegative and sum to 1")
        if self.batch_size < 1:
            raise InputError("batch size must be >= 1")
        if not (np.isfinite(theta).any() or np.isfinite(self.theta0)):
            raise InputError("at least one target must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "weights", w)

    @property
    def num_categories(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class BatchAllocation:
    real: np.ndarray
    integer: np.ndarray
    lam: float
    overall_term: float
    binding_per_category: np.ndarray
    binding_overall: bool


def _overall_term(w2u, T, tau):
    denom = T + tau
    return float(np.sum(np.where(w2u > 0, w2u / np.maximum(denom, 1e-300), 0.0)))


def _waterfill_overall(u, T, w, floors, budget):
    """Minimize sum w_k^2 u_k / (T_k + tau_k) over tau >= floors, sum tau = budget.

    Active coordinates satisfy w_k^2 u_k / (T_k + tau_k)^2 = nu at the optimum,
    i.e. T_k + tau_k = w_k sqrt(u_k / nu); nu is found by bisection.
    """
    w2u = w * w * u
    active = w2u > 0
    tau = floors.copy()
    spare = budget - floors.sum()
    if spare <= 0 or not active.any():
        if spare > 0:
            tau = tau + spare / tau.size
        return tau, _overall_term(w2u, T, tau)
    root = np.sqrt(w2u)
    # The allocated total S(nu) is decreasing in nu and flattens at
    # sum(floors) <= budget, so expanding from the interior closed form
    # always brackets the root.
    nu_est = (root[active].sum() / (budget + T[active].sum())) ** 2
    nu_lo = nu_hi = nu_est
    for _ in range(400):
        if _wf_sum(root, T, floors, active, nu_lo) >= budget:
            break
        nu_lo *= 0.25
    for _ in range(400):
        if _wf_sum(root, T, floors, active, nu_hi) <= budget:
            break
        nu_hi *= 4.0
    for _ in range(200):
        if nu_hi - nu_lo <= _REL_TOL * nu_hi:
            break
        nu = 0.5 * (nu_lo + nu_hi)
        if _wf_sum(root, T, floors, active, nu) > budget:
            nu_lo = nu
        else:
            nu_hi = nu
    nu = 0.5 * (nu_lo + nu_hi)
    tau = np.where(active, np.maximum(floors, root / math.sqrt(nu) - T), floors)
    # Bisection leaves a sliver of budget; park it on the coordinate with the
    # steepest marginal gain so the sum constraint holds exactly.
    diff = budget - tau.sum()
    if diff != 0.0:
        with np.errstate(divide="ignore"):
            gain = np.where(active, w2u / np.maximum((T + tau) ** 2, 1e-300), -1.0)
        i = int(np.argmax(gain))
        tau[i] = max(floors[i], tau[i] + diff)
    return tau, _overall_term(w2u, T, tau)


def _wf_sum(root, T, floors, active, nu):
    lvl = root / math.sqrt(nu) - T
    return float(np.sum(np.where(active, np.maximum(floors, lvl), floors)))


def _c3_feasible(lam, u, T, theta, theta0, w, budget):
    """Feasibility oracle for the outer bisection: floors from the per-category
    constraints, then the best achievable overall term via water-filling."""
    with np.errstate(divide="ignore"):
        floors = np.where(np.isfinite(theta) & (u > 0),
                          np.maximum(0.0, u / (theta * lam) - T), 0.0)
    if floors.sum() > budget * (1.0 + 1e-12):
        return False, None
    floors = floors * min(1.0, budget / floors.sum()) if floors.sum() > budget else floors
    tau, overall = _waterfill_overall(u, T, w, floors, float(budget))
    if math.isfinite(theta0) and overall > theta0 * lam * (1.0 + 1e-12):
        return False, None
    return True, tau


def _c3_lambda_at(tau, u, T, theta, theta0, w):
    denom = np.maximum(T + tau, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(np.isfinite(theta), (u / denom) / theta, 0.0)
    lam = float(np.max(per, initial=0.0))
    overall = float(np.sum(w * w * u / denom))
    if math.isfinite(theta0):
        lam = max(lam, overall / theta0)
    return lam, overall


def batch_allocate(u: np.ndarray, counts: np.ndarray,
                   spec: BatchConstraintSpec) -> BatchAllocation:
    """Place one batch to minimize the largest normalized constraint ratio.

    Solves min lambda subject to u_k / (T_k + tau_k) <= theta_k * lambda,
    sum_k w_k^2 u_k / (T_k + tau_k) <= theta0 * lambda, sum tau = B, tau >= 0.
    Outer bisection on lambda (feasibility is monotone); the inner problem
    sets the per-category floors and water-fills the remaining budget against
    the overall term. Returns the real solution, a sum-preserving integer
    rounding, and the constraint ratios achieved at the real solution.
    """
    u = np.asarray(u, dtype=np.float64)
    T = np.asarray(counts, dtype=np.float64)
    if u.shape != T.shape or u.ndim != 1:
        raise InputError("u and counts must be matching 1-D vectors")
    if u.shape[0] != spec.num_categories:
        raise InputError("u and the constraint spec disagree on K")
    if np.any(u < 0) or np.any(T < 0):
        raise InputError("u and counts must be nonnegative")
    K = u.size
    B = spec.batch_size
    theta, theta0, w = spec.theta, spec.theta0, spec.weights

    if K == 1:
        tau = np.array([float(B)])
        lam, overall = _c3_lambda_at(tau, u, T, theta, theta0, w)
        return BatchAllocation(tau, np.array([B], dtype=np.int64), lam, overall,
                               np.array([True]), math.isfinite(theta0))
    if u.sum() == 0.0:
        tau = np.full(K, B / K)
        return BatchAllocation(tau, round_largest_remainder(tau, B), 0.0, 0.0,
                               np.zeros(K, dtype=bool), False)

    tau0 = np.full(K, B / K)
    lam_hi, _ = _c3_lambda_at(tau0, u, T, theta, theta0, w)
    if lam_hi <= 0.0:
        return BatchAllocation(tau0, round_largest_remainder(tau0, B), 0.0, 0.0,
                               np.zeros(K, dtype=bool), False)
    ok, tau = _c3_feasible(lam_hi, u, T, theta, theta0, w, B)
    grow = 0
    while not ok and grow < 60:
        lam_hi *= 2.0
        ok, tau = _c3_feasible(lam_hi, u, T, theta, theta0, w, B)
        grow += 1
    lam_lo = 0.0
    for _ in range(200):
        if lam_hi - lam_lo <= _REL_TOL * lam_hi:
            break
        mid = 0.5 * (lam_lo + lam_hi)
        ok, mid_tau = _c3_feasible(mid, u, T, theta, theta0, w, B)
        if ok:
            lam_hi, tau = mid, mid_tau
        else:
            lam_lo = mid
    lam, overall = _c3_lambda_at(tau, u, T, theta, theta0, w)
    denom = np.maximum(T + tau, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(np.isfinite(theta), (u / denom) / theta, 0.0)
    binding = per >= lam * (1.0 - 1e-6)
    binding_overall = bool(math.isfinite(theta0)
                           and overall >= theta0 * lam * (1.0 - 1e-6))
    return BatchAllocation(tau, round_largest_remainder(tau, B), lam, overall,
                           binding, binding_overall)


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    lam: float
    allocation: np.ndarray
    allocation_int: np.ndarray


def check_feasibility(spec: BatchConstraintSpec, c: np.ndarray,
                      budget: int) -> FeasibilityVerdict:
    """Decide whether the accuracy targets are jointly reachable within
    ``budget`` samples: solve the batch problem from an empty state with the
    whole budget; the targets are feasible exactly when the optimum ratio is
    at most one."""
    c = np.asarray(c, dtype=np.float64)
    full = BatchConstraintSpec(theta=spec.theta, theta0=spec.theta0,
                               weights=spec.weights, batch_size=budget)
    result = batch_allocate(c, np.zeros_like(c), full)
    return FeasibilityVerdict(result.lam <= 1.0 + 1e-9, result.lam,
                              result.real, result.integer)
