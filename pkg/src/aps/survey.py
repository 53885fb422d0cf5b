"""Seroprevalence-style survey analytics over categorized Bernoulli data.

Ingests category-level counts (population weight, samples collected,
positives), computes the weighted overall positivity estimate and its plug-in
error, and compares how the same total budget would have been allocated by
the unconstrained variance-proportional oracle, the constrained oracle that
also protects the overall estimate, and the adaptive batch heuristic replayed
against a synthetic environment parameterized by the observed positivities.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .allocation import (
    BatchConstraintSpec,
    batch_allocate,
    check_feasibility,
    oracle_allocate,
)
from .bounds import DeltaSchedule, IntervalSet, update_intervals, variance_ucb
from .exceptions import InputError
from .posterior import PosteriorState, PriorSpec

__all__ = [
    "SurveyCategory",
    "SurveyDataset",
    "OverallEstimate",
    "AllocationComparison",
    "ingest",
    "export",
    "overall_estimate",
    "default_targets",
    "compare_allocations",
]

_CSV_FIELDS = ("category", "weight", "samples", "positives")


@dataclass(frozen=True)
class SurveyCategory:
    name: str
    weight: float
    samples: int
    positives: int
    theta: float | None = None


@dataclass
class SurveyDataset:
    """Validated category table; weights sum to one after renormalization."""

    categories: list[SurveyCategory]
    theta0: float | None = None
    budget: int | None = None

    def __post_init__(self):
        if not self.categories:
            raise InputError("dataset needs at least one category")
        if self.budget is None:
            self.budget = int(sum(c.samples for c in self.categories))

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.categories]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.categories])

    @property
    def samples(self) -> np.ndarray:
        return np.array([c.samples for c in self.categories], dtype=np.int64)

    @property
    def positives(self) -> np.ndarray:
        return np.array([c.positives for c in self.categories], dtype=np.int64)

    def positivity(self) -> np.ndarray:
        """Observed per-category positive rates (NaN where unsampled)."""
        t = self.samples
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(t > 0, self.positives / np.maximum(t, 1), np.nan)

    def plug_in_c(self) -> np.ndarray:
        """Bernoulli variance sums 2 p (1 - p) at the observed positivity."""
        p = np.nan_to_num(self.positivity())
        return 2.0 * p * (1.0 - p)


def ingest(path: str | Path) -> SurveyDataset:
    """Load and validate a survey CSV.

    Schema (header required): ``category,weight,samples,positives[,theta]``,
    UTF-8, '.' decimal separator. Weights are renormalized when they sum
    within [0.999, 1.001] and rejected otherwise. All row-level problems are
    reported together, with 1-based data row numbers.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    header = tuple(reader.fieldnames or ())
    missing = [f for f in _CSV_FIELDS if f not in header]
    if missing:
        raise InputError(f"{path}: header is missing columns {missing}")
    has_theta = "theta" in header
    problems: list[str] = []
    cats: list[SurveyCategory] = []
    for i, row in enumerate(reader, start=1):
        try:
            name = (row["category"] or "").strip()
            if not name:
                problems.append(f"row {i}: empty category name")
                continue
            weight = float(row["weight"])
            samples = int(row["samples"])
            positives = int(row["positives"])
            theta = None
            if has_theta and (row.get("theta") or "").strip():
                theta = float(row["theta"])
        except (TypeError, ValueError) as exc:
            problems.append(f"row {i}: {exc}")
            continue
        if weight < 0:
            problems.append(f"row {i}: negative weight {weight}")
        if samples < 0:
            problems.append(f"row {i}: negative sample count {samples}")
        if positives < 0:
            problems.append(f"row {i}: negative positive count {positives}")
        if 0 <= samples < positives:
            problems.append(f"row {i}: positives {positives} exceed samples {samples}")
        if theta is not None and theta <= 0:
            problems.append(f"row {i}: theta must be positive, got {theta}")
        cats.append(SurveyCategory(name, weight, samples, positives, theta))
    if problems:
        raise InputError(f"{path}: invalid rows:\n  " + "\n  ".join(problems))
    if not cats:
        raise InputError(f"{path}: no data rows")
    names = [c.name for c in cats]
    if len(set(names)) != len(names):
        raise InputError(f"{path}: duplicate category names")
    total_w = sum(c.weight for c in cats)
    if not (0.999 <= total_w <= 1.001):
        raise InputError(
            f"{path}: weights sum to {total_w:.6g}; they must sum to 1 "
            "(within 0.1%, after which they are renormalized)")
    cats = [SurveyCategory(c.name, c.weight / total_w, c.samples, c.positives,
                           c.theta) for c in cats]
    return SurveyDataset(cats)


def export(ds: SurveyDataset, path: str | Path) -> None:
    """Write the dataset back in the ingestion schema (round-trip safe)."""
    has_theta = any(c.theta is not None for c in ds.categories)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(_CSV_FIELDS) + (["theta"] if has_theta else []))
        for c in ds.categories:
            row = [c.name, repr(c.weight), c.samples, c.positives]
            if has_theta:
                row.append("" if c.theta is None else repr(c.theta))
            wr.writerow(row)


@dataclass(frozen=True)
class OverallEstimate:
    """Weighted overall positivity and its plug-in mean squared error."""

    r_hat: float
    mse_plugin: float


def overall_estimate(ds: SurveyDataset) -> OverallEstimate:
    """r_hat = sum_k w_k p_hat_k with plug-in error sum_k w_k^2 c_k / T_k."""
    t = ds.samples
    if np.any(t == 0):
        starved = [c.name for c, tk in zip(ds.categories, t) if tk == 0]
        raise InputError(f"categories without samples: {starved}")
    w = ds.weights
    p = ds.positivity()
    c = ds.plug_in_c()
    r_hat = float(np.sum(w * p))
    mse = float(np.sum(np.where(c > 0, w * w * c / t, 0.0)))
    return OverallEstimate(r_hat, mse)


def default_targets(ds: SurveyDataset) -> tuple[np.ndarray, float]:
    """Accuracy targets used when the dataset does not carry its own.

    Per-category targets scale with the category's own variance at twice the
    level a uniform split of the budget could reach (theta_k = 2 c_k K / N),
    i.e. an equal relative-accuracy requirement; the overall target is twice
    the error the unconstrained oracle would leave on the weighted estimate.
    Both carry slack so the constrained problem stays feasible on plug-in data.
    """
    c = ds.plug_in_c()
    n = ds.budget
    k = ds.num_categories
    w = ds.weights
    phi_star = c.sum() / n
    theta = np.where(c > 0, 2.0 * c * k / n, np.inf)
    theta0 = 2.0 * phi_star * float(np.sum(w * w))
    return theta, theta0


def _resolved_targets(ds: SurveyDataset) -> tuple[np.ndarray, float]:
    dtheta, dtheta0 = default_targets(ds)
    theta = np.array([c.theta if c.theta is not None else dtheta[i]
                      for i, c in enumerate(ds.categories)])
    theta0 = ds.theta0 if ds.theta0 is not None else dtheta0
    return theta, theta0


@dataclass
class AllocationComparison:
    """Per-category allocations of the same total budget under each strategy."""

    names: list[str]
    budget: int
    actual: np.ndarray
    oracle: np.ndarray
    constrained: np.ndarray
    adaptive_mean: np.ndarray
    adaptive_se: np.ndarray
    feasible: bool
    lam: float
    theta: np.ndarray
    theta0: float
    batch_size: int
    replications: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["category", "actual", "oracle", "constrained",
                     "adaptive_mean", "adaptive_se"])
        for i, name in enumerate(self.names):
            wr.writerow([name, int(self.actual[i]), int(self.oracle[i]),
                         int(self.constrained[i]),
                         repr(float(self.adaptive_mean[i])),
                         repr(float(self.adaptive_se[i]))])
        wr.writerow(["_total", int(self.actual.sum()), int(self.oracle.sum()),
                     int(self.constrained.sum()),
                     repr(float(self.adaptive_mean.sum())), ""])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "budget": self.budget,
            "batch_size": self.batch_size,
            "replications": self.replications,
            "feasible": self.feasible,
            "lam": self.lam,
            "theta": [None if math.isinf(t) else t for t in self.theta],
            "theta0": None if math.isinf(self.theta0) else self.theta0,
            "categories": [
                {
                    "name": name,
                    "actual": int(self.actual[i]),
                    "oracle": int(self.oracle[i]),
                    "constrained": int(self.constrained[i]),
                    "adaptive_mean": float(self.adaptive_mean[i]),
                    "adaptive_se": float(self.adaptive_se[i]),
                }
                for i, name in enumerate(self.names)
            ],
        }, indent=2, sort_keys=True)


def _adaptive_replay(q: np.ndarray, weights: np.ndarray, theta: np.ndarray,
                     theta0: float, budget: int, batch_size: int,
                     replications: int, seed: int,
                     eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo replay of batched collection against Bernoulli(q) arms.

    The heuristic never sees q: each batch is placed by the constrained
    min-lambda allocator using the current posterior variance bounds, and
    intervals are refreshed only at batch boundaries.
    """
    K = q.size
    prior = PriorSpec.uniform(K, 2)
    schedule = DeltaSchedule(K, 2, budget, eta)
    finals = np.zeros((replications, K))
    children = np.random.SeedSequence(seed).spawn(replications)
    for r in range(replications):
        rng = np.random.Generator(np.random.Philox(children[r]))
        counts = np.zeros((K, 2), dtype=np.int64)
        intervals = IntervalSet.full(K, 2)
        placed = 0
        while placed < budget:
            b = min(batch_size, budget - placed)
            state = PosteriorState(prior.alphas, counts, step=placed + 1)
            intervals = update_intervals(intervals, state, schedule)
            u = np.array([variance_ucb(intervals, k).value for k in range(K)])
            spec = BatchConstraintSpec(theta=theta, theta0=theta0,
                                       weights=weights, batch_size=b)
            tau = batch_allocate(u, counts.sum(axis=1).astype(np.float64),
                                 spec).integer
            pos = rng.binomial(tau, q)
            counts[:, 1] += pos
            counts[:, 0] += tau - pos
            placed += b
        finals[r] = counts.sum(axis=1)
    se = (finals.std(axis=0, ddof=1) / math.sqrt(replications)
          if replications > 1 else np.zeros(K))
    return finals.mean(axis=0), se


def compare_allocations(ds: SurveyDataset, batch_size: int = 100,
                        replications: int = 50, seed: int = 0,
                        eta: float | None = None,
                        theta_override: np.ndarray | None = None,
                        theta0_override: float | None = None) -> AllocationComparison:
    """Actual vs oracle vs constrained-oracle vs adaptive-replay allocations.

    All computed columns spend exactly the survey's total budget. The oracle
    columns use plug-in variance sums from the observed positivities; the
    adaptive column only ever sees synthetic batch outcomes. An infeasible
    target set still produces the table, flagged with its lambda above one.
    """
    if batch_size < 1:
        raise InputError("batch size must be >= 1")
    if replications < 1:
        raise InputError("replications must be >= 1")
    n = ds.budget
    c = ds.plug_in_c()
    theta, theta0 = _resolved_targets(ds)
    if theta_override is not None:
        theta = np.asarray(theta_override, dtype=np.float64)
        if theta.shape != (ds.num_categories,):
            raise InputError("theta override must have one entry per category")
    if theta0_override is not None:
        theta0 = float(theta0_override)
    spec = BatchConstraintSpec(theta=theta, theta0=theta0, weights=ds.weights,
                               batch_size=n)
    verdict = check_feasibility(spec, c, n)
    q = np.nan_to_num(ds.positivity())
    adaptive_mean, adaptive_se = _adaptive_replay(
        q, ds.weights, theta, theta0, n, batch_size, replications, seed,
        eta if eta is not None else min(1.0, 1.0 / n))
    return AllocationComparison(
        names=ds.names,
        budget=n,
        actual=ds.samples,
        oracle=oracle_allocate(c, n).integer,
        constrained=verdict.allocation_int,
        adaptive_mean=adaptive_mean,
        adaptive_se=adaptive_se,
        feasible=verdict.feasible,
        lam=verdict.lam,
        theta=theta,
        theta0=theta0,
        batch_size=batch_size,
        replications=replications,
    )
