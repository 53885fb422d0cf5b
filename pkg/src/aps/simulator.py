"""Monte Carlo harness: regret curves, bound trajectories and allocation
comparisons across sampling strategies.

Replications share per-arm outcome tapes (the j-th draw from arm k is the
same under every strategy), so strategy comparisons are paired. Tapes come
from Philox substreams spawned off the experiment seed, which makes reports
bit-identical across runs and worker counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .allocation import oracle_allocate
from .bounds import IntervalSet
from .exceptions import InputError, RadiusTooSmallError
from .posterior import PriorSpec

__all__ = [
    "STRATEGIES",
    "ExperimentConfig",
    "LocalAveragingSpec",
    "StrategyResult",
    "RegretReport",
    "EventTracker",
    "mse",
    "sample_local",
    "track_event",
    "run_experiment",
    "make_tapes",
    "default_checkpoints",
    "PmfEnv",
]

STRATEGIES = ("bayes-ucb", "hoeffding-ucb", "empirical-bernstein", "oracle",
              "uniform")

_MODE_OF = {
    "bayes-ucb": _kernels.MODE_BAYES,
    "hoeffding-ucb": _kernels.MODE_HOEFFDING,
    "empirical-bernstein": _kernels.MODE_BERNSTEIN,
    "oracle": _kernels.MODE_FIXED,
    "uniform": _kernels.MODE_FIXED,
}


def mse(p: np.ndarray, p_hat: np.ndarray) -> float:
    """Squared L2 distance between two pmfs (sum over symbols).

    Under this convention the expected error of an empirical pmf from T iid
    draws is exactly sum_l p_l (1 - p_l) / T, which is the identity the
    oracle's closed form rests on.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(p_hat, dtype=np.float64)
    if p.shape != q.shape:
        raise InputError("pmf shapes disagree")
    return float(np.sum((p - q) ** 2))


def tracking_parameters(p: np.ndarray) -> np.ndarray:
    """Per-arm variance sums c_k = sum_l p_kl (1 - p_kl)."""
    p = np.asarray(p, dtype=np.float64)
    return np.sum(p * (1.0 - p), axis=-1)


@dataclass(frozen=True)
class LocalAveragingSpec:
    """Evaluation mode where each replication's truth is drawn uniformly from
    an L2 ball (intersected with the simplex) around the nominal pmfs.

    Give either explicit per-arm ``radii`` or a ``target_measure`` (the
    simplex measure the ball should carry, calibrated per arm).
    """

    radii: np.ndarray | None = None
    target_measure: float | None = None

    def __post_init__(self):
        if (self.radii is None) == (self.target_measure is None):
            raise InputError("specify exactly one of radii / target_measure")
        if self.radii is not None:
            r = np.asarray(self.radii, dtype=np.float64)
            if np.any(r < 0):
                raise InputError("radii must be nonnegative")
            object.__setattr__(self, "radii", r)
        elif not (0.0 < self.target_measure <= 1.0):
            raise InputError("target_measure must lie in (0, 1]")


def _calibrate_radius(p_row: np.ndarray, eta: float, rng: np.random.Generator,
                      draws: int = 200_000) -> float:
    # Monte Carlo calibration: find r with mu(ball(p, r)) close to eta under
    # the flat Dirichlet measure.
    L = p_row.size
    sample = rng.dirichlet(np.ones(L), size=draws)
    d = np.linalg.norm(sample - p_row, axis=1)
    return float(np.quantile(d, eta))


def sample_local(spec: LocalAveragingSpec, p: np.ndarray,
                 rng: np.random.Generator,
                 size: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Draw perturbed pmf matrices uniformly from per-arm balls around ``p``.

    Binary support uses the exact interval sampler (the ball cuts the 1-D
    simplex in a segment); larger supports use rejection sampling from the
    flat Dirichlet restricted to the ball. Returns (draws with shape
    (size, K, L), per-arm achieved-measure proxies).
    """
    p = np.asarray(p, dtype=np.float64)
    K, L = p.shape
    if spec.radii is not None:
        radii = np.broadcast_to(spec.radii, (K,)).astype(np.float64)
    else:
        radii = np.array([_calibrate_radius(p[k], spec.target_measure, rng)
                          for k in range(K)])
    out = np.empty((size, K, L))
    achieved = np.empty(K)
    for k in range(K):
        r = radii[k]
        if r == 0.0:
            out[:, k, :] = p[k]
            achieved[k] = 0.0
            continue
        if L == 2:
            # ||pi - p||_2 = sqrt(2) |pi_1 - p_1| on the binary simplex.
            half = r / math.sqrt(2.0)
            lo = max(0.0, p[k, 1] - half)
            hi = min(1.0, p[k, 1] + half)
            q1 = rng.uniform(lo, hi, size=size)
            out[:, k, 1] = q1
            out[:, k, 0] = 1.0 - q1
            achieved[k] = hi - lo
            continue
        got = 0
        tried = 0
        while got < size:
            m = max(1024, 4 * (size - got))
            cand = rng.dirichlet(np.ones(L), size=m)
            keep = cand[np.linalg.norm(cand - p[k], axis=1) <= r]
            tried += m
            take = min(keep.shape[0], size - got)
            out[got:got + take, k, :] = keep[:take]
            got += take
            if tried >= 2_000_000 and got == 0:
                raise RadiusTooSmallError(
                    f"arm {k}: acceptance rate below 1e-6 for radius {r:g}; "
                    "perturb the pmf directly instead of rejection sampling")
        achieved[k] = got / tried
    return out, achieved


@dataclass
class EventTracker:
    """Sticky per-run flag: did every true probability stay inside every
    computed interval so far?"""

    violated: bool = False

    @property
    def holds(self) -> bool:
        return not self.violated


def track_event(tracker: EventTracker, intervals: IntervalSet,
                p: np.ndarray) -> EventTracker:
    if tracker.violated:
        return tracker
    if intervals.contains(p):
        return tracker
    return EventTracker(violated=True)


def default_checkpoints(budget: int, count: int = 50) -> np.ndarray:
    """Logarithmically spaced step indices, deduplicated, ending at the budget."""
    pts = np.unique(np.round(np.geomspace(1, budget, count)).astype(np.int64))
    if pts[-1] != budget:
        pts = np.append(pts, budget)
    return pts


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs for one Monte Carlo experiment."""

    pmfs: np.ndarray
    budget: int
    eta: float
    strategies: tuple[str, ...] = ("bayes-ucb", "hoeffding-ucb", "oracle")
    replications: int = 2000
    seed: int = 0
    checkpoints: np.ndarray | None = None
    local_averaging: LocalAveragingSpec | None = None

    def __post_init__(self):
        p = np.asarray(self.pmfs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
            raise InputError("pmfs must have shape (K, L)")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise InputError("each pmf row must lie on the simplex (tol 1e-12)")
        object.__setattr__(self, "pmfs", p)
        if self.budget < 1:
            raise InputError("budget must be >= 1")
        if not (0.0 < self.eta <= 1.0):
            raise InputError("eta must lie in (0, 1]")
        if self.replications < 1:
            raise InputError("replications must be >= 1")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise InputError(f"unknown strategies {bad}; valid: {STRATEGIES}")
        if "empirical-bernstein" in self.strategies and p.shape[1] != 2:
            raise InputError("empirical-bernstein runs require binary support")
        cps = (default_checkpoints(self.budget) if self.checkpoints is None
               else np.unique(np.asarray(self.checkpoints, dtype=np.int64)))
        if cps[0] < 1 or cps[-1] > self.budget:
            raise InputError("checkpoints must lie in [1, budget]")
        if cps[-1] != self.budget:
            cps = np.append(cps, self.budget)
        object.__setattr__(self, "checkpoints", cps)

    @property
    def num_arms(self) -> int:
        return self.pmfs.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.pmfs.shape[1]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        la = d.get("local_averaging")
        spec = None
        if la:
            spec = LocalAveragingSpec(
                radii=np.asarray(la["radii"], dtype=np.float64) if "radii" in la else None,
                target_measure=la.get("target_measure"))
        try:
            return cls(
                pmfs=np.asarray(d["pmfs"], dtype=np.float64),
                budget=int(d["budget"]),
                eta=float(d["eta"]),
                strategies=tuple(d.get("strategies",
                                       ("bayes-ucb", "hoeffding-ucb", "oracle"))),
                replications=int(d.get("replications", 2000)),
                seed=int(d.get("seed", 0)),
                checkpoints=(np.asarray(d["checkpoints"], dtype=np.int64)
                             if d.get("checkpoints") else None),
                local_averaging=spec,
            )
        except KeyError as exc:
            raise InputError(f"config missing required field {exc}") from exc


def make_tapes(p_all: np.ndarray, budget: int,
               seed: int) -> np.ndarray:
    """Pre-drawn outcome tapes: tape[r, k, j] is the j-th symbol arm k yields
    in replication r. One Philox substream per replication."""
    R, K, _ = p_all.shape
    tapes = np.empty((R, K, budget), dtype=np.uint8)
    children = np.random.SeedSequence(seed).spawn(R)
    for r in range(R):
        gen = np.random.Generator(np.random.Philox(children[r]))
        cum = np.cumsum(p_all[r], axis=1)
        unif = gen.random((K, budget))
        for k in range(K):
            tapes[r, k] = np.searchsorted(cum[k, :-1], unif[k], side="right")
    return tapes


@dataclass
class StrategyResult:
    """Aggregates for one strategy over all replications.

    Per-arm matrices are indexed (checkpoint, arm). ``worst_mse_mean`` is the
    max over arms of the mean MSE (the objective the oracle optimizes);
    ``mean_max_mse`` (mean over runs of the per-run max) is kept as a
    diagnostic only.
    """

    name: str
    checkpoints: np.ndarray
    mse_mean: np.ndarray
    mse_se: np.ndarray
    alloc_mean: np.ndarray
    u_mean: np.ndarray
    u_se: np.ndarray
    worst_arm: np.ndarray
    worst_mse_mean: np.ndarray
    worst_mse_se: np.ndarray
    mean_max_mse: np.ndarray
    regret: np.ndarray
    event_failure_rate: float
    empty_intersections: int
    per_rep_mse: np.ndarray | None = None
    per_rep_alloc: np.ndarray | None = None
    per_rep_u: np.ndarray | None = None


@dataclass
class RegretReport:
    """Full experiment output: per-strategy aggregates plus the oracle curve."""

    config: ExperimentConfig
    oracle_value: np.ndarray
    strategies: dict[str, StrategyResult] = field(default_factory=dict)

    def to_json(self) -> str:
        cfg = self.config
        payload = {
            "config": {
                "pmfs": cfg.pmfs.tolist(),
                "budget": cfg.budget,
                "eta": cfg.eta,
                "strategies": list(cfg.strategies),
                "replications": cfg.replications,
                "seed": cfg.seed,
                "checkpoints": cfg.checkpoints.tolist(),
                "local_averaging": (
                    None if cfg.local_averaging is None else {
                        "radii": (None if cfg.local_averaging.radii is None
                                  else np.asarray(cfg.local_averaging.radii).tolist()),
                        "target_measure": cfg.local_averaging.target_measure,
                    }),
            },
            "oracle_value": self.oracle_value.tolist(),
            "strategies": {},
        }
        for name, s in self.strategies.items():
            payload["strategies"][name] = {
                "checkpoints": s.checkpoints.tolist(),
                "mse_mean": s.mse_mean.tolist(),
                "mse_se": s.mse_se.tolist(),
                "alloc_mean": s.alloc_mean.tolist(),
                "u_mean": s.u_mean.tolist(),
                "u_se": s.u_se.tolist(),
                "worst_arm": s.worst_arm.tolist(),
                "worst_mse_mean": s.worst_mse_mean.tolist(),
                "worst_mse_se": s.worst_mse_se.tolist(),
                "mean_max_mse": s.mean_max_mse.tolist(),
                "regret": s.regret.tolist(),
                "event_failure_rate": s.event_failure_rate,
                "empty_intersections": s.empty_intersections,
            }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """Flat rows (strategy, checkpoint, metric, arm, value, stderr) for
        external plotting."""
        def f(x):
            return repr(float(x))

        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["strategy", "checkpoint", "metric", "arm", "value", "stderr"])
        for name, s in self.strategies.items():
            for ci, n in enumerate(s.checkpoints):
                for k in range(s.mse_mean.shape[1]):
                    wr.writerow([name, n, "mse", k,
                                 f(s.mse_mean[ci, k]), f(s.mse_se[ci, k])])
                    wr.writerow([name, n, "alloc", k, f(s.alloc_mean[ci, k]), ""])
                    wr.writerow([name, n, "ucb", k,
                                 f(s.u_mean[ci, k]), f(s.u_se[ci, k])])
                wr.writerow([name, n, "worst_mse", int(s.worst_arm[ci]),
                             f(s.worst_mse_mean[ci]), f(s.worst_mse_se[ci])])
                wr.writerow([name, n, "regret", "",
                             f(s.regret[ci]), f(s.worst_mse_se[ci])])
                wr.writerow([name, n, "oracle_value", "",
                             f(self.oracle_value[ci]), ""])
            wr.writerow([name, s.checkpoints[-1], "event_failure_rate", "",
                         f(s.event_failure_rate), ""])
        return buf.getvalue()


def _aggregate(name: str, cfg: ExperimentConfig, mse_r: np.ndarray,
               t_r: np.ndarray, u_r: np.ndarray, event_r: np.ndarray,
               empty_r: np.ndarray, oracle_value: np.ndarray,
               keep_per_rep: bool) -> StrategyResult:
    R = mse_r.shape[0]
    sq = math.sqrt(R)
    mse_mean = mse_r.mean(axis=0)
    mse_se = mse_r.std(axis=0, ddof=1) / sq if R > 1 else np.zeros_like(mse_mean)
    worst_arm = np.argmax(mse_mean, axis=1)
    ci = np.arange(mse_mean.shape[0])
    return StrategyResult(
        name=name,
        checkpoints=cfg.checkpoints.copy(),
        mse_mean=mse_mean,
        mse_se=mse_se,
        alloc_mean=t_r.mean(axis=0),
        u_mean=u_r.mean(axis=0),
        u_se=u_r.std(axis=0, ddof=1) / sq if R > 1 else np.zeros_like(mse_mean),
        worst_arm=worst_arm,
        worst_mse_mean=mse_mean[ci, worst_arm],
        worst_mse_se=mse_se[ci, worst_arm],
        mean_max_mse=mse_r.max(axis=2).mean(axis=0),
        regret=mse_mean[ci, worst_arm] - oracle_value,
        event_failure_rate=float(1.0 - event_r.mean()),
        empty_intersections=int(empty_r.sum()),
        per_rep_mse=mse_r if keep_per_rep else None,
        per_rep_alloc=t_r if keep_per_rep else None,
        per_rep_u=u_r if keep_per_rep else None,
    )


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   keep_per_rep: bool = False) -> RegretReport:
    """Simulate every configured strategy over shared outcome tapes.

    Deterministic given the seed: tapes, and any local-averaging draws, come
    from substreams of the config seed, and aggregation order is fixed.
    """
    if workers is not None and _kernels.NUMBA_ENABLED:
        import numba

        numba.set_num_threads(max(1, int(workers)))
    R, K, L = cfg.replications, cfg.num_arms, cfg.num_symbols
    C = cfg.checkpoints.size

    if cfg.local_averaging is not None:
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,))))
        p_all, _ = sample_local(cfg.local_averaging, cfg.pmfs, rng, size=R)
    else:
        p_all = np.broadcast_to(cfg.pmfs, (R, K, L)).copy()

    tapes = make_tapes(p_all, cfg.budget, cfg.seed)
    prior = PriorSpec.uniform(K, L)
    schedule_delta = cfg.eta * cfg.budget ** -2.5
    log_term = 1.0 + math.log(cfg.budget)
    cps = cfg.checkpoints.astype(np.int64)

    # Oracle value at each checkpoint, averaged over the per-rep truths.
    c_all = tracking_parameters(p_all)
    oracle_value = c_all.sum(axis=1).mean() / cps.astype(np.float64)

    report = RegretReport(config=cfg, oracle_value=oracle_value)
    for name in cfg.strategies:
        mode = _MODE_OF[name]
        if name == "oracle":
            u_fixed = c_all
        elif name == "uniform":
            u_fixed = np.ones((R, K))
        else:
            u_fixed = np.zeros((R, K))
        mse_out = np.zeros((R, C, K))
        t_out = np.zeros((R, C, K), dtype=np.int64)
        u_out = np.zeros((R, C, K))
        event_out = np.zeros(R, dtype=np.uint8)
        empty_out = np.zeros(R, dtype=np.int64)
        _kernels.mc_runs(mode, p_all, prior.alphas, schedule_delta, log_term,
                         tapes, cps, u_fixed, mse_out, t_out, u_out,
                         event_out, empty_out)
        if mode != _kernels.MODE_BAYES:
            event_out[:] = 1
        report.strategies[name] = _aggregate(
            name, cfg, mse_out, t_out, u_out, event_out, empty_out,
            oracle_value, keep_per_rep)
    return report


class PmfEnv:
    """Arm-sampling environment drawing symbols from fixed pmfs (seeded)."""

    def __init__(self, pmfs: np.ndarray, seed: int = 0):
        self.pmfs = np.asarray(pmfs, dtype=np.float64)
        self._cum = np.cumsum(self.pmfs, axis=1)
        self._rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(seed)))

    def __call__(self, arm: int) -> int:
        return int(np.searchsorted(self._cum[arm, :-1], self._rng.random(),
                                   side="right"))
