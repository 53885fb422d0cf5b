"""Low-level numerical kernels shared by the posterior, bounds and simulator layers.

Every function in this module is compiled with numba ``@njit`` when numba is
importable. Setting ``APS_NUMBA=0`` (or running without numba installed)
selects a pure-Python fallback with identical semantics; the two paths are
compared by ``benchmarks/bench_kernels.py`` and pinned against each other in
the test suite.

The quantile code is tail-stable down to probabilities of order 1e-300: the
per-step failure budgets used by the confidence-interval machinery shrink like
N^{-5/2}/n, so inversion accuracy at arguments around 1e-17 is a hard
requirement, not a nicety.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "betainc",
    "beta_logpdf",
    "beta_quantile",
    "beta_tail_interval",
    "simplex_var_max",
    "mc_runs",
    "traj_full",
    "refresh_intervals",
]


def _env_wants_numba() -> bool:
    flag = os.environ.get("APS_NUMBA", "").strip().lower()
    if flag in {"0", "false", "off", "no"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _env_wants_numba()

if NUMBA_ENABLED:
    from numba import njit, prange
else:
    def njit(*args, **kwargs):  # noqa: D103 - decorator shim
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range


# Tail clamps: quantile arguments are pushed into [QLO, 0.5] before inversion
# (the upper bound of an interval is always computed through the swapped lower
# tail, so arguments > 0.5 never reach the solver from the bounds layer).
_QLO = 1e-300
_CF_MAXIT = 800
_CF_EPS = 3e-16
_FPMIN = 1e-300


@njit(cache=True)
def _lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def _betacf(a, b, x):
    # Continued fraction for the regularized incomplete beta function,
    # evaluated with the modified Lentz algorithm.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


@njit(cache=True)
def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lnfront = a * math.log(x) + b * math.log1p(-x) - _lbeta(a, b)
    # Symmetry switch keeps the continued fraction in its fast-converging regime.
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lnfront) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lnfront) * _betacf(b, a, 1.0 - x) / b


@njit(cache=True)
def beta_logpdf(a, b, x):
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - _lbeta(a, b)


@njit(cache=True)
def _norm_ppf(p):
    # Acklam's rational approximation to the standard normal quantile.
    # Relative error below 1.2e-9; used only to seed Newton iterations.
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    a1 = -3.969683028665376e+01
    a2 = 2.209460984245205e+02
    a3 = -2.759285104469687e+02
    a4 = 1.383577518672690e+02
    a5 = -3.066479806614716e+01
    a6 = 2.506628277459239e+00
    b1 = -5.447609879822406e+01
    b2 = 1.615858368580409e+02
    b3 = -1.556989798598866e+02
    b4 = 6.680131188771972e+01
    b5 = -1.328068155288572e+01
    c1 = -7.784894002430293e-03
    c2 = -3.223964580411365e-01
    c3 = -2.400758277161838e+00
    c4 = -2.549732539343734e+00
    c5 = 4.374664141464968e+00
    c6 = 2.938163982698783e+00
    d1 = 7.784695709041462e-03
    d2 = 3.224671290700398e-01
    d3 = 2.445134137142996e+00
    d4 = 3.754408661907416e+00
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) / \
            ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0)
    if p <= 1.0 - plow:
        q = p - 0.5
        r = q * q
        return (((((a1 * r + a2) * r + a3) * r + a4) * r + a5) * r + a6) * q / \
            (((((b1 * r + b2) * r + b3) * r + b4) * r + b5) * r + 1.0)
    q = math.sqrt(-2.0 * math.log1p(-(p)))
    return -(((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) / \
        ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0)


@njit(cache=True)
def _beta_q_lower(q, a, b, x0):
    # Solve I_x(a, b) = q for q in (0, 0.5]. Safeguarded Newton iteration on a
    # shrinking bracket; for small q the iteration runs on log I_x so tail
    # quantiles keep relative accuracy. x0 <= 0 means "no warm start".
    lo = 0.0
    hi = 1.0
    mean = a / (a + b)
    if x0 > 0.0 and x0 < 1.0:
        x = x0
    else:
        sd = math.sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)))
        x = mean + _norm_ppf(q) * sd
        if x <= 0.0 or x >= 1.0:
            # Small-x asymptotic: I_x ~ x^a / (a B(a,b)).
            lx = (math.log(q) + math.log(a) + _lbeta(a, b)) / a
            x = math.exp(lx) if lx < 0.0 else 0.5 * mean
        if x <= 0.0:
            x = _FPMIN
        if x >= 1.0:
            x = 1.0 - 1e-16
    log_mode = q < 0.05
    logq = math.log(q)
    for _ in range(300):
        f = betainc(a, b, x) - q
        if f > 0.0:
            hi = x
        elif f < 0.0:
            lo = x
        else:
            return x
        # Purely relative tolerance: tail arguments (q down to 1e-300) need
        # relative accuracy, and evaluation noise in I_x scales with q, so
        # any absolute floor would let the solver quit at the initial guess.
        if abs(f) <= 2e-14 * q:
            return x
        if hi - lo <= 4e-16 * x + 5e-324:
            return x
        lpdf = beta_logpdf(a, b, x)
        step_ok = False
        xn = x
        if log_mode:
            cur = f + q
            if cur > 0.0 and lpdf > -700.0:
                # Newton step for log I_x(a,b) = log q.
                dx = (math.log(cur) - logq) * cur / math.exp(lpdf)
                xn = x - dx
                step_ok = True
        else:
            if lpdf > -700.0:
                xn = x - f / math.exp(lpdf)
                step_ok = True
        if (not step_ok) or xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-16 * x:
            return xn
        x = xn
    return x


@njit(cache=True)
def beta_quantile(q, a, b):
    """Inverse of ``betainc`` in its first argument, for q in (0, 1)."""
    if q > 0.5:
        return 1.0 - _beta_q_lower(1.0 - q, b, a, -1.0)
    return _beta_q_lower(q, a, b, -1.0)


@njit(cache=True)
def beta_tail_interval(a, b, tail, warm_lo, warm_hi):
    """Two-sided interval [Q(tail), 1 - Q'(tail)] for a Beta(a, b) variable.

    The upper endpoint is computed through the swapped lower tail so that a
    tail probability passed as e.g. 1e-17 never has to survive the lossy
    ``1 - q`` round trip in double precision. ``warm_lo``/``warm_hi`` are
    optional warm starts (pass a value <= 0 to disable); ``warm_hi`` lives in
    the swapped coordinate.
    """
    t = tail
    if t < _QLO:
        t = _QLO
    if t > 0.5:
        t = 0.5
    qlo = _beta_q_lower(t, a, b, warm_lo)
    qswap = _beta_q_lower(t, b, a, warm_hi)
    return qlo, 1.0 - qswap, qswap


@njit(cache=True)
def _var_max_level(lo, hi):
    # Water-filling level lam with sum(clamp(lam, lo, hi)) = 1.
    L = lo.shape[0]
    lam_lo = lo[0]
    lam_hi = hi[0]
    for l in range(L):
        if lo[l] < lam_lo:
            lam_lo = lo[l]
        if hi[l] > lam_hi:
            lam_hi = hi[l]
    for _ in range(100):
        if lam_hi - lam_lo <= 1e-16:
            break
        lam = 0.5 * (lam_lo + lam_hi)
        s = 0.0
        for l in range(L):
            v = lam
            if v < lo[l]:
                v = lo[l]
            elif v > hi[l]:
                v = hi[l]
            s += v
        if s < 1.0:
            lam_lo = lam
        else:
            lam_hi = lam
    return 0.5 * (lam_lo + lam_hi)


@njit(cache=True)
def simplex_var_max(lo, hi, q_out):
    """Maximize sum_l q_l (1 - q_l) over the simplex intersected with boxes.

    Writes the maximizer into ``q_out`` and returns the optimum. Caller must
    ensure feasibility (sum lo <= 1 <= sum hi). The maximizer is the clamped
    constant vector q_l = clamp(lam, lo_l, hi_l) at the level lam that makes
    the coordinates sum to one.
    """
    L = lo.shape[0]
    lam = _var_max_level(lo, hi)
    u = 0.0
    for l in range(L):
        v = lam
        if v < lo[l]:
            v = lo[l]
        elif v > hi[l]:
            v = hi[l]
        q_out[l] = v
        u += v * (1.0 - v)
    cap = 1.0 - 1.0 / L
    if u > cap:
        u = cap
    if u < 0.0:
        u = 0.0
    return u


@njit(cache=True)
def refresh_intervals(alpha_row, lo_row, hi_row, warm_lo_row, warm_hi_row,
                      tail, p_row, check_event):
    """Recompute one arm's per-symbol intervals at failure budget ``tail``.

    Intersects the fresh quantile interval with the stored one in place. An
    empty intersection keeps the stored pair and is counted instead of raised;
    it can only occur off the high-probability event. Returns
    (empty_count, event_ok) where event_ok reports whether ``p_row`` stayed
    inside every refreshed interval (only meaningful when ``check_event``).
    """
    L = alpha_row.shape[0]
    a0 = 0.0
    for l in range(L):
        a0 += alpha_row[l]
    empties = 0
    event_ok = True
    for l in range(L):
        aa = alpha_row[l]
        bb = a0 - aa
        rlo, rhi, qswap = beta_tail_interval(aa, bb, tail, warm_lo_row[l],
                                             warm_hi_row[l])
        warm_lo_row[l] = rlo
        warm_hi_row[l] = qswap
        nlo = lo_row[l] if lo_row[l] > rlo else rlo
        nhi = hi_row[l] if hi_row[l] < rhi else rhi
        if nlo > nhi:
            empties += 1
        else:
            if nlo < 0.0:
                nlo = 0.0
            if nhi > 1.0:
                nhi = 1.0
            lo_row[l] = nlo
            hi_row[l] = nhi
        if check_event and (p_row[l] < lo_row[l] or p_row[l] > hi_row[l]):
            event_ok = False
    return empties, event_ok


@njit(cache=True)
def _select_arm(u, T):
    # argmax of the tracking ratio u_k / T_k with the convention that an
    # unsampled arm has infinite ratio; ties resolve to the lowest index.
    K = u.shape[0]
    best = -1
    best_val = -1.0
    best_inf = False
    for k in range(K):
        if T[k] == 0:
            if not best_inf:
                best = k
                best_inf = True
        elif not best_inf:
            val = u[k] / T[k]
            if val > best_val:
                best_val = val
                best = k
    return best


@njit(cache=True)
def _arm_mse(counts_row, t, p_row):
    L = p_row.shape[0]
    s = 0.0
    if t == 0:
        unif = 1.0 / L
        for l in range(L):
            d = unif - p_row[l]
            s += d * d
        return s
    inv = 1.0 / t
    for l in range(L):
        d = counts_row[l] * inv - p_row[l]
        s += d * d
    return s


# Strategy codes for the trajectory kernels.
MODE_BAYES = 0
MODE_HOEFFDING = 1
MODE_BERNSTEIN = 2
MODE_FIXED = 3


@njit(cache=True)
def _baseline_u(mode, counts_row, t, dn, L):
    cap = 1.0 - 1.0 / L
    if mode == MODE_HOEFFDING:
        if t == 0:
            return cap
        chat = 0.0
        inv = 1.0 / t
        for l in range(L):
            ph = counts_row[l] * inv
            chat += ph * (1.0 - ph)
        dev = math.sqrt(8.0 * math.log(2.0 / dn) / (t + 1.0))
        u = chat + dev
        return u if u < cap else cap
    # Empirical-Bernstein deviation on the Bernoulli standard deviation
    # (binary support only; validated by the caller).
    if t < 2:
        return cap
    ph = counts_row[1] / t
    sd = math.sqrt(ph * (1.0 - ph))
    dev = math.sqrt(2.0 * math.log(2.0 / dn) / (t - 1.0))
    s = sd + dev
    u = 2.0 * s * s
    return u if u < cap else cap


@njit(cache=True)
def _one_run(mode, p, alpha1, delta, log_term, tape, cps, u_fixed,
             mse_out, t_out, u_out):
    """One full-budget trajectory; returns (event_ok, empty_count).

    ``tape[k, j]`` is the j-th outcome arm k would yield. Checkpoint rows
    record u at interval-refresh time of step n and counts/MSE after the
    step's sample has been absorbed.
    """
    K = p.shape[0]
    L = p.shape[1]
    N = tape.shape[1]
    C = cps.shape[0]

    alpha = alpha1.copy()
    counts = np.zeros((K, L), dtype=np.int64)
    T = np.zeros(K, dtype=np.int64)
    pos = np.zeros(K, dtype=np.int64)
    lo = np.zeros((K, L))
    hi = np.ones((K, L))
    warm_lo = -np.ones((K, L))
    warm_hi = -np.ones((K, L))
    u = np.zeros(K)
    qbuf = np.zeros(L)
    if mode == MODE_FIXED:
        for k in range(K):
            u[k] = u_fixed[k]

    empties = 0
    event_ok = True
    ci = 0
    last_arm = -1

    for n in range(1, N + 1):
        dn = delta / (K * L * n * log_term)
        if mode == MODE_BAYES:
            tail = 0.5 * dn
            if n == 1:
                for k in range(K):
                    e, ok = refresh_intervals(alpha[k], lo[k], hi[k],
                                              warm_lo[k], warm_hi[k],
                                              tail, p[k], True)
                    empties += e
                    if not ok:
                        event_ok = False
                    slo = 0.0
                    shi = 0.0
                    for l in range(L):
                        slo += lo[k, l]
                        shi += hi[k, l]
                    if slo <= 1.0 and shi >= 1.0:
                        u[k] = simplex_var_max(lo[k], hi[k], qbuf)
                    else:
                        empties += 1
            else:
                k = last_arm
                e, ok = refresh_intervals(alpha[k], lo[k], hi[k],
                                          warm_lo[k], warm_hi[k],
                                          tail, p[k], True)
                empties += e
                if not ok:
                    event_ok = False
                slo = 0.0
                shi = 0.0
                for l in range(L):
                    slo += lo[k, l]
                    shi += hi[k, l]
                if slo <= 1.0 and shi >= 1.0:
                    u[k] = simplex_var_max(lo[k], hi[k], qbuf)
                else:
                    empties += 1
        elif mode == MODE_HOEFFDING or mode == MODE_BERNSTEIN:
            for k in range(K):
                u[k] = _baseline_u(mode, counts[k], T[k], dn, L)

        at_cp = ci < C and n == cps[ci]
        if at_cp:
            for k in range(K):
                u_out[ci, k] = u[k]

        arm = _select_arm(u, T)
        y = tape[arm, pos[arm]]
        pos[arm] += 1
        counts[arm, y] += 1
        alpha[arm, y] += 1.0
        T[arm] += 1
        last_arm = arm

        if at_cp:
            for k in range(K):
                mse_out[ci, k] = _arm_mse(counts[k], T[k], p[k])
                t_out[ci, k] = T[k]
            ci += 1

    return event_ok, empties


@njit(cache=True, parallel=True)
def mc_runs(mode, p_all, alpha1, delta, log_term, tapes, cps, u_fixed_all,
            mse_out, t_out, u_out, event_out, empty_out):
    """Run R independent trajectories (prange over replications).

    ``p_all[r]`` is replication r's true pmf matrix (they differ under local
    averaging) and ``u_fixed_all[r]`` its fixed tracking numerators for
    MODE_FIXED. Each replication writes only its own output rows, so results
    are bit-identical for any thread count.
    """
    R = tapes.shape[0]
    for r in prange(R):
        ok, empties = _one_run(mode, p_all[r], alpha1, delta, log_term,
                               tapes[r], cps, u_fixed_all[r],
                               mse_out[r], t_out[r], u_out[r])
        event_out[r] = 1 if ok else 0
        empty_out[r] = empties


@njit(cache=True)
def traj_full(mode, p, alpha1, delta, log_term, tape, u_fixed,
              arms_out, sym_out, u_trace, t_trace, lo_trace, hi_trace):
    """Single trajectory with full per-step traces (diagnostic runner).

    Traces are recorded at interval-refresh time of each step n: ``t_trace``
    holds the pre-sample counts T_n, ``lo_trace``/``hi_trace`` the running
    intervals E_n and ``u_trace`` the bound u_n. Returns (event_ok, empties).
    """
    K = p.shape[0]
    L = p.shape[1]
    N = tape.shape[1]

    alpha = alpha1.copy()
    counts = np.zeros((K, L), dtype=np.int64)
    T = np.zeros(K, dtype=np.int64)
    pos = np.zeros(K, dtype=np.int64)
    lo = np.zeros((K, L))
    hi = np.ones((K, L))
    warm_lo = -np.ones((K, L))
    warm_hi = -np.ones((K, L))
    u = np.zeros(K)
    qbuf = np.zeros(L)
    if mode == MODE_FIXED:
        for k in range(K):
            u[k] = u_fixed[k]

    empties = 0
    event_ok = True
    last_arm = -1

    for n in range(1, N + 1):
        dn = delta / (K * L * n * log_term)
        if mode == MODE_BAYES:
            tail = 0.5 * dn
            if n == 1:
                for k in range(K):
                    e, ok = refresh_intervals(alpha[k], lo[k], hi[k],
                                              warm_lo[k], warm_hi[k],
                                              tail, p[k], True)
                    empties += e
                    if not ok:
                        event_ok = False
                    slo = 0.0
                    shi = 0.0
                    for l in range(L):
                        slo += lo[k, l]
                        shi += hi[k, l]
                    if slo <= 1.0 and shi >= 1.0:
                        u[k] = simplex_var_max(lo[k], hi[k], qbuf)
                    else:
                        empties += 1
            else:
                k = last_arm
                e, ok = refresh_intervals(alpha[k], lo[k], hi[k],
                                          warm_lo[k], warm_hi[k],
                                          tail, p[k], True)
                empties += e
                if not ok:
                    event_ok = False
                slo = 0.0
                shi = 0.0
                for l in range(L):
                    slo += lo[k, l]
                    shi += hi[k, l]
                if slo <= 1.0 and shi >= 1.0:
                    u[k] = simplex_var_max(lo[k], hi[k], qbuf)
                else:
                    empties += 1
        elif mode == MODE_HOEFFDING or mode == MODE_BERNSTEIN:
            for k in range(K):
                u[k] = _baseline_u(mode, counts[k], T[k], dn, L)

        i = n - 1
        for k in range(K):
            u_trace[i, k] = u[k]
            t_trace[i, k] = T[k]
            for l in range(L):
                lo_trace[i, k, l] = lo[k, l]
                hi_trace[i, k, l] = hi[k, l]

        arm = _select_arm(u, T)
        y = tape[arm, pos[arm]]
        pos[arm] += 1
        counts[arm, y] += 1
        alpha[arm, y] += 1.0
        T[arm] += 1
        last_arm = arm
        arms_out[i] = arm
        sym_out[i] = y

    return event_ok, empties
