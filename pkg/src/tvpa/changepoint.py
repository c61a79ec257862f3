"""Testing, counting, bracketing and locating jumps of the attachment offset.

Interval estimates are compared through the standardized squared difference

    L = (a2 - a1)^2 / (g1 / f1'^2 + g2 / f2'^2),

which is asymptotically chi-square(1) when the offsets agree and grows
linearly in ``T`` when they differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DegenerateError, DomainError, EstimationError
from .estimation import (
    CONVERGED,
    SolverConfig,
    chi2_1_quantile,
    equal_boundaries,
    solve_a,
)
from .moments import mean_path

MIN_INTERVAL = 100
COUNT_METHODS = ("threshold", "chi2", "ratio")


@dataclass(frozen=True)
class ScanResult:
    k: int
    boundaries: list
    estimates: list = field(repr=False)
    L: np.ndarray = field(repr=False)
    local_max_indices: list
    counts: dict
    thresholds: dict

    def L_at(self, i):
        """``L_i`` for ``2 <= i <= k-1`` (1-based interval index)."""
        return float(self.L[i - 2])

    def top_maxima(self, n):
        """The ``n`` largest local maxima as interval indices, largest first."""
        order = sorted(self.local_max_indices, key=lambda i: (-self.L_at(i), i))
        return order[:n]

    def to_dict(self):
        return {
            "k": self.k,
            "boundaries": [int(b) for b in self.boundaries],
            "estimates": [e.to_dict() for e in self.estimates],
            "L": {str(i): self.L_at(i) for i in range(2, self.k)},
            "local_max_indices": [int(i) for i in self.local_max_indices],
            "counts": dict(self.counts),
            "thresholds": dict(self.thresholds),
        }


@dataclass(frozen=True)
class Stage:
    interval: tuple
    boundaries: list
    scores: dict
    j_hat: int


@dataclass(frozen=True)
class RefineResult:
    domain: tuple
    stages: list

    @property
    def final_interval(self):
        return self.stages[-1].interval

    def contains(self, t, stage=-1):
        lo, hi = self.stages[stage].interval
        return lo <= t < hi

    def to_dict(self):
        return {
            "domain": list(self.domain),
            "final_interval": list(self.final_interval),
            "stages": [
                {
                    "interval": list(s.interval),
                    "boundaries": [int(b) for b in s.boundaries],
                    "scores": {str(i): v for i, v in s.scores.items()},
                    "j_hat": s.j_hat,
                }
                for s in self.stages
            ],
        }


@dataclass(frozen=True)
class LocateResult:
    t0: int
    t1: int
    tau_hat: int
    peak_value: float
    diagnostic: np.ndarray = field(repr=False)
    a_hat: float = math.nan

    def to_dict(self):
        return {
            "t0": self.t0,
            "t1": self.t1,
            "tau_hat": self.tau_hat,
            "peak_value": self.peak_value,
            "a_hat": self.a_hat,
        }


def _variance_term(est):
    if est.status != CONVERGED:
        raise DegenerateError(f"estimate on ({est.t0}, {est.t1}] is {est.status}")
    if est.df_at_hat == 0.0 or est.g_at_hat < 0.0:
        raise DegenerateError(f"degenerate variance on ({est.t0}, {est.t1}]")
    return est.g_at_hat / est.df_at_hat**2


def pair_test(e1, e2):
    """Squared standardized difference of two interval estimates."""
    denom = _variance_term(e1) + _variance_term(e2)
    if denom <= 0.0:
        raise DegenerateError("both estimates have zero variance")
    return (e2.a_hat - e1.a_hat) ** 2 / denom


def local_maxima(L):
    """1-based indices ``i`` (``L[0]`` is ``L_2``) of local maxima.

    ``L_i`` must exceed its left neighbour strictly and be at least its right
    neighbour, so a plateau is credited to its smallest index.  The end
    positions compare against their single neighbour.
    """
    L = np.asarray(L, dtype=float)
    out = []
    n = len(L)
    for j in range(n):
        left = j == 0 or L[j] > L[j - 1]
        right = j == n - 1 or L[j] >= L[j + 1]
        if left and right and n > 0:
            out.append(j + 2)
    return out


def ratio_count(values):
    """Number of change points by the largest ratio of consecutive sorted maxima."""
    vals = sorted((float(v) for v in values), reverse=True)
    if len(vals) < 2:
        return len(vals)
    best, best_i = -1.0, 1
    for i in range(len(vals) - 1):
        r = vals[i] / vals[i + 1] if vals[i + 1] > 0 else math.inf
        if r > best:
            best, best_i = r, i + 1
    return best_i


def _estimate(trace, t0, t1, cfg, index=None, min_len=MIN_INTERVAL):
    if t1 - t0 < min_len:
        raise CapacityError(f"interval ({t0}, {t1}] shorter than {min_len} steps")
    est = solve_a(trace, t0, t1, cfg)
    if est.status != CONVERGED:
        raise EstimationError(
            f"estimate on ({t0}, {t1}] is {est.status}", interval=(t0, t1), index=index
        )
    return est


def scan(trace, k, ct=None, cfg=None, min_len=MIN_INTERVAL, t0=0, t1=None):
    """Split ``[t0, t1]`` into ``k`` intervals and scan ``L_i`` over interval triples."""
    t1 = trace.T if t1 is None else t1
    if k < 4:
        raise DomainError(f"scan needs k >= 4, got {k}")
    if (t1 - t0) / k < min_len:
        raise CapacityError(f"intervals of {(t1 - t0) / k:.0f} steps are shorter than {min_len}")
    bounds = equal_boundaries(t0, t1, k)
    ests = [_estimate(trace, a, b, cfg, index=i + 1, min_len=min_len) for i, (a, b) in enumerate(zip(bounds, bounds[1:]))]
    L = np.array([pair_test(ests[i - 2], ests[i]) for i in range(2, k)])
    lm = local_maxima(L)
    lm_vals = [L[i - 2] for i in lm]
    ct = math.sqrt(trace.T) if ct is None else ct
    chi = chi2_1_quantile(1.0 - 0.01 / k)
    counts = {
        "threshold": sum(1 for x in lm_vals if x > ct),
        "chi2": sum(1 for x in lm_vals if x > chi),
        "ratio": ratio_count(lm_vals),
    }
    return ScanResult(k, bounds, ests, L, lm, counts, {"threshold": ct, "chi2": chi})


def _window(j, first, last):
    """Three consecutive indices centred on ``j`` and clamped to ``[first, last]``."""
    lo = min(max(j - 1, first), last - 2)
    return lo, lo + 2


def refine_interval(trace, k=5, q_max=3, min_len=MIN_INTERVAL, lo=0, hi=None, cfg=None):
    """Shrink a window around a single change point by repeated k-way splits.

    Each candidate subinterval ``[s_{i-1}, s_i)`` is scored by the absolute
    difference of the estimates on ``[lo, s_{i-1})`` and ``[s_i, hi]``.  The
    first split scores only interior subintervals ``2..k-1``; later splits
    score all ``k``.  The new window is the best subinterval and its two
    neighbours, shifted inward at the ends.
    """
    hi = trace.T if hi is None else hi
    if k < 5:
        raise DomainError(f"refinement needs k >= 5, got {k}")
    if hi - lo < k * min_len:
        raise CapacityError(f"domain ({lo}, {hi}] too short for {k} splits of {min_len}")

    def score(s_prev, s_next):
        left = _estimate(trace, lo, s_prev, cfg, min_len=min_len)
        right = _estimate(trace, s_next, hi, cfg, min_len=min_len)
        return abs(left.a_hat - right.a_hat)

    stages = []
    bounds = equal_boundaries(lo, hi, k)
    scores = {i: score(bounds[i - 1], bounds[i]) for i in range(2, k)}
    j = max(scores, key=lambda i: (scores[i], -i))
    a, b = _window(j, 2, k - 1)
    stages.append(Stage((bounds[a - 1], bounds[b]), bounds, scores, j))
    for _ in range(q_max):
        v_lo, v_hi = stages[-1].interval
        if v_hi - v_lo <= min_len:
            break
        bounds = equal_boundaries(v_lo, v_hi, k)
        scores = {i: score(bounds[i - 1], bounds[i]) for i in range(1, k + 1)}
        j = max(scores, key=lambda i: (scores[i], -i))
        a, b = _window(j, 1, k)
        stages.append(Stage((bounds[a - 1], bounds[b]), bounds, scores, j))
    return RefineResult((lo, hi), stages)


def two_step_detect(
    trace, k, method="chi2", k_refine=5, q_max=1, ct=None, cfg=None, min_len=MIN_INTERVAL, scan_result=None
):
    """Count change points with :func:`scan`, then refine around each selected maximum.

    The refinement domain for a selected ``L_j`` is ``B_{j-1} .. B_{j+1}``,
    trimmed so that it does not reach into another selected maximum's
    interval.  Pass ``scan_result`` to reuse an existing scan.
    """
    if method not in COUNT_METHODS:
        raise DomainError(f"unknown counting method {method!r}")
    sr = scan_result if scan_result is not None else scan(trace, k, ct=ct, cfg=cfg, min_len=min_len)
    n = sr.counts[method]
    if n == 0:
        return []
    selected = sr.top_maxima(n)
    results = []
    for j in sorted(selected):
        first = j - 1
        last = j + 1
        others = [s for s in selected if s != j]
        while first < j and any(first <= s < j for s in others):
            first += 1
        while last > j and any(j < s <= last for s in others):
            last -= 1
        lo, hi = sr.boundaries[first - 1], sr.boundaries[last]
        results.append(refine_interval(trace, k_refine, q_max, min_len, lo=lo, hi=hi, cfg=cfg))
    return results


def locate(trace, t0=0, t1=None, cfg=None):
    """Estimate the change time inside ``(t0, t1)`` from the leaf-count residual path."""
    t1 = trace.T if t1 is None else t1
    est = solve_a(trace, t0, t1, cfg)
    if est.status == "no_solution":
        raise EstimationError(f"no estimate on ({t0}, {t1}]", interval=(t0, t1))
    x_hat = mean_path(est.a_hat, trace.y, trace.v, t0, int(trace.x[t0]), t1)
    tau, peak, diag = change_location(x_hat, trace.x[t0 : t1 + 1], t0)
    return LocateResult(int(t0), int(t1), tau, peak, diag, est.a_hat)


def change_location(x_hat, x, t0=0):
    """``1 + argmax_{t0 < t < t1} |x_hat_t - x_t|`` for series indexed from ``t0``.

    Returns ``(tau_hat, peak, diagnostic)``; the first maximiser wins ties.
    """
    diag = np.abs(np.asarray(x_hat, dtype=float) - np.asarray(x, dtype=float))
    inner = diag[1:-1]
    if inner.size == 0:
        raise CapacityError(f"interval starting at {t0} has no interior points")
    j = int(np.argmax(inner))
    return int(t0) + j + 2, float(inner[j]), diag


def oracle_gap(psched, trace, S, T_end, a_hat):
    """``h(t) = |E(x_t | x_S) - f_{S,t}(a_hat)|`` for ``t`` in ``[S, T_end]``.

    The first term propagates the mean under the true piecewise offsets.
    """
    a_true = psched.values()
    truth = mean_path(a_true, trace.y, trace.v, S, int(trace.x[S]), T_end)
    fitted = mean_path(a_hat, trace.y, trace.v, S, int(trace.x[S]), T_end)
    return np.abs(truth - fitted)
