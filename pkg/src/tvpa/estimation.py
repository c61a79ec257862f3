"""Interval estimation of the attachment offset by monotone bisection.

On an interval ``(t0, t1]`` the conditional mean ``f(a) = E[x_{t1} | x_{t0}]``
is strictly decreasing in ``a``, so ``f(a) = x_{t1}`` has at most one root.
It is bracketed between ``a -> -1`` (where ``f`` is largest) and a doubled
upper bound, then bisected until the residual is within ``er``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import DegenerateError, DomainError
from .moments import conditional_mean, conditional_moments
from .process import A_MAX

CONVERGED = "converged"
BOUNDARY_LOW = "boundary_low"
NO_SOLUTION = "no_solution"

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class SolverConfig:
    er: float = 0.01
    max_iterations: int = 200
    lower: float = -1.0 + 1e-9
    a_max: float = A_MAX
    level: float = 0.95

    def __post_init__(self):
        if not self.er > 0:
            raise DomainError(f"residual tolerance must be positive, got {self.er}")
        if not self.lower > -1.0:
            raise DomainError("lower bracket must exceed -1")


@dataclass(frozen=True)
class EstimateResult:
    t0: int
    t1: int
    target: int
    a_hat: float
    f_at_hat: float
    g_at_hat: float
    df_at_hat: float
    dg_at_hat: float
    std_err: float
    ci: tuple | None
    iterations: int
    status: str
    bracket_width: float

    @property
    def converged(self):
        return self.status == CONVERGED

    @property
    def residual(self):
        return self.f_at_hat - self.target

    def pivot(self, a_true):
        """``f'(a_hat) (a_hat - a) / sqrt(g(a_hat))``; asymptotically N(0, 1)."""
        if self.g_at_hat <= 0.0:
            raise DegenerateError("conditional variance vanishes at the estimate")
        return self.df_at_hat * (self.a_hat - a_true) / math.sqrt(self.g_at_hat)

    def to_dict(self):
        d = dict(self.__dict__)
        d["ci"] = list(self.ci) if self.ci is not None else None
        return d


def normal_quantile(p):
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def chi2_1_quantile(beta):
    """``beta``-quantile of chi-square with one degree of freedom."""
    if beta == 0.0:
        return 0.0
    if not 0.0 < beta < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {beta}")
    return normal_quantile(0.5 * (1.0 + beta)) ** 2


def chi2_1_sf(q):
    """Upper tail ``P(chi2_1 > q)``."""
    return math.erfc(math.sqrt(max(q, 0.0) / 2.0))


def _interval(a_hat, std_err, level):
    z = normal_quantile(0.5 * (1.0 + level)) if level > 0 else 0.0
    return (a_hat - z * std_err, a_hat + z * std_err)


def confidence_interval(est, level=0.95):
    if est.status != CONVERGED:
        raise DegenerateError(f"no interval for a {est.status} estimate")
    if not 0.0 <= level < 1.0:
        raise DomainError(f"level must lie in [0, 1), got {level}")
    if est.df_at_hat == 0.0 or est.g_at_hat < 0.0:
        raise DegenerateError("zero derivative or negative variance at the estimate")
    return _interval(est.a_hat, est.std_err, level)


def solve_a(trace, t0, t1, cfg=None):
    """Estimate a constant offset on ``(t0, t1]`` from ``x_{t1}`` given ``x_{t0}``."""
    cfg = cfg or SolverConfig()
    T = trace.T
    if not 0 <= t0 < t1 <= T:
        raise DomainError(f"need 0 <= t0 < t1 <= {T}, got ({t0}, {t1})")
    y, v = trace.y, trace.v
    x0 = int(trace.x[t0])
    target = int(trace.x[t1])
    er = cfg.er

    def f(a):
        return conditional_mean(a, y, v, t0, x0, t1)

    lo, hi = cfg.lower, 1.0
    iterations = 0
    status = None
    a_hat = None
    if not f(lo) - er > target:
        status, a_hat = BOUNDARY_LOW, lo
    else:
        while True:
            iterations += 1
            fh = f(hi)
            if abs(fh - target) <= er:
                status, a_hat = CONVERGED, hi
                break
            if fh + er < target:
                break
            lo = hi
            hi *= 2.0
            if hi > cfg.a_max:
                status, a_hat = NO_SOLUTION, cfg.a_max
                break
    if status is None:
        for _ in range(cfg.max_iterations):
            iterations += 1
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if fm - er > target:
                lo = mid
            elif fm + er < target:
                hi = mid
            else:
                status, a_hat = CONVERGED, mid
                break
        else:
            status, a_hat = NO_SOLUTION, 0.5 * (lo + hi)

    mom = conditional_moments(a_hat, y, v, t0, x0, t1)
    if mom.df != 0.0 and mom.g >= 0.0:
        std_err = math.sqrt(mom.g) / abs(mom.df)
    else:
        std_err = math.inf
    ci = _interval(a_hat, std_err, cfg.level) if status == CONVERGED and math.isfinite(std_err) else None
    return EstimateResult(
        t0=int(t0),
        t1=int(t1),
        target=target,
        a_hat=float(a_hat),
        f_at_hat=mom.f,
        g_at_hat=mom.g,
        df_at_hat=mom.df,
        dg_at_hat=mom.dg,
        std_err=std_err,
        ci=ci,
        iterations=iterations,
        status=status,
        bracket_width=hi - lo,
    )


def estimate_intervals(trace, boundaries, cfg=None):
    """:func:`solve_a` on each ``(boundaries[i], boundaries[i+1]]``."""
    return [solve_a(trace, int(a), int(b), cfg) for a, b in zip(boundaries[:-1], boundaries[1:])]


def equal_boundaries(t0, t1, k):
    """``k + 1`` cut times splitting ``[t0, t1]`` into ``k`` near-equal parts."""
    return [int(t0 + round(i * (t1 - t0) / k)) for i in range(k + 1)]


def standardized_residual(trace, t0, t1, a_true=None):
    """``(x_{t1} - f(a)) / sqrt(g(a))`` at the true offset (scalar or per-step)."""
    if a_true is None:
        if trace.a_true is None:
            raise DomainError("no true offset supplied and the trace carries none")
        a_true = trace.a_true
    a_arr = np.asarray(a_true, dtype=float)
    mom = conditional_moments(a_arr, trace.y, trace.v, t0, int(trace.x[t0]), t1)
    if not mom.g > 0.0:
        raise DegenerateError(f"conditional variance {mom.g} on ({t0}, {t1}]")
    return (trace.x[t1] - mom.f) / math.sqrt(mom.g)
