"""Conditional moments of the leaf count and their sensitivities to ``a``.

``E[(x_t^2, x_t, 1) | x_{t-1}] = A_t (x_{t-1}^2, x_{t-1}, 1)`` with ``A_t``
depending on ``a`` only through the leaf weight ``m_t``.  Propagating the
first two moments (and their ``a``-derivatives by the product rule) from
``(t0, x0)`` gives ``f``, ``g``, ``f'`` and ``g'`` in ``O(t1 - t0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import CapacityError, DomainError
from .process import transition_probs

MAX_ENUM_STEPS = 14


class Moments(NamedTuple):
    f: float
    g: float
    df: float
    dg: float


@dataclass(frozen=True)
class MomentState:
    t: int
    s1: float
    s2: float
    ds1: float = 0.0
    ds2: float = 0.0

    @property
    def variance(self):
        return self.s2 - self.s1 * self.s1


@dataclass(frozen=True)
class StepMatrix:
    A: np.ndarray
    m: float
    dm: float


def m_value(a, t, v_prev):
    """Leaf weight ``m_t = (1+a)/(2t-1+a v_{t-1})`` and ``dm_t/da``."""
    den = 2.0 * t - 1.0 + a * v_prev
    if not den > 0.0:
        raise DomainError(f"nonpositive denominator 2t-1+a*v = {den} (a={a}, t={t}, v={v_prev})")
    return (1.0 + a) / den, (2.0 * t - 1.0 - v_prev) / (den * den)


def _matrix(m, y):
    return np.array(
        [
            [1 - 2 * y * m + (1 - y) * (4 * m * m - 4 * m), (1 - y) * (2 * m - 3 * m * m) + y * (2 - m), y],
            [0.0, (1 - m) * (1 - (1 - y) * m), y],
            [0.0, 0.0, 1.0],
        ]
    )


def step_matrix(a, t, v_prev, y):
    m, dm = m_value(a, t, v_prev)
    return StepMatrix(_matrix(m, y), m, dm)


@njit(cache=True, inline="always")
def _advance(m, dm, y, s2, s1, d2, d1):
    c11 = 1.0 - 2.0 * y * m + (1.0 - y) * (4.0 * m * m - 4.0 * m)
    c12 = (1.0 - y) * (2.0 * m - 3.0 * m * m) + y * (2.0 - m)
    c22 = (1.0 - m) * (1.0 - (1.0 - y) * m)
    e11 = -2.0 * y + (1.0 - y) * (8.0 * m - 4.0)
    e12 = (1.0 - y) * (2.0 - 6.0 * m) - y
    e22 = -(1.0 - (1.0 - y) * m) - (1.0 - y) * (1.0 - m)
    n2 = c11 * s2 + c12 * s1 + y
    n1 = c22 * s1 + y
    nd2 = c11 * d2 + c12 * d1 + dm * (e11 * s2 + e12 * s1)
    nd1 = c22 * d1 + dm * e22 * s1
    return n2, n1, nd2, nd1


@njit(cache=True)
def _propagate(a, per_step, y, v, t0, x0, t1):
    s1 = float(x0)
    s2 = s1 * s1
    d1 = 0.0
    d2 = 0.0
    for t in range(t0 + 1, t1 + 1):
        at = a[t] if per_step else a[0]
        vp = v[t - 1]
        den = 2.0 * t - 1.0 + at * vp
        if den <= 0.0:
            raise ValueError("nonpositive denominator in leaf weight")
        m = (1.0 + at) / den
        dm = (2.0 * t - 1.0 - vp) / (den * den)
        s2, s1, d2, d1 = _advance(m, dm, float(y[t]), s2, s1, d2, d1)
    return s1, s2, d1, d2


@njit(cache=True)
def _mean_only(a, y, v, t0, x0, t1):
    s1 = float(x0)
    for t in range(t0 + 1, t1 + 1):
        vp = v[t - 1]
        m = (1.0 + a) / (2.0 * t - 1.0 + a * vp)
        if y[t] == 1:
            s1 = (1.0 - m) * s1 + 1.0
        else:
            s1 = (1.0 - m) * (1.0 - m) * s1
    return s1


@njit(cache=True)
def _mean_path(a, per_step, y, v, t0, x0, t1):
    out = np.empty(t1 - t0 + 1)
    s1 = float(x0)
    out[0] = s1
    for t in range(t0 + 1, t1 + 1):
        at = a[t] if per_step else a[0]
        vp = v[t - 1]
        m = (1.0 + at) / (2.0 * t - 1.0 + at * vp)
        s1 = (1.0 - m) * (1.0 - (1.0 - y[t]) * m) * s1 + y[t]
        out[t - t0] = s1
    return out


def _as_a(a):
    arr = np.atleast_1d(np.asarray(a, dtype=float))
    return arr, arr.ndim == 1 and arr.size > 1


def _check_slice(y, v, t0, t1):
    if not 0 <= t0 <= t1 < len(y) or len(v) != len(y):
        raise DomainError(f"interval ({t0}, {t1}] not inside trace of length {len(y)}")


def conditional_moments(a, y, v, t0, x0, t1):
    """``(f, g, f', g')`` of ``x_{t1}`` given ``x_{t0} = x0`` and observed ``y, v``.

    ``a`` is a scalar offset, or an array indexed by step ``t`` giving a
    per-step offset (derivatives are then with respect to a common shift).
    """
    _check_slice(y, v, t0, t1)
    arr, per_step = _as_a(a)
    if not np.all(arr[t0 + 1 : t1 + 1] > -1.0 if per_step else arr > -1.0):
        raise DomainError("offset must exceed -1")
    try:
        s1, s2, d1, d2 = _propagate(arr, per_step, y, v, int(t0), float(x0), int(t1))
    except ValueError as exc:
        raise DomainError(str(exc)) from None
    return Moments(s1, s2 - s1 * s1, d1, d2 - 2.0 * s1 * d1)


def moment_state(a, y, v, t0, x0, t1):
    """Same propagation as :func:`conditional_moments`, returned as raw moments."""
    f, g, df, dg = conditional_moments(a, y, v, t0, x0, t1)
    return MomentState(t1, f, g + f * f, df, dg + 2.0 * f * df)


def conditional_mean(a, y, v, t0, x0, t1):
    """``f_{t0,t1}(a)`` only; the fast path used inside the root finder."""
    return _mean_only(float(a), y, v, int(t0), float(x0), int(t1))


def mean_path(a, y, v, t0, x0, t1):
    """``f_{t0,t}(a)`` for every ``t`` in ``[t0, t1]``."""
    _check_slice(y, v, t0, t1)
    arr, per_step = _as_a(a)
    return _mean_path(arr, per_step, y, v, int(t0), float(x0), int(t1))


def enumerate_moments(a, y, v, t0, x0, t1):
    """Exact mean and variance of ``x_{t1}`` by enumerating the reachable states.

    Every path of jumps is weighted by the one-step kernel; paths are merged
    by their current leaf count, so the cost stays polynomial while the
    result is the exact path sum.  Independent of the matrix recursion.
    """
    if t1 - t0 > MAX_ENUM_STEPS:
        raise CapacityError(f"enumeration limited to {MAX_ENUM_STEPS} steps, asked {t1 - t0}")
    _check_slice(y, v, t0, t1)
    arr, per_step = _as_a(a)
    dist = {int(x0): 1.0}
    for t in range(t0 + 1, t1 + 1):
        at = arr[t] if per_step else arr[0]
        m, _ = m_value(at, t, v[t - 1])
        nxt = {}
        for x, p in dist.items():
            for dx, q in zip((1, 0, -1, -2), transition_probs(x, m, y[t])):
                if q > 0.0:
                    nxt[x + dx] = nxt.get(x + dx, 0.0) + p * q
        dist = nxt
    mean = sum(x * p for x, p in dist.items())
    var = sum((x - mean) ** 2 * p for x, p in dist.items())
    return mean, var


def brute_force_moments(psched, ssched, t0, x0, t1):
    """:func:`enumerate_moments` driven by schedules (``ssched`` must be explicit)."""
    if ssched.kind != "explicit":
        raise DomainError("brute-force moments need an explicit step schedule")
    y = np.asarray(ssched.bits)
    v = 1 + np.cumsum(y)
    return enumerate_moments(psched.values(), y, v, t0, x0, t1)
