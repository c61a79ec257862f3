"""Schedules, traces and the two simulators of the time-varying attachment process.

At step ``t`` the graph ``G_{t-1}`` becomes ``G_t`` by a vertex-step
(``y_t = 1``) or an edge-step (``y_t = 0``).  Existing vertices are chosen
with probability proportional to ``d(u) + a_t``.  ``G_0`` is a single vertex
carrying one phantom half-edge, so the degree sum before step ``t`` is
``2t - 1``.

Two simulators are provided: :func:`simulate_graph` runs the full multigraph
and :func:`simulate_chain` samples only the leaf count from its exact
transition kernel.  Their ``x`` marginals agree in distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError, DomainError, TraceFormatError

A_MAX = 1e6


def make_rng(seed, index=None):
    """Philox generator for ``seed``; ``index`` selects an independent substream."""
    if isinstance(seed, np.random.Generator):
        return seed
    if index is None:
        ss = np.random.SeedSequence(int(seed))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSchedule:
    """Piecewise-constant offset ``a_t`` on ``[1, horizon]``.

    ``segments`` is a sequence of ``(start_t, a)`` pairs; each segment runs
    until the next start (or the horizon).
    """

    segments: tuple
    horizon: int

    def __post_init__(self):
        segs = tuple((int(s), float(a)) for s, a in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not segs or segs[0][0] != 1:
            raise ConfigError("first segment must start at t=1")
        starts = [s for s, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError(f"segment starts must be strictly increasing: {starts}")
        if starts[-1] > self.horizon:
            raise ConfigError("segment starts beyond the horizon")
        for _, a in segs:
            if not (a > -1.0) or abs(a) > A_MAX or not math.isfinite(a):
                raise ConfigError(f"offset a={a} outside (-1, {A_MAX:g}]")

    @classmethod
    def constant(cls, a, horizon):
        return cls(((1, a),), horizon)

    def value(self, t):
        if not 1 <= t <= self.horizon:
            raise DomainError(f"t={t} outside [1, {self.horizon}]")
        out = self.segments[0][1]
        for start, a in self.segments:
            if start > t:
                break
            out = a
        return out

    def values(self):
        """Array ``a[t]`` for ``t = 0..horizon``; ``a[0]`` is NaN (no step at 0)."""
        out = np.empty(self.horizon + 1)
        out[0] = np.nan
        bounds = [s for s, _ in self.segments[1:]] + [self.horizon + 1]
        for (start, a), stop in zip(self.segments, bounds):
            out[start:stop] = a
        return out

    def change_points(self):
        """Times at which ``a_t`` jumps (start of every segment but the first)."""
        return [s for s, _ in self.segments[1:]]


def schedule_value(sched: ParamSchedule, t: int) -> float:
    return sched.value(t)


@dataclass(frozen=True)
class StepSchedule:
    """Source of the vertex-step indicators ``y_1..y_T``.

    Either an explicit bit sequence (``bits``, indexed from ``t = 0`` with
    ``bits[0] = 0``) or i.i.d. Bernoulli draws with vertex probability ``p``.
    ``declared_p`` optionally asserts the density bound ``(1 + sum y)/t >= p``.
    """

    kind: str
    horizon: int
    bits: np.ndarray | None = field(default=None, repr=False, compare=False)
    p: float | None = None
    declared_p: float | None = None

    def __post_init__(self):
        if self.kind == "explicit":
            if self.bits is None:
                raise ConfigError("explicit schedule needs bits")
            bits = np.asarray(self.bits, dtype=np.int64)
            if bits.shape != (self.horizon + 1,):
                raise ConfigError(f"bits must have length horizon+1={self.horizon + 1}")
            if bits[0] != 0 or np.any((bits != 0) & (bits != 1)):
                raise ConfigError("bits must be 0/1 with bits[0] = 0")
            bits.setflags(write=False)
            object.__setattr__(self, "bits", bits)
            if self.declared_p is not None:
                dens = running_density(bits)
                if np.any(dens[1:] < self.declared_p):
                    raise ConfigError("vertex-step density falls below declared p")
        elif self.kind == "bernoulli":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ConfigError(f"Bernoulli p must lie in (0, 1], got {self.p}")
        else:
            raise ConfigError(f"unknown step schedule kind {self.kind!r}")

    @classmethod
    def explicit(cls, y_steps, declared_p=None):
        """Build from ``y_1..y_T`` (without the leading ``y_0``)."""
        y = np.concatenate([[0], np.asarray(y_steps, dtype=np.int64)])
        return cls("explicit", len(y) - 1, bits=y, declared_p=declared_p)

    @classmethod
    def bernoulli(cls, p, horizon):
        return cls("bernoulli", horizon, p=float(p))

    def realize(self, rng):
        if self.kind == "explicit":
            return np.array(self.bits)
        y = (rng.random(self.horizon + 1) < self.p).astype(np.int64)
        y[0] = 0
        return y


def running_density(y):
    """``(1 + sum_{s<=t} y_s) / t`` for ``t >= 1`` (entry 0 is ``inf``)."""
    v = 1 + np.cumsum(y)
    t = np.arange(len(y), dtype=float)
    with np.errstate(divide="ignore"):
        return v / t


# ---------------------------------------------------------------------------
# states and traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainState:
    t: int = 0
    x: int = 1
    v: int = 1

    def __post_init__(self):
        if not (0 <= self.x <= self.v <= self.t + 1):
            raise DomainError(f"invalid chain state {self}")


@dataclass(frozen=True)
class GraphState:
    t: int
    degrees: np.ndarray = field(repr=False)
    excess_endpoints: np.ndarray = field(repr=False)
    v: int
    x: int

    def check(self):
        assert self.degrees.sum() == 2 * self.t + 1
        assert len(self.excess_endpoints) == 2 * self.t + 1 - self.v
        assert self.x == int(np.sum(self.degrees == 1))
        assert len(self.degrees) == self.v


@dataclass(frozen=True)
class Trace:
    """Observed series ``(y_t, v_t, x_t)`` for ``t = 0..T``."""

    y: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    a_true: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("y", "v", "x"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, arr)
        if self.a_true is not None:
            object.__setattr__(self, "a_true", np.asarray(self.a_true, dtype=float))

    @property
    def T(self):
        return len(self.x) - 1

    def validate(self):
        y, v, x = self.y, self.v, self.x
        if not (len(y) == len(v) == len(x)) or len(x) < 1:
            raise TraceFormatError("columns y, v, x must have equal nonzero length")
        if self.a_true is not None and len(self.a_true) != len(x):
            raise TraceFormatError("a_true column has the wrong length")
        if (y[0], v[0], x[0]) != (0, 1, 1):
            raise TraceFormatError(f"row t=0 must be (0, 1, 1), got {(y[0], v[0], x[0])}")
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise TraceFormatError(f"y not in {{0,1}} at t={bad[0]}")
        bad = np.flatnonzero(np.diff(v) != y[1:])
        if bad.size:
            raise TraceFormatError(f"v_t - v_(t-1) != y_t at t={bad[0] + 1}")
        dx = np.diff(x)
        bad = np.flatnonzero((dx > 1) | (dx < -2))
        if bad.size:
            raise TraceFormatError(f"leaf count jump {dx[bad[0]]} at t={bad[0] + 1}")
        bad = np.flatnonzero((x > v) | (x < 0))
        if bad.size:
            raise TraceFormatError(f"x_t outside [0, v_t] at t={bad[0]}")
        return self

    def to_csv(self, path):
        path = Path(path)
        has_a = self.a_true is not None
        with open(path, "w", newline="\n") as fh:
            fh.write("t,y,v,x,a_true\n" if has_a else "t,y,v,x\n")
            for t in range(self.T + 1):
                row = f"{t},{self.y[t]},{self.v[t]},{self.x[t]}"
                if has_a:
                    row += f",{float(self.a_true[t])!r}"
                fh.write(row + "\n")

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise TraceFormatError(f"{path}: empty file")
        header = lines[0].strip().split(",")
        if header not in (["t", "y", "v", "x"], ["t", "y", "v", "x", "a_true"]):
            raise TraceFormatError(f"{path}:1: bad header {lines[0]!r}")
        ncol = len(header)
        rows = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != ncol:
                raise TraceFormatError(f"{path}:{lineno}: expected {ncol} fields, got {len(parts)}")
            try:
                t, y, v, x = (int(p) for p in parts[:4])
                a = float(parts[4]) if ncol == 5 else None
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
            if t != len(rows):
                raise TraceFormatError(f"{path}:{lineno}: expected t={len(rows)}, got {t}")
            rows.append((y, v, x, a))
        if not rows:
            raise TraceFormatError(f"{path}: no data rows")
        y, v, x, a = zip(*rows)
        trace = cls(np.array(y), np.array(v), np.array(x), np.array(a, dtype=float) if ncol == 5 else None)
        return trace.validate()


# ---------------------------------------------------------------------------
# transition kernel
# ---------------------------------------------------------------------------


def transition_probs(x, m, y):
    """Probabilities of ``dx = +1, 0, -1, -2`` for one step with leaf weight ``m``.

    A vertex-step adds a leaf and destroys one if it attaches to a leaf.  An
    edge-step draws two endpoints independently; a repeated leaf is a
    self-loop and removes only that leaf.
    """
    if x < 0 or not 0 <= m <= 1:
        raise DomainError(f"need x >= 0 and 0 <= m <= 1, got x={x}, m={m}")
    mx = m * x
    if mx > 1:
        raise DomainError(f"m*x = {mx} > 1: inconsistent state")
    # integer literals keep the arithmetic exact when m is a Fraction
    if y:
        return (1 - mx, mx, 0 * m, 0 * m)
    return (0 * m, (1 - mx) ** 2, 2 * mx * (1 - mx) + x * m * m, (x - 1) * x * m * m)


@njit(cache=True)
def _chain_kernel(a, y, x, v, t0, u):
    T = len(y) - 1
    for t in range(t0 + 1, T + 1):
        xp = x[t - 1]
        vp = v[t - 1]
        at = a[t]
        m = (1.0 + at) / (2.0 * t - 1.0 + at * vp)
        mx = m * xp
        if mx > 1.0 + 1e-12:
            raise ValueError("m*x > 1 in chain simulation")
        if y[t] == 1:
            dx = 1 if u[t] < 1.0 - mx else 0
            v[t] = vp + 1
        else:
            p0 = (1.0 - mx) * (1.0 - mx)
            p1 = 2.0 * mx * (1.0 - mx) + xp * m * m
            if u[t] < p0:
                dx = 0
            elif u[t] < p0 + p1:
                dx = -1
            else:
                dx = -2
            v[t] = vp
        x[t] = xp + dx


@njit(cache=True)
def _draw_endpoint(uu, t, v, at, excess, n_exc):
    # weight d(u)+a = (d(u)-1) excess units + (1+a) per vertex
    e = 2 * t - 1 - v
    w = uu * (e + v * (1.0 + at))
    if w < e:
        idx = int(w)
        if idx >= n_exc:
            idx = n_exc - 1
        return excess[idx]
    idx = int((w - e) / (1.0 + at))
    if idx >= v:
        idx = v - 1
    return idx


@njit(cache=True)
def _graph_kernel(a, y, u, deg, excess, x_out, v_out):
    T = len(y) - 1
    v = 1
    x = 1
    n_exc = 0
    deg[0] = 1
    x_out[0] = 1
    v_out[0] = 1
    for t in range(1, T + 1):
        at = a[t]
        if n_exc != 2 * t - 1 - v:
            raise ValueError("excess endpoint bookkeeping broken")
        if y[t] == 1:
            w = _draw_endpoint(u[t, 0], t, v, at, excess, n_exc)
            if deg[w] == 1:
                x -= 1
            deg[w] += 1
            excess[n_exc] = w
            n_exc += 1
            deg[v] = 1
            v += 1
            x += 1
        else:
            p = _draw_endpoint(u[t, 0], t, v, at, excess, n_exc)
            q = _draw_endpoint(u[t, 1], t, v, at, excess, n_exc)
            if deg[p] == 1:
                x -= 1
            deg[p] += 1
            excess[n_exc] = p
            n_exc += 1
            if deg[q] == 1:
                x -= 1
            deg[q] += 1
            excess[n_exc] = q
            n_exc += 1
        x_out[t] = x
        v_out[t] = v
    return v, n_exc


def _check_horizon(psched, ssched, T):
    T = psched.horizon if T is None else int(T)
    if psched.horizon < T or ssched.horizon < T:
        raise ConfigError(f"schedules cover {psched.horizon}/{ssched.horizon} steps, need {T}")
    return T


def simulate_graph(psched, ssched, T=None, seed=0):
    """Run the multigraph process; returns ``(Trace, GraphState)``.

    ``seed`` may be an int or an existing ``numpy.random.Generator``.
    """
    T = _check_horizon(psched, ssched, T)
    rng = make_rng(seed)
    y = ssched.realize(rng)[: T + 1]
    a = psched.values()[: T + 1]
    u = rng.random((T + 1, 2))
    deg = np.zeros(T + 2, dtype=np.int64)
    excess = np.zeros(2 * T + 1, dtype=np.int64)
    x = np.zeros(T + 1, dtype=np.int64)
    v = np.zeros(T + 1, dtype=np.int64)
    nv, n_exc = _graph_kernel(a, y, u, deg, excess, x, v)
    trace = Trace(y, v, x, a)
    state = GraphState(T, deg[:nv].copy(), excess[:n_exc].copy(), int(nv), int(x[T]))
    return trace, state


def simulate_chain(psched, ssched, T=None, seed=0, init=None):
    """Sample the leaf-count chain directly from the transition kernel.

    With ``init`` at time ``t0 > 0`` the rows before ``t0`` are filled with
    the initial state and carry no information.
    """
    T = _check_horizon(psched, ssched, T)
    init = ChainState() if init is None else init
    rng = make_rng(seed)
    y = ssched.realize(rng)[: T + 1]
    a = psched.values()[: T + 1]
    u = rng.random(T + 1)
    x = np.zeros(T + 1, dtype=np.int64)
    v = np.zeros(T + 1, dtype=np.int64)
    x[: init.t + 1] = init.x
    v[: init.t + 1] = init.v
    if init.t > 0:
        # keep the stored prefix consistent with v: no vertex-steps before t0
        y[: init.t + 1] = 0
    try:
        _chain_kernel(a, y, x, v, init.t, u)
    except ValueError as exc:
        raise DomainError(str(exc)) from None
    return Trace(y, v, x, a)
