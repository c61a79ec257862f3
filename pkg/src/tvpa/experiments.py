"""Monte Carlo replication harness and the preset simulation designs.

Every replication ``i`` draws from its own Philox substream keyed by
``(seed, i)``.  Records are stored by replication index before
aggregation, so summaries do not depend on execution order or worker
count.
"""

from __future__ import annotations

import json
import math
import platform
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .changepoint import locate, pair_test, refine_interval, scan, two_step_detect
from .errors import CapacityError, ConfigError
from .estimation import (
    CONVERGED,
    SolverConfig,
    chi2_1_quantile,
    equal_boundaries,
    normal_quantile,
    solve_a,
    standardized_residual,
)
from .process import ParamSchedule, StepSchedule, make_rng, simulate_chain, simulate_graph

ANALYSES = ("estimate", "pair_test", "scan", "refine", "two_step", "locate")


# ---------------------------------------------------------------------------
# designs
# ---------------------------------------------------------------------------


def _three_phase(T, a1, a2, a3):
    return ParamSchedule(((1, a1), (23 * T // 75 + 1, a2), (2 * T // 3 + 1, a3)), T)


def _check_T(T):
    if T % 150 != 0:
        raise ConfigError(f"T={T} must be divisible by 150 so that 23T/75, T/6, T/5, 2T/3 are integers")


def make_section4_design(T, a1=1.0, a2=1.0, a3=1.0):
    """Odd steps are vertex-steps, plus every fifth step in ``[5T/6, T]``.

    Offsets are ``a1`` on ``[1, 23T/75]``, ``a2`` on ``(23T/75, 2T/3]`` and
    ``a3`` on ``(2T/3, T]``.
    """
    _check_T(T)
    return _three_phase(T, a1, a2, a3), section4_steps(T)


def section4_steps(T):
    """The step pattern alone, for any ``T``: odd ``t`` plus ``5s`` for integers ``s`` in ``[T/6, T/5]``."""
    t = np.arange(T + 1)
    y = (t % 2 == 1).astype(np.int64)
    y[5 * np.arange(-(-T // 6), T // 5 + 1)] = 1
    y[0] = 0
    return StepSchedule("explicit", T, bits=y, declared_p=0.4 if T >= 10 else None)


def make_bernoulli_design(T, p, a1=1.0, a2=1.0, a3=1.0):
    _check_T(T)
    return _three_phase(T, a1, a2, a3), StepSchedule.bernoulli(p, T)


def make_vertex_design(T, a1=1.0, a2=1.0, a3=1.0):
    """Pure growth: every step is a vertex-step."""
    _check_T(T)
    y = np.ones(T + 1, dtype=np.int64)
    y[0] = 0
    return _three_phase(T, a1, a2, a3), StepSchedule("explicit", T, bits=y, declared_p=1.0)


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    psched: ParamSchedule
    ssched: StepSchedule
    analysis: str = "estimate"
    n_reps: int = 100
    seed: int = 0
    k: int = 5
    solver: SolverConfig = field(default_factory=SolverConfig)
    scenario: str = "custom"
    params: dict = field(default_factory=dict)
    q_max: int = 3
    k_refine: int = 5
    ct: float | None = None
    method: str = "chi2"
    simulator: str = "chain"
    level: float = 0.95

    def __post_init__(self):
        if self.n_reps < 1:
            raise ConfigError("need at least one replication")
        if self.analysis not in ANALYSES:
            raise ConfigError(f"unknown analysis {self.analysis!r}")
        if self.simulator not in ("chain", "graph"):
            raise ConfigError(f"unknown simulator {self.simulator!r}")
        if self.psched.horizon != self.ssched.horizon:
            raise ConfigError("schedules disagree on the horizon")
        if self.T < 1000:
            raise ConfigError(f"statistical scenarios need T >= 1000, got {self.T}")

    @property
    def T(self):
        return self.psched.horizon

    @property
    def change_points(self):
        """Jump times of the true offset (segments with equal values merged)."""
        segs = self.psched.segments
        return [s for (s, a), (_, prev) in zip(segs[1:], segs[:-1]) if a != prev]

    def describe(self):
        return {
            "scenario": self.scenario,
            "params": self.params,
            "analysis": self.analysis,
            "T": self.T,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "k": self.k,
            "solver": asdict(self.solver),
            "segments": [list(s) for s in self.psched.segments],
            "steps": {"kind": self.ssched.kind, "p": self.ssched.p},
            "q_max": self.q_max,
            "k_refine": self.k_refine,
            "ct": self.ct,
            "method": self.method,
            "simulator": self.simulator,
        }


@dataclass
class SummaryStats:
    config: ExperimentConfig = field(repr=False)
    n_reps: int
    n_failed: int
    columns: list
    rows: dict
    tallies: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict, repr=False)
    failures: list = field(default_factory=list, repr=False)

    def row(self, label):
        return self.rows[label]

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(["statistic"] + [str(c) for c in self.columns]) + "\n")
            for label, vals in self.rows.items():
                fh.write(",".join([label] + [_fmt(v) for v in vals]) + "\n")

    def to_dict(self):
        return {
            "config": self.config.describe(),
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "columns": [str(c) for c in self.columns],
            "rows": {k: [_jsonable(v) for v in vals] for k, vals in self.rows.items()},
            "tallies": {k: {str(kk): vv for kk, vv in v.items()} for k, v in self.tallies.items()},
        }


def _fmt(v):
    if isinstance(v, (tuple, list)):
        return "[" + ";".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# one replication
# ---------------------------------------------------------------------------


def simulate(cfg, i):
    rng = make_rng(cfg.seed, i)
    if cfg.simulator == "graph":
        trace, _ = simulate_graph(cfg.psched, cfg.ssched, seed=rng)
        return trace
    return simulate_chain(cfg.psched, cfg.ssched, seed=rng)


def _interval_truth(a_path, t0, t1):
    seg = a_path[t0 + 1 : t1 + 1]
    return float(seg[0]) if np.all(seg == seg[0]) else None


def _rep_estimate(cfg, trace):
    bounds = equal_boundaries(0, cfg.T, cfg.k)
    a_path = cfg.psched.values()
    rec = {"a_hat": [], "covered": [], "pivot": [], "resid": [], "status": []}
    for t0, t1 in zip(bounds, bounds[1:]):
        est = solve_a(trace, t0, t1, cfg.solver)
        truth = _interval_truth(a_path, t0, t1)
        rec["status"].append(est.status)
        rec["a_hat"].append(est.a_hat)
        ok = est.status == CONVERGED and truth is not None and est.ci is not None
        rec["covered"].append(float(est.ci[0] <= truth <= est.ci[1]) if ok else math.nan)
        rec["pivot"].append(est.pivot(truth) if ok and est.g_at_hat > 0 else math.nan)
        rec["resid"].append(standardized_residual(trace, t0, t1, a_path))
    return rec


def _rep_pair_test(cfg, trace):
    bounds = equal_boundaries(0, cfg.T, cfg.k)
    ests = [solve_a(trace, a, b, cfg.solver) for a, b in zip(bounds, bounds[1:])]
    return {"L": [pair_test(ests[i - 2], ests[i]) for i in range(2, cfg.k)]}


def _rep_scan(cfg, trace):
    sr = scan(trace, cfg.k, ct=cfg.ct, cfg=cfg.solver)
    vals = sorted((sr.L_at(i) for i in sr.local_max_indices), reverse=True)
    return {
        "L": sr.L.tolist(),
        "counts": dict(sr.counts),
        "maxima": vals,
        "top": sr.top_maxima(max(len(cfg.change_points), 1)),
        "boundaries": sr.boundaries,
    }


def _stage_record(rr):
    return [tuple(int(b) for b in s.interval) for s in rr.stages]


def _rep_refine(cfg, trace):
    rr = refine_interval(trace, cfg.k, cfg.q_max, cfg=cfg.solver)
    return {"stages": _stage_record(rr)}


def _rep_two_step(cfg, trace):
    sr = scan(trace, cfg.k, ct=cfg.ct, cfg=cfg.solver)
    results = two_step_detect(trace, cfg.k, cfg.method, cfg.k_refine, cfg.q_max, cfg=cfg.solver, scan_result=sr)
    return {
        "count": sr.counts[cfg.method],
        "domains": [tuple(int(b) for b in r.domain) for r in results],
        "stages": [_stage_record(r) for r in results],
    }


def _rep_locate(cfg, trace):
    res = locate(trace, 0, cfg.T, cfg.solver)
    return {"tau_hat": res.tau_hat, "a_hat": res.a_hat, "peak": res.peak_value}


_DISPATCH = {
    "estimate": _rep_estimate,
    "pair_test": _rep_pair_test,
    "scan": _rep_scan,
    "refine": _rep_refine,
    "two_step": _rep_two_step,
    "locate": _rep_locate,
}


def run_one(cfg, i):
    """Simulate replication ``i`` and apply the configured analysis."""
    trace = simulate(cfg, i)
    try:
        return _DISPATCH[cfg.analysis](cfg, trace)
    except (ArithmeticError, ValueError, CapacityError, RuntimeError) as exc:
        return {"failed": f"{type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _summary_estimate(cfg, recs):
    bounds = equal_boundaries(0, cfg.T, cfg.k)
    a_path = cfg.psched.values()
    cols = [f"({a},{b}]" for a, b in zip(bounds, bounds[1:])]
    truth = [_interval_truth(a_path, a, b) for a, b in zip(bounds, bounds[1:])]
    a_hat = np.array([r["a_hat"] for r in recs])
    conv = np.array([[s == CONVERGED for s in r["status"]] for r in recs])
    cov = np.array([r["covered"] for r in recs], dtype=float)
    piv = np.array([r["pivot"] for r in recs], dtype=float)
    res = np.array([r["resid"] for r in recs], dtype=float)
    rows = {"mean": [], "variance": [], "mean square error": [], "coverage probability": [], "converged": []}
    for j, a in enumerate(truth):
        x = a_hat[conv[:, j], j]
        rows["mean"].append(float(np.mean(x)) if x.size else math.nan)
        rows["variance"].append(float(np.var(x)) if x.size else math.nan)
        rows["mean square error"].append(float(np.mean((x - a) ** 2)) if a is not None and x.size else math.nan)
        c = cov[:, j][~np.isnan(cov[:, j])]
        rows["coverage probability"].append(float(np.mean(c)) if c.size else math.nan)
        rows["converged"].append(float(np.mean(conv[:, j])))
    samples = {"a_hat": a_hat, "pivot": piv, "resid": res, "truth": truth}
    return cols, rows, {}, samples


def _summary_pair_test(cfg, recs):
    L = np.array([r["L"] for r in recs])
    crit = chi2_1_quantile(0.95)
    cols = [f"i={i}" for i in range(2, cfg.k)]
    rows = {
        "mean of L_i": L.mean(axis=0).tolist(),
        "proportion larger than chi2_1(0.95)": (L > crit).mean(axis=0).tolist(),
    }
    return cols, rows, {}, {"L": L}


def _summary_scan(cfg, recs):
    tallies = {f"count_{m}": Counter(r["counts"][m] for r in recs) for m in ("threshold", "chi2", "ratio")}
    pos = Counter()
    for r in recs:
        for i in r["top"]:
            b = r["boundaries"]
            pos[f"({b[i - 1]},{b[i]}]"] += 1
    tallies["top_local_maxima"] = pos
    top = np.array([(r["maxima"] + [math.nan] * 4)[:4] for r in recs])
    cols = ["first", "second", "third", "fourth"]
    cols_ok = [c[~np.isnan(c)] for c in top.T]
    rows = {
        "mean": [float(c.mean()) if c.size else math.nan for c in cols_ok],
        "max": [float(c.max()) if c.size else math.nan for c in cols_ok],
        "min": [float(c.min()) if c.size else math.nan for c in cols_ok],
    }
    counts = {m: np.array([r["counts"][m] for r in recs]) for m in ("threshold", "chi2", "ratio")}
    return cols, rows, tallies, {"top": top, "counts": counts, "top_idx": [r["top"] for r in recs]}


def _stage_rows(stage_lists, truth_t, T):
    n_stage = max(len(s) for s in stage_lists)
    cols = ["V"] + [f"V^({q})" for q in range(1, n_stage)]
    rows = {"number of different intervals": [], "proportion containing the change point": [], "length/T": []}
    tallies = {}
    for q in range(n_stage):
        ivs = [s[q] for s in stage_lists if len(s) > q]
        tallies[cols[q]] = Counter(f"[{a},{b}]" for a, b in ivs)
        rows["number of different intervals"].append(len(set(ivs)))
        rows["proportion containing the change point"].append(
            float(np.mean([a <= truth_t < b for a, b in ivs])) if truth_t is not None else math.nan
        )
        rows["length/T"].append(float(np.mean([(b - a) / T for a, b in ivs])))
    return cols, rows, tallies


def _summary_refine(cfg, recs):
    cps = cfg.change_points
    truth = cps[0] if cps else None
    cols, rows, tallies = _stage_rows([r["stages"] for r in recs], truth, cfg.T)
    return cols, rows, tallies, {"stages": [r["stages"] for r in recs]}


def _summary_two_step(cfg, recs):
    cps = cfg.change_points
    tallies = {"count": Counter(r["count"] for r in recs)}
    rows = {}
    cols = []
    for cp in cps:
        # attach each replication's refinement whose domain is nearest the change point
        lists = []
        for r in recs:
            if not r["domains"]:
                continue
            mids = [abs((a + b) / 2 - cp) for a, b in r["domains"]]
            j = int(np.argmin(mids))
            lists.append([r["domains"][j]] + r["stages"][j])
        if not lists:
            continue
        c, rw, tl = _stage_rows(lists, cp, cfg.T)
        c = ["L"] + c[:-1] if len(c) else c
        c = [f"t={cp}:{x}" for x in c]
        cols += c
        for key, vals in rw.items():
            rows.setdefault(key, []).extend(vals)
        for key, val in zip(c, tl.values()):
            tallies[key] = val
    return cols, rows, tallies, {"records": recs}


def _summary_locate(cfg, recs):
    R = cfg.change_points[-1] if cfg.change_points else cfg.psched.segments[-1][0]
    tau = np.array([r["tau_hat"] for r in recs], dtype=float)
    a_hat = np.array([r["a_hat"] for r in recs])
    err = np.abs(tau - R) / cfg.T
    lo, hi = np.quantile(tau / cfg.T, [0.025, 0.975])
    rows = {
        "the mean of a_hat": [float(a_hat.mean())],
        "the mean of R_hat": [float(tau.mean())],
        "the mean of |R_hat-R|/T": [float(err.mean())],
        "the mean of |R_hat-R|^2/T^2": [float(np.mean(err**2))],
        "the 95% cover interval of R_hat/T": [(float(lo), float(hi))],
    }
    return [f"R={R}"], rows, {}, {"tau_hat": tau, "a_hat": a_hat, "error": err}


_SUMMARIZE = {
    "estimate": _summary_estimate,
    "pair_test": _summary_pair_test,
    "scan": _summary_scan,
    "refine": _summary_refine,
    "two_step": _summary_two_step,
    "locate": _summary_locate,
}


def run_replications(cfg, workers=1, order=None):
    """Run ``cfg.n_reps`` replications and aggregate them.

    ``order`` optionally permutes execution order; results are always merged
    by replication index.
    """
    idx = list(range(cfg.n_reps)) if order is None else list(order)
    if sorted(idx) != list(range(cfg.n_reps)):
        raise ConfigError("order must be a permutation of the replication indices")
    job = partial(run_one, cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(job, idx, chunksize=max(1, len(idx) // (4 * workers))))
    else:
        out = [job(i) for i in idx]
    records = [None] * cfg.n_reps
    for i, rec in zip(idx, out):
        records[i] = rec
    failures = [(i, r["failed"]) for i, r in enumerate(records) if "failed" in r]
    good = [r for r in records if "failed" not in r]
    if not good:
        raise RuntimeError(f"all {cfg.n_reps} replications failed; first: {failures[0][1]}")
    cols, rows, tallies, samples = _SUMMARIZE[cfg.analysis](cfg, good)
    return SummaryStats(cfg, len(good), len(failures), cols, rows, tallies, samples, failures)


def emit_qq(samples):
    """Normal QQ pairs ``(Phi^{-1}((i - 0.5)/n), x_(i))``."""
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[~np.isnan(x)]
    n = x.size
    if n < 20:
        raise CapacityError(f"QQ needs at least 20 samples, got {n}")
    theo = np.array([normal_quantile((i - 0.5) / n) for i in range(1, n + 1)])
    return np.column_stack([theo, x])


# ---------------------------------------------------------------------------
# scenario catalog
# ---------------------------------------------------------------------------


def scenario_configs(sid, n_reps=None, seed=0, T=None, **overrides):
    """Experiment configurations reproducing one simulation study.

    Grids (several offsets, probabilities or horizons) return one config
    per cell.
    """
    sid = sid.upper()

    def cfg(ps_ss, analysis, n, params, **kw):
        ps, ss = ps_ss
        kw.update(overrides)
        return ExperimentConfig(ps, ss, analysis, n_reps or n, seed, scenario=sid, params=params, **kw)

    if sid in ("S1", "S2"):
        T = T or (7500 if sid == "S1" else 15000)
        return [cfg(make_section4_design(T), "estimate", 1000, {"T": T})]
    if sid == "S2B":
        T = T or 7500
        return [cfg(make_section4_design(T, 1, 1, 0.5), "estimate", 1000, {"T": T, "a3": 0.5})]
    if sid == "S3":
        T = T or 7500
        return [cfg(make_section4_design(T, 1, 1, a3), "pair_test", 500, {"T": T, "a3": a3}) for a3 in range(7)]
    if sid == "S4":
        T = T or 7500
        return [cfg(make_section4_design(T, 1, 1, 5), "refine", 500, {"T": T, "a3": 5}, q_max=5)]
    if sid == "S5":
        T = T or 60000
        return [cfg(make_section4_design(T, 1, 5, 1), "scan", 100, {"T": T}, k=30)]
    if sid == "S6":
        T = T or 60000
        return [
            cfg(make_section4_design(T, 1, 5, 1), "scan", 100, {"T": T}, k=30),
            cfg(make_section4_design(T, 1, 5, 1), "two_step", 500, {"T": T}, k=30, q_max=4),
        ]
    if sid == "S7":
        T = T or 7500
        out = []
        for a3 in (1.0, 0.5):
            for p in (0.1, 0.25, 0.5, 0.75, 0.9):
                out.append(cfg(make_bernoulli_design(T, p, 1, 1, a3), "estimate", 1000, {"T": T, "p": p, "a3": a3}))
        return out
    if sid == "S8":
        Ts = [T] if T else [7500, 15000]
        return [
            cfg(make_vertex_design(t, 1, 1, a3), "locate", 1000, {"T": t, "a3": a3}) for t in Ts for a3 in range(6)
        ]
    if sid == "S9":
        Ts = [T] if T else [7500, 15000]
        return [
            cfg(make_bernoulli_design(t, p, 1, 1, 2), "locate", 1000, {"T": t, "p": p, "a3": 2})
            for t in Ts
            for p in (0.2, 0.4, 0.6, 0.8)
        ]
    raise ConfigError(f"unknown scenario {sid!r}; choose S1..S9 or S2b")


SCENARIOS = ("S1", "S2", "S2b", "S3", "S4", "S5", "S6", "S7", "S8", "S9")


def write_results(summaries, out_dir, extra=None):
    """Write one CSV per summary plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for n, s in enumerate(summaries):
        tag = "_".join(f"{k}{v}" for k, v in s.config.params.items())
        name = f"{s.config.scenario}_{n:02d}_{s.config.analysis}{'_' + tag if tag else ''}.csv"
        s.to_csv(out / name)
        entries.append({"table": name, **s.to_dict()})
    manifest = {
        "package": "tvpa",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "runs": entries,
        **(extra or {}),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=_jsonable)
    return manifest


def with_reps(cfg, n_reps):
    return replace(cfg, n_reps=n_reps)
