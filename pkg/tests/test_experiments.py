import json
import random

import jsonschema
import numpy as np
import pytest

from tvpa import experiments
from tvpa.errors import CapacityError, ConfigError
from tvpa.estimation import normal_quantile
from tvpa.experiments import (
    SCENARIOS,
    ExperimentConfig,
    emit_qq,
    make_bernoulli_design,
    make_section4_design,
    run_one,
    run_replications,
    scenario_configs,
    write_results,
)
from tvpa.process import running_density
from tvpa.schemas import MANIFEST


def test_three_phase_design_steps():
    ps, ss = make_section4_design(7500)
    y = ss.bits
    assert (y[1], y[2], y[3]) == (1, 0, 1)
    assert np.all(y[np.arange(6250, 7501, 5)] == 1)
    t = np.arange(1, 7501)
    extra = (t % 2 == 0) & (t % 5 == 0) & (t >= 6250)
    assert np.array_equal(y[1:] == 1, (t % 2 == 1) | extra)
    assert np.all(running_density(y)[10:] >= 0.4)


def test_three_phase_design_offsets():
    ps, _ = make_section4_design(7500, 1, 2, 3)
    assert ps.value(2300) == 1 and ps.value(2301) == 2
    assert ps.value(5000) == 2 and ps.value(5001) == 3


@pytest.mark.parametrize("T", [7000, 100, 7525])
def test_three_phase_design_divisibility(T):
    with pytest.raises(ConfigError):
        make_section4_design(T)


def test_config_invariants():
    ps, ss = make_section4_design(1500)
    with pytest.raises(ConfigError):
        ExperimentConfig(ps, ss, n_reps=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(ps, ss, analysis="fit")
    ps150, ss150 = make_section4_design(150)
    with pytest.raises(ConfigError):
        ExperimentConfig(ps150, ss150)


def test_change_points_merge_equal_segments():
    ps, ss = make_section4_design(1500, 1, 1, 3)
    assert ExperimentConfig(ps, ss).change_points == [1001]


def _cfg(analysis="estimate", n=12, **kw):
    ps, ss = make_section4_design(1500, 1, 1, kw.pop("a3", 1))
    return ExperimentConfig(ps, ss, analysis, n_reps=n, seed=kw.pop("seed", 5), **kw)


def test_single_replication_summary():
    cfg = _cfg(n=1)
    s = run_replications(cfg)
    rec = run_one(cfg, 0)
    assert s.row("mean") == pytest.approx(rec["a_hat"], abs=0)
    assert s.row("variance") == [0.0] * 5


def _same(a, b):
    assert a.rows.keys() == b.rows.keys()
    for k in a.rows:
        np.testing.assert_array_equal(np.asarray(a.rows[k], dtype=float), np.asarray(b.rows[k], dtype=float))
    assert a.tallies == b.tallies


@pytest.mark.parametrize("analysis", ["estimate", "pair_test", "scan", "refine", "locate"])
def test_seed_determinism_and_order_independence(analysis):
    kw = {"k": 10} if analysis == "scan" else {}
    cfg = _cfg(analysis, a3=4, **kw)
    a = run_replications(cfg)
    b = run_replications(cfg)
    order = list(range(cfg.n_reps))
    random.Random(1).shuffle(order)
    c = run_replications(cfg, order=order)
    _same(a, b)
    _same(a, c)


def test_workers_do_not_change_results():
    cfg = _cfg(n=8)
    _same(run_replications(cfg), run_replications(cfg, workers=2))


def test_failures_are_tallied(monkeypatch):
    def flaky(cfg, trace):
        if trace.x[-1] % 2:
            raise ArithmeticError("odd leaf count")
        return experiments._rep_estimate(cfg, trace)

    monkeypatch.setitem(experiments._DISPATCH, "estimate", flaky)
    cfg = _cfg(n=30)
    s = run_replications(cfg)
    assert s.n_failed + s.n_reps == 30
    assert 0 < s.n_failed < 30
    assert all("odd leaf count" in msg for _, msg in s.failures)


def test_all_failures_raise():
    with pytest.raises(RuntimeError):
        run_replications(_cfg("scan", k=20))


def test_summary_invariants():
    for a3 in (1, 0.5, 3):
        s = run_replications(_cfg(n=40, a3=a3))
        for var, mse, cov in zip(s.row("variance"), s.row("mean square error"), s.row("coverage probability")):
            assert var >= 0
            if not np.isnan(mse):
                assert mse >= var - 1e-12
            if not np.isnan(cov):
                assert 0 <= cov <= 1


def test_straddling_interval_has_no_coverage():
    ps, ss = make_section4_design(1500, 1, 1, 0.5)
    # the change at t = 1001 starts the last of three intervals but splits the second of two
    s = run_replications(ExperimentConfig(ps, ss, n_reps=10, k=3))
    assert not np.isnan(s.row("coverage probability")).any()
    s = run_replications(ExperimentConfig(ps, ss, n_reps=10, k=2))
    assert np.isnan(s.row("coverage probability")[1])


def test_bernoulli_design_realizes_per_replication():
    ps, ss = make_bernoulli_design(1500, 0.5)
    cfg = ExperimentConfig(ps, ss, n_reps=2)
    a, b = experiments.simulate(cfg, 0), experiments.simulate(cfg, 1)
    assert not np.array_equal(a.y, b.y)


def test_scenario_catalog():
    for sid in SCENARIOS:
        cfgs = scenario_configs(sid, n_reps=2)
        assert cfgs and all(c.scenario == sid.upper() for c in cfgs)
    assert len(scenario_configs("S3")) == 7
    assert len(scenario_configs("S7")) == 10
    with pytest.raises(ConfigError):
        scenario_configs("S10")


def test_s1_table_shape():
    s = run_replications(scenario_configs("S1", n_reps=60, seed=3)[0])
    assert s.columns == ["(0,1500]", "(1500,3000]", "(3000,4500]", "(4500,6000]", "(6000,7500]"]
    assert list(s.rows) == ["mean", "variance", "mean square error", "coverage probability", "converged"]
    assert all(0.85 <= c <= 1.0 for c in s.row("coverage probability"))


def test_s3_rejection_table_shape():
    summaries = [run_replications(c) for c in scenario_configs("S3", n_reps=30, T=1500)]
    rej = [s.row("proportion larger than chi2_1(0.95)")[2] for s in summaries]
    assert rej[1] <= 0.2 and rej[6] >= 0.5


def test_results_and_manifest(tmp_path):
    s = run_replications(_cfg(n=5))
    manifest = write_results([s], tmp_path, extra={"seed": 5})
    jsonschema.validate(json.loads((tmp_path / "manifest.json").read_text()), MANIFEST)
    table = tmp_path / manifest["runs"][0]["table"]
    lines = table.read_text().splitlines()
    assert lines[0].startswith("statistic,(0,300]") and len(lines) == 6


def test_qq_on_normal_positions():
    n = 1000
    # Blom plotting positions: a perfectly normal sample, shuffled
    x = np.array([normal_quantile((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    np.random.default_rng(0).shuffle(x)
    qq = emit_qq(x)
    assert np.all(np.diff(qq[:, 1]) >= 0)
    assert np.max(np.abs(qq[:, 0] - qq[:, 1])) <= 0.15


def test_qq_constant_and_capacity():
    qq = emit_qq(np.full(25, 2.5))
    assert np.all(qq[:, 1] == 2.5)
    assert qq[0, 0] == pytest.approx(normal_quantile(0.5 / 25))
    with pytest.raises(CapacityError):
        emit_qq(np.zeros(19))
