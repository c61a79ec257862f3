import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import vertex_bits
from tvpa.errors import CapacityError, DomainError
from tvpa.experiments import make_section4_design
from tvpa.moments import (
    _matrix,
    brute_force_moments,
    conditional_mean,
    conditional_moments,
    enumerate_moments,
    m_value,
    mean_path,
    moment_state,
    step_matrix,
)
from tvpa.process import ParamSchedule, StepSchedule, transition_probs

DX = (1, 0, -1, -2)


def _yv(y_steps):
    y = vertex_bits(y_steps)
    return y, 1 + np.cumsum(y)


# --- m_t and A_t -----------------------------------------------------------


@pytest.mark.parametrize("a", [-0.9, 0.0, 1.0, 7.5])
def test_first_step_weight_is_one(a):
    assert m_value(a, 1, 1)[0] == pytest.approx(1.0, abs=1e-15)


def test_m_value_hand_examples():
    m, dm = m_value(1.0, 3, 3)
    assert m == 0.25 and dm == 0.03125
    assert m_value(0.0, 10, 5)[0] == pytest.approx(1 / 19, rel=1e-15)


def test_m_value_rejects_nonpositive_denominator():
    with pytest.raises(DomainError):
        m_value(-1.0, 1, 1)


def test_vertex_step_matrix_mean_row():
    sm = step_matrix(1.0, 5, 4, 1)
    assert sm.A[1].tolist() == [0.0, 1 - sm.m, 1.0]


@pytest.mark.parametrize("y", [0, 1])
def test_zero_weight_is_pure_counting(y):
    A = _matrix(0.0, y)
    x = 4.0
    assert A[1] @ [x * x, x, 1] == x + y
    assert A[0] @ [x * x, x, 1] == pytest.approx((x + y) ** 2)


def test_matrix_reproduces_kernel_moments():
    x, m = 2, 0.1
    p = transition_probs(x, m, 0)
    mean = x + sum(d * q for d, q in zip(DX, p))
    second = sum((x + d) ** 2 * q for d, q in zip(DX, p))
    A = _matrix(m, 0)
    assert A[1] @ [4, 2, 1] == pytest.approx(mean, rel=1e-15)
    assert A[0] @ [4, 2, 1] == pytest.approx(second, rel=1e-15)


# --- conditional moments ---------------------------------------------------


def test_two_step_hand_recursion():
    y, v = _yv([1, 1])
    f, g, _, _ = conditional_moments(1.0, y, v, 0, 1, 2)
    assert f == pytest.approx(1.6, abs=1e-14)
    assert g == pytest.approx(0.24, abs=1e-14)
    assert enumerate_moments(1.0, y, v, 0, 1, 2) == pytest.approx((1.6, 0.24), abs=1e-14)


def test_brute_force_on_schedules():
    ps = ParamSchedule.constant(1.0, 2)
    ss = StepSchedule.explicit([1, 1])
    assert brute_force_moments(ps, ss, 0, 1, 2) == pytest.approx((1.6, 0.24), abs=1e-14)
    with pytest.raises(DomainError):
        brute_force_moments(ps, StepSchedule.bernoulli(0.5, 2), 0, 1, 2)


def test_empty_interval():
    y, v = _yv([1, 0, 1])
    assert enumerate_moments(1.0, y, v, 2, 2, 2) == (2, 0)
    assert conditional_moments(1.0, y, v, 2, 2, 2) == (2.0, 0.0, 0.0, 0.0)


def test_enumeration_capacity():
    y, v = _yv([1] * 20)
    with pytest.raises(CapacityError):
        enumerate_moments(1.0, y, v, 0, 1, 15)


@st.composite
def small_instances(draw):
    # prefix of three vertex-steps makes x0 in {1, 2, 3} reachable
    pattern = draw(st.lists(st.integers(0, 1), min_size=1, max_size=10))
    return (
        [1, 1, 1] + pattern,
        draw(st.sampled_from([-0.9, -0.5, 0.0, 0.3, 1.0, 5.0])),
        draw(st.integers(1, 3)),
    )


@given(small_instances())
def test_recursion_matches_enumeration(inst):
    steps, a, x0 = inst
    y, v = _yv(steps)
    t1 = len(steps)
    f, g, _, _ = conditional_moments(a, y, v, 3, x0, t1)
    ef, eg = enumerate_moments(a, y, v, 3, x0, t1)
    assert abs(f - ef) <= 1e-10 and abs(g - eg) <= 1e-10


def test_recursion_matches_enumeration_per_step_offsets():
    y, v = _yv([1, 0, 1, 1, 0, 0, 1, 0, 1])
    a = np.array([np.nan, 1, 1, 1, 0.5, 0.5, 3, 3, 3, 3])
    f, g, _, _ = conditional_moments(a, y, v, 1, 1, 9)
    assert (f, g) == pytest.approx(enumerate_moments(a, y, v, 1, 1, 9), abs=1e-10)


def test_state_at_start():
    y, v = _yv([1, 0, 1])
    s = moment_state(2.0, y, v, 2, 2, 2)
    assert (s.s1, s.s2, s.ds1, s.ds2) == (2.0, 4.0, 0.0, 0.0)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=200), st.floats(-0.99, 20), st.integers(0, 2))
def test_state_invariants(steps, a, t0):
    y, v = _yv([1, 1, 1] + steps)
    x0 = min(int(v[t0]), 2)
    s = moment_state(a, y, v, t0, x0, len(steps) + 3)
    assert s.s1 >= 0
    assert s.variance >= -1e-9 * max(1.0, s.s2)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=60).filter(lambda s: 1 in s), st.integers(1, 3))
def test_mean_decreasing_in_a(steps, x0):
    y, v = _yv([1, 1, 1] + steps)
    grid = [-0.99, -0.5, 0, 1, 2, 5, 20]
    t1 = len(steps) + 3
    fs = [conditional_moments(a, y, v, 3, x0, t1) for a in grid]
    assert all(m.df <= 0 for m in fs)
    assert all(b.f < a.f for a, b in zip(fs, fs[1:]))
    # the a -> -1 ceiling
    ceiling = x0 + v[t1] - v[3]
    assert all(m.f <= ceiling for m in fs)


def test_ceiling_reached_near_minus_one():
    y, v = _yv([1, 0, 1, 1, 0, 1, 0, 0, 1])
    f = conditional_mean(-1 + 1e-12, y, v, 2, 1, 9)
    assert f == pytest.approx(1 + v[9] - v[2], abs=1e-9)


@pytest.mark.parametrize("T", [150, 300, 450])
@pytest.mark.parametrize("a", [-0.5, 0.0, 1.0, 3.0])
def test_derivatives_match_finite_differences(T, a):
    ps, ss = make_section4_design(T)
    y = np.asarray(ss.bits)
    v = 1 + np.cumsum(y)
    h = 1e-4
    for t0, t1 in [(0, T), (T // 3, T), (2, T // 2)]:
        x0 = min(int(v[t0]), max(1, t0 // 3))
        m = conditional_moments(a, y, v, t0, x0, t1)
        up = conditional_moments(a + h, y, v, t0, x0, t1)
        dn = conditional_moments(a - h, y, v, t0, x0, t1)
        fd_f = (up.f - dn.f) / (2 * h)
        fd_g = (up.g - dn.g) / (2 * h)
        assert abs(m.df - fd_f) <= 1e-5 * abs(fd_f)
        assert abs(m.dg - fd_g) <= 1e-5 * abs(fd_g)


@pytest.mark.parametrize("T", [1500, 7500])
def test_variance_order_on_design(T):
    ps, ss = make_section4_design(T)
    y = np.asarray(ss.bits)
    v = 1 + np.cumsum(y)
    for t0, t1 in itertools.pairwise([0, T // 5, 2 * T // 5, T]):
        g = conditional_moments(1.0, y, v, t0, max(1, t0 // 4), t1).g
        assert 1e-3 < g / (t1 - t0) < 10


def test_mean_path_agrees_with_endpoint_values(design7500):
    ps, ss = design7500
    y = np.asarray(ss.bits)
    v = 1 + np.cumsum(y)
    path = mean_path(1.3, y, v, 100, 30, 2000)
    assert len(path) == 1901 and path[0] == 30
    assert path[-1] == pytest.approx(conditional_mean(1.3, y, v, 100, 30, 2000), rel=1e-14)
    assert path[900] == pytest.approx(conditional_moments(1.3, y, v, 100, 30, 1000).f, rel=1e-14)
    const = np.full(len(y), 1.3)
    assert np.allclose(mean_path(const, y, v, 100, 30, 2000), path, rtol=1e-15)


def test_rejects_offsets_at_or_below_minus_one():
    y, v = _yv([1, 1, 0])
    with pytest.raises(DomainError):
        conditional_moments(-1.0, y, v, 0, 1, 3)
    with pytest.raises(DomainError):
        conditional_moments(1.0, y, v, 0, 1, 9)
