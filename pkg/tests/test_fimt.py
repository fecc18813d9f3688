import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dartsprime.fimt import (
    FimtState,
    SchedulerConfig,
    ewma_update,
    fimt_trace,
    schedule_decision,
    should_update_alpha,
    simulate,
    threshold_decrease,
)
from oracles import outer_product_trace


def test_trace_small_vector():
    assert fimt_trace([np.array([1.0, -2.0, 2.0])]) == 9.0
    assert fimt_trace([np.zeros(7)]) == 0.0


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e3, 1e3)))
def test_trace_matches_outer_product(g):
    assert math.isclose(fimt_trace([g]), outer_product_trace(g), rel_tol=1e-12, abs_tol=1e-300)


def test_trace_spans_parameter_blocks():
    rng = np.random.default_rng(0)
    blocks = [rng.normal(size=(3, 4)), rng.normal(size=5)]
    flat = np.concatenate([b.ravel() for b in blocks])
    assert math.isclose(fimt_trace(blocks), outer_product_trace(flat), rel_tol=1e-12)


def test_trace_rejects_non_finite():
    with pytest.raises(ValueError):
        fimt_trace([np.array([1.0, np.nan])])


def test_ewma_arithmetic():
    s = FimtState(h=1.0, h_dec=0.5, ewma=10.0)
    assert ewma_update(s, 5.0, 0.2) == pytest.approx(9.0, abs=1e-15)


def test_ewma_without_memory_and_first_observation():
    s = FimtState(h=1.0, h_dec=0.5, ewma=10.0)
    assert ewma_update(s, 3.0, 1.0) == 3.0
    fresh = FimtState(h=1.0, h_dec=0.5)
    assert ewma_update(fresh, 4.0, 0.2) == 4.0
    with pytest.raises(ValueError):
        ewma_update(fresh, 4.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_ewma_converges_to_constant(lam, start, c):
    s = FimtState(h=1.0, h_dec=0.5, ewma=start)
    for _ in range(5000):
        ewma_update(s, c, lam)
    assert s.ewma == pytest.approx(c, abs=1e-6)


def test_threshold_decrease_value():
    assert threshold_decrease(1.05, 10) == pytest.approx(1.05 ** -10, rel=1e-12)
    assert threshold_decrease(1.05, 10) == pytest.approx(0.6139132535, abs=1e-10)


def test_fire_and_miss_update_threshold():
    s = FimtState.initial(SchedulerConfig())
    s.ewma = 0.5
    assert should_update_alpha(s, 1.05)
    assert s.h == pytest.approx(0.613913, abs=1e-6)
    s = FimtState.initial(SchedulerConfig())
    s.ewma = 2.0
    assert not should_update_alpha(s, 1.05)
    assert s.h == pytest.approx(1.05)


@pytest.mark.parametrize("r", [2, 10, 25])
def test_constant_stream_ratio(r):
    out = simulate(SchedulerConfig(r=r), [1.0] * 100_000)
    fires = sum(f for _, _, f in out)
    misses = len(out) - fires
    # threshold stationarity: h_inc**misses * h_dec**fires = 1, so misses = r * fires
    assert misses / fires == pytest.approx(r, rel=0.05)
    assert fires / len(out) == pytest.approx(1 / (r + 1), rel=0.05)


def test_alternating_and_constant_schedules():
    assert all(schedule_decision(SchedulerConfig("alternating"), None, s) for s in range(50))
    cs = SchedulerConfig("constant", k=10)
    assert [schedule_decision(cs, None, s) for s in range(10)] == [False] * 9 + [True]
    assert sum(schedule_decision(cs, None, s) for s in range(1000)) == 100


def test_decreasing_stream_delays_first_fire():
    cfg = SchedulerConfig()
    stream = 100.0 * cfg.h0 * 0.9 ** np.arange(300)
    out = simulate(cfg, stream)
    first = next(n for n, (f, h, fired) in enumerate(out) if fired)
    crossing = next(n for n, (f, h, _) in enumerate(out) if f < h)
    assert first == crossing > 0
    assert not any(fired for _, _, fired in out[:first])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=200))
def test_threshold_follows_fire_pattern(stream):
    cfg = SchedulerConfig()
    out = simulate(cfg, stream)
    h = cfg.h0
    for f, h_before, fired in out:
        assert h_before == pytest.approx(h, rel=1e-12)
        assert fired == (f < h)
        h *= threshold_decrease(cfg.h_inc, cfg.r) if fired else cfg.h_inc


def test_config_validation():
    for bad in (dict(kind="sometimes"), dict(h0=0.0), dict(h_inc=0.9), dict(lam=1.5), dict(r=0.5),
                dict(kind="constant", k=0)):
        with pytest.raises(ValueError):
            SchedulerConfig(**bad).validate()


def test_step_ratio():
    assert SchedulerConfig("alternating").step_ratio == 1.0
    assert SchedulerConfig("constant", k=10).step_ratio == 10.0
    assert SchedulerConfig(r=25).step_ratio == 25.0
