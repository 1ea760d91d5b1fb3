import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from aoskit.ctmc import DomainError, SymmetricSourceParams
from aoskit.metrics import aoi_mean, aos_mean, eq22_fraction
from aoskit.sim import (
    EventLog,
    SimConfig,
    UnderSampleError,
    aos_value_at,
    breakpoint_curves,
    integrate_metrics,
    replicate,
    simulate,
)

J, D = 0, 1


def make_log(n, x0, horizon, events):
    """``events`` is a list of ``(t, 'j', state)`` or ``(t, 'd', value, gen_time)``."""
    times, kinds, values, gens = [], [], [], []
    for ev in events:
        times.append(ev[0])
        kinds.append(J if ev[1] == "j" else D)
        values.append(ev[2])
        gens.append(ev[3] if ev[1] == "d" else np.nan)
    return EventLog(n, x0, horizon, np.array(times, dtype=float), np.array(kinds, dtype=np.int8),
                    np.array(values, dtype=np.int64), np.array(gens, dtype=float))


def cfg(n=2, sigma=1.0, lam=1.0, horizon=2000.0, seed=3, **kw):
    return SimConfig(SymmetricSourceParams(n, sigma), lam, horizon, seed=seed, **kw)


# ---- hand-built logs -------------------------------------------------------


def test_single_unmatched_interval_trapezoid():
    # source leaves 0 at 0.5; the estimate 0 lands at 1 and stays wrong until 2
    log = make_log(3, 0, 2.0, [(0.5, "j", 1), (1.0, "d", 0, 0.0)])
    r = integrate_metrics(log, (1.0, 2.0))
    a, d = 0.5, 1.0
    assert r.mean_aos == pytest.approx(a * d + d * d / 2)
    assert r.mean_aoii == pytest.approx(1.0)
    assert r.mean_aoi == pytest.approx(1.5)
    assert r.mean_bf == 0.0


def test_fully_matched_window():
    log = make_log(3, 2, 10.0, [(1.0, "d", 2, 0.0), (4.0, "d", 2, 1.0)])
    r = integrate_metrics(log, (1.0, 10.0))
    assert (r.mean_aos, r.mean_aoii, r.mean_bf) == (0.0, 0.0, 1.0)


def test_aoi_period_decomposition():
    # periods L = 1, 2, 3 with back-to-back transmissions
    log = make_log(2, 0, 6.0, [(1.0, "d", 0, 0.0), (3.0, "d", 0, 1.0), (6.0, "d", 0, 3.0)])
    r = integrate_metrics(log, (1.0, 6.0))
    L = [1.0, 2.0, 3.0]
    per_period = sum(0.5 * L[i] ** 2 + L[i - 1] * L[i] for i in (1, 2))
    assert r.mean_aoi * 5.0 == pytest.approx(per_period)


def test_aos_drops_when_estimate_switches_to_fresher_state():
    log = make_log(3, 0, 6.0, [(1.0, "d", 0, 0.0), (2.0, "j", 1), (3.0, "d", 0, 1.0),
                               (4.0, "j", 2), (5.0, "d", 1, 3.0)])
    c = breakpoint_curves(log)
    i = np.flatnonzero(c["t"] == 5.0)
    before, after = c["aos"][i]
    assert before == pytest.approx(3.0)
    assert after == pytest.approx(1.0)


def test_binary_stale_delivery_separates_aos_from_aoii():
    # a delivery carrying a stale sample while the estimate was right:
    # AoII restarts from zero, AoS keeps counting from the last exit of the new value
    log = make_log(2, 0, 3.5, [(1.0, "d", 0, 0.0), (1.5, "j", 1), (2.0, "d", 0, 1.0),
                               (2.5, "j", 0), (3.0, "d", 1, 2.0)])
    r = integrate_metrics(log, (3.0, 3.5))
    assert r.mean_aos == pytest.approx(0.75)
    assert r.mean_aoii == pytest.approx(0.25)


def test_integrate_errors():
    log = make_log(2, 0, 5.0, [(1.0, "d", 0, 0.0)])
    with pytest.raises(ValueError):
        integrate_metrics(log, (2.0, 2.0))
    with pytest.raises(ValueError):
        integrate_metrics(log, (0.5, 2.0))
    with pytest.raises(ValueError):
        integrate_metrics(log, (1.0, 6.0))
    bad = make_log(2, 0, 5.0, [(1.0, "d", 1, 0.0)])
    with pytest.raises(ValueError):
        integrate_metrics(bad, (1.0, 5.0))


def test_aos_value_at():
    assert aos_value_at(7.0, 1, 1, [math.nan, math.nan]) == 0.0
    assert aos_value_at(5.0, 0, 2, [0.0, 1.0, 3.0]) == 2.0
    with pytest.raises(AssertionError):
        aos_value_at(5.0, 0, 1, [0.0, math.nan])


# ---- compiled kernel -------------------------------------------------------


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 6), st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.integers(0, 2**32))
def test_kernel_matches_python_replay(n, sigma, lam, seed):
    rep, log = simulate(cfg(n, sigma, lam, horizon=300.0, seed=seed), record_log=True)
    t0 = log.delivery_times[0]
    ref = integrate_metrics(log, (t0, log.horizon))
    for m in ("aos", "aoii", "aoi", "bf"):
        assert getattr(rep, f"mean_{m}") == pytest.approx(getattr(ref, f"mean_{m}"), rel=1e-9, abs=1e-12)
    assert rep.measured_time == pytest.approx(ref.measured_time)
    assert rep.n_deliveries == ref.n_deliveries


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.integers(0, 2**32))
def test_dominance_and_reset_on_trajectories(n, sigma, lam, seed):
    rep, log = simulate(cfg(n, sigma, lam, horizon=300.0, seed=seed), record_log=True)
    c = breakpoint_curves(log)
    assert np.all(c["aos"] <= c["aoi"] + 1e-12)
    assert np.all(c["aos"][c["matched"]] == 0.0)
    # an unmatched zero only occurs at the instant the source leaves the estimate
    # the first delivery only has a right limit
    aos, matched = c["aos"][1:], c["matched"][1:]
    left, right = aos[0::2], aos[1::2]
    lm, rm = matched[0::2], matched[1::2]
    assert np.all(lm[(right == 0.0) & ~rm])
    assert np.all(left[~lm] > 0.0)
    assert rep.dominance_violations == 0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.integers(0, 2**32))
def test_binary_aoii_never_exceeds_aos(sigma, lam, seed):
    _, log = simulate(cfg(2, sigma, lam, horizon=300.0, seed=seed), record_log=True)
    c = breakpoint_curves(log)
    assert np.all(c["aoii"] <= c["aos"] + 1e-12)


def test_event_log_invariants():
    _, log = simulate(cfg(4, 1.0, 0.7, horizon=500.0), record_log=True)
    assert np.all(np.diff(log.times) >= 0)
    jumps = log.values[log.kinds == J]
    assert np.all((0 <= jumps) & (jumps < 4))
    # every delivery carries the state sampled at the previous delivery
    d = np.flatnonzero(log.kinds == D)
    assert np.array_equal(log.gen_times[d[1:]], log.times[d[:-1]])
    assert log.gen_times[d[0]] == 0.0


def test_determinism_and_csv_roundtrip(tmp_path):
    c = cfg(3, 1.2, 0.8, horizon=400.0, seed=99)
    r1, log1 = simulate(c, record_log=True)
    r2, log2 = simulate(c, record_log=True)
    assert r1.as_dict() == r2.as_dict()
    assert np.array_equal(log1.times, log2.times) and np.array_equal(log1.values, log2.values)
    assert simulate(c).as_dict() == r1.as_dict()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    log1.write_csv(p1)
    log2.write_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "t,kind,value,gen_time"
    assert lines[1].startswith("0,jump,")
    back = EventLog.read_csv(p1, 3, 400.0)
    ref = integrate_metrics(log1, (log1.delivery_times[0], 400.0))
    again = integrate_metrics(back, (back.delivery_times[0], 400.0))
    assert again.mean_aos == pytest.approx(ref.mean_aos, rel=1e-9)


def test_different_seeds_differ():
    assert simulate(cfg(seed=1)).mean_aos != simulate(cfg(seed=2)).mean_aos


def test_under_sample_error():
    with pytest.raises(UnderSampleError):
        simulate(cfg(lam=1e-3, horizon=1e-3, seed=0))
    with pytest.raises(UnderSampleError):
        simulate(cfg(lam=1.0, horizon=5.0, warmup_deliveries=10_000))


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(horizon=0.0), dict(horizon=math.inf),
                                dict(warmup=5.0, horizon=5.0), dict(n_batches=0)])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        cfg(**kw)


def test_warmup_shifts_window():
    rep = simulate(cfg(horizon=1000.0, warmup=400.0))
    assert rep.measured_time == pytest.approx(600.0)


# ---- replication -----------------------------------------------------------


def test_replicate_rejects_single_rep():
    with pytest.raises(DomainError):
        replicate(cfg(), 1)


def test_replicate_is_order_independent():
    a = replicate(cfg(horizon=500.0), 6)
    b = replicate(cfg(horizon=500.0), 6, workers=3)
    assert a.mean == b.mean and a.se == b.se


def test_standard_error_shrinks_with_reps():
    c = cfg(2, 1.0, 1.0, horizon=2000.0, seed=7)
    s8, s32 = replicate(c, 8), replicate(c, 32)
    ratio = s8.se["aos"] / s32.se["aos"]
    assert 1.2 < ratio < 3.5  # sqrt(4) = 2 up to sampling noise of the SE itself


def test_binary_freshness_complements_eq22():
    p = SymmetricSourceParams(4, 1.0)
    s = replicate(SimConfig(p, 1.0, 5e4, seed=21), 8)
    assert abs(s.mean["bf"] + eq22_fraction(1.0, p) - 1) < 3 * s.se_batch["bf"]


@pytest.mark.parametrize("n, sigma, lam", [(2, 1.0, 1.0), (4, 1.5, 0.5), (8, 0.5, 2.0)])
def test_means_near_closed_form(n, sigma, lam):
    p = SymmetricSourceParams(n, sigma)
    s = replicate(SimConfig(p, lam, 5e4, seed=n * 100 + int(10 * lam)), 8)
    assert abs(s.z("aos", aos_mean(lam, p))) < 4
    assert abs(s.z("aoi", aoi_mean(lam))) < 4
