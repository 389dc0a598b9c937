import math

import numpy as np
import pytest

from hisra.detector import DetectorParams
from hisra.harness import (
    STREAMS,
    ExperimentSpec,
    experiment1_config,
    mean_and_se,
    run_experiment1,
    run_experiment2,
    run_trials,
    seed_schedule,
    simulate_trial,
    tune_t,
)
from hisra.traffic import ConfigError, SystemConfig

SMALL = SystemConfig(n=128, m=32, r=32, s=4, k_s=2, t=4, u=16, sigma2=0.05, plan_mode="independent")
PARAMS = DetectorParams(k_u=4, k_s=2, solve_channels=True, on_degenerate="flag")


def test_seed_schedule_deterministic_and_master_sensitive():
    assert seed_schedule(1, 2, 3) == seed_schedule(1, 2, 3)
    a = [seed_schedule(1, t, s) for t in range(50) for s in range(6)]
    b = [seed_schedule(2, t, s) for t in range(50) for s in range(6)]
    assert all(x != y for x, y in zip(a, b))


def test_seed_schedule_no_collisions_1e6():
    seeds = {seed_schedule(12345, t, s) for t in range(200000) for s in range(5)}
    assert len(seeds) == 10**6


def test_seed_schedule_range_checks():
    with pytest.raises(ValueError):
        seed_schedule(0, -1, 0)
    with pytest.raises(ValueError):
        seed_schedule(0, 0, 1 << 20)


def test_trial_metric_consistency():
    for res in run_trials(SMALL, PARAMS, 4, 10):
        assert np.all(res.detected + res.missed == res.collision_free)
        assert np.all(res.detected + res.missed + res.colliding == res.active)
        for arr in (res.detected, res.missed, res.false_positives, res.collisions, res.colliding):
            assert np.all(arr >= 0)
        assert res.active.sum() == SMALL.u
        assert 0 <= res.detection_rate <= 1
        assert res.runtime >= 0 and res.config["n"] == 128


def test_block_level_counts_at_least_strict():
    strict = run_trials(SMALL, PARAMS, 5, 10, strict=True)
    loose = run_trials(SMALL, PARAMS, 5, 10, strict=False)
    for a, b in zip(strict, loose):
        assert np.all(b.detected >= a.detected)


def test_parallel_equals_serial():
    serial = run_trials(SMALL, PARAMS, 6, 6)
    parallel = run_trials(SMALL, PARAMS, 6, 6, workers=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.detected, b.detected)
        np.testing.assert_array_equal(a.false_positives, b.false_positives)
        assert a.symbol_errors == b.symbol_errors and a.data_errors == b.data_errors


def test_trial_order_independent():
    fwd = [simulate_trial(SMALL, PARAMS, 8, i) for i in range(4)]
    rev = [simulate_trial(SMALL, PARAMS, 8, i) for i in reversed(range(4))][::-1]
    for a, b in zip(fwd, rev):
        np.testing.assert_array_equal(a.detected, b.detected)


def test_noise_free_all_chains_agree():
    cfg = SystemConfig(n=128, m=32, r=32, s=4, k_s=2, t=4, u=8, plan_mode="independent")
    for i in range(3):
        a = simulate_trial(cfg, PARAMS, 1, i, chain="proxy", per_channel=2, distinct=True)
        b = simulate_trial(cfg, PARAMS, 1, i, chain="endtoend", phase_policy="random", per_channel=2, distinct=True)
        np.testing.assert_array_equal(a.detected, b.detected)


def test_unknown_chain():
    with pytest.raises(ValueError):
        simulate_trial(SMALL, PARAMS, 0, 0, chain="carrier-pigeon")


def test_spec_invariants():
    with pytest.raises(ConfigError):
        ExperimentSpec(trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(snr_list=())
    with pytest.raises(ConfigError):
        ExperimentSpec(experiment="exp2", u_list=())
    with pytest.raises(ConfigError):
        ExperimentSpec(experiment="exp3")


def test_experiment1_derived_parameters_and_columns():
    spec = ExperimentSpec(n_list=(256, 100), snr_list=(math.inf,), trials=2, t=4, plan_mode="independent")
    rows = run_experiment1(spec)
    assert "error" in rows[1]
    row = rows[0]
    assert (row["r"], row["kbar_u"], row["m"], row["c"]) == (32, 2, 8, 32)
    assert row["baseline_users"] == 6
    assert row["supported_users_formula"] == pytest.approx(0.81 * 2 * 32)


def test_experiment2_zero_users_row():
    spec = ExperimentSpec(experiment="exp2", n_list=(256,), u_list=(0,), snr_list=(math.inf, 0.0),
                          trials=3, t=4, s=4, k_s=2, c=8, detector_k_u="estimate")
    for row in run_experiment2(spec):
        assert row["recovered_mean"] == row["recovery_rate"] == 0
        assert row["false_positives_mean"] == row["opt_collision_free_mean"] == 0


def test_experiment_tables_reproducible():
    spec = ExperimentSpec(experiment="exp2", n_list=(256,), u_list=(16, 32), snr_list=(math.inf, -5.0),
                          trials=3, t=4, s=4, k_s=2, c=8, detector_k_u="estimate", plan_mode="independent")
    assert run_experiment2(spec) == run_experiment2(spec)


def test_matched_seeds_across_snr():
    quiet = SystemConfig(**{**SMALL.snapshot(), "sigma2": 0.0})
    loud = SystemConfig(**{**SMALL.snapshot(), "sigma2": 1.0})
    a, b = simulate_trial(quiet, PARAMS, 2, 0), simulate_trial(loud, PARAMS, 2, 0)
    np.testing.assert_array_equal(a.active, b.active)
    np.testing.assert_array_equal(a.collision_free, b.collision_free)


def test_tune_t_easy_config():
    cfg = SystemConfig(n=256, m=128, r=64, s=4, k_s=2, t=1, u=2)
    best, rates = tune_t(cfg, DetectorParams(k_u=1, k_s=2, solve_channels=False), 0.9, [1, 2, 4], trials=50,
                         per_channel=1)
    assert best == 1 and rates[1] >= 0.9


def test_tune_t_needs_trials():
    with pytest.raises(ValueError):
        tune_t(SMALL, PARAMS, 0.9, [1], trials=10)


def test_detection_rate_nondecreasing_in_t():
    cfg = SystemConfig(n=256, m=16, r=64, s=4, k_s=2, t=1, u=48, plan_mode="independent")
    params = DetectorParams(k_u=3, k_s=2, solve_channels=False)
    per_t = {}
    for t in (2, 4, 8, 16):
        res = run_trials(SystemConfig(**{**cfg.snapshot(), "t": t}), params, 0, 50, per_channel=3)
        per_t[t] = np.array([r.detection_rate for r in res])
    ts = sorted(per_t)
    for lo, hi in zip(ts, ts[1:]):
        diff = per_t[hi] - per_t[lo]
        assert diff.mean() >= -2 * diff.std(ddof=1) / np.sqrt(diff.size)


def test_mean_and_se():
    assert mean_and_se([]) == (0.0, 0.0)
    assert mean_and_se([2.0]) == (2.0, 0.0)
    m, se = mean_and_se([1.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1.0)


def test_stream_ids_distinct():
    assert len(set(STREAMS.values())) == len(STREAMS)


def test_channel_error_noise_free_and_disabled():
    cfg = SystemConfig(n=128, m=32, r=32, s=4, k_s=2, t=3, u=8, plan_mode="independent")
    # an over-sized block budget only adds blocks that LSQ sets to zero
    res = simulate_trial(cfg, PARAMS, 3, 0, per_channel=2, distinct=True)
    assert res.missed.sum() == 0 and res.channel_error < 1e-9
    off = simulate_trial(cfg, DetectorParams(k_u=2, k_s=2, solve_channels=False), 3, 0, per_channel=2)
    assert math.isnan(off.channel_error)


def test_iid_proxy_noise_matches_induced_noise():
    # i.i.d. z per sub-channel versus z induced by one time-domain e shared by all sub-channels
    spec = ExperimentSpec(n_list=(256,), plan_mode="independent", t=16)
    cfg, d = experiment1_config(spec, 256)
    cfg = SystemConfig(**{**cfg.snapshot(), "sigma2": 10.0})
    params = DetectorParams(k_u=d["kbar_u"], k_s=4, solve_channels=False)
    rates = {}
    for chain in ("proxy", "endtoend"):
        res = run_trials(cfg, params, 11, 60, per_channel=d["kbar_u"], chain=chain, phase_policy="random")
        rates[chain] = np.array([r.detection_rate for r in res])
    diff, se = mean_and_se(rates["proxy"] - rates["endtoend"])
    assert 0.5 < rates["proxy"].mean() < 0.95
    assert abs(diff) <= 3 * se
