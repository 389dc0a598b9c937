"""Acceptance criteria A1-A10.

Each test records one PASS/FAIL line (collected into the terminal summary by
conftest) before asserting. Master seeds are fixed per criterion and were not
searched over.
"""

import math
import subprocess
import sys
import time
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from hisra import analytics
from hisra.airlink import chain_equivalence_check, complex_normal, sigma2_from_snr
from hisra.detector import DetectorParams
from hisra.harness import ExperimentSpec, experiment1_config, experiment2_config, mean_and_se, run_trials, tune_t
from hisra.hisparse import exhaustive_project, hi_project, projection_error
from hisra.pilots import make_pilot_bank
from hisra.spectral import composite_counterexample, dft_submatrix, prime_submatrix_injective
from hisra.traffic import (
    SystemConfig,
    assign_users,
    assign_users_homogeneous,
    collision_census,
    draw_cirs,
    draw_data,
    draw_subchannel_plan,
    effective_channels,
)

GOLDEN = Path(__file__).parent / "golden"

# desk configuration shared by A3 and A6
DESK = dict(n=256, m=32, r=64, s=4, k_s=2, t=8, u=16)
DESK_PARAMS = DetectorParams(k_u=2, k_s=2, theta=0.0, solve_channels=True, on_degenerate="flag")


def paired_se(a, b) -> tuple[float, float]:
    """Mean and standard error of the per-trial difference a - b."""
    return mean_and_se(np.asarray(a, float) - np.asarray(b, float))


# ---------------------------------------------------------------- A1

def a1_configs(count=50):
    rng = np.random.default_rng(101)
    sizes = [12, 24, 36, 60, 64, 96, 120, 128]
    for i in range(count):
        n = int(rng.choice(sizes))
        c = int(rng.choice([d for d in (1, 2, 3, 4, 8) if n % d == 0]))
        s = int(rng.integers(1, 5))
        cfg = SystemConfig(n=n, m=n // c, r=int(rng.integers(1, n // s + 1)), s=s, k_s=int(rng.integers(1, s + 1)),
                           t=int(rng.integers(1, 4)), u=int(rng.integers(0, 3 * c + 1)),
                           sigma2=float(rng.choice([0.0, 0.1, 1.0])),
                           plan_mode=("fixed", "independent")[i % 2])
        yield cfg, ("unit", "random")[(i // 2) % 2], int(rng.integers(2**32))


def test_a1_proxy_model_identity(acceptance):
    start = time.perf_counter()
    worst, seen = 0.0, set()
    for cfg, policy, seed in a1_configs():
        rng = np.random.default_rng(seed)
        plan = draw_subchannel_plan(cfg, rng)
        users = assign_users(cfg, rng)
        ch = effective_channels(users, draw_cirs(cfg, rng, users.u), draw_data(cfg, rng, users.u), cfg)
        bank = make_pilot_bank(plan.rows, cfg.n, cfg.s, cfg.r, policy, rng)
        e = complex_normal(rng, (cfg.t, cfg.n), cfg.sigma2)
        worst = max(worst, chain_equivalence_check(ch, plan, bank, cfg, e))
        seen.add((cfg.plan_mode, policy))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and len(seen) == 4 and elapsed < 60
    acceptance("A1", ok, f"max relative gap {worst:.2e} (< 1e-9) over 50 configs, {len(seen)}/4 mode-phase "
                         f"combinations, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- A2

def test_a2_projection_oracle(acceptance):
    rng = np.random.default_rng(202)
    mismatches, worst = 0, 0.0
    for _ in range(200):
        t, r, s = (int(x) for x in rng.integers(1, [3, 5, 5]))
        k_u, k_s = int(rng.integers(1, 3)), int(rng.integers(1, min(2, s) + 1))
        v = rng.standard_normal((t, r, s)) + 1j * rng.standard_normal((t, r, s))
        fast = projection_error(v, hi_project(v, k_u, k_s, threshold=0.0))
        best = projection_error(v, exhaustive_project(v, k_u, k_s))
        worst = max(worst, abs(fast - best))
        mismatches += fast != best
    acceptance("A2", mismatches == 0, f"{200 - mismatches}/200 instances with identical optimal error "
                                      f"(max gap {worst:.1e})")
    assert mismatches == 0


# ---------------------------------------------------------------- A3

def exact_support(res) -> bool:
    return bool(res.missed.sum() == 0 and res.false_positive_count == 0)


def test_a3_noise_free_exact_recovery(acceptance):
    start = time.perf_counter()
    cfg = SystemConfig(**DESK, plan_mode="independent")
    res = run_trials(cfg, DESK_PARAMS, 3, 500, per_channel=2, distinct=True)
    exact = [exact_support(r) for r in res]
    rate = float(np.mean(exact))
    h_err = max(r.channel_error for r, ok in zip(res, exact) if ok)
    fixed = run_trials(SystemConfig(**DESK, plan_mode="fixed"), DESK_PARAMS, 3, 500, per_channel=2, distinct=True)
    fixed_rate = float(np.mean([exact_support(r) for r in fixed]))
    elapsed = time.perf_counter() - start
    ok = rate >= 0.99 and h_err < 1e-9 and elapsed < 120
    acceptance("A3", ok, f"exact support {rate:.3f} (>= 0.99) over 500 trials, independent plan; worst h "
                         f"relative error {h_err:.1e} (< 1e-9); fixed plan for reference {fixed_rate:.3f}; "
                         f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- A4

def test_a4_experiment1_desk(acceptance):
    start = time.perf_counter()
    spec = ExperimentSpec(n_list=(512,), s=8, k_s=4, p_u=0.1, p_md=0.1, plan_mode="independent")
    template, d = experiment1_config(spec, 512)
    params = DetectorParams(k_u=d["kbar_u"], k_s=4, solve_channels=False)
    # tuned on its own seed so evaluation trials are fresh
    t, tuning = tune_t(template, params, 0.95, [8, 16, 32, 48, 64, 100], trials=50, master=40,
                       per_channel=d["kbar_u"])
    assert t is not None, f"no t in the grid reached the tuning target: {tuning}"
    rates = {}
    for snr in (math.inf, 0.0, -10.0, -30.0):
        cfg = SystemConfig(**{**template.snapshot(), "t": t, "sigma2": sigma2_from_snr(snr)})
        res = run_trials(cfg, params, 4, 100, per_channel=d["kbar_u"])
        rates[snr] = [r.detection_rate for r in res]
    lows = {snr: mean_and_se(rates[snr]) for snr in rates}
    high_ok = all(m - 2 * se >= 0.9 for snr, (m, se) in lows.items() if snr >= -10)
    drop, drop_se = paired_se(rates[-10.0], rates[-30.0])
    drop_ok = drop - 2 * drop_se > 0
    elapsed = time.perf_counter() - start
    ok = high_ok and drop_ok and elapsed < 900
    table = ", ".join(f"{snr:g} dB {m:.4f}+-{se:.4f}" for snr, (m, se) in lows.items())
    acceptance("A4", ok, f"r={d['r']} kbar_u={d['kbar_u']} m={d['m']} c={d['c']}, tuned t={t}; {table}; "
                         f"rate(-10) - rate(-30) = {drop:.3f}+-{drop_se:.3f}; {elapsed:.0f}s")
    assert high_ok, "detection rate below 0.9 (lower 2-SE limit) at some SNR >= -10 dB"
    assert drop_ok, "no significant breakdown at -30 dB"
    assert elapsed < 900


# ---------------------------------------------------------------- A5

def test_a5_capacity_ratio(acceptance):
    parts, ok = [], True
    for e in range(10, 14):
        n = 2**e
        d = analytics.experiment1_parameters(n, 8, 4, 0.1)
        ours = analytics.supported_users(0.1, d["kbar_u"], d["c"], 0.1)
        base = analytics.baseline_no_subchannel(n, 0.1)
        ratio = ours / base
        ok &= ratio >= 10
        parts.append(f"n=2^{e}: {ours:.2f}/{base} = {ratio:.1f}")
    acceptance("A5", ok, "; ".join(parts) + " (>= 10 each)")
    assert ok


# ---------------------------------------------------------------- A6

def trend_config(u: int) -> SystemConfig:
    # two users per sub-channel at every grid point, so m/n = 2/u shrinks as u grows
    n = DESK["n"]
    return SystemConfig(n=n, m=2 * n // u, c=u // 2, r=64, s=4, k_s=2, t=8, u=u, sigma2=0.01,
                        plan_mode="independent")


def test_a6_data_demodulation(acceptance):
    start = time.perf_counter()
    cfg = SystemConfig(**DESK, sigma2=0.01, plan_mode="independent")
    res = run_trials(cfg, DESK_PARAMS, 6, 100, per_channel=2, distinct=True)
    symbols = sum(r.symbols for r in res)
    errors = sum(r.symbol_errors for r in res)
    ser = errors / symbols
    ser_ok = symbols >= 10**4 and ser < 1e-3

    grid = (16, 32, 64)
    stats = {}
    for u in grid:
        trials = run_trials(trend_config(u), DESK_PARAMS, 6, 100, per_channel=2, distinct=True)
        stats[u] = mean_and_se([np.mean(r.data_errors) for r in trials if r.data_errors])
    trend_ok = all(stats[b][0] - stats[a][0] < 2 * math.hypot(stats[a][1], stats[b][1])
                   for a, b in zip(grid, grid[1:]))
    elapsed = time.perf_counter() - start
    ok = ser_ok and trend_ok and elapsed < 600
    trend = ", ".join(f"u={u} m/n=1/{u // 2}: {m:.5f}+-{se:.5f}" for u, (m, se) in stats.items())
    acceptance("A6", ok, f"SER {errors}/{symbols} = {ser:.1e} (< 1e-3); mean |d*-d| {trend} "
                         f"(must decrease within 2 SE); {elapsed:.0f}s")
    assert ser_ok, f"symbol error rate {ser} over {symbols} symbols"
    assert trend_ok, (f"|d*-d| does not decrease along the load grid ({trend}); the restricted LSQ error "
                      "grows as m/n shrinks, see the decisions ledger")


# ---------------------------------------------------------------- A7

def test_a7_bound_domination(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(707)
    trials, lam, n = 10**4, 1.0, 256
    overfill_ok, parts = True, []
    for m in (64, 32, 16):
        for u in (40, 80, 160):
            cfg = SystemConfig(n=n, m=m, r=16, s=4, k_s=1, u=u)
            cap = (1 + lam) * m * u / n
            hits = np.array([np.count_nonzero(assign_users(cfg, rng).sub_channel == 0) > cap
                             for _ in range(trials)])
            freq = hits.mean()
            se = math.sqrt(freq * (1 - freq) / trials)
            bound = analytics.overfill_bound(m, n, u, lam)
            overfill_ok &= freq <= bound + 3 * se
            parts.append(f"({m}/{n},{u}) {freq:.1e}<={bound:.1e}")
    collision_ok = True
    for k_u in (2, 4, 8):
        cfg = SystemConfig(n=256, m=256, r=64, s=4, k_s=1)
        hits = np.array([collision_census(assign_users_homogeneous(cfg, k_u, rng), cfg).collisions[0] > 0
                         for _ in range(trials)])
        freq = hits.mean()
        se = math.sqrt(freq * (1 - freq) / trials)
        bound = analytics.collision_bound(k_u, 64)
        collision_ok &= freq <= bound + 3 * se
        parts.append(f"collision k_u={k_u} {freq:.4f}<={bound:.4f}")
    elapsed = time.perf_counter() - start
    ok = overfill_ok and collision_ok and elapsed < 300
    acceptance("A7", ok, "; ".join(parts) + f" (+3 SE); {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- A8

def test_a8_prime_dft_structure(acceptance):
    checked = 0
    for n in (5, 7, 11, 13):
        for size in (1, 2, 3):
            subsets = list(combinations(range(n), size))
            for rows in subsets:
                for cols in subsets:
                    assert prime_submatrix_injective(n, rows, cols), (n, rows, cols)
                    checked += 1
    singular = []
    for p, q in ((2, 3), (3, 2), (2, 2)):
        rows, cols = composite_counterexample(p, q)
        sv = np.linalg.svd(dft_submatrix(p * q, rows, cols), compute_uv=False)
        singular.append(sv[-1] < 1e-10 * sv[0])
    ok = all(singular)
    acceptance("A8", ok, f"{checked} square submatrices invertible for n in {{5,7,11,13}}; "
                         f"{sum(singular)}/3 composite counterexamples singular")
    assert ok


# ---------------------------------------------------------------- A9

@pytest.mark.slow
def test_a9_experiment2_desk(acceptance):
    start = time.perf_counter()
    spec = ExperimentSpec(experiment="exp2", n_list=(2048,), u_list=(128, 512, 1024), trials=20, t=100,
                          s=8, k_s=4, c=8, detector_k_u="estimate", plan_mode="independent")
    params = DetectorParams(k_u="estimate", k_s=4, solve_channels=False)
    snrs = (math.inf, 0.0, -10.0)
    near_opt, parts, violations = True, [], []
    for u in spec.u_list:
        base = experiment2_config(spec, 2048, u)
        per_trial = {}
        for snr in snrs:
            cfg = SystemConfig(**{**base.snapshot(), "sigma2": sigma2_from_snr(snr)})
            res = run_trials(cfg, params, 9, spec.trials)
            rec = np.array([r.detected.sum() for r in res], float)
            opt = np.array([r.collision_free.sum() for r in res], float)
            per_trial[snr] = rec / opt
            ratio = rec.sum() / opt.sum()
            if snr >= 0:
                near_opt &= ratio >= 0.9
            parts.append(f"u={u} {snr:g} dB {ratio:.4f}")
        for hi, lo in zip(snrs, snrs[1:]):
            diff, se = paired_se(per_trial[hi], per_trial[lo])
            if diff < -2 * se:
                violations.append(f"u={u} rate({hi:g} dB) - rate({lo:g} dB) = {diff:.2e} +- {se:.1e}")
    monotone = not violations
    elapsed = time.perf_counter() - start
    ok = near_opt and monotone and elapsed < 1800
    verdict = "holds" if monotone else "violated at " + "; ".join(violations)
    acceptance("A9", ok, "recovered/optimum " + ", ".join(parts) + " (>= 0.9 at SNR >= 0 dB); non-increasing "
                         f"in noise within 2 paired SE {verdict}; {elapsed:.0f}s")
    assert near_opt, "recovered users fall more than 10% below the collision-free optimum"
    assert monotone, ("recovery rate rises with noise beyond 2 paired SE (" + "; ".join(violations) +
                      "); the gap is a near-tie effect of about 0.4 users per trial, see the decisions ledger")


# ---------------------------------------------------------------- A10

def test_a10_determinism(acceptance, tmp_path):
    start = time.perf_counter()
    identical = []
    for exp in ("1", "2"):
        outs = []
        for k in range(2):
            out = tmp_path / f"exp{exp}-run{k}"
            proc = subprocess.run([sys.executable, "-m", "hisra", f"experiment{exp}", "--config",
                                   str(GOLDEN / f"exp{exp}.ini"), "--out", str(out)], capture_output=True)
            assert proc.returncode == 0, proc.stderr
            outs.append((out / f"exp{exp}_results.csv").read_bytes())
        identical.append(outs[0] == outs[1] == (GOLDEN / f"exp{exp}_results.csv").read_bytes())
    elapsed = time.perf_counter() - start
    ok = all(identical) and elapsed < 60
    acceptance("A10", ok, f"experiment1/experiment2 golden CSVs byte-identical across runs: {identical}; "
                          f"{elapsed:.0f}s")
    assert ok
