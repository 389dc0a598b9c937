"""Seeded Monte Carlo engine for the detection experiments."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from . import analytics
from .airlink import sigma2_from_snr, transmit_receive_endtoend, transmit_receive_proxy
from .detector import DetectorParams, detect_all
from .pilots import make_pilot_bank
from .traffic import (
    ConfigError,
    SystemConfig,
    assign_users,
    assign_users_homogeneous,
    collision_census,
    draw_cirs,
    draw_data,
    draw_subchannel_plan,
    effective_channels,
)

__all__ = [
    "STREAMS",
    "seed_schedule",
    "TrialResult",
    "simulate_trial",
    "run_trials",
    "ExperimentSpec",
    "run_experiment1",
    "run_experiment2",
    "tune_t",
    "mean_and_se",
]

STREAMS = {"plan": 0, "users": 1, "cirs": 2, "data": 3, "noise": 4, "phases": 5}
_MASK64 = (1 << 64) - 1
_STREAM_BITS = 20


def _mix64(x: int) -> int:
    # splitmix64 finalizer: a bijection on 64-bit words
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def seed_schedule(master: int, trial: int, stream: int) -> int:
    """Counter-based 64-bit seed for (trial, stream) under a master seed.

    Injective in (trial, stream) for trial < 2^44 and stream < 2^20, so
    distinct pairs never share a seed.
    """
    if not 0 <= stream < 1 << _STREAM_BITS or not 0 <= trial < 1 << (64 - _STREAM_BITS):
        raise ValueError("trial or stream index out of range")
    key = (trial << _STREAM_BITS) | stream
    return _mix64(key ^ _mix64(master & _MASK64))


def _rng(master, trial, stream):
    return np.random.default_rng(seed_schedule(master, trial, STREAMS[stream]))


@dataclass
class TrialResult:
    seed: int
    trial: int
    config: dict
    active: np.ndarray
    collision_free: np.ndarray
    colliding: np.ndarray
    collisions: np.ndarray
    detected: np.ndarray
    missed: np.ndarray
    false_positives: np.ndarray
    block_detected: int
    symbols: int = 0
    symbol_errors: int = 0
    data_errors: list = field(default_factory=list)
    channel_error: float = math.nan
    runtime: float = 0.0

    @property
    def detection_rate(self) -> float:
        cf = int(self.collision_free.sum())
        return float(self.detected.sum()) / cf if cf else 1.0

    @property
    def false_positive_count(self) -> int:
        return int(self.false_positives.sum())

    @property
    def symbol_error_rate(self) -> float:
        return self.symbol_errors / self.symbols if self.symbols else 0.0


def simulate_trial(cfg: SystemConfig, params: DetectorParams, master: int, trial: int, *,
                   per_channel: int | None = None, distinct: bool = False, strict: bool = True,
                   chain: str = "proxy", phase_policy: str = "unit") -> TrialResult:
    """One random access round: draw users, transmit over t slots, detect, score.

    Users are drawn i.i.d. uniform unless ``per_channel`` fixes the load of
    every sub-channel. The noise stream is drawn unscaled, so runs that differ
    only in sigma2 see the same users, channels and noise shape.
    """
    start = time.perf_counter()
    plan = draw_subchannel_plan(cfg, _rng(master, trial, "plan"))
    if per_channel is None:
        users = assign_users(cfg, _rng(master, trial, "users"))
    else:
        users = assign_users_homogeneous(cfg, per_channel, _rng(master, trial, "users"), distinct)
    cirs = draw_cirs(cfg, _rng(master, trial, "cirs"), users.u)
    data = draw_data(cfg, _rng(master, trial, "data"), users.u)
    channels = effective_channels(users, cirs, data, cfg)
    noise_rng = _rng(master, trial, "noise")
    if chain == "proxy":
        meas = transmit_receive_proxy(channels, plan, cfg, noise_rng)
    elif chain == "endtoend":
        bank = make_pilot_bank(plan.rows, cfg.n, cfg.s, cfg.r, phase_policy, _rng(master, trial, "phases"))
        meas = transmit_receive_endtoend(channels, plan, bank, cfg, noise_rng)
    else:
        raise ValueError(f"unknown chain {chain!r}")
    reports = detect_all(meas, params, cfg.r, cfg.s)
    channel_error = _channel_error(reports, channels.values)

    census = collision_census(users, cfg)
    occupied = np.zeros((cfg.c, cfg.r), dtype=bool)
    occupied[users.sub_channel, users.pilot] = True
    detected = np.zeros(cfg.c, dtype=np.int64)
    fps = np.zeros(cfg.c, dtype=np.int64)
    for j, rep in enumerate(reports):
        fps[j] = sum(1 for k in rep.support.blocks if not occupied[j, k])
    block_hits = 0
    symbols = errors = 0
    data_errors = []
    for k in np.flatnonzero(census.unique_user):
        j, blk = users.sub_channel[k], users.pilot[k]
        rep = reports[j]
        in_blocks = blk in rep.support.blocks
        block_hits += in_blocks
        truth = tuple(int(x) for x in cirs.support(k))
        hit = in_blocks and (not strict or rep.support.omega(blk) == truth)
        detected[j] += hit
        if cfg.t < 2 or not params.solve_channels:
            continue
        symbols += cfg.t - 1
        dm = rep.data
        if not hit or dm is None:
            errors += cfg.t - 1
            continue
        q = dm.blocks.index(blk)
        errors += int(np.sum(dm.decisions[1:, q] != data.symbols[k, 1:]))
        raw = dm.raw[1:, blk][:, list(truth)]
        data_errors.extend(np.abs(raw - data.symbols[k, 1:, None]).ravel().tolist())
    cf = census.collision_free
    return TrialResult(
        seed=master, trial=trial, config=cfg.snapshot(),
        active=census.users, collision_free=cf, colliding=census.users - cf, collisions=census.collisions,
        detected=detected, missed=cf - detected, false_positives=fps, block_detected=block_hits,
        symbols=symbols, symbol_errors=errors, data_errors=data_errors, channel_error=channel_error,
        runtime=time.perf_counter() - start,
    )


def _channel_error(reports, truth: np.ndarray) -> float:
    """||h_est - h|| / ||h|| over all slots and sub-channels; nan without estimates."""
    if any(rep.channel_estimates is None for rep in reports):
        return math.nan
    est = np.stack([rep.channel_estimates for rep in reports], axis=1)
    ref = np.linalg.norm(truth)
    diff = np.linalg.norm(est - truth)
    return float(diff / ref) if ref else float(diff)


def run_trials(cfg, params, master, trials, workers=1, **kw) -> list[TrialResult]:
    """Trials 0..trials-1, serially or on a process pool; results in trial order."""
    fn = partial(simulate_trial, cfg, params, master, **kw)
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_call, [(fn, i) for i in range(trials)]))
    return [fn(i) for i in range(trials)]


def _call(args):
    fn, i = args
    return fn(i)


def mean_and_se(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return 0.0, 0.0
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid and settings of one experiment.

    ``detector_k_u`` is ``"known"`` (per-channel load given to the detector),
    ``"estimate"`` (block-norm clustering) or an integer.
    """

    experiment: str = "exp1"
    n_list: tuple = (512,)
    snr_list: tuple = (math.inf,)
    u_list: tuple = ()
    trials: int = 100
    t: int = 100
    s: int = 8
    k_s: int = 4
    p_u: float = 0.1
    p_md: float = 0.1
    c: int = 8
    plan_mode: str = "fixed"
    detector_k_u: int | str = "known"
    theta: float | str = 0.0
    iterations: int = 1
    strict: bool = True
    seed: int = 1
    workers: int = 1
    chain: str = "proxy"
    phase_policy: str = "unit"
    data_alphabet: str = "qpsk"
    cir_policy: str = "fine"

    def __post_init__(self):
        if self.experiment not in ("exp1", "exp2", "custom"):
            raise ConfigError("experiment must be exp1, exp2 or custom")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_list:
            raise ConfigError("snr_list must be nonempty")
        if self.experiment == "exp1" and not self.n_list:
            raise ConfigError("n_list must be nonempty")
        if self.experiment == "exp2" and not self.u_list:
            raise ConfigError("u_list must be nonempty")
        if self.t < 1:
            raise ConfigError("t must be >= 1")
        if self.detector_k_u not in ("known", "estimate") and not isinstance(self.detector_k_u, int):
            raise ConfigError("detector k_u must be 'known', 'estimate' or an integer")


def _params(spec: ExperimentSpec, known: int) -> DetectorParams:
    k_u = known if spec.detector_k_u == "known" else spec.detector_k_u
    return DetectorParams(k_u=k_u, k_s=spec.k_s, theta=spec.theta, iterations=spec.iterations,
                          solve_channels=False, alphabet=spec.data_alphabet)


def experiment1_config(spec: ExperimentSpec, n: int, t: int | None = None, sigma2: float = 0.0):
    d = analytics.experiment1_parameters(n, spec.s, spec.k_s, spec.p_u)
    cfg = SystemConfig(n=n, m=d["m"], r=d["r"], s=spec.s, k_s=spec.k_s, t=spec.t if t is None else t,
                       u=d["kbar_u"] * d["c"], sigma2=sigma2, plan_mode=spec.plan_mode, seed=spec.seed,
                       data_alphabet=spec.data_alphabet, cir_policy=spec.cir_policy)
    return cfg, d


def experiment2_config(spec: ExperimentSpec, n: int, u: int, sigma2: float = 0.0) -> SystemConfig:
    if n % spec.c:
        raise ConfigError(f"m*c = n violated: c={spec.c} does not divide n={n}")
    return SystemConfig(n=n, m=n // spec.c, r=n // spec.s, s=spec.s, k_s=spec.k_s, t=spec.t, u=u,
                        sigma2=sigma2, c=spec.c, plan_mode=spec.plan_mode, seed=spec.seed,
                        data_alphabet=spec.data_alphabet, cir_policy=spec.cir_policy)


def validate(spec: ExperimentSpec) -> None:
    """Build every grid point's configuration; raises ConfigError on the first invalid one."""
    try:
        if spec.experiment == "exp1":
            for n in spec.n_list:
                experiment1_config(spec, n)
        elif spec.experiment == "exp2":
            for n in spec.n_list:
                for u in spec.u_list:
                    experiment2_config(spec, n, u)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _run(spec, cfg, params, **kw):
    return run_trials(cfg, params, spec.seed, spec.trials, spec.workers, strict=spec.strict,
                      chain=spec.chain, phase_policy=spec.phase_policy, **kw)


def run_experiment1(spec: ExperimentSpec) -> list[dict]:
    """Homogeneous load of kbar_u users per sub-channel; detection rate per (n, SNR)."""
    rows = []
    for n in spec.n_list:
        try:
            base, d = experiment1_config(spec, n)
        except ValueError as exc:
            rows.append({"n": n, "error": str(exc)})
            continue
        params = _params(spec, d["kbar_u"])
        for snr in spec.snr_list:
            cfg = replace(base, sigma2=sigma2_from_snr(snr))
            res = _run(spec, cfg, params, per_channel=d["kbar_u"])
            rate, rate_se = mean_and_se([r.detection_rate for r in res])
            det, _ = mean_and_se([r.detected.sum() for r in res])
            det = round(det, 12)
            rows.append({
                "n": n, "snr_db": snr, "trial_count": len(res), "detected_mean": det,
                "detection_rate": rate, "detection_rate_se": rate_se,
                "supported_users_formula": analytics.supported_users(spec.p_u, d["kbar_u"], d["c"], spec.p_md),
                "baseline_users": analytics.baseline_no_subchannel(n, spec.p_u),
                "t": cfg.t, "m": cfg.m, "c": cfg.c, "r": cfg.r, "kbar_u": d["kbar_u"],
                "false_positives_mean": mean_and_se([r.false_positive_count for r in res])[0],
            })
    return rows


def run_experiment2(spec: ExperimentSpec) -> list[dict]:
    """Random (non-uniform) load with unknown sparsity; recovered users per (u, SNR).

    recovery_rate is per user: recovered / collision-free users. The block-level
    rate (selected active blocks / collision-free users) and recovered / u are
    reported alongside.
    """
    rows = []
    for n in spec.n_list:
        for u in spec.u_list:
            try:
                base = experiment2_config(spec, n, u)
            except ValueError as exc:
                rows.append({"n": n, "u": u, "error": str(exc)})
                continue
            params = _params(spec, spec.k_s)
            if spec.detector_k_u == "known":
                params = replace(params, k_u="estimate")
            for snr in spec.snr_list:
                cfg = replace(base, sigma2=sigma2_from_snr(snr))
                res = _run(spec, cfg, params)
                rec = np.array([r.detected.sum() for r in res], dtype=float)
                opt = np.array([r.collision_free.sum() for r in res], dtype=float)
                blk = np.array([r.block_detected for r in res], dtype=float)
                fp = np.array([r.false_positive_count for r in res], dtype=float)
                total_opt = opt.sum()
                rows.append({
                    "n": n, "u": u, "snr_db": snr, "trial_count": len(res),
                    "recovered_mean": float(rec.mean()),
                    "recovery_rate": float(rec.sum() / total_opt) if total_opt else 0.0,
                    "false_positives_mean": float(fp.mean()),
                    "opt_collision_free_mean": float(opt.mean()),
                    "block_recovery_rate": float(blk.sum() / total_opt) if total_opt else 0.0,
                    "recovered_over_u": float(rec.mean() / u) if u else 0.0,
                    "t": cfg.t,
                })
    return rows


def tune_t(template: SystemConfig, params: DetectorParams, target: float, t_grid, trials: int = 50,
           master: int = 0, per_channel: int | None = None, strict: bool = True) -> tuple[int | None, dict]:
    """Smallest t in ``t_grid`` whose noise-free detection rate reaches ``target``.

    Returns (t or None, {t: rate}) where the map covers the grid values tried.
    """
    if trials < 50:
        raise ValueError("at least 50 trials per t value are required")
    rates = {}
    for t in sorted(t_grid):
        cfg = replace(template, t=int(t), sigma2=0.0)
        res = run_trials(cfg, params, master, trials, per_channel=per_channel, strict=strict)
        rates[int(t)] = float(np.mean([r.detection_rate for r in res]))
        if rates[int(t)] >= target:
            return int(t), rates
    return None, rates
