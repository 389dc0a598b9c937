"""Command-line front end: experiments, parameter analysis and t tuning.

Configuration is an INI file with sections [experiment], [system] and
[detector]; command-line flags override file values. Exit codes: 0 success,
1 runtime failure, 2 invalid configuration (nothing is written).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import analytics
from .detector import DetectorParams
from .harness import (
    ExperimentSpec,
    experiment1_config,
    run_experiment1,
    run_experiment2,
    tune_t,
    validate,
)
from .traffic import ALPHABETS, ConfigError

EXP1_COLUMNS = ["n", "snr_db", "trial_count", "detected_mean", "detection_rate",
                "supported_users_formula", "baseline_users"]
EXP2_COLUMNS = ["u", "snr_db", "recovered_mean", "recovery_rate", "false_positives_mean",
                "opt_collision_free_mean"]

_SPEC_KEYS = {f.name for f in fields(ExperimentSpec)}
_ALIASES = {"k_u": "detector_k_u", "alphabet": "data_alphabet", "strict_detection": "strict"}


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on", "strict"):
        return True
    if low in ("0", "false", "no", "off", "block", "block-level"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _k_u(text):
    text = str(text).strip()
    return text if text in ("known", "estimate") else int(text)


def _theta(text):
    text = str(text).strip()
    return "auto" if text == "auto" else float(text)


_PARSERS = {
    "n_list": _ints, "u_list": _ints, "snr_list": _floats, "trials": int, "t": int, "s": int,
    "k_s": int, "c": int, "p_u": float, "p_md": float, "iterations": int, "seed": int,
    "workers": int, "strict": _bool, "detector_k_u": _k_u, "theta": _theta,
}


def load_spec(path: str | None, experiment: str, overrides: dict) -> ExperimentSpec:
    """Merge defaults, the config file and flag overrides into a validated ExperimentSpec."""
    raw: dict = {}
    explicit_m = None
    if path is not None:
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in cp.sections():
            if section not in ("experiment", "system", "detector"):
                raise ConfigError(f"unknown section [{section}]")
            for key, value in cp.items(section):
                if key == "m":
                    explicit_m = int(value)
                    continue
                name = _ALIASES.get(key, key)
                if name == "n":
                    name = "n_list"
                if name not in _SPEC_KEYS or name == "experiment":
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                raw[name] = value
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        values = {k: (_PARSERS[k](v) if k in _PARSERS and isinstance(v, str) else v) for k, v in raw.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if values.get("data_alphabet", "qpsk") not in ALPHABETS:
        raise ConfigError(f"alphabet must be one of {tuple(ALPHABETS)}")
    spec = ExperimentSpec(experiment=experiment, **values)
    if explicit_m is not None:
        for n in spec.n_list:
            c = spec.c if experiment == "exp2" else experiment1_config(spec, n)[1]["c"]
            if explicit_m * c != n:
                raise ConfigError(f"m*c = n violated: m={explicit_m}, c={c}, n={n}")
    validate(spec)
    return spec


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(round(v, 12))
    return str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if "error" in row:
                continue
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _json_safe(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if hasattr(v, "item"):
        return v.item()
    return v


def _overrides(args) -> dict:
    snr = _floats(args.snr_list) if args.snr_list else None
    strict = None if args.strict_detection is None else _bool(args.strict_detection)
    return {"seed": args.seed, "trials": args.trials, "snr_list": snr, "strict": strict, "workers": args.workers}


def _run_experiment(args, experiment: str) -> int:
    try:
        spec = load_spec(args.config, experiment, _overrides(args))
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        if experiment == "exp1":
            rows, columns, name = run_experiment1(spec), EXP1_COLUMNS, "exp1_results"
        else:
            rows, columns, name = run_experiment2(spec), EXP2_COLUMNS, "exp2_results"
    except Exception as exc:  # noqa: BLE001
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1
    for row in rows:
        if "error" in row:
            print(f"warning: grid point skipped: {row['error']}", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{name}.csv", columns, rows)
    summary = {"spec": _json_safe(asdict(spec)), "rows": _json_safe(rows)}
    (out / f"{name}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.verbose:
        for row in rows:
            print(row)
    return 0


def cmd_experiment1(args) -> int:
    return _run_experiment(args, "exp1")


def cmd_experiment2(args) -> int:
    return _run_experiment(args, "exp2")


def _cell(name, raw, clip=True):
    shown = min(1.0, max(0.0, raw)) if clip else raw
    flag = " (vacuous)" if clip and analytics.is_vacuous(raw) else ""
    return f"{name:<34}{shown:.6g}{flag}"


def analyze_lines(a) -> list[str]:
    """Bound values and the parameter recipe for the given inputs, one line each."""
    recipe = analytics.parameter_recipe(a.C_o, a.kappa, a.eps, a.s, a.k_s, a.plan_mode)
    kbar = analytics.select_kbar_u(a.r, a.p_u)
    c = a.n // a.m
    lines = [
        f"{'kbar_u (r=%d, p_u=%g)' % (a.r, a.p_u):<34}{kbar}",
        f"{'uniqueness product':<34}{analytics.uniqueness_probability(kbar, a.r):.6g}",
        _cell("overfill_bound", analytics.overfill_bound(a.m, a.n, a.u, a.lam, clip=False)),
        f"{'overfill_exact':<34}{analytics.overfill_exact(a.m, a.n, a.u, a.lam):.6g}",
        _cell("collision_bound", analytics.collision_bound(a.k_u, a.r, clip=False)),
        f"{'collision_lower_bound':<34}{analytics.collision_lower_bound(a.k_u, a.r):.6g}",
        _cell("collision_pair_bound", analytics.collision_pair_bound(a.k_u, a.r, clip=False)),
        _cell("sparsity_capture_failure", analytics.sparsity_capture_failure(a.m, a.n, a.u, a.r, clip=False)),
        _cell("coherence_tail", analytics.coherence_tail(a.m, a.k_u, a.k_s, a.tau, a.n, clip=False)),
        _cell("main_failure_probability", analytics.main_failure_probability(
            a.eps, a.n, a.kappa, a.C_o, a.t, a.r, a.s, a.k_s)),
        f"{'supported_users (c=%d)' % c:<34}{analytics.supported_users(a.p_u, kbar, c, a.p_md):.6g}",
        f"{'baseline_no_subchannel':<34}{analytics.baseline_no_subchannel(a.n, a.p_u)}",
        f"{'recipe beta':<34}{recipe.beta:.6g}",
        f"{'recipe pilot constant':<34}{recipe.pilot_constant:.6g}",
        f"{'recipe r_min(n)':<34}{recipe.r_min(a.n):.6g}",
        f"{'recipe u_max(n)':<34}{recipe.u_max(a.n):.6g}",
        f"{'recipe m(n, u)':<34}{recipe.m(a.n, max(a.u, 1))}",
        f"{'recipe n_min':<34}{recipe.n_min}",
        f"{'recipe n_min (power of two)':<34}{recipe.n_min_pow2}",
        f"{'recipe t scaling':<34}{recipe.t_scaling}",
        f"{'recipe noise cap':<34}{recipe.sigma2_cap}",
    ]
    return lines


def cmd_analyze(args) -> int:
    if args.n % args.m:
        print(f"error: invalid configuration: m*c = n violated: m={args.m} does not divide n={args.n}",
              file=sys.stderr)
        return 2
    try:
        lines = analyze_lines(args)
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analyze.txt").write_text(text, encoding="utf-8")
    return 0


def cmd_tune_t(args) -> int:
    try:
        spec = load_spec(args.config, "exp1", _overrides(args))
        grid = _ints(args.t_grid)
        if not grid:
            raise ConfigError("empty t grid")
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        for n in spec.n_list:
            cfg, d = experiment1_config(spec, n, t=1)
            params = DetectorParams(k_u=d["kbar_u"], k_s=spec.k_s, theta=spec.theta, iterations=spec.iterations,
                                    solve_channels=False)
            best, rates = tune_t(cfg, params, args.target, grid, trials=max(spec.trials, 50), master=spec.seed,
                                 per_channel=d["kbar_u"], strict=spec.strict)
            detail = " ".join(f"t={t}:{rate:.4f}" for t, rate in rates.items())
            print(f"n={n} t={best if best is not None else 'none'} {detail}")
    except Exception as exc:  # noqa: BLE001
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hisra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--trials", type=int, help="trials per grid point")
        p.add_argument("--snr-list", help="system SNRs in dB, e.g. 'inf,0,-10'")
        p.add_argument("--strict-detection", metavar="BOOL", help="full in-block support required (default true)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")

    p1 = sub.add_parser("experiment1", help="homogeneous load, known sparsity")
    run_flags(p1)
    p1.set_defaults(func=cmd_experiment1)
    p2 = sub.add_parser("experiment2", help="random load, estimated sparsity")
    run_flags(p2)
    p2.set_defaults(func=cmd_experiment2)
    pt = sub.add_parser("tune-t", help="smallest t reaching a noise-free detection rate")
    run_flags(pt)
    pt.add_argument("--t-grid", default="1,2,4,8,16,32,64,100")
    pt.add_argument("--target", type=float, default=0.9)
    pt.set_defaults(func=cmd_tune_t)

    pa = sub.add_parser("analyze", help="bounds and parameter recipe")
    pa.add_argument("--n", type=int, default=2048)
    pa.add_argument("--m", type=int, default=256)
    pa.add_argument("--r", type=int, default=256)
    pa.add_argument("--s", type=int, default=8)
    pa.add_argument("--u", type=int, default=512)
    pa.add_argument("--t", type=int, default=100)
    pa.add_argument("--k-u", dest="k_u", type=int, default=6)
    pa.add_argument("--k-s", dest="k_s", type=int, default=4)
    pa.add_argument("--p-u", dest="p_u", type=float, default=0.1)
    pa.add_argument("--p-md", dest="p_md", type=float, default=0.1)
    pa.add_argument("--lam", type=float, default=1.0)
    pa.add_argument("--tau", type=float, default=0.5)
    pa.add_argument("--kappa", type=float, default=3.0)
    pa.add_argument("--C-o", dest="C_o", type=float, default=1.0)
    pa.add_argument("--eps", type=float, default=0.1)
    pa.add_argument("--plan-mode", dest="plan_mode", choices=("fixed", "independent"), default="independent")
    pa.add_argument("--out", help="also write analyze.txt here")
    pa.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
