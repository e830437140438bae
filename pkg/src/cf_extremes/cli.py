"""Command-line harness: seeded Monte Carlo runs, bound evaluations and oracle checks."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import __version__
from . import chen_stein as cs
from . import evt_stats as ev
from . import oracle, pointproc
from .cf_core import RefinementPolicy, digit_pmf, digit_tail_prob, scaled_threshold

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2
NON_CONFIG_KEYS = ("workers", "out", "format", "command", "func")


class ConfigError(ValueError):
    pass


def parse_n_grid(spec: str) -> List[int]:
    """``lo:hi:count`` with geometric spacing, rounded to distinct integers."""
    lo, hi, count = _split_grid(spec)
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad n-grid {spec!r}")
    if count == 1:
        return [int(round(lo))]
    vals = np.rint(np.geomspace(lo, hi, int(count))).astype(int).tolist()
    if len(set(vals)) != len(vals):
        raise ConfigError(f"n-grid {spec!r} rounds to repeated values")
    return vals


def parse_u_grid(spec: str) -> List[float]:
    """``lo:hi:count`` with linear spacing."""
    lo, hi, count = _split_grid(spec)
    if lo <= 0 or hi < lo:
        raise ConfigError(f"bad u-grid {spec!r}")
    return [float(x) for x in np.linspace(lo, hi, int(count))]


def _split_grid(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must be lo:hi:count, got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"grid must be lo:hi:count, got {spec!r}") from None
    if count < 1:
        raise ConfigError("grid count must be >= 1")
    return lo, hi, count


def parse_intervals(spec: str) -> pointproc.IntervalUnion:
    """``u1:v1,u2:v2,...``; ``inf`` marks an unbounded right end."""
    pairs = []
    for item in spec.split(","):
        try:
            u, v = item.split(":")
            pairs.append((float(u), pointproc.UNBOUNDED if v.strip().lower() in ("inf", "infinity")
                          else float(v)))
        except ValueError:
            raise ConfigError(f"bad interval {item!r}") from None
    try:
        return pointproc.IntervalUnion(tuple(pairs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _ns(args) -> List[int]:
    if args.n_grid:
        return parse_n_grid(args.n_grid)
    if args.n is None:
        raise ConfigError("give --n or --n-grid")
    if args.n < 1:
        raise ConfigError("n must be >= 1")
    return [args.n]


def _us(args, default: Optional[float] = None) -> List[float]:
    if args.u_grid:
        return parse_u_grid(args.u_grid)
    u = args.u if args.u is not None else default
    if u is None:
        raise ConfigError("give --u or --u-grid")
    if not u > 0:
        raise ConfigError("u must be positive")
    return [u]


def _mixing(args) -> cs.MixingModel:
    try:
        return cs.MixingModel(args.C, args.theta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _policy(args) -> RefinementPolicy:
    try:
        return RefinementPolicy(initial_bits=args.initial_bits, max_bits=args.max_bits)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _trials(args, default: int, quick: int) -> int:
    t = args.trials if args.trials is not None else (quick if args.quick else default)
    if t < 1:
        raise ConfigError("trials must be >= 1")
    return t


def resolved_config(args) -> Dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def config_hash(config: Dict) -> str:
    core = {k: v for k, v in config.items() if k not in NON_CONFIG_KEYS}
    core["command"] = config.get("command")
    blob = json.dumps(core, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _fmt(v):
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return "" if v is None else str(v)


def render(command: str, config: Dict, rows: List[Dict], columns: Sequence[str], fmt: str,
           summary: Optional[Dict] = None) -> str:
    h = config_hash(config)
    for row in rows:
        row.setdefault("seed", config.get("seed"))
        row["config_hash"] = h
    cols = list(columns) + ["seed", "config_hash"]
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "code_version": __version__, "command": command,
               "config": config, "config_hash": h, "rows": [{c: _plain(r.get(c)) for c in cols} for r in rows]}
        if summary is not None:
            doc["summary"] = summary
        return json.dumps(doc, indent=2, default=str, allow_nan=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# cf-extremes {__version__} {command}\n")
    buf.write("# config " + json.dumps(config, sort_keys=True, default=str) + "\n")
    buf.write(f"# config_hash {h}\n")
    if summary is not None:
        buf.write("# summary " + json.dumps(summary, sort_keys=True, default=str) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


EXCEEDANCE_COLUMNS = ["n", "u", "threshold_m", "trials", "sampler", "tv_poisson", "tv_error",
                      "tv_intermediate", "noise_floor", "theorem1_bound", "l_n", "b1", "b2", "b3",
                      "chen_stein_total", "freedman", "C", "theta", "discarded"]


def cmd_exceedance(args):
    ns, us = _ns(args), _us(args, 1.0)
    trials, mixing, policy = _trials(args, 10 ** 5, 10 ** 4), _mixing(args), _policy(args)
    rows = []
    for n in ns:
        laws = ev.estimate_exceedance_laws(n, us, trials, args.seed, args.sampler, args.workers, policy)
        for u, law in zip(us, laws):
            m = scaled_threshold(n, u)
            b = cs.analytic_bounds_cf(n, u, mixing)
            rows.append({
                "n": n, "u": u, "threshold_m": m, "trials": trials, "sampler": args.sampler,
                "tv_poisson": ev.tv_distance(law, ev.PoissonLaw(1.0 / u)),
                "tv_error": ev.tv_details(law, ev.PoissonLaw(1.0 / u)).error_bound,
                "tv_intermediate": ev.tv_distance(law, ev.PoissonLaw(n * digit_tail_prob(m))),
                "noise_floor": ev.noise_floor(law), "theorem1_bound": cs.theorem1_bound(n, u, mixing),
                "l_n": b.l_n, "b1": b.b1, "b2": b.b2, "b3": b.b3, "chen_stein_total": b.total,
                "freedman": cs.freedman_second_order(n, u), "C": mixing.C, "theta": mixing.theta,
                "discarded": law.discarded,
            })
    return rows, EXCEEDANCE_COLUMNS, None, EXIT_OK


RATE_COLUMNS = ["n", "sup_tv", "argmax_u", "noise_floor", "resolved", "estimator", "trials",
                "slope", "slope_stderr", "discarded"]


def fit_rate(ns: Sequence[float], tvs: Sequence[float]):
    """OLS slope of ``log tv`` against ``log n`` and its standard error."""
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(tvs, float))
    if np.ptp(y) == 0:
        return 0.0, 0.0
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.stderr)


def sup_tv_curve(ns: Sequence[int], us: Sequence[float], trials: int, seed: int,
                 estimator: str = "counting", workers: Optional[int] = None):
    """Per ``n``: (sup over ``us`` of TV to the limit, maximising ``u``, noise floor there, discards)."""
    out = []
    for n in ns:
        if estimator == "weighted":
            laws = ev.weighted_exceedance_laws(n, us, trials, seed, workers=workers)
        elif estimator == "counting":
            laws = ev.estimate_exceedance_laws(n, us, trials, seed, "chain", workers)
        else:
            raise ConfigError(f"unknown estimator {estimator!r}")
        tvs = [ev.tv_distance(law, ev.PoissonLaw(1.0 / u)) for u, law in zip(us, laws)]
        i = int(np.argmax(tvs))
        out.append((tvs[i], us[i], ev.noise_floor(laws[i]), getattr(laws[i], "discarded", 0)))
    return out


def cmd_rate_sweep(args):
    if not args.n_grid:
        raise ConfigError("rate-sweep needs --n-grid")
    ns = parse_n_grid(args.n_grid)
    if len(ns) < 4:
        raise ConfigError("n-grid too small: need at least 4 points")
    us = parse_u_grid(args.u_grid or "0.5:4:8")
    trials = _trials(args, 2 * 10 ** 5, 2 * 10 ** 4)
    curve = sup_tv_curve(ns, us, trials, args.seed, args.estimator, args.workers)
    # the observed TV is signal plus roughly one noise floor of bias
    resolved = [tv - nf > nf for tv, _, nf, _ in curve]
    slope = stderr = float("nan")
    if all(resolved):
        slope, stderr = fit_rate(ns, [c[0] for c in curve])
    else:
        print("warning: Monte Carlo noise floor exceeds the signal at n = "
              + ", ".join(str(n) for n, ok in zip(ns, resolved) if not ok)
              + "; no slope reported", file=sys.stderr)
    rows = [{"n": n, "sup_tv": tv, "argmax_u": u, "noise_floor": nf, "resolved": ok,
             "estimator": args.estimator, "trials": trials, "slope": slope, "slope_stderr": stderr,
             "discarded": d}
            for n, (tv, u, nf, d), ok in zip(ns, curve, resolved)]
    sups = [c[0] for c in curve]
    summary = {"slope": slope, "slope_stderr": stderr, "all_resolved": all(resolved),
               "decreasing": all(a > b for a, b in zip(sups, sups[1:]))}
    return rows, RATE_COLUMNS, summary, EXIT_OK


MAXIMA_COLUMNS = ["n", "u", "k", "trials", "empirical_cdf", "stderr", "limit_cdf", "discarded"]


def cmd_maxima(args):
    ns, us = _ns(args), _us(args, 1.0)
    ks = [args.k] if args.k else [1]
    trials = _trials(args, 10 ** 5, 10 ** 4)
    rows = []
    for n in ns:
        for u in us:
            for k in ks:
                if not 1 <= k <= n:
                    raise ConfigError("need 1 <= k <= n")
                p = ev.kth_max_cdf_empirical(n, u, k, trials, args.seed, args.workers)
                rows.append({"n": n, "u": u, "k": k, "trials": trials, "empirical_cdf": p,
                             "stderr": math.sqrt(p * (1 - p) / trials),
                             "limit_cdf": ev.limit_kth_max_cdf(u, k), "discarded": 0})
    return rows, MAXIMA_COLUMNS, None, EXIT_OK


POINT_COLUMNS = ["n", "check", "intervals", "trials", "empirical", "stderr", "exact_finite_n",
                 "limit", "discarded"]


def _interval_text(union: pointproc.IntervalUnion) -> str:
    return ",".join(f"{u:g}:{'inf' if v is pointproc.UNBOUNDED else format(v, 'g')}"
                    for u, v in union.intervals)


def cmd_pointprocess(args):
    ns = _ns(args)
    union = parse_intervals(args.intervals or "1:2,3:inf")
    trials = _trials(args, 10 ** 5, 10 ** 4)
    rows = []
    for n in ns:
        cutoff = min(pointproc.DEFAULT_CUTOFF, union.lowest / 2)
        sample = pointproc.PointProcessSample.simulate(n, trials, args.seed, cutoff, args.workers)
        for iv in union.intervals:
            piece = pointproc.IntervalUnion((iv,))
            r = pointproc.mean_measure_check(n, piece, trials, args.seed, sample)
            rows.append({"n": n, "check": "mean", "intervals": _interval_text(piece), "trials": trials,
                         "empirical": r.empirical, "stderr": r.stderr,
                         "exact_finite_n": r.exact_finite_n, "limit": r.limit, "discarded": 0})
        r = pointproc.avoidance_probability_check(n, union, trials, args.seed, sample)
        rows.append({"n": n, "check": "avoidance", "intervals": _interval_text(union), "trials": trials,
                     "empirical": r.empirical, "stderr": r.stderr, "exact_finite_n": r.poisson_finite_n,
                     "limit": r.limit, "discarded": 0})
    return rows, POINT_COLUMNS, None, EXIT_OK


BOUNDS_COLUMNS = ["n", "delta", "C", "theta", "l_n", "b1", "b2", "b3", "chen_stein_total",
                  "freedman", "kappa", "theorem1_bound", "discarded"]


def cmd_bounds(args):
    ns, mixing = _ns(args), _mixing(args)
    deltas = [args.delta] if args.delta is not None else _us(args, 1.0)
    rows = []
    for n in ns:
        for d in deltas:
            if not d > 0:
                raise ConfigError("delta must be positive")
            b = cs.analytic_bounds_cf(n, d, mixing)
            rows.append({"n": n, "delta": d, "C": mixing.C, "theta": mixing.theta, "l_n": b.l_n,
                         "b1": b.b1, "b2": b.b2, "b3": b.b3, "chen_stein_total": b.total,
                         "freedman": cs.freedman_second_order(n, d), "kappa": cs.explicit_kappa(mixing),
                         "theorem1_bound": cs.theorem1_bound(n, d, mixing), "discarded": 0})
    return rows, BOUNDS_COLUMNS, None, EXIT_OK


VERIFY_COLUMNS = ["check", "n", "u", "k", "expected", "observed", "z", "passed", "discarded"]


def run_verification(trials: int, seed: int, sampler: str = "chain", workers: Optional[int] = None,
                     policy: RefinementPolicy = RefinementPolicy(), sigma: float = 4.0) -> List[Dict]:
    """Oracle-versus-Monte-Carlo checks; every row has a ``passed`` flag."""
    rows = []
    for a in range(1, 101):
        lo, hi = oracle.cylinder_interval([a])
        g = oracle.gauss_measure_of_interval(lo, hi)
        ok = abs(g - digit_pmf(a)) <= 1e-12
        if a <= 5 or not ok:
            rows.append({"check": "cylinder_pmf", "k": a, "expected": digit_pmf(a), "observed": g,
                         "passed": ok})
    ns, us = (1, 2, 3), (0.5, 1.0, 2.0)
    if sampler == "exact":
        digits, discarded = ev.exact_digits(max(ns), trials, seed, policy, workers)
    else:
        from .chain import chain_digits
        digits, discarded = chain_digits(max(ns), trials, seed, workers), 0
    kept = digits.shape[0]
    for n in ns:
        for u in us:
            law = oracle.exact_exceedance_distribution(n, u)
            counts = (digits[:, :n] >= law.threshold_m).sum(axis=1)
            freq = np.bincount(counts, minlength=n + 1) / kept
            rows.append({"check": "law_total", "n": n, "u": u, "expected": 1.0, "observed": sum(law.pmf),
                         "z": 0.0, "passed": abs(sum(law.pmf) - 1.0) <= (n + 1) * law.error_bound + 1e-12})
            for k, p in enumerate(law.pmf):
                se = math.sqrt(p * (1 - p) / kept)
                diff = freq[k] - p
                z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
                rows.append({"check": "oracle_atom", "n": n, "u": u, "k": k, "expected": p,
                             "observed": float(freq[k]), "z": z,
                             "passed": abs(diff) <= sigma * se + law.error_bound,
                             "discarded": discarded})
    return rows


def cmd_verify(args):
    trials = _trials(args, 10 ** 6, 10 ** 5)
    rows = run_verification(trials, args.seed, args.sampler, args.workers, _policy(args))
    failed = [r for r in rows if not r["passed"]]
    for r in failed:
        print(f"verification failure: {r}", file=sys.stderr)
    return rows, VERIFY_COLUMNS, {"checks": len(rows), "failed": len(failed)}, \
        EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int)
    common.add_argument("--n-grid", help="lo:hi:count, geometric")
    common.add_argument("--u", type=float)
    common.add_argument("--u-grid", help="lo:hi:count, linear")
    common.add_argument("--k", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--C", type=float, default=cs.DEFAULT_MIXING.C)
    common.add_argument("--theta", type=float, default=cs.DEFAULT_MIXING.theta)
    common.add_argument("--workers", type=int, help="default: $CF_EXTREMES_WORKERS or 1")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--initial-bits", type=int, default=RefinementPolicy().initial_bits)
    common.add_argument("--max-bits", type=int, default=RefinementPolicy().max_bits)
    common.add_argument("--sampler", choices=("chain", "exact"), default="chain")
    common.add_argument("--estimator", choices=("counting", "weighted"), default="counting")
    common.add_argument("--intervals", help="u1:v1,u2:v2 (inf allowed)")
    common.add_argument("--quick", action="store_true", help="smaller default trial counts")

    p = argparse.ArgumentParser(prog="cf-extremes", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, text in (
        ("exceedance", cmd_exceedance, "exceedance-count law versus its Poisson limit"),
        ("rate-sweep", cmd_rate_sweep, "sup-over-u TV distance across an n-grid and its log-log slope"),
        ("maxima", cmd_maxima, "k-th maximum CDF versus its limit"),
        ("pointprocess", cmd_pointprocess, "mean-measure and avoidance checks for Q_n"),
        ("bounds", cmd_bounds, "analytic Chen-Stein bounds and the explicit rate bound"),
        ("verify", cmd_verify, "oracle versus Monte Carlo checks"),
    ):
        sp = sub.add_parser(name, parents=[common], help=text, description=text)
        sp.set_defaults(func=fn)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.workers is not None and args.workers < 1:
        print("error: workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows, cols, summary, code = args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(args.command, resolved_config(args), rows, cols, args.format, summary)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
