"""Command line interface: ``ocdetect {detect,calibrate,simulate,bench}``.

Exit status of ``detect``: 0 when the stream ended (or ``--max-n`` was hit)
without a declaration, 1 when a change was declared, 2 on any error.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys

import numpy as np

from . import bench as bench_mod
from .base import StreamError
from .baselines import Mei, MixtureDetector
from .calibrate import (calibrate_thresholds, dumps, load_threshold_values,
                        save_monitor_thresholds, save_thresholds)
from .core_stats import InputError
from .detector import OCD, ThresholdSet, theoretical_thresholds
from .grid import ConfigError, DetectorConfig, build_grid, config_from_mapping, read_config_file
from .ingest import ingest
from .preprocess import preprocess
from .simulate import change_spec, effective_sparsity, generate_stream, replicate_rng, write_stream_csv

log = logging.getLogger("ocdetect")

EXIT_CENSORED = 0
EXIT_DECLARED = 1
EXIT_ERROR = 2

METHODS = ("ocd", "ocd_prime", "mei", "xs", "chan")
STAGE_SIMULATE = 20


class CLIError(Exception):
    pass


# ----------------------------------------------------------------- helpers


def _add_config_flags(ap, p_required=False):
    g = ap.add_argument_group("detector configuration")
    g.add_argument("--config", help="key = value file (p, beta, gamma, a_sparse_mode, variant, dedup)")
    g.add_argument("--p", type=int, required=p_required, help="dimension (inferred from data for detect)")
    g.add_argument("--beta", type=float, help="lower bound on the norm of the change (default 1)")
    g.add_argument("--gamma", type=float, help="nominal patience (default 5000)")
    g.add_argument("--a-sparse-mode", "--a_sparse_mode", dest="a_sparse_mode",
                   choices=("practical", "theoretical"))
    g.add_argument("--variant", choices=("ocd", "ocd_prime"))
    g.add_argument("--dedup", dest="dedup", action="store_true", default=None,
                   help="share tail sums between anchors (default on)")
    g.add_argument("--no-dedup", dest="dedup", action="store_false")
    g.add_argument("--method", choices=METHODS, default=None,
                   help="ocd (default), ocd_prime, or a baseline: mei, xs, chan")


def _config_values(args) -> dict:
    vals = read_config_file(args.config) if args.config else {}
    for key in ("p", "beta", "gamma", "a_sparse_mode", "variant", "dedup"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    if args.method in ("ocd", "ocd_prime"):
        if "variant" in vals and args.variant is not None and args.variant != args.method:
            raise CLIError(f"--method {args.method} conflicts with --variant {args.variant}")
        vals["variant"] = args.method
    return vals


def _method(args, vals) -> str:
    return args.method or vals.get("variant", "ocd")


def _make_config(vals: dict, p: int | None = None) -> DetectorConfig:
    vals = dict(vals)
    if p is not None:
        if "p" in vals and vals["p"] != p:
            raise CLIError(f"configured p={vals['p']} but the data have {p} coordinates")
        vals["p"] = p
    if "p" not in vals:
        raise CLIError("dimension p is required")
    return config_from_mapping(vals)


def _baseline(method: str, config: DetectorConfig, args):
    if method == "mei":
        return Mei(beta=config.beta, gamma=config.gamma,
                   n_reps=getattr(args, "reps", 200), random_state=args.seed)
    return MixtureDetector(preset=method, gamma=config.gamma,
                           n_reps=getattr(args, "reps", 200), random_state=args.seed)


def _calibrated(method: str, config: DetectorConfig, B_reps: int, seed, n_jobs=None):
    """Fitted monitor with Monte Carlo thresholds."""
    if method in ("ocd", "ocd_prime"):
        ts = calibrate_thresholds(config.with_(variant=method), build_grid(config),
                                  B_reps=B_reps, seed=seed, n_jobs=n_jobs)
        return OCD.from_config(config.with_(variant=method), ts)
    est = _baseline(method, config, argparse.Namespace(reps=B_reps, seed=seed))
    est.n_jobs = n_jobs
    return est.fit(np.zeros((1, config.p)))


def _from_file(method: str, config: DetectorConfig, path, args):
    values, doc = load_threshold_values(path)
    if doc.get("method", method) != method:
        raise CLIError(f"{path} holds thresholds for {doc['method']!r}, not {method!r}")
    if doc.get("p", config.p) != config.p:
        raise CLIError(f"{path} was calibrated for p={doc['p']}, data have p={config.p}")
    for key in ("beta", "gamma"):
        if key in doc and doc[key] != getattr(config, key):
            log.warning("%s: calibrated with %s=%s, running with %s", path, key, doc[key],
                        getattr(config, key))
    if method in ("ocd", "ocd_prime"):
        return OCD.from_config(config, ThresholdSet.from_array(values, doc.get("source", "monte_carlo")))
    return _baseline(method, config, args).fit_thresholds(config.p, values)


# ------------------------------------------------------------------ detect


def cmd_detect(args) -> int:
    vals = _config_values(args)
    method = _method(args, vals)
    rows = ingest(args.input, args.format)
    pre_params = None
    if args.training_n:
        std, rows = preprocess(rows, args.training_n, args.ar1)
        pre_params = {"training_n": args.training_n, "ar1": args.ar1, **std.params()}
    elif args.ar1:
        raise CLIError("--ar1 needs --training-n")
    rows = iter(rows)
    head = list(itertools.islice(rows, 1))
    if not head:
        raise CLIError("no observations to monitor")
    if args.thresholds:
        # beta and gamma not given explicitly follow the calibration
        _, doc = load_threshold_values(args.thresholds)
        for key in ("beta", "gamma"):
            if key in doc and key not in vals:
                vals[key] = doc[key]
    config = _make_config(vals, len(head[0]))
    if args.thresholds and args.theoretical:
        raise CLIError("give either --thresholds or --theoretical, not both")
    if args.thresholds:
        det = _from_file(method, config, args.thresholds, args)
    elif args.theoretical:
        if method not in ("ocd", "ocd_prime"):
            raise CLIError(f"no theoretical thresholds for {method}; use --thresholds")
        det = OCD.from_config(config, theoretical_thresholds(config, args.theoretical))
    else:
        raise CLIError("thresholds required: --thresholds FILE or --theoretical MODE")
    trace = open(args.trace, "w") if args.trace else None
    try:
        out = det.detect(itertools.chain(head, rows), max_n=args.max_n, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    report = {"declared": bool(out.declared), "method": method}
    if out.declared:
        d = out.to_dict() if hasattr(out, "to_dict") else {
            "n": out.n, "crossed": [det.stat_names[c] for c in out.crossed]}
        if method not in ("ocd", "ocd_prime"):
            d["trigger"] = det.stat_names[out.crossed[0]] if len(out.crossed) == 1 else "multiple"
            d["statistic_value"] = float(out.stats[out.crossed[0]])
            d["anchor"] = None
            d["scale_index"] = None
        report.update(d)
    else:
        report.update({"n": out.n, "reason": out.reason, "trigger": None})
    report["thresholds"] = dict(zip(det.stat_names, map(float, det.thresholds_)))
    report["config"] = config.to_dict()
    if pre_params is not None:
        report["preprocess"] = pre_params
    print(dumps(report))
    return EXIT_DECLARED if out.declared else EXIT_CENSORED


# --------------------------------------------------------------- calibrate


def cmd_calibrate(args) -> int:
    vals = _config_values(args)
    method = _method(args, vals)
    config = _make_config(vals)
    det = _calibrated(method, config, args.reps, args.seed, args.n_jobs)
    if method in ("ocd", "ocd_prime"):
        save_thresholds(args.out, det.threshold_set_, config.with_(variant=method),
                        seed=args.seed, B_reps=args.reps)
    else:
        save_monitor_thresholds(args.out, method, det.stat_names, det.thresholds_, config.p,
                                config.gamma, seed=args.seed, B_reps=args.reps,
                                beta=config.beta)
    print(dumps({"method": method, "out": args.out,
                 "thresholds": dict(zip(det.stat_names, map(float, det.thresholds_)))}))
    return 0


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    rng = replicate_rng(args.seed, STAGE_SIMULATE, 0)
    s = args.s if args.s is not None else 1
    spec = change_spec(args.p, s, args.vartheta, args.z, rng)
    X = generate_stream(spec, args.n, rng)
    header = {"p": args.p, "z": args.z, "vartheta": args.vartheta, "s": s, "seed": args.seed}
    write_stream_csv(args.out if args.out != "-" else sys.stdout, X, header)
    if args.theta_out:
        s_eff = effective_sparsity(spec.theta)[0] if spec.vartheta else None
        with open(args.theta_out, "w") as fh:
            fh.write(dumps({"theta": spec.theta.tolist(), "s_eff": s_eff, **header}) + "\n")
    return 0


# ------------------------------------------------------------------- bench


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_bench(args) -> int:
    vals = _config_values(args)
    method = _method(args, vals)
    config = _make_config(vals)
    p = config.p
    meta_common = {"experiment": args.experiment, "config": config.to_dict(),
                   "calib_reps": args.calib_reps}

    def monitor(m):
        if args.thresholds and m == method:
            return _from_file(m, config, args.thresholds, args)
        return _calibrated(m, config, args.calib_reps, args.seed, args.n_jobs)

    rows, thr_meta = [], {}
    if args.experiment == "complexity":
        cfg = config.with_(variant="ocd_prime" if method == "ocd_prime" else "ocd")
        rep = bench_mod.complexity_probe(cfg, args.n_points, seed=args.seed)
        rows.append({"p": p, "variant": cfg.variant, "dedup": cfg.dedup,
                     "n_points": rep.n_points, "window": rep.window,
                     "early_median_s": rep.early_median_s, "late_median_s": rep.late_median_s,
                     "ratio": rep.ratio, "accumulators_start": rep.accumulators_start,
                     "accumulators_end": rep.accumulators_end})
    elif args.experiment == "patience":
        det = monitor(method)
        thr_meta[method] = det.thresholds_
        res = bench_mod.estimate_patience(det, reps=args.reps, cap=args.cap, seed=args.seed,
                                          n_jobs=args.n_jobs)
        rows.append({"method": method, "p": p, "beta": config.beta, "gamma": config.gamma,
                     "cap": args.cap, "reps": args.reps, "truncated_mean": res.truncated_mean,
                     "declared_fraction": res.declared_fraction,
                     "p_exceed_gamma": res.survival(config.gamma)})
    else:
        methods = [method] if args.experiment == "delay" else list(args.methods)
        for m in methods:
            det = monitor(m)
            thr_meta[m] = det.thresholds_
            for s in args.s:
                for vt in args.vartheta:
                    res = bench_mod.estimate_delay(det, p, s, vt, z=args.z, reps=args.reps,
                                                   mode=args.mode, seed=args.seed,
                                                   cap=args.cap, n_jobs=args.n_jobs)
                    row = {"method": m, "p": p, "s": s, "vartheta": vt, "beta": config.beta,
                           "z": args.z, "reps": args.reps, "combined_delay": res.combined_delay,
                           "false_alarms": res.false_alarms, "censored": res.censored}
                    for k, v in res.trigger_share.items():
                        row[f"first_{k}_pct"] = v
                    for k, v in (res.per_statistic_delay or {}).items():
                        row[f"delay_{k}"] = v
                    rows.append(row)
    meta = bench_mod.experiment_metadata(args.seed, args.reps,
                                         {k: v.tolist() for k, v in thr_meta.items()},
                                         **meta_common)
    if args.table_out:
        bench_mod.write_table(args.table_out, rows, meta)
    if args.plot_data_out and thr_meta:
        from .simulate import ChangeSpec

        det = monitor(method)
        if args.experiment == "patience":
            spec = ChangeSpec.null(p)
        else:
            rng = replicate_rng(args.seed, bench_mod.STAGE_TRAJECTORY, 10**6)
            spec = change_spec(p, args.s[0], args.vartheta[0], args.z, rng)
        recs = bench_mod.trajectories(det, spec, args.plot_steps, seed=args.seed)
        bench_mod.write_table(args.plot_data_out, recs)
    print(dumps({"rows": rows, "metadata": meta}))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ocdetect",
                                 description="High-dimensional online changepoint detection.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="monitor a stream and report the first declaration")
    d.add_argument("input", nargs="?", default="-", help="CSV/JSONL file, '-' for stdin")
    d.add_argument("--format", choices=("csv", "jsonl"))
    _add_config_flags(d)
    d.add_argument("--thresholds", help="threshold JSON written by 'calibrate'")
    d.add_argument("--theoretical", choices=("dense", "sparse", "adaptive"),
                   help="use closed-form thresholds instead of a file")
    d.add_argument("--training-n", "--training_n", dest="training_n", type=int,
                   help="standardize with the first N rows (consumed, not monitored)")
    d.add_argument("--ar1", action="store_true", help="also whiten with a fitted AR(1)")
    d.add_argument("--trace", help="write per-observation statistics as JSON lines")
    d.add_argument("--max-n", dest="max_n", type=int, help="stop after this many observations")
    d.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("calibrate", help="Monte Carlo thresholds to a JSON file")
    _add_config_flags(c, p_required=False)
    c.add_argument("--reps", type=int, default=200, help="replications per pass (default 200)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="write a synthetic mean-shift stream as CSV")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n", type=int, required=True, help="number of rows")
    s.add_argument("--z", type=int, default=0, help="changepoint: rows after the first z shift")
    s.add_argument("--vartheta", type=float, default=0.0, help="norm of the change")
    s.add_argument("--s", type=int, default=None, help="sparsity of the change (default 1)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.add_argument("--theta-out", dest="theta_out", help="also write the change vector as JSON")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="patience / delay / compare / complexity experiments")
    b.add_argument("--experiment", choices=("patience", "delay", "compare", "complexity"),
                   required=True)
    _add_config_flags(b)
    b.add_argument("--reps", type=int, default=200)
    b.add_argument("--calib-reps", dest="calib_reps", type=int, default=200)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--cap", type=int, default=20000)
    b.add_argument("--thresholds", help="thresholds for --method instead of calibrating")
    b.add_argument("--s", type=_int_list, default=[1], help="comma-separated sparsities")
    b.add_argument("--vartheta", type=_float_list, default=[1.0], help="comma-separated norms")
    b.add_argument("--z", type=int, default=0)
    b.add_argument("--mode", choices=("first_trigger", "all_three"), default="first_trigger")
    b.add_argument("--methods", type=lambda t: [m for m in t.split(",") if m],
                   default=["ocd", "mei", "xs", "chan"])
    b.add_argument("--n-points", dest="n_points", type=int, default=100_000)
    b.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)
    b.add_argument("--table-out", dest="table_out")
    b.add_argument("--plot-data-out", dest="plot_data_out",
                   help="long-format CSV of statistic trajectories")
    b.add_argument("--plot-steps", dest="plot_steps", type=int, default=1000)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "methods", None):
        bad = [m for m in args.methods if m not in METHODS]
        if bad:
            ap.error(f"unknown methods {bad}")
    try:
        return args.func(args)
    except (CLIError, ConfigError, InputError, StreamError, ValueError, OSError) as exc:
        print(f"ocdetect {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
