"""Command-line interface.

Every command takes its trace from ``--trace PATH`` (``--format csv|one``)
or from ``--gen SPEC``, and writes its outputs into ``--out DIR``. Options
may also come from a flat JSON object given with ``--config``; explicit
flags win over the file.

All randomness derives from ``--seed`` through :func:`derive_seed`, one
stream per task (trace generation, colouring samples, message simulation).

Exit codes: 0 success, 1 validation threshold exceeded, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import analyze, colouring, estimate, predict, simulate, synth
from .trace import ContactTrace, TraceFormatError, parse_csv, parse_one_report, to_csv

log = logging.getLogger("dtncolour")

TASKS = {"gen": 1, "colouring": 2, "simulate": 3}
DEFAULT_BINS = 4096


class InputError(Exception):
    pass


def derive_seed(root: int, task: str) -> int:
    """Seed for one pipeline task: first word of SeedSequence([root, task id])."""
    return int(np.random.SeedSequence([int(root), TASKS[task]]).generate_state(1)[0])


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def load_trace(args) -> ContactTrace:
    if bool(args.trace) == bool(args.gen):
        raise InputError("give exactly one of --trace or --gen")
    if args.gen:
        try:
            spec = synth.parse_gen_spec(args.gen)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if "seed=" not in args.gen.replace(" ", ""):
            spec = type(spec)(**{**spec.__dict__, "seed": derive_seed(args.seed, "gen")})
        return synth.generate(spec)
    path = Path(args.trace)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read trace {path}: {exc.strerror}") from None
    try:
        if args.format == "one":
            return parse_one_report(data, horizon_end=args.horizon_end)
        return parse_csv(data)
    except (TraceFormatError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def grid(args, horizon: float | None) -> tuple[float, int]:
    if args.dt is not None:
        dt = args.dt
    elif horizon:
        dt = horizon / DEFAULT_BINS
    else:
        raise InputError("cannot choose a grid step: pass --dt")
    if not dt > 0:
        raise InputError("--dt must be positive")
    return dt, args.length


def parse_multicopy(text: str | None) -> predict.MultiCopyParams | None:
    if not text:
        return None
    kw = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in ("a", "s", "k_max", "tail_eps"):
            raise InputError(f"bad --multicopy item {item!r}")
        kw[key] = float(val) if key == "tail_eps" else int(val)
    if "a" not in kw:
        raise InputError("--multicopy needs a=<copies>")
    try:
        return predict.MultiCopyParams(**kw)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def fit_pipeline(args, trace):
    samples = colouring.sample_deltas(trace, args.runs, derive_seed(args.seed, "colouring"))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", estimate.FitWarning)
        model = estimate.fit_mixture(samples, zero_eps=args.zero_eps)
    for w in caught:
        log.warning("%s", w.message)
    model.horizon = trace.duration
    return samples, model


def homogeneous_model(trace, mode: str):
    try:
        residual = estimate.estimate_residual(trace, mode)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    model = estimate.homogeneous_deltas(residual, trace.n)
    model.horizon = trace.duration
    return model


def cmd_fit(args) -> int:
    trace = load_trace(args)
    samples, model = fit_pipeline(args, trace)
    out = Path(args.out)
    write_atomic(out / "model.json", model.to_json())
    write_atomic(out / "deltas.csv", samples.to_csv())
    write_atomic(out / "deltas_censoring.json", samples.censoring_json())
    write_atomic(out / "delta_ccdf.csv", analyze.delta_ccdf_export(samples))
    if model.flags:
        log.warning("fit flags: %s", dict(sorted(model.flags.items())))
    return 0


def _model_for_predict(args):
    if args.model:
        try:
            return estimate.DeltaModel.from_json(Path(args.model).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read model {args.model}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise InputError(f"bad model file: {exc}") from None
    trace = load_trace(args)
    if args.kind == "homogeneous":
        return homogeneous_model(trace, args.residual)
    return fit_pipeline(args, trace)[1]


def cmd_predict(args) -> int:
    model = _model_for_predict(args)
    dt, length = grid(args, model.horizon)
    mc = parse_multicopy(args.multicopy)
    out = Path(args.out)
    curves = {"epidemic": predict.epidemic_latency(model, dt, length)}
    if mc is not None:
        if mc.a > model.n:
            raise InputError(f"a={mc.a} exceeds node count {model.n}")
        curves["multicopy"] = predict.multicopy_latency(model, mc, dt, length)
    for name, c in curves.items():
        write_atomic(out / f"latency_{name}.csv", c.to_csv())
    if args.ttl:
        rows = ["ttl," + ",".join(curves)]
        for ttl in args.ttl:
            rows.append(f"{ttl!r}," + ",".join(repr(predict.delivery_ratio(c, ttl)) for c in curves.values()))
        write_atomic(out / "ttl.csv", "\n".join(rows) + "\n")
    return 0


def _simulate(args, trace, protocol: str):
    sched = {"gap_low": args.gap_low, "gap_high": args.gap_high, "window": args.window}
    if args.ttl_sim is not None:
        sched["ttl"] = args.ttl_sim
    return simulate.batch_experiment(trace, args.batch_runs, derive_seed(args.seed, "simulate"),
                                     protocol=protocol, copies=args.copies, variant=args.variant, **sched)


def cmd_simulate(args) -> int:
    trace = load_trace(args)
    records = _simulate(args, trace, args.protocol)
    write_atomic(Path(args.out) / f"deliveries_{args.protocol}.csv", simulate.records_csv(records))
    return 0


def cmd_validate(args) -> int:
    trace = load_trace(args)
    dt, length = grid(args, trace.duration)
    _, mixture = fit_pipeline(args, trace)
    homog = homogeneous_model(trace, args.residual)
    mc = parse_multicopy(args.multicopy)
    out = Path(args.out)
    report: dict = {"n": trace.n, "events": len(trace), "dt": dt, "seed": args.seed, "runs": args.runs}
    protocols = [("epidemic", None)]
    if mc is not None:
        protocols.append(("spray", mc))
    worst = 0.0
    for protocol, params in protocols:
        if params is None:
            curves = {"colouring": predict.epidemic_latency(mixture, dt, length),
                      "homogeneous": predict.epidemic_latency(homog, dt, length)}
        else:
            if args.copies != params.a:
                log.warning("simulating %d copies against a model with a=%d", args.copies, params.a)
            curves = {"colouring": predict.multicopy_latency(mixture, params, dt, length),
                      "homogeneous": predict.multicopy_latency(homog, params, dt, length)}
        records = _simulate(args, trace, protocol)
        lat, undelivered = simulate.latencies(records)
        write_atomic(out / f"deliveries_{protocol}.csv", simulate.records_csv(records))
        section = {}
        for name, c in curves.items():
            write_atomic(out / f"latency_{protocol}_{name}.csv", c.to_csv())
            if lat.size:
                section[name] = predict.compare(c, lat, undelivered).as_dict()
                section[name]["median"] = c.median()
        section["simulated"] = {"delivered": int(lat.size), "undelivered": undelivered,
                                "median": float(np.median(lat)) if lat.size else math.nan}
        if lat.size:
            worst = max(worst, section["colouring"]["ks"])
        report[protocol] = section
    report["max_colouring_ks"] = worst
    if args.max_ks is not None:
        report["threshold"] = args.max_ks
        report["passed"] = worst <= args.max_ks
    write_atomic(out / "report.json", dumps(report))
    if args.max_ks is not None and worst > args.max_ks:
        return 1
    return 0


def cmd_analyze(args) -> int:
    trace = load_trace(args)
    out = Path(args.out)
    window = min(args.corr_window, trace.duration)
    profile = analyze.contact_correlation(trace, window, args.points, method=args.method)
    write_atomic(out / "correlation_ccdf.csv", profile.to_csv())
    write_atomic(out / "correlation_nodes.csv", profile.nodes_csv())
    write_atomic(out / "correlation.json", analyze.sidecar(profile.metadata()))
    runs = colouring.sample_runs(trace, args.runs, derive_seed(args.seed, "colouring"))
    samples = colouring.DeltaSamples(trace.n)
    for r in runs:
        samples.add(r)
    mixture = estimate.fit_mixture(samples, zero_eps=args.zero_eps)
    homog = homogeneous_model(trace, args.residual)
    trace_curve = analyze.expected_colouring_curve(samples)
    hom_curve = analyze.expected_colouring_curve(homog)
    rows = ["i,from_trace,homogeneous"]
    rows += [f"{i},{a!r},{b!r}" for i, (a, b) in enumerate(zip(trace_curve.tolist(), hom_curve.tolist()), 1)]
    write_atomic(out / "colouring_curve.csv", "\n".join(rows) + "\n")
    dt, length = grid(args, trace.duration)
    t2 = {"colouring": analyze.t2_cdf(mixture, dt, length), "homogeneous": analyze.t2_cdf(homog, dt, length)}
    xs = np.concatenate(([0.0], dt * np.arange(1, length + 1)))
    rows = ["t," + ",".join(t2)]
    cols = [d.cdf_at(xs) for d in t2.values()]
    rows += [f"{x!r}," + ",".join(repr(float(c[k])) for c in cols) for k, x in enumerate(xs.tolist())]
    write_atomic(out / "t2_cdf.csv", "\n".join(rows) + "\n")
    rows = ["i,rho,n_samples,degenerate"]
    for i in range(1, trace.n):
        try:
            res = analyze.independence_test(runs, i)
        except ValueError:
            continue
        rows.append(f"{i},{res.rho!r},{res.n_samples},{int(res.degenerate)}")
    write_atomic(out / "independence.csv", "\n".join(rows) + "\n")
    write_atomic(out / "delta_ccdf.csv", analyze.delta_ccdf_export(samples))
    return 0


def cmd_gen(args) -> int:
    if not args.gen:
        raise InputError("gen needs --gen SPEC")
    trace = load_trace(args)
    write_atomic(Path(args.out) / "trace.csv", to_csv(trace))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file of option defaults")
    common.add_argument("--trace", help="contact trace file")
    common.add_argument("--format", choices=("csv", "one"), default="csv")
    common.add_argument("--horizon-end", type=float, help="close open ONE links at this time")
    common.add_argument("--gen", help="generator spec, e.g. homogeneous:n=20,lambda=0.001,horizon=1e6")
    common.add_argument("--dt", type=float, help="grid step in seconds (default: horizon/4096)")
    common.add_argument("--length", type=int, default=DEFAULT_BINS, help="initial grid bins")
    common.add_argument("--runs", type=int, default=700, help="colouring runs")
    common.add_argument("--seed", type=int, default=0, help="root seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--zero-eps", type=float, default=0.0, help="largest Δ treated as immediate")
    common.add_argument("--residual", choices=("fitted-exponential", "empirical"), default="fitted-exponential")
    common.add_argument("-v", "--verbose", action="store_true")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--protocol", choices=("epidemic", "spray"), default="epidemic")
    sim.add_argument("--copies", type=int, default=10, help="Spray-and-Wait tokens")
    sim.add_argument("--variant", choices=("binary", "source"), default="binary")
    sim.add_argument("--batch-runs", type=int, default=50, help="independent message schedules")
    sim.add_argument("--gap-low", type=float, default=50.0)
    sim.add_argument("--gap-high", type=float, default=100.0)
    sim.add_argument("--window", type=float, default=40000.0, help="message creation window (s)")
    sim.add_argument("--ttl-sim", type=float, help="message TTL in the simulator")

    parser = argparse.ArgumentParser(prog="dtncolour", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", parents=[common], help="sample colouring runs and fit the mixture model")
    p.set_defaults(func=cmd_fit)
    p = sub.add_parser("predict", parents=[common], help="latency CDFs from a model")
    p.add_argument("--model", help="model JSON from `fit` (otherwise fit inline)")
    p.add_argument("--kind", choices=("mixture", "homogeneous"), default="mixture")
    p.add_argument("--multicopy", help="e.g. a=10 or a=10,s=2")
    p.add_argument("--ttl", type=float, action="append", help="report F_R at this TTL (repeatable)")
    p.set_defaults(func=cmd_predict)
    p = sub.add_parser("simulate", parents=[common, sim], help="trace-driven delivery simulation")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("validate", parents=[common, sim], help="predictions vs simulation")
    p.add_argument("--multicopy", help="also validate multi-copy, e.g. a=10")
    p.add_argument("--max-ks", type=float, help="exit 1 if the colouring-model KS exceeds this")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("analyze", parents=[common], help="trace diagnostics")
    p.add_argument("--corr-window", type=float, default=20000.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--method", choices=("pearson", "spearman"), default="pearson")
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("gen", parents=[common], help="write a synthetic trace as CSV")
    p.set_defaults(func=cmd_gen)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot load config {args.config}: {exc}") from None
        if not isinstance(conf, dict) or any(isinstance(v, (dict, list)) and k != "ttl" for k, v in conf.items()):
            raise InputError("config must be a flat JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        # one manifest may serve several commands: keys of other commands are skipped
        subs = parser._subparsers._group_actions[0].choices
        dests = {name: {a.dest for a in p._actions} for name, p in subs.items()}
        unknown = set(conf) - set().union(*dests.values())
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        subs[args.command].set_defaults(**{k: v for k, v in conf.items() if k in dests[args.command]})
        args = parser.parse_args(argv)
    if args.runs < 1:
        raise InputError("--runs must be >= 1")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
