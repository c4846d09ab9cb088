"""Command-line interface: ``malfare <command> [options]``.

Commands: eval, train, sweep, bound, hardness, cover-emm. Exit status is
0 on success, 2 on usage errors and 1 on runtime errors. Data goes to
stdout (or ``--out``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aggregator import (PowerSpec, Sense, SentimentProfile, cas_mean,
                         format_p, parse_p, power_mean)
from .dataset import load_csv, make_synthetic, split, standardize
from .emm import TrainConfig, sweep_p, train_cover, train_psg, _Objective
from .estimation import (bennett_epsilon, bracket_from_estimates,
                         hoeffding_epsilon, nsw_hardness_bound,
                         nsw_hardness_simulate, weighted_nsw)
from .inequality import atkinson_report
from .losses import LossKind, losses

log = logging.getLogger("malfare")


class UsageError(Exception):
    """Bad command-line input; exits with status 2."""


# -- argument types ----------------------------------------------------------

def _p_arg(text):
    try:
        return parse_p(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid p {text!r}") from None


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _p_grid(text):
    return [_p_arg(t) for t in str(text).split(",") if t.strip()]


def _delta_arg(text):
    d = float(text)
    if not 0 < d < 1:
        raise argparse.ArgumentTypeError("delta must lie in (0, 1)")
    return d


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _weights_arg(text):
    if text in ("uniform", "freq"):
        return text
    return _floats(text)


def _seed(args):
    if getattr(args, "seed", None) is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 32))
        log.info("no --seed given; using %d", args.seed)
    return args.seed


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(args, payload, table=None):
    """Print JSON when --json is set, else the human table."""
    if args.json or table is None:
        print(json.dumps(_jsonable(payload), indent=2))
    else:
        print(table)


def _report(args, config, results, started):
    return {"command": args.command, "argv": sys.argv[1:],
            "config": config, "results": results,
            "timing": {"seconds": time.perf_counter() - started},
            "version": __version__}


def _resolve_weights_arg(weights, g):
    if weights in (None, "uniform"):
        return np.full(g, 1.0 / g)
    w = np.asarray(weights, dtype=float)
    if w.size != g:
        raise UsageError(f"expected {g} weights, got {w.size}")
    if abs(w.sum() - 1) > 1e-9:
        raise UsageError("weights must sum to 1")
    return w


# -- eval --------------------------------------------------------------------

def cmd_eval(args):
    values = np.asarray(args.values, dtype=float)
    if args.weights == "freq":
        raise UsageError("--weights freq needs a dataset; use uniform or a list")
    w = _resolve_weights_arg(args.weights, values.size)
    try:
        profile = SentimentProfile(values, w)
        spec = PowerSpec(args.p, Sense(args.sense), fair=args.fair)
    except ValueError as err:
        raise UsageError(str(err)) from None
    out = {"p": format_p(args.p), "sense": args.sense,
           "value": power_mean(profile, spec.p)}
    if args.cas:
        if math.isinf(args.p):
            raise UsageError("--cas needs a finite p")
        out["cas"] = cas_mean(profile, args.p)
    if args.atkinson is not None:
        rep = atkinson_report(profile, args.atkinson)
        out["atkinson"] = rep.index
        out["atkinson_extended_range"] = rep.extended_range
    table = "\n".join(f"{k}\t{v!r}" if isinstance(v, float) else f"{k}\t{v}"
                      for k, v in _jsonable(out).items())
    _emit(args, out, table)


# -- data-driven commands ----------------------------------------------------

def _load(args):
    seed = _seed(args)
    if args.synthetic:
        ds = make_synthetic(args.synthetic, seed=seed)
    elif args.data:
        if not (args.group and args.target):
            raise UsageError("--data needs --group and --target")
        ds = load_csv(args.data, args.target, args.group, args.positive,
                      delimiter=args.delimiter, zscore=False,
                      bias_weight=args.bias_weight)
    else:
        raise UsageError("give --data CSV or --synthetic NAME")
    train, test = split(ds, args.test_fraction, seed)
    if not args.no_zscore:
        train, test, _ = standardize(train, test)
    weights = args.weights
    if isinstance(weights, list):
        weights = _resolve_weights_arg(weights, ds.g)
    return ds, train, test, weights


def _data_config(args):
    return {"data": args.data, "synthetic": args.synthetic,
            "group": args.group, "target": args.target,
            "positive": args.positive, "test_fraction": args.test_fraction,
            "zscore": not args.no_zscore, "seed": args.seed}


def _train_config(args, weights):
    return TrainConfig(p=args.p if hasattr(args, "p") else 1.0,
                       weights=weights, epsilon=args.eps, lam=args.lam,
                       lambda_h=args.lambda_h, seed=args.seed,
                       bias_weight=args.bias_weight, max_iter=args.max_iter)


def _risk_table(names, train_r, test_r, header=("group", "train", "test")):
    lines = ["\t".join(header)]
    for name, a, b in zip(names, train_r, test_r):
        lines.append(f"{name}\t{a:.6f}\t{b:.6f}")
    return "\n".join(lines)


def cmd_train(args):
    started = time.perf_counter()
    kind = LossKind.parse(args.loss)
    if not kind.convex:
        raise UsageError("train needs a convex loss (hinge or logistic); "
                         "use cover-emm for 0-1 loss")
    ds, train, test, weights = _load(args)
    cfg = _train_config(args, weights)
    res = train_psg(train, kind, cfg)
    theta = res.model.theta
    tr = _Objective(train, kind, cfg.p, cfg.weights, cfg.bias_weight)
    train_r = tr.risks(theta)
    results = {"n_iter": res.n_iter, "step_size": res.step_size,
               "eps_opt": res.eps_opt, "lambda_h": res.lambda_h,
               "objective": res.objective, "train_risks": train_r,
               "train_malfare": res.objective, "model": res.model_dict()}
    test_r = np.full(ds.g, np.nan)
    if len(test):
        te = _Objective(test, kind, cfg.p, cfg.weights, cfg.bias_weight)
        test_r = te.risks(theta)
        results["test_malfare"] = float(
            power_mean(SentimentProfile(test_r, te.weights), cfg.p))
    results["test_risks"] = test_r
    if args.model_out:
        Path(args.model_out).write_text(
            json.dumps(_jsonable(res.model_dict()), indent=2) + "\n")
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            for rec in res.trace_records():
                fh.write(json.dumps(rec) + "\n")
    config = {**_data_config(args), **cfg.to_dict(), "loss": kind.value}
    report = _report(args, config, results, started)
    if args.report_out:
        Path(args.report_out).write_text(
            json.dumps(_jsonable(report), indent=2) + "\n")
    table = _risk_table(ds.group_names, train_r, test_r)
    table += (f"\ntrain_malfare\t{res.objective:.6f}"
              f"\ntest_malfare\t{results.get('test_malfare', math.nan):.6f}"
              f"\nn_iter\t{res.n_iter}\nstep_size\t{res.step_size!r}")
    _emit(args, report, table)


def _sweep_csv(rows, g):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (["p"] + [f"train_risk_{i}" for i in range(g)]
              + [f"test_risk_{i}" for i in range(g)]
              + ["train_malfare", "test_malfare", "objective", "eps_opt"])
    writer.writerow(header)
    for r in rows:
        writer.writerow([format_p(r["p"])]
                        + [repr(float(v)) for v in r["train_risks"]]
                        + [repr(float(v)) for v in r["test_risks"]]
                        + [repr(float(r[k])) for k in
                           ("train_malfare", "test_malfare", "objective",
                            "eps_opt")])
    return buf.getvalue()


def cmd_sweep(args):
    started = time.perf_counter()
    kind = LossKind.parse(args.loss)
    if not kind.convex:
        raise UsageError("sweep trains with a convex loss (hinge or logistic)")
    ds, train, test, weights = _load(args)
    args.p = 1.0
    cfg = _train_config(args, weights)
    rows = sweep_p(train, kind, args.p_grid, cfg, test=test)
    text = _sweep_csv(rows, ds.g)
    config = {**_data_config(args), **cfg.to_dict(), "loss": kind.value,
              "p_grid": [format_p(p) for p in args.p_grid]}
    config.pop("p")
    report = _report(args, config, rows, started)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        out.with_suffix(".json").write_text(
            json.dumps(_jsonable(report), indent=2) + "\n")
        if not args.no_plot:
            from .plotting import plot_sweep
            plot_sweep(rows, out.with_suffix(".png"), ds.group_names,
                       weights=(ds.group_weights if cfg.weights in (None, "freq")
                                else None),
                       class_bias=ds.class_bias if cfg.bias_weight else None)
        if args.json:
            _emit(args, report)
    else:
        _emit(args, report, text.rstrip("\n"))


def cmd_bound(args):
    if args.method == "hoeffding":
        eps = np.full(args.g, hoeffding_epsilon(args.r, args.g, args.delta,
                                                args.m))
    else:
        if args.variances is None:
            raise UsageError("bennett needs --variances")
        var = np.resize(np.asarray(args.variances, dtype=float), args.g) \
            if len(args.variances) == 1 else np.asarray(args.variances)
        try:
            eps = bennett_epsilon(args.r, args.g, args.delta, args.m, var)
        except ValueError as err:
            raise UsageError(str(err)) from None
    out = {"method": args.method, "delta": args.delta, "m": args.m,
           "r": args.r, "g": args.g, "epsilon_per_group": eps}
    if args.estimates is not None:
        est = np.asarray(args.estimates, dtype=float)
        if est.size != args.g:
            raise UsageError(f"expected {args.g} estimates")
        w = _resolve_weights_arg(args.weights, args.g)
        lower, point, upper = bracket_from_estimates(est, eps, w, args.p)
        out.update({"estimate": point, "lower": lower, "upper": upper,
                    "p": format_p(args.p)})
    table = "\n".join(f"{k}\t{v}" for k, v in _jsonable(out).items())
    _emit(args, out, table)


def cmd_hardness(args):
    m = nsw_hardness_bound(args.p_bias, args.delta)
    out = {"p_bias": args.p_bias, "delta": args.delta, "m": m,
           "prob_all_zero": (1 - args.p_bias) ** m}
    if args.weight is not None:
        out["weighted_nsw"] = weighted_nsw(args.p_bias, args.weight)
    if args.simulate:
        sim_m = args.m if args.m is not None else m
        seed = _seed(args)
        out.update({"sim_m": sim_m, "trials": args.trials, "seed": seed,
                    "frequency": nsw_hardness_simulate(args.p_bias, sim_m,
                                                       args.trials, seed)})
    table = "\n".join(f"{k}\t{v}" for k, v in _jsonable(out).items())
    _emit(args, out, table)


def cmd_cover_emm(args):
    started = time.perf_counter()
    ds, train, test, weights = _load(args)
    kind = LossKind.parse(args.loss)
    res = train_cover(train, kind, args.p, weights, args.eps, args.delta,
                      bias_weight=args.bias_weight)
    results = res.to_dict()
    if len(test):
        point = losses(kind, test.labels, res.stump.predict(test.features))
        counts = test.group_counts()
        results["test_risks"] = np.bincount(test.group_ids, weights=point,
                                            minlength=test.g) / counts
    config = {**_data_config(args), "p": format_p(args.p),
              "epsilon": args.eps, "delta": args.delta, "loss": kind.value,
              "weights": weights if not isinstance(weights, np.ndarray)
              else weights.tolist(), "bias_weight": args.bias_weight}
    report = _report(args, config, results, started)
    if args.out:
        Path(args.out).write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    s = res.stump
    table = (f"stump\tfeature={train.feature_names[s.feature]} "
             f"direction={s.direction:+d} threshold={s.threshold!r}\n"
             f"objective\t{res.objective!r}\ngamma\t{res.gamma!r}\n"
             f"cover_size\t{res.cover_size}\n"
             f"union_cover_size\t{res.union_cover_size}\nm_uc\t{res.m_uc}")
    _emit(args, report, table)


# -- parser ------------------------------------------------------------------

def _add_data_args(sp):
    sp.add_argument("--data", help="CSV file with a header row")
    sp.add_argument("--synthetic", help="bundled synthetic task instead of --data")
    sp.add_argument("--group", help="group column")
    sp.add_argument("--target", help="target column")
    sp.add_argument("--positive", help="target value mapped to +1")
    sp.add_argument("--delimiter", default=",")
    sp.add_argument("--test-fraction", type=float, default=0.1)
    sp.add_argument("--no-zscore", action="store_true")
    sp.add_argument("--weights", type=_weights_arg, default="freq",
                    help="uniform, freq, or a comma list")
    sp.add_argument("--bias-weight", action="store_true",
                    help="scale each group risk by 1/b_i")
    sp.add_argument("--seed", type=int)


def _add_train_args(sp):
    sp.add_argument("--loss", default="hinge",
                    choices=["hinge", "logistic", "square"])
    sp.add_argument("--lambda", dest="lam", type=_positive, default=10.0,
                    help="l2-ball radius")
    sp.add_argument("--eps", type=_positive, default=0.1)
    sp.add_argument("--lambda-h", type=_positive, default=None)
    sp.add_argument("--max-iter", type=int, default=10_000_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="malfare", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true",
                        help="machine-readable output")
    common.add_argument("--config", help="JSON file of option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("eval", parents=[common], help="evaluate a power mean")
    sp.add_argument("--values", type=_floats, required=True)
    sp.add_argument("--weights", type=_weights_arg, default="uniform")
    sp.add_argument("--p", type=_p_arg, required=True)
    sp.add_argument("--sense", choices=["welfare", "malfare"], default="malfare")
    sp.add_argument("--fair", action="store_true",
                    help="reject p outside the fair range for --sense")
    sp.add_argument("--cas", action="store_true")
    sp.add_argument("--atkinson", type=float, metavar="EPS")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("train", parents=[common],
                        help="projected-subgradient malfare minimization")
    _add_data_args(sp)
    _add_train_args(sp)
    sp.add_argument("--p", type=_p_arg, default=1.0)
    sp.add_argument("--model-out")
    sp.add_argument("--trace-out", help="JSON-lines objective trace")
    sp.add_argument("--report-out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", parents=[common], help="train across a grid of p")
    _add_data_args(sp)
    _add_train_args(sp)
    sp.add_argument("--p-grid", type=_p_grid, default=_p_grid("1,2,4,8,16,32"))
    sp.add_argument("--out", help="CSV path; JSON and PNG written alongside")
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bound", parents=[common],
                        help="Hoeffding / Bennett malfare confidence radius")
    sp.add_argument("--method", choices=["hoeffding", "bennett"], required=True)
    sp.add_argument("--r", type=_positive, default=1.0)
    sp.add_argument("--g", type=int, required=True)
    sp.add_argument("--delta", type=_delta_arg, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--variances", type=_floats)
    sp.add_argument("--estimates", type=_floats,
                    help="per-group empirical risks; adds the malfare bracket")
    sp.add_argument("--weights", type=_weights_arg, default="uniform")
    sp.add_argument("--p", type=_p_arg, default=1.0)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("hardness", parents=[common],
                        help="Nash-welfare estimation sample-size lower bound")
    sp.add_argument("--p-bias", type=float, required=True)
    sp.add_argument("--delta", type=_delta_arg, required=True)
    sp.add_argument("--weight", type=float,
                    help="group-2 weight w; reports Nash welfare p^w")
    sp.add_argument("--simulate", action="store_true")
    sp.add_argument("--m", type=int)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_hardness)

    sp = sub.add_parser("cover-emm", parents=[common],
                        help="exact malfare minimization over decision stumps")
    _add_data_args(sp)
    sp.add_argument("--loss", default="zero_one",
                    choices=["zero_one", "hinge", "logistic", "square"])
    sp.add_argument("--p", type=_p_arg, default=1.0)
    sp.add_argument("--eps", type=_positive, default=0.1)
    sp.add_argument("--delta", type=_delta_arg, default=0.05)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_cover_emm)
    return parser


def _apply_config_file(parser, argv):
    """Re-parse with defaults taken from a --config JSON file."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as err:
        parser.error(f"cannot read --config: {err}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in known:
            parser.error(f"unknown key {key!r} in --config")
        action = known[dest]
        if action.type is not None and isinstance(value, (str, int, float)):
            value = action.type(str(value))
        elif isinstance(value, list) and action.type is not None:
            value = action.type(",".join(map(str, value)))
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config_file(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as err:
        print(f"malfare {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"malfare {args.command}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
