"""Command-line interface.

Exit status: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure. Errors are reported on stderr as one line,
``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from dataclasses import fields, replace

import numpy as np

from .data import standardize
from .errors import ConfigError, InvalidInputError, SagpError
from .inference import (
    complexity_estimate,
    coverage,
    cv_select_layers,
    fit,
    mean_interval_score,
    mse,
    predict,
)
from .io import (
    RunConfig,
    build_run_config,
    fmt,
    load_csv,
    load_run,
    read_config_file,
    save_csv,
    save_run,
    write_table,
)
from .partition import build_full_rp, prune, save_scheme
from .simulate import SPLITS, STUDY_CONFIGS, SimScenario, generate, run_study

log = logging.getLogger("sagp")

COST_WARNING = 10**10


class UsageError(SagpError):
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_run_flags(p, skip=()):
    """One flag per RunConfig key; unset flags fall through to the file."""
    for f in fields(RunConfig):
        if f.name in skip:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}", default=None, metavar="V")
    p.add_argument("--config", help="key=value configuration file")


def _run_config(args):
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return build_run_config(file_values, overrides, source=args.config or "flags")


def _emit(path, header, rows):
    if path in (None, "-"):
        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    else:
        write_table(path, header, rows)


def cmd_fit(args):
    cfg = _run_config(args)
    table = load_csv(args.data)
    data = standardize(table)
    cost = complexity_estimate(data.d, cfg.branching, cfg.L, data.n, cfg.m)
    if cost > COST_WARNING:
        log.warning("estimated cost %d unit operations per iteration", cost)
    scheme, samples = fit(data, cfg.m, cfg.L, cfg.priors(), cfg.mcmc(), cfg.branching)
    save_run(args.out, table, scheme, samples, cfg)
    print(f"fit: {len(scheme.active_ids)} active components, {len(samples)} draws kept -> {args.out}")
    return 0


def _prediction_rows(res, d):
    rows = []
    for i in range(len(res.mean)):
        rows.append([i] + list(res.locations[i]) + [res.mean[i], res.lower[i], res.upper[i]])
    return ["location"] + [f"x{k + 1}" for k in range(d)] + ["mean", "lower", "upper"], rows


def cmd_predict(args):
    run = load_run(args.run)
    at = load_csv(args.at, require_y=False)
    data = standardize(run.table)
    alpha = run.config.alpha if args.alpha is None else float(args.alpha)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = predict(run.samples, run.scheme, data, at.X, alpha, seed=run.config.seed)
    for w in caught:
        log.warning("%s", w.message)
    header, rows = _prediction_rows(res, data.d)
    _emit(args.out, header, rows)
    return 0


def _layer_range(text):
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_cv(args):
    cfg = _run_config(args)
    try:
        layers = _layer_range(args.layers)
    except ValueError as exc:
        raise ConfigError(f"bad layer list {args.layers!r}") from exc
    data = standardize(load_csv(args.data))
    report = cv_select_layers(
        data,
        cfg.m,
        layers,
        cfg.mcmc(),
        priors=lambda L: replace(cfg, L=L).priors(),
        n_folds=args.folds,
        seed=cfg.seed,
        one_se=args.one_se,
        branching=cfg.branching,
        jobs=args.jobs,
    )
    rows = [[r["L"], r["mse_mean"], r["mse_se"], r["selected"]] for r in report.rows()]
    _emit(args.out, ["L", "mse_mean", "mse_se", "selected"], rows)
    return 0


def cmd_simulate(args):
    sc = SimScenario(args.n, args.noise_var, args.scenario, args.train_size, args.seed)
    problems = sc.problems()
    if problems:
        raise ConfigError(problems)
    train, test = generate(sc)
    os.makedirs(args.out, exist_ok=True)
    save_csv(os.path.join(args.out, "train.csv"), train)
    save_csv(os.path.join(args.out, "test.csv"), test)
    return 0


def _parse_configs(text):
    out = []
    for part in text.split(","):
        m, L = part.lower().split("x")
        out.append((int(m), int(L)))
    return out


def cmd_study(args):
    cfg = _run_config(args)
    try:
        configs = _parse_configs(args.configs)
    except ValueError as exc:
        raise ConfigError(f"bad config list {args.configs!r}; expected e.g. 5x4,10x3") from exc
    sc = SimScenario(args.n, args.noise_var, args.scenario, args.train_size)
    problems = sc.problems()
    if problems:
        raise ConfigError(problems)
    res = run_study(
        batches=args.batches,
        configs=configs,
        scenario=sc,
        mcmc=cfg.mcmc(),
        preset=cfg.preset,
        alpha=cfg.alpha,
        include_dense=args.dense,
        seed=cfg.seed,
        jobs=args.jobs,
    )
    os.makedirs(args.out, exist_ok=True)
    write_table(os.path.join(args.out, "study.csv"), ["batch", "config", "scenario", "metric", "value"], res.rows)
    write_table(
        os.path.join(args.out, "summary.csv"),
        ["config", "metric", "count", "q25", "median", "q75"],
        [list(r) for r in res.summary()],
    )
    print(f"study: {args.batches} batches x {len(configs)} configs -> {args.out}")
    return 0


def cmd_metrics(args):
    pred = _read_prediction(args.pred)
    truth = load_csv(args.truth)
    if len(truth.y) != len(pred["mean"]):
        raise InvalidInputError(f"{len(pred['mean'])} predictions but {len(truth.y)} truth rows")
    y = truth.y
    rows = [
        ["mse", mse(y, pred["mean"])],
        ["coverage", coverage(pred["lower"], pred["upper"], y)],
        ["interval_score", mean_interval_score(pred["lower"], pred["upper"], y, args.alpha)],
    ]
    _emit(args.out, ["metric", "value"], rows)
    return 0


def _read_prediction(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    for col in ("mean", "lower", "upper"):
        if not rows or col not in rows[0]:
            raise InvalidInputError(f"{path}: missing column {col!r}")
    return {c: np.array([float(r[c]) for r in rows]) for c in ("mean", "lower", "upper")}


def cmd_prune_info(args):
    cfg = _run_config(args)
    data = standardize(load_csv(args.data))
    scheme = prune(build_full_rp(data.d, cfg.branching, cfg.L, cfg.m), data.X)
    rows = []
    for c in scheme.components:
        rows.append(
            [c.id, c.layer, c.parent if c.parent is not None else "", int(c.active), scheme.counts[c.id]]
            + [" ".join(fmt(v) for v in c.centroid), " ".join(fmt(v) for v in c.half_width)]
        )
    _emit(args.out, ["id", "layer", "parent", "active", "count", "centroid", "half_width"], rows)
    if args.json:
        save_scheme(scheme, args.json)
    return 0


def build_parser():
    p = _Parser(prog="sagp", description="Sparse additive Gaussian process regression")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit", help="run the sampler and save a run directory")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    _add_run_flags(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predict from a saved run")
    s.add_argument("--run", required=True)
    s.add_argument("--at", required=True, help="CSV of locations with columns x1..xd")
    s.add_argument("--alpha", default=None)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("cv", help="cross-validate the number of layers")
    s.add_argument("--data", required=True)
    s.add_argument("--L", "--layers", dest="layers", default="1..3", help="candidate layer counts, e.g. 1..4 or 1,2,3")
    s.add_argument("--folds", type=int, default=10)
    s.add_argument("--one-se", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default="-")
    _add_run_flags(s, skip=("L",))
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("simulate", help="write one synthetic train/test split")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scenario", choices=SPLITS, default="random")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--noise-var", type=float, default=0.1)
    s.add_argument("--train-size", type=int, default=150)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("study", help="batch simulation study")
    s.add_argument("--batches", type=int, default=20)
    s.add_argument("--configs", default=",".join(f"{m}x{L}" for m, L in STUDY_CONFIGS))
    s.add_argument("--scenario", choices=SPLITS, default="random")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--noise-var", type=float, default=0.1)
    s.add_argument("--train-size", type=int, default=150)
    s.add_argument("--dense", action="store_true", help="also score a dense GP reference")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    _add_run_flags(s)
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("metrics", help="score a prediction table against truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("prune-info", help="show the pruned partition for a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--json", default=None, help="also write the scheme as JSON")
    _add_run_flags(s)
    s.set_defaults(func=cmd_prune_info)
    return p


def _kind(exc):
    return type(exc).__name__


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {_kind(exc)}: {' | '.join(exc.problems)}", file=sys.stderr)
        return exc.exit_code
    except SagpError as exc:
        print(f"error: {_kind(exc)}: {exc}".replace("\n", " "), file=sys.stderr)
        return exc.exit_code if exc.exit_code != 1 else 3
    except OSError as exc:
        print(f"error: {_kind(exc)}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
