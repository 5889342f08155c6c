"""Command-line interface.

Subcommands::

    diffnet generate     synthetic samples and ground truth
    diffnet fit          one fit on two sample CSV files
    diffnet cv           grid search on a training / validation split
    diffnet rate         error against sample size
    diffnet recovery     rank and positive-index recovery
    diffnet convergence  per-iteration error trace
    diffnet bench        nonconvex estimator against the ADMM baseline

Settings are resolved as built-in preset, then ``--config`` JSON, then
explicit flags. Exit status is 0 on success, 1 for usage or I/O problems
and 2 when the numerics fail.
"""

import argparse
import json
import logging
import os
import sys

from .admm import AdmmParams, admm_fit
from .exceptions import NUMERICAL_ERRORS, DiffNetError, InvalidArgumentError
from .experiments import PRESETS, ExperimentConfig, run_experiment, write_json
from .loss import LossContext
from .nonconvex import HyperParams, fit_nonconvex
from .synthdata import (CovariancePair, GroundTruthModel, SampleBatch,
                        make_model_pair, sample)
from .tuning import Grid, cross_validate, evaluate

log = logging.getLogger("diffnet")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

NONCONVEX_KEYS = ("alpha", "s", "r", "beta", "eta1", "eta2", "max_iter",
                  "rel_tol")
ADMM_KEYS = ("lam1", "lam2", "nu", "max_iter", "feas_tol")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerics here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return config


def _merge(config, args, keys):
    """Config values overridden by flags that were actually given."""
    out = dict(config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _read_samples(path, label):
    if not path:
        raise UsageError(f"missing {label} sample file")
    if not os.path.exists(path):
        raise UsageError(f"{label} sample file not found: {path}")
    try:
        return SampleBatch.from_csv(path, group=label).observations
    except ValueError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc


def _pair(x_path, y_path, suffix=""):
    X = _read_samples(x_path, "X" + suffix)
    Y = _read_samples(y_path, "Y" + suffix)
    if X.shape[1] != Y.shape[1]:
        raise UsageError(f"X has {X.shape[1]} columns but Y has {Y.shape[1]}")
    return CovariancePair.from_samples(X, Y)


def _truth(path):
    if path is None:
        return None
    try:
        return GroundTruthModel.load_json(path)
    except OSError as exc:
        raise UsageError(f"cannot read truth {path}: {exc.strerror}") from exc
    except (KeyError, ValueError) as exc:
        raise UsageError(f"malformed truth file {path}: {exc}") from exc


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


# -- subcommands ------------------------------------------------------------

def cmd_generate(args, config):
    settings = {"models": [1, 2], "d": 30, "r": 1, "n": 1000, "n_valid": 0}
    settings.update(config)
    settings = _merge(settings, args, ("models", "d", "r", "n", "n_valid"))
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise UsageError("generate needs --seed")
    models = settings["models"]
    d, r, n = int(settings["d"]), int(settings["r"]), int(settings["n"])
    truth = make_model_pair(models[0], models[1], d, r, seed)
    os.makedirs(args.out, exist_ok=True)
    splits = [("", (0, 1), n)]
    if settings["n_valid"]:
        splits.append(("_valid", (2, 3), int(settings["n_valid"])))
    written = []
    for suffix, groups, size in splits:
        for label, sigma, group in (("X", truth.sigma_x, groups[0]),
                                    ("Y", truth.sigma_y, groups[1])):
            path = os.path.join(args.out, f"{label}{suffix}.csv")
            sample(sigma, size, seed, d=d, group=group).to_csv(path)
            written.append(path)
    truth_path = os.path.join(args.out, "truth.json")
    truth.save_json(truth_path)
    written.append(truth_path)
    for path in written:
        print(path)
    return EXIT_OK


def _nonconvex_hp(settings, d):
    if "s" not in settings and "s_mult" in settings:
        settings["s"] = int(round(settings.pop("s_mult") * d))
    settings.pop("s_mult", None)
    settings.setdefault("alpha", 0.1)
    settings.setdefault("s", 6 * d)
    settings.setdefault("r", 1)
    return HyperParams(**{k: v for k, v in settings.items()
                          if k in NONCONVEX_KEYS})


def cmd_fit(args, config):
    pair = _pair(args.x, args.y)
    truth = _truth(args.truth or config.get("truth"))
    method = args.method or config.get("method", "nonconvex")
    params = config.get("hp", {})
    if method == "nonconvex":
        settings = _merge(params, args, NONCONVEX_KEYS + ("s_mult",))
        hp = _nonconvex_hp(settings, pair.d)
        result = fit_nonconvex(pair, hp, truth=truth)
    else:
        settings = _merge(params, args, ADMM_KEYS)
        settings.setdefault("lam1", 0.1)
        settings.setdefault("lam2", 0.25)
        result = admm_fit(LossContext.from_pair(pair), AdmmParams(
            **{k: v for k, v in settings.items() if k in ADMM_KEYS}))
    payload = result.to_dict()
    payload["kind"] = "fit_report"
    payload["n_x"], payload["n_y"] = pair.n_x, pair.n_y
    if truth is not None:
        payload["metrics"] = evaluate(result, truth).to_dict()
        payload["metrics"].pop("wall_time")
    _ensure_parent(args.out)
    write_json(args.out, payload)
    log.info("%s fit: %d iterations, converged=%s", method, result.n_iter,
             result.converged)
    print(args.out)
    return EXIT_OK


def cmd_cv(args, config):
    train = _pair(args.x, args.y)
    valid = _pair(args.x_valid, args.y_valid, suffix="_valid")
    truth = _truth(args.truth or config.get("truth"))
    method = args.method or config.get("method", "nonconvex")
    grid = Grid.from_dict(config.get("grid", {}))
    base = dict(config.get("hp" if method == "nonconvex" else "admm", {}))
    result = cross_validate(train, valid, grid, method, truth=truth, **base)
    os.makedirs(args.out, exist_ok=True)
    table = os.path.join(args.out, "cv_table.csv")
    best = os.path.join(args.out, "cv_best.json")
    result.to_csv(table)
    payload = {"kind": "cv_result", "method": method,
               "grid": grid.to_dict(), "best_index": result.best_index,
               "best_params": result.best_params,
               "best_loss": result.table[result.best_index]["loss"],
               "fit": result.best_fit.to_dict()}
    write_json(best, payload)
    print(table)
    print(best)
    return EXIT_OK


def cmd_experiment(args, config):
    overrides = {k: config[k] for k in config if k != "kind"}
    for key in ("models", "d", "r", "n", "n_seeds", "n_valid"):
        value = getattr(args, key, None)
        if value is not None:
            if key in ("r", "n") and len(value) == 1:
                value = value[0]
            overrides[key] = value
    if args.seed is None:
        raise UsageError(f"{args.command} needs --seed")
    overrides["seed"] = args.seed
    overrides["out"] = args.out
    cfg = ExperimentConfig.for_kind(args.command, **overrides)

    def progress(row):
        log.info("%s", {k: (round(v, 4) if isinstance(v, float) else v)
                        for k, v in row.items()})

    run_experiment(cfg, progress=progress)
    for suffix in (".csv", "_summary.json", "_timing.json"):
        print(os.path.join(cfg.out, f"{cfg.kind}{suffix}"))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = _Parser(prog="diffnet",
                     description="Sparse plus low-rank differential network "
                                 "estimation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                parser_class=_Parser)
    sub.required = True

    def common(p, out_default):
        p.add_argument("--config", help="JSON file with settings")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--out", default=out_default, help="output location")

    g = sub.add_parser("generate", help="write synthetic samples and truth")
    common(g, "data")
    g.add_argument("--models", type=_int_list,
                   help="control,test model ids (default 1,2)")
    g.add_argument("-d", type=int, dest="d")
    g.add_argument("-r", type=int, dest="r")
    g.add_argument("-n", type=int, dest="n")
    g.add_argument("--n-valid", type=int, dest="n_valid",
                   help="also write validation samples of this size")

    def data_flags(p):
        p.add_argument("--x", help="control group samples (CSV)")
        p.add_argument("--y", help="test group samples (CSV)")
        p.add_argument("--truth", help="ground-truth JSON for metrics")
        p.add_argument("--method", choices=("nonconvex", "admm"))

    f = sub.add_parser("fit", help="fit one estimator")
    common(f, "report.json")
    data_flags(f)
    for name, typ in (("alpha", float), ("s", int), ("s-mult", float),
                      ("r", int), ("beta", float), ("eta1", float),
                      ("eta2", float), ("max-iter", int),
                      ("rel-tol", float), ("lam1", float), ("lam2", float),
                      ("nu", float), ("feas-tol", float)):
        f.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))

    c = sub.add_parser("cv", help="grid search with a validation split")
    common(c, "cv")
    data_flags(c)
    c.add_argument("--x-valid", dest="x_valid")
    c.add_argument("--y-valid", dest="y_valid")

    for kind in PRESETS:
        e = sub.add_parser(kind, help=f"run the {kind} sweep")
        common(e, os.path.join("results", kind))
        e.add_argument("--models", type=_int_list)
        e.add_argument("-d", type=int, dest="d")
        e.add_argument("-r", type=_int_list, dest="r",
                       help="rank or comma-separated ranks")
        e.add_argument("-n", type=_int_list, dest="n",
                       help="sample size or comma-separated sizes")
        e.add_argument("--n-seeds", type=int, dest="n_seeds")
        e.add_argument("--n-valid", type=int, dest="n_valid")
    return parser


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "cv": cmd_cv,
            **{kind: cmd_experiment for kind in PRESETS}}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        config = _load_config(args.config)
        return COMMANDS[args.command](args, config)
    except NUMERICAL_ERRORS as exc:
        print(f"diffnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, InvalidArgumentError, TypeError) as exc:
        print(f"diffnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"diffnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DiffNetError as exc:
        print(f"diffnet: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
