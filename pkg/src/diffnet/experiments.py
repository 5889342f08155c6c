"""Seeded simulation sweeps behind the command-line experiments.

Every sweep writes a CSV table (one row per cell) and a summary JSON into
an output directory. Both files are byte-identical across re-runs with the
same configuration; wall-clock timings go to a separate ``*_timing.json``
file because they can never be reproduced exactly.
"""

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from .exceptions import DiffNetError, InvalidArgumentError
from .matops import total_distance
from .nonconvex import HyperParams, estimate_rank, fit_nonconvex, initialize
from .synthdata import CovariancePair, make_model_pair, sample
from .tuning import Grid, cross_validate, evaluate

__all__ = [
    "ExperimentConfig",
    "Instance",
    "make_instance",
    "run_rate",
    "run_recovery",
    "run_convergence",
    "run_bench",
    "run_experiment",
    "write_json",
    "write_rows",
    "PRESETS",
]

SCHEMA_VERSION = 1

# stream keys of the sample splits
TRAIN_GROUPS = (0, 1)
VALID_GROUPS = (2, 3)

# desk-scale defaults for each sweep; anything here can be overridden
PRESETS = {
    "rate": {
        "d": 50, "r": [0, 1], "n": [500, 1000, 2000, 4000, 8000],
        "n_seeds": 10,
        "grid": {"alpha": [0.1, 0.3], "s_mult": [2, 6], "beta": [1.0]},
    },
    "recovery": {
        "d": 50, "r": 1, "n": [5000], "n_seeds": 20,
        "grid": {"alpha": [0.1, 0.3], "s_mult": [2, 6],
                 "r": [0, 1, 2, 3, 4], "beta": [1.0]},
    },
    "convergence": {
        "d": 100, "r": 1, "n": 150, "n_seeds": 1,
        "grid": {"alpha": [0.05, 0.3], "s_mult": [2, 6], "beta": [1.0]},
    },
    "bench": {
        "d": 30, "r": 2, "n": 20000, "n_seeds": 5,
        "grid": {"alpha": [0.1, 0.3], "s_mult": [2, 6],
                 "r": [0, 1, 2, 3, 4], "beta": [1.0, 3.0]},
        "admm": {"feas_tol": 1e-8},
    },
}


@dataclass
class ExperimentConfig:
    """Settings of one sweep.

    ``n`` and ``r`` may be single values or lists depending on the sweep.
    Seeds run from ``seed`` to ``seed + n_seeds - 1``. ``hp`` holds fixed
    nonconvex settings (``eta1``, ``max_iter``, ``rel_tol`` ...), ``grid``
    the candidate lists searched by cross-validation and ``admm`` fixed
    convex-solver settings.
    """

    kind: str
    models: tuple = (1, 2)
    d: int = 50
    r: object = 1
    n: object = 5000
    seed: int = 0
    n_seeds: int = 1
    n_valid: int = None
    hp: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    admm: dict = field(default_factory=dict)
    out: str = "results"

    @classmethod
    def for_kind(cls, kind, **overrides):
        """Preset for `kind` with `overrides` applied on top (None values
        are ignored)."""
        if kind not in PRESETS:
            raise InvalidArgumentError(f"unknown experiment {kind!r}")
        values = {k: v for k, v in PRESETS[kind].items()}
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InvalidArgumentError(
                f"unknown config keys: {', '.join(sorted(unknown))}")
        values["models"] = tuple(values.get("models", (1, 2)))
        return cls(kind=kind, **{k: v for k, v in values.items()
                                 if k != "kind"})

    @property
    def seeds(self):
        return [self.seed + i for i in range(self.n_seeds)]

    def to_dict(self):
        out = asdict(self)
        out["models"] = list(self.models)
        out.pop("out")
        return out


@dataclass
class Instance:
    truth: object
    train: CovariancePair
    valid: CovariancePair
    seed: int


def make_instance(models, d, r, n, seed, n_valid=None):
    """Ground truth plus independent training and validation samples."""
    truth = make_model_pair(models[0], models[1], d, r, seed)
    n_valid = n if n_valid is None else n_valid

    def pair(groups, size):
        X = sample(truth.sigma_x, size, seed, d=d, group=groups[0])
        Y = sample(truth.sigma_y, size, seed, d=d, group=groups[1])
        return CovariancePair.from_samples(X, Y)

    return Instance(truth, pair(TRAIN_GROUPS, n), pair(VALID_GROUPS, n_valid),
                    seed)


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path, payload):
    """Write `payload` as sorted, indented JSON with a schema version."""
    payload = {"schema_version": SCHEMA_VERSION, **_clean(payload)}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _pearson(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 3 or np.ptp(x[ok]) == 0 or np.ptp(y[ok]) == 0:
        return float("nan")
    return float(stats.pearsonr(x[ok], y[ok])[0])


def _grid(cfg, **fixed):
    spec = dict(cfg.grid)
    spec.update(fixed)
    return Grid.from_dict(spec)


def _outputs(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return (os.path.join(cfg.out, f"{cfg.kind}.csv"),
            os.path.join(cfg.out, f"{cfg.kind}_summary.json"),
            os.path.join(cfg.out, f"{cfg.kind}_timing.json"))


def run_rate(cfg, progress=None):
    """Estimation error against the theoretical rate as ``n`` grows.

    For each rank setting, sample size and seed the nonconvex estimator is
    cross-validated over ``alpha``, ``s`` and ``beta`` with the rank fixed
    at the realized rank of ``R*``. The summary reports, per rank setting,
    the Pearson correlation between the seed-averaged ``||S - S*||_F`` and
    ``sqrt(d log d / n)`` and, for ``r > 0``, between ``||R - R*||_F`` and
    ``sqrt(r d / n)``.
    """
    table_path, summary_path, timing_path = _outputs(cfg)
    d = cfg.d
    rows, timing = [], {}
    for r in _as_list(cfg.r):
        for n in _as_list(cfg.n):
            for seed in cfg.seeds:
                start = time.perf_counter()
                inst = make_instance(cfg.models, d, r, n, seed, cfg.n_valid)
                truth = inst.truth
                row = {"r": r, "n": n, "seed": seed,
                       "x_sparse": math.sqrt(d * math.log(d) / n),
                       "x_lowrank": math.sqrt(r * d / n),
                       "true_rank": truth.rank}
                try:
                    cv = cross_validate(inst.train, inst.valid,
                                        _grid(cfg, r=[truth.rank]),
                                        "nonconvex", **cfg.hp)
                except DiffNetError as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                    rows.append(row)
                    continue
                fit = cv.best_fit
                m = evaluate(fit, truth)
                chosen = dict(cv.best_params)
                row["fit_rank"] = chosen.pop("r")
                row.update(chosen)
                row.update(sparse_error=m.sparse_error,
                           lowrank_error=float(np.linalg.norm(
                               fit.low_rank - truth.low_rank)),
                           scaled_error=m.scaled_error, n_iter=fit.n_iter,
                           error="")
                rows.append(row)
                timing[f"r={r},n={n},seed={seed}"] = (
                    time.perf_counter() - start)
                if progress:
                    progress(row)

    summary = {"config": cfg.to_dict(), "by_rank": {}}
    for r in _as_list(cfg.r):
        ns = _as_list(cfg.n)
        sub = [row for row in rows if row["r"] == r and not row.get("error")]
        mean_s = [np.mean([x["sparse_error"] for x in sub if x["n"] == n])
                  if any(x["n"] == n for x in sub) else float("nan")
                  for n in ns]
        mean_l = [np.mean([x["lowrank_error"] for x in sub if x["n"] == n])
                  if any(x["n"] == n for x in sub) else float("nan")
                  for n in ns]
        xs = [math.sqrt(d * math.log(d) / n) for n in ns]
        xl = [math.sqrt(r * d / n) for n in ns]
        entry = {"n": ns, "x_sparse": xs, "mean_sparse_error": mean_s,
                 "corr_sparse": _pearson(mean_s, xs),
                 "failed_cells": sum(1 for row in rows
                                     if row["r"] == r and row.get("error"))}
        if r > 0:
            entry.update(x_lowrank=xl, mean_lowrank_error=mean_l,
                         corr_lowrank=_pearson(mean_l, xl))
        summary["by_rank"][str(r)] = entry

    columns = ["r", "n", "seed", "x_sparse", "x_lowrank", "true_rank",
               "fit_rank", "alpha", "s", "beta", "sparse_error", "lowrank_error",
               "scaled_error", "n_iter", "error"]
    write_rows(table_path, rows, columns)
    write_json(summary_path, summary)
    write_json(timing_path, {"seconds": timing})
    return summary


def run_recovery(cfg, progress=None):
    """Rank and positive-index recovery by cross-validation.

    The selected ``r`` counts as correct when it equals the realized rank
    of ``R*``; the positive index must then match as well. The eigenvalue
    threshold heuristic of :func:`estimate_rank` is recorded alongside.
    """
    table_path, summary_path, timing_path = _outputs(cfg)
    d, r = cfg.d, cfg.r
    grid = _grid(cfg)
    rows, timing = [], {}
    for n in _as_list(cfg.n):
        for seed in cfg.seeds:
            start = time.perf_counter()
            inst = make_instance(cfg.models, d, r, n, seed, cfg.n_valid)
            truth = inst.truth
            row = {"n": n, "seed": seed,
                   "x": math.sqrt(d * math.log(d) / n),
                   "true_rank": truth.rank, "true_r1": truth.r1}
            try:
                cv = cross_validate(inst.train, inst.valid, grid,
                                    "nonconvex", **cfg.hp)
            except DiffNetError as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                continue
            m = evaluate(cv.best_fit, truth)
            init = initialize(inst.train, HyperParams(**cv.best_params))
            row.update(cv.best_params)
            row.update(r1=m.r1, rank_correct=m.rank_correct,
                       r1_correct=m.r1_correct,
                       threshold_rank=estimate_rank(init.R0,
                                                    inst.train.n_min, d),
                       scaled_error=m.scaled_error, error="")
            rows.append(row)
            timing[f"n={n},seed={seed}"] = time.perf_counter() - start
            if progress:
                progress(row)

    summary = {"config": cfg.to_dict(), "by_n": {}}
    for n in _as_list(cfg.n):
        sub = [row for row in rows if row["n"] == n]
        ok = [row for row in sub if not row.get("error")]
        summary["by_n"][str(n)] = {
            "x": math.sqrt(d * math.log(d) / n),
            "runs": len(sub),
            "failed": len(sub) - len(ok),
            "rank_correct": (sum(row["rank_correct"] for row in ok)
                             / len(sub) if sub else float("nan")),
            "r1_correct": (sum(row["r1_correct"] for row in ok)
                           / len(sub) if sub else float("nan")),
            "threshold_rank_correct": (
                sum(row["threshold_rank"] == row["true_rank"] for row in ok)
                / len(sub) if sub else float("nan")),
        }
    columns = ["n", "seed", "x", "true_rank", "true_r1", "alpha", "s", "r",
               "beta", "r1", "rank_correct", "r1_correct", "threshold_rank",
               "scaled_error", "error"]
    write_rows(table_path, rows, columns)
    write_json(summary_path, summary)
    write_json(timing_path, {"seconds": timing})
    return summary


def _segment_fit(errors):
    """Linear fit of ``2 log(error)`` over the pre-plateau segment.

    The segment runs from the first iterate to the first one that has
    covered 90% of the total decrease. Returns None when the error does
    not decrease overall or the segment has fewer than three points.
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 3 or not e[-1] < e[0]:
        return None
    target = e[-1] + 0.1 * (e[0] - e[-1])
    stop = int(np.argmax(e <= target))
    if stop < 2:
        return None
    k = np.arange(stop + 1)
    fit = stats.linregress(k, 2 * np.log(e[:stop + 1]))
    return {"segment_end": stop, "slope": float(fit.slope),
            "r_squared": float(fit.rvalue ** 2)}


def _trace_fit(train, hp, init, truth):
    tds = []

    def record(st):
        if st.r1 == truth.r1 and st.U.shape[1] == truth.rank:
            tds.append(total_distance(st.S, truth.sparse, st.factor,
                                      truth.factor, truth.sigma1))

    report = fit_nonconvex(train, hp, truth=truth, init=init,
                           callback=record)
    return report, tds


def run_convergence(cfg, progress=None):
    """Per-iteration error of the gradient iteration from the stage-one start.

    ``alpha``, ``s`` and ``beta`` are chosen by validation loss with the
    rank fixed at its true value, then the chosen fit is traced. A second
    trace (variant ``scaled_loss``) runs the same iteration with both
    sample covariances multiplied by ``n / (n - d - 2)``; it is a
    diagnostic for the small-sample bias of the unscaled loss, not part of
    the method.
    """
    table_path, summary_path, timing_path = _outputs(cfg)
    d, r, n, seed = cfg.d, cfg.r, cfg.n, cfg.seed
    inst = make_instance(cfg.models, d, r, n, seed, cfg.n_valid)
    truth = inst.truth
    start = time.perf_counter()
    cv = cross_validate(inst.train, inst.valid, _grid(cfg, r=[truth.rank]),
                        "nonconvex", **cfg.hp)
    hp = HyperParams(**cv.best_params, **cfg.hp)
    init = initialize(inst.train, hp)

    f = n / (n - d - 2)
    scaled = CovariancePair(inst.train.cov_x * f, inst.train.cov_y * f,
                            inst.train.n_x, inst.train.n_y)
    rows = []
    summary = {"config": cfg.to_dict(), "selected": cv.best_params,
               "true_rank": truth.rank, "true_r1": truth.r1, "variants": {}}
    for variant, pair in (("paper", inst.train), ("scaled_loss", scaled)):
        report, tds = _trace_fit(pair, hp, init, truth)
        for k, (obj, err) in enumerate(zip(report.objective, report.error)):
            rows.append({"variant": variant, "iteration": k, "objective": obj,
                         "scaled_error": err, "log_error": 2 * math.log(err),
                         "total_distance": tds[k - 1] if 0 < k <= len(tds)
                         else ""})
        seg = _segment_fit(report.error)
        summary["variants"][variant] = {
            "n_iter": report.n_iter, "converged": report.converged,
            "guard_triggered": report.guard_triggered,
            "r1": report.r1,
            "initial_error": report.error[0],
            "final_error": report.error[-1],
            "min_error": min(report.error),
            "decreasing": report.error[-1] < report.error[0],
            "segment": seg,
        }
        if progress:
            progress({"variant": variant, **summary["variants"][variant]})
    columns = ["variant", "iteration", "objective", "scaled_error",
               "log_error", "total_distance"]
    write_rows(table_path, rows, columns)
    write_json(summary_path, summary)
    write_json(timing_path, {"seconds": time.perf_counter() - start})
    return summary


def run_bench(cfg, progress=None):
    """Cross-validated nonconvex estimator against the ADMM baseline.

    Errors, selected parameters and final feasibility gaps go to the CSV
    and summary; the wall time of each selected fit and of each full grid
    search goes to the timing file, whose summary also carries the mean
    time ratio.
    """
    table_path, summary_path, timing_path = _outputs(cfg)
    d, r, n = cfg.d, cfg.r, cfg.n
    grid = _grid(cfg)
    rows, timing = [], []
    for seed in cfg.seeds:
        inst = make_instance(cfg.models, d, r, n, seed, cfg.n_valid)
        truth = inst.truth
        for method, base in (("nonconvex", cfg.hp), ("admm", cfg.admm)):
            row = {"seed": seed, "method": method}
            try:
                cv = cross_validate(inst.train, inst.valid, grid, method,
                                    **base)
            except DiffNetError as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                continue
            fit = cv.best_fit
            m = evaluate(fit, truth)
            row.update(params=json.dumps(cv.best_params, sort_keys=True),
                       sparse_error=m.sparse_error,
                       scaled_error=m.scaled_error, rank=m.rank, r1=m.r1,
                       n_iter=fit.n_iter, converged=fit.converged,
                       final_gap=(fit.feasibility[-1] if method == "admm"
                                  else ""),
                       error="")
            rows.append(row)
            timing.append({"seed": seed, "method": method,
                           "fit_seconds": fit.wall_time,
                           "cv_seconds": cv.wall_time})
            if progress:
                progress(row)

    def mean_of(method, key, source):
        vals = [x[key] for x in source
                if x["method"] == method and x.get(key, "") != ""
                and not x.get("error")]
        return float(np.mean(vals)) if vals else float("nan")

    summary = {"config": cfg.to_dict(), "methods": {}}
    for method in ("nonconvex", "admm"):
        summary["methods"][method] = {
            "mean_scaled_error": mean_of(method, "scaled_error", rows),
            "mean_sparse_error": mean_of(method, "sparse_error", rows),
            "failed": sum(1 for x in rows
                          if x["method"] == method and x.get("error")),
        }
    gaps = [x["final_gap"] for x in rows
            if x["method"] == "admm" and x.get("final_gap", "") != ""]
    summary["admm_max_final_gap"] = max(gaps) if gaps else float("nan")
    summary["nonconvex_error_le_admm"] = bool(
        summary["methods"]["nonconvex"]["mean_scaled_error"]
        <= summary["methods"]["admm"]["mean_scaled_error"])

    fit_nc = mean_of("nonconvex", "fit_seconds", timing)
    fit_ad = mean_of("admm", "fit_seconds", timing)
    timing_summary = {
        "runs": timing,
        "mean_fit_seconds": {"nonconvex": fit_nc, "admm": fit_ad},
        "mean_cv_seconds": {"nonconvex": mean_of("nonconvex", "cv_seconds",
                                                 timing),
                            "admm": mean_of("admm", "cv_seconds", timing)},
        "fit_time_ratio": fit_ad / fit_nc if fit_nc > 0 else float("nan"),
    }
    columns = ["seed", "method", "params", "sparse_error", "scaled_error",
               "rank", "r1", "n_iter", "converged", "final_gap", "error"]
    write_rows(table_path, rows, columns)
    write_json(summary_path, summary)
    write_json(timing_path, timing_summary)
    return summary, timing_summary


RUNNERS = {
    "rate": run_rate,
    "recovery": run_recovery,
    "convergence": run_convergence,
    "bench": run_bench,
}


def run_experiment(cfg, progress=None):
    try:
        runner = RUNNERS[cfg.kind]
    except KeyError:
        raise InvalidArgumentError(f"unknown experiment {cfg.kind!r}") from None
    return runner(cfg, progress=progress)
