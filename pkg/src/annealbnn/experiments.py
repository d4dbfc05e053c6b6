"""Synthetic nonlinear regression study: data, metrics, replicate harness."""
import concurrent.futures
import csv
import dataclasses
import logging
import math
from typing import NamedTuple

import numpy as np

from .config import config_hash
from .errors import AnnealBNNError
from .inference import (
    Z95,
    PredictionInterval,
    aggregate,
    bayesian_intervals,
    coverage_eval,
    interval_rows,
    laplace_intervals,
    write_interval_report,
)
from .network import Dataset, Network, predict
from .pipeline import PosteriorSamples, SparseModel, fit
from .samplers import PRNG_ALGORITHM

log = logging.getLogger(__name__)

TRUE_VARIABLES = frozenset(range(5))  # x1..x5, 0-based
REFERENCE_COVERAGE_REPLICATES = 100
_MASK64 = (1 << 64) - 1


def truth_fn(X):
    """Noiseless surface 5 x2 / (1 + x1^2) + 5 sin(x3 x4) + 2 x5."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    x1, x2, x3, x4, x5 = (X[:, j] for j in range(5))
    return 5.0 * x2 / (1.0 + x1 * x1) + 5.0 * np.sin(x3 * x4) + 2.0 * x5


def _draw(rng, n, p, noise_sd):
    e = rng.standard_normal((n, 1))
    z = rng.standard_normal((n, p))
    X = (e + z) / math.sqrt(2.0)
    y = truth_fn(X) + noise_sd * rng.standard_normal(n)
    return Dataset(X, y)


def gen_synthetic(spec):
    """(train, test, truth_fn) for ``spec`` (a SynthSpec).

    Inputs share a common N(0,1) factor, so every pair of coordinates has
    correlation 1/2 and unit variance.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    train = _draw(rng, spec.n_train, spec.p, spec.noise_sd)
    test = _draw(rng, spec.n_test, spec.p, spec.noise_sd)
    return train, test, truth_fn


def splitmix64(x):
    """One SplitMix64 output for state ``x`` (64-bit integer arithmetic)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed, index):
    return (int(master_seed) ^ splitmix64(int(index))) & _MASK64


# ---------------------------------------------------------------- metrics


class SelectionRates(NamedTuple):
    fsr: float
    nsr: float
    fsr_defined: bool


def selection_metrics(selected, truth=TRUE_VARIABLES):
    """Pooled false / negative selection rates over replicates.

    FSR = sum |S_i minus S| / sum |S_i| and NSR = sum |S minus S_i| / (R |S|).  When
    every selected set is empty FSR is undefined; it is reported as 0 with
    ``fsr_defined`` False.
    """
    truth = frozenset(truth)
    if not truth:
        raise ValueError("true variable set must be nonempty")
    sets = [frozenset(s) for s in selected]
    if not sets:
        raise ValueError("need at least one replicate")
    n_sel = sum(len(s) for s in sets)
    false = sum(len(s - truth) for s in sets)
    missed = sum(len(truth - s) for s in sets)
    fsr = false / n_sel if n_sel else 0.0
    return SelectionRates(fsr, missed / (len(sets) * len(truth)), n_sel > 0)


def _predictions(model, X):
    if isinstance(model, PosteriorSamples):
        return np.mean([predict(net, X) for net in model.networks()], axis=0)
    if isinstance(model, Network):
        return predict(model, X)
    if callable(model):
        return np.asarray(model(X), dtype=np.float64)
    return predict(model.network, X)


def fit_metrics(model, train, test):
    """(MSFE, MSPE): mean squared error on the training and test sets.

    ``model`` may be a SparseModel, a Network, PosteriorSamples (path-averaged
    prediction) or any callable mapping inputs to predictions.
    """
    msfe = float(np.mean((_predictions(model, train.inputs) - train.targets) ** 2))
    mspe = float(np.mean((_predictions(model, test.inputs) - test.targets) ** 2))
    return msfe, mspe


# ---------------------------------------------------------------- replicates


def replicate_configs(cfg, index):
    """(SynthSpec, RunConfig) for replicate ``index`` with derived seeds."""
    spec = dataclasses.replace(cfg.data, seed=replicate_seed(cfg.data.seed, index))
    run = dataclasses.replace(cfg.run, seed=replicate_seed(cfg.run.seed, index))
    return spec, run


def oracle_intervals(noise_sd):
    """Interval builder using the true surface and noise level (calibration check)."""

    def build(model, train, test):
        centers = truth_fn(test.inputs)
        half = Z95 * noise_sd
        return [PredictionInterval(float(c), float(c - half), float(c + half), 0.0, noise_sd ** 2, "oracle")
                for c in centers]

    return build


def default_intervals(model, train, test):
    if isinstance(model, PosteriorSamples):
        return bayesian_intervals(model, train, test.inputs)
    return laplace_intervals(model, train, test.inputs)


def run_replicate(cfg, index, fit_fn=None, interval_fn=None, intervals=True):
    """One replicate: data, fit, metrics and (optionally) test-set intervals."""
    spec, run = replicate_configs(cfg, index)
    train, test, _ = gen_synthetic(spec)
    out = {"replicate": index, "data_seed": spec.seed, "run_seed": run.seed}
    try:
        model = (fit_fn or fit)(run, train)
        msfe, mspe = fit_metrics(model, train, test)
        out.update(msfe=msfe, mspe=mspe)
        if isinstance(model, SparseModel):
            out.update(selected=list(model.selected), r=model.r)
        if intervals:
            ivs = (interval_fn or default_intervals)(model, train, test)
            cov = coverage_eval(ivs, test.targets)
            out.update(coverage=cov["coverage"], mean_width=cov["mean_width"],
                       interval_rows=list(interval_rows(ivs, test.targets, index)))
        out["ok"] = True
    except AnnealBNNError as exc:
        log.warning("replicate %d failed: %s", index, exc)
        out.update(ok=False, error=f"{type(exc).__name__}: {exc}", exit_code=exc.exit_code)
    return out


def _run_one(args):
    return run_replicate(*args)


def run_replicates(cfg, replicates=None, workers=None, fit_fn=None, interval_fn=None, intervals=True):
    """Run every replicate and aggregate; order of execution does not matter."""
    replicates = cfg.experiment.replicates if replicates is None else replicates
    workers = cfg.experiment.workers if workers is None else workers
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    jobs = [(cfg, i, fit_fn, interval_fn, intervals) for i in range(replicates)]
    if workers > 1 and fit_fn is None and interval_fn is None:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r["replicate"])
    return summarize(cfg, results)


def summarize(cfg, results, chash=None):
    """Aggregate replicate results; ``chash`` stands in for ``cfg`` when it is None."""
    ok = [r for r in results if r["ok"]]
    report = {
        "config_hash": config_hash(cfg) if cfg is not None else chash,
        "prng": PRNG_ALGORITHM,
        "replicates": len(results),
        "failures": [{"replicate": r["replicate"], "error": r["error"]} for r in results if not r["ok"]],
        "results": results,
    }
    if not ok:
        return report
    for key in ("msfe", "mspe", "coverage", "mean_width"):
        vals = [r[key] for r in ok if key in r]
        if vals:
            report[key] = aggregate(vals)
    sel = [r["selected"] for r in ok if "selected" in r]
    if sel:
        rates = selection_metrics(sel)
        report.update(fsr=rates.fsr, nsr=rates.nsr, fsr_defined=rates.fsr_defined,
                      selected_size=aggregate([len(s) for s in sel]))
    return report


# ---------------------------------------------------------------- reports

METRIC_COLUMNS = ("replicate", "selected_size", "selected_size_sd", "fsr", "nsr",
                  "msfe", "msfe_sd", "mspe", "mspe_sd", "status")


def _g(x):
    return "" if x is None else format(float(x), ".17g")


def report_header(report, kind):
    lines = [
        f"config_hash: {report['config_hash']}",
        f"prng: {report['prng']}",
        f"replicates: {report['replicates']}",
        f"failures: {len(report['failures'])}",
    ]
    if kind == "coverage" and report["replicates"] < REFERENCE_COVERAGE_REPLICATES:
        lines.append(
            f"note: {report['replicates']} replicates; the reference coverage study used "
            f"{REFERENCE_COVERAGE_REPLICATES}"
        )
    return lines


def write_metrics_report(path, report):
    with open(path, "w", newline="") as fh:
        for line in report_header(report, "metrics"):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in report["results"]:
            if not r["ok"]:
                w.writerow((r["replicate"], "", "", "", "", "", "", "", "", "failed"))
                continue
            sel = r.get("selected")
            rates = selection_metrics([sel]) if sel is not None else None
            w.writerow((
                r["replicate"],
                "" if sel is None else len(sel), "",
                "" if rates is None else _g(rates.fsr), "" if rates is None else _g(rates.nsr),
                _g(r["msfe"]), "", _g(r["mspe"]), "", "ok",
            ))
        if "msfe" in report:
            size = report.get("selected_size")
            w.writerow((
                "all",
                "" if size is None else _g(size["mean"]), "" if size is None else _g(size["sd"]),
                _g(report.get("fsr")), _g(report.get("nsr")),
                _g(report["msfe"]["mean"]), _g(report["msfe"]["sd"]),
                _g(report["mspe"]["mean"]), _g(report["mspe"]["sd"]),
                "ok" if not report["failures"] else "partial",
            ))


def write_coverage_report(path, report):
    rows = [row for r in report["results"] if r["ok"] for row in r.get("interval_rows", [])]
    header = report_header(report, "coverage")
    if "coverage" in report:
        header.append(f"coverage_mean: {report['coverage']['mean']:.6f}")
        header.append(f"coverage_sd: {report['coverage']['sd']:.6f}")
    write_interval_report(path, rows, header)
