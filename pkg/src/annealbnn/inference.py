"""Prediction intervals: Laplace (inverse active-set Hessian) and posterior samples."""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, EmptyStructureError, InsufficientSamplesError
from .network import Network, active_hessian, output_gradient, predict

Z95 = 1.96


@dataclass(frozen=True)
class PredictionInterval:
    center: float
    lower: float
    upper: float
    model_var: float
    noise_var: float
    kind: str

    @property
    def width(self):
        return self.upper - self.lower

    def covers(self, y):
        return self.lower <= y <= self.upper


def _interval(center, model_var, noise_var, kind):
    half = Z95 * math.sqrt(model_var + noise_var)
    return PredictionInterval(float(center), float(center - half), float(center + half),
                              float(model_var), float(noise_var), kind)


def _network(model):
    return model if isinstance(model, Network) else model.network


def estimate_sigma2(model, data):
    """Mean squared training residual of the fitted network."""
    resid = predict(_network(model), data.inputs) - data.targets
    return float(np.mean(resid * resid))


def laplace_components(model, data, X0, sigma2):
    """Pieces of the Laplace interval for the rows of ``X0``.

    Returns a dict with the (jittered) active Hessian of ``-l_n``, the applied
    jitter, output gradients ``J`` (points x active), the solutions
    ``H^{-1} J^T`` and the quadratic forms ``J H^{-1} J^T``.
    """
    from .pipeline import compact

    net = _network(model)
    if net.n_active == 0:
        raise EmptyStructureError("Laplace interval needs at least one active parameter")
    small, sdata, _ = compact(net, data)
    cols = np.array(_selected_columns(net), dtype=np.int64)
    if cols.size == 0:
        cols = np.array([0], dtype=np.int64)
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    H = active_hessian(small, sdata, sigma2)
    r = H.shape[0]
    jitter = 0.0
    evals = np.linalg.eigvalsh(H)
    if evals[0] <= 0.0:
        jitter = 1e-6 * abs(np.trace(H)) / r
        H = H + jitter * np.eye(r)
        evals = np.linalg.eigvalsh(H)
        if evals[0] <= 0.0:
            raise ConditioningError(float(evals[0]))
    J = output_gradient(small, X0[:, cols])
    Z = np.linalg.solve(H, J.T)
    quad = np.einsum("ij,ji->i", J, Z)
    return {"hessian": H, "jitter": jitter, "grad_mu": J, "solution": Z, "sigma_hat": quad,
            "center": predict(small, X0[:, cols])}


def _selected_columns(net):
    from .pipeline import select_variables

    return select_variables(net.mask, net.layer_sizes)


def laplace_intervals(model, data, X0, sigma2=None):
    """Laplace intervals for every row of ``X0`` (one Hessian for all points)."""
    if sigma2 is None:
        sigma2 = estimate_sigma2(model, data)
    parts = laplace_components(model, data, X0, sigma2)
    n = data.n
    return [
        _interval(c, max(s, 0.0) / n, sigma2, "laplace")
        for c, s in zip(parts["center"], parts["sigma_hat"])
    ]


def laplace_interval(model, data, x0, sigma2=None):
    return laplace_intervals(model, data, np.atleast_2d(x0), sigma2)[0]


def _sample_predictions(samples, X):
    if len(samples) < 2:
        raise InsufficientSamplesError(f"need at least 2 posterior samples, got {len(samples)}")
    # sorted along the sample axis so the statistics do not depend on sample order
    return np.sort(np.stack([predict(net, X) for net in samples.networks()]), axis=0)


def bayesian_noise_var(samples, data):
    """Residual variance of the sample-averaged fit on the training data."""
    fitted = _sample_predictions(samples, data.inputs).mean(axis=0)
    return float(np.mean((data.targets - fitted) ** 2))


def bayesian_intervals(samples, data, X0, sigma2=None):
    if sigma2 is None:
        sigma2 = bayesian_noise_var(samples, data)
    preds = _sample_predictions(samples, np.atleast_2d(X0))
    centers = preds.mean(axis=0)
    spread = np.mean((preds - centers) ** 2, axis=0)
    return [_interval(c, v, sigma2, "bayesian") for c, v in zip(centers, spread)]


def bayesian_interval(samples, data, x0, sigma2=None):
    return bayesian_intervals(samples, data, np.atleast_2d(x0), sigma2)[0]


def coverage_eval(intervals, truths):
    truths = np.asarray(truths, dtype=np.float64).reshape(-1)
    if len(intervals) != truths.size:
        raise ValueError(f"{len(intervals)} intervals but {truths.size} truths")
    lower = np.array([iv.lower for iv in intervals])
    upper = np.array([iv.upper for iv in intervals])
    covered = (lower <= truths) & (truths <= upper)
    return {
        "coverage": float(covered.mean()),
        "mean_width": float(np.mean(upper - lower)),
        "n": int(truths.size),
        "covered": covered,
    }


def aggregate(values):
    """Mean and sample standard deviation across replicates."""
    v = np.asarray(values, dtype=np.float64)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "sd": sd, "count": int(v.size)}


INTERVAL_COLUMNS = ("replicate", "index", "center", "lower", "upper", "truth", "covered")


def interval_rows(intervals, truths=None, replicate=0):
    for i, iv in enumerate(intervals):
        truth = None if truths is None else float(truths[i])
        covered = "" if truth is None else int(iv.covers(truth))
        yield (replicate, i, _f(iv.center), _f(iv.lower), _f(iv.upper),
               "" if truth is None else _f(truth), covered)


def _f(x):
    return format(float(x), ".17g")


def write_interval_report(path, rows, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INTERVAL_COLUMNS)
        w.writerows(rows)
