"""Small configurations and oracles shared by the pipeline-level tests."""
import numpy as np

from annealbnn.config import run_config_from_dict
from annealbnn.network import Dataset


def run_config(layer_sizes, **sections):
    """RunConfig with small defaults; ``sections`` override per section."""
    raw = {
        "seed": 3,
        "network": {"layer_sizes": list(layer_sizes), "activation": "identity", "init_scale": 0.1},
        "prior": {"lam": 1e-7, "sigma1": 1.0},
        "anneal": {"t1": 500, "t2": 1500, "t3": 3500, "total_steps": 5000,
                   "sigma0_init": 0.1, "sigma0_end": 1e-3, "tau_const": 0.01},
        "sampler": {"lr": 1e-3, "batch_size": 100000, "clip_norm": None},
        "refine": {"max_steps": 2000, "grad_tol": 1e-10},
        "output": {"progress_every": 100},
    }
    for key, vals in sections.items():
        if isinstance(vals, dict):
            raw.setdefault(key, {}).update(vals)
        else:
            raw[key] = vals
    return run_config_from_dict(raw)


def linear_data(n=500, beta=(2.0, -1.5, 0.0, 0.0, 1.0), intercept=1.0, noise_sd=0.5, seed=0):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=np.float64)
    X = rng.normal(size=(n, beta.size))
    y = X @ beta + intercept + noise_sd * rng.normal(size=n)
    return Dataset(X, y)


def ols(X, y, intercept=True):
    A = np.hstack([X, np.ones((len(X), 1))]) if intercept else X
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef, A
