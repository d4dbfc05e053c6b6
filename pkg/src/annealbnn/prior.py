"""Two-component zero-mean Gaussian mixture prior on every weight and bias.

The slab ``N(0, sigma1^2)`` carries mass ``lam``; the spike ``N(0, sigma0^2)``
carries ``1 - lam``.  All mixture arithmetic is done in log space because the
settings of interest (``lam`` around 1e-7, spike variance around 1e-6) make
naive ratios underflow.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegeneratePriorError, NoThresholdError, ParameterError


@dataclass(frozen=True)
class PriorParams:
    lam: float
    sigma0: float
    sigma1: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ParameterError(f"lambda must lie in (0, 1), got {self.lam}")
        if not (self.sigma0 > 0.0 and self.sigma1 > 0.0):
            raise ParameterError("prior standard deviations must be positive")
        # sigma0 == sigma1 is allowed (plain Gaussian prior); only the
        # threshold needs a strict spike/slab separation.
        if self.sigma0 > self.sigma1:
            raise DegeneratePriorError(f"spike sd {self.sigma0} exceeds slab sd {self.sigma1}")

    def with_sigma0(self, sigma0):
        return PriorParams(self.lam, sigma0, self.sigma1)

    @property
    def constants(self):
        return _kernels.prior_constants(self.lam, self.sigma0, self.sigma1)


def log_prior(beta, p):
    beta = np.ascontiguousarray(beta, dtype=np.float64).reshape(-1)
    return float(_kernels.log_prior(beta, *p.constants))


def grad_log_prior(beta, p):
    """Responsibility-weighted shrinkage: -(r0/sigma0^2 + r1/sigma1^2) * beta."""
    beta = np.ascontiguousarray(beta, dtype=np.float64).reshape(-1)
    out = np.empty_like(beta)
    return _kernels.grad_log_prior(beta, *p.constants, out)


def _log_odds_offset(p):
    # log((1 - lam) sigma1 / (lam sigma0)), with log1p for tiny lam
    return math.log1p(-p.lam) - math.log(p.lam) + math.log(p.sigma1) - math.log(p.sigma0)


def _quad_gap(p):
    # 1/(2 sigma0^2) - 1/(2 sigma1^2) without cancelling sigma1^2 - sigma0^2
    s0, s1 = p.sigma0, p.sigma1
    return (s1 - s0) * (s1 + s0) / (2.0 * s0 * s0 * s1 * s1)


def inclusion_prob(beta, p):
    """Conditional probability that a weight of value ``beta`` belongs to the slab."""
    beta = np.asarray(beta, dtype=np.float64)
    d = _log_odds_offset(p) - _quad_gap(p) * beta * beta
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0.0, e / (1.0 + e), 1.0 / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def threshold(p):
    """|beta| at which the inclusion probability equals one half."""
    if not p.sigma0 < p.sigma1:
        raise DegeneratePriorError(f"need sigma0 < sigma1, got {p.sigma0} >= {p.sigma1}")
    log_arg = _log_odds_offset(p)
    if not log_arg > 0.0:
        raise NoThresholdError(
            f"(1-lam) sigma1 / (lam sigma0) = {math.exp(log_arg):.6g} <= 1: inclusion probability is always >= 1/2"
        )
    return math.sqrt(log_arg / _quad_gap(p))


def sparsify(net, p):
    """New mask keeping weights strictly above the threshold in magnitude."""
    t = threshold(p)
    return np.abs(net.params) > t


def active_count(beta, p):
    """Number of coordinates with inclusion probability above one half."""
    try:
        return int(np.count_nonzero(np.abs(beta) > threshold(p)))
    except (DegeneratePriorError, NoThresholdError):
        return int(np.asarray(beta).size)
