"""Optimisers and tempered SG-MCMC kernels over a flat parameter vector.

Kernels ascend ``n*l_n + eta*log_prior`` (the *un-tempered* log density).  The
temperature only scales the injected noise, so a chain run at temperature tau
targets ``exp((n*l_n + eta*log_prior) / tau)`` and tau -> 0 recovers the plain
optimiser update exactly.

Step functions mutate ``state`` in place and return it.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DivergenceError, ParameterError
from .network import Network, grad_loglik

PRNG_ALGORITHM = "PCG64"


# ---------------------------------------------------------------- randomness


class GaussianNoise:
    """Default noise hook: standard normals from a dedicated PCG64 stream."""

    def __init__(self, seed):
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def normal(self, size):
        return self.rng.standard_normal(size)

    def get_state(self):
        return self.rng.bit_generator.state

    def set_state(self, state):
        self.rng.bit_generator.state = state


class RecordingNoise:
    """Wraps another noise source and keeps every draw."""

    def __init__(self, base):
        self.base = base
        self.draws = []

    def normal(self, size):
        xi = self.base.normal(size)
        self.draws.append(xi.copy())
        return xi


class ReplayNoise:
    def __init__(self, draws):
        self._draws = list(draws)
        self._pos = 0

    def normal(self, size):
        xi = self._draws[self._pos]
        self._pos += 1
        if xi.shape != (size,) and np.shape(xi) != size:
            raise ParameterError("replayed draw has the wrong shape")
        return xi


class ConstantNoise:
    def __init__(self, value=1.0):
        self.value = value

    def normal(self, size):
        return np.full(size, self.value)


class BatchStream:
    """Epoch-shuffled minibatch indices, independent of the noise stream."""

    def __init__(self, seed):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.perm = None
        self.cursor = 0

    def next(self, n, m):
        if not 1 <= m <= n:
            raise ParameterError(f"batch size {m} outside [1, {n}]")
        if self.perm is None or len(self.perm) != n or self.cursor + m > n:
            self.perm = self.rng.permutation(n)
            self.cursor = 0
        idx = self.perm[self.cursor:self.cursor + m]
        self.cursor += m
        return idx

    def get_state(self):
        return {
            "rng": self.rng.bit_generator.state,
            "perm": None if self.perm is None else [int(i) for i in self.perm],
            "cursor": self.cursor,
        }

    def set_state(self, state):
        self.rng.bit_generator.state = state["rng"]
        self.perm = None if state["perm"] is None else np.array(state["perm"], dtype=np.int64)
        self.cursor = state["cursor"]


# ---------------------------------------------------------------- state / target


@dataclass
class SamplerState:
    params: np.ndarray
    mask: np.ndarray = None
    momentum: np.ndarray = None
    adam_m: np.ndarray = None
    adam_v: np.ndarray = None
    adam_t: int = 0
    step: int = 0
    noise: object = None
    batches: BatchStream = None

    def __post_init__(self):
        self.params = np.array(self.params, dtype=np.float64).reshape(-1)
        k = self.params.shape[0]
        self.mask = np.ones(k, dtype=bool) if self.mask is None else np.array(self.mask, dtype=bool)
        for name in ("momentum", "adam_m", "adam_v"):
            buf = getattr(self, name)
            buf = np.zeros(k) if buf is None else np.array(buf, dtype=np.float64)
            if buf.shape != (k,):
                raise ParameterError(f"{name} shape {buf.shape} does not match params ({k},)")
            setattr(self, name, buf)
        self.params[~self.mask] = 0.0
        if self.noise is None:
            self.noise = GaussianNoise(0)
        if self.batches is None:
            self.batches = BatchStream(1)

    @classmethod
    def from_seed(cls, params, seed, mask=None):
        """Independent noise and batch streams spawned from one seed."""
        noise_seq, batch_seq = np.random.SeedSequence(seed).spawn(2)
        return cls(params, mask=mask, noise=GaussianNoise(noise_seq), batches=BatchStream(batch_seq))

    def reset_momentum(self):
        self.momentum[:] = 0.0


@dataclass
class TargetSpec:
    """Annealed posterior for a network: ``exp((n l_n + eta log pi) / tau)``."""

    data: object
    layer_sizes: tuple
    activation: str = "tanh"
    prior: object = None
    noise_var: float = 1.0
    eta: float = 0.0
    tau: float = 1.0
    batch_size: int = None
    # global-norm cap applied to grad / n (per-observation units); None = off
    clip_norm: float = None
    _net: Network = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.tau > 0.0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.eta > 0.0 and self.prior is None:
            raise ParameterError("eta > 0 needs prior parameters")
        self._net = Network(self.layer_sizes, self.activation)

    @property
    def n_obs(self):
        return self.data.n

    def grad(self, params, mask, batch):
        net = self._net
        net.params = params
        net.mask = mask
        g = grad_loglik(net, batch, self.data, self.noise_var, rescale=True)
        if self.eta > 0.0:
            _kernels.add_scaled_prior_grad(params, self.eta, *self.prior.constants, g)
            g[~mask] = 0.0
        return g


@dataclass
class GaussianTarget:
    """log density -(x - mean)^T P (x - mean) / 2; used for calibration checks."""

    mean: np.ndarray
    precision: np.ndarray
    tau: float = 1.0
    batch_size: int = None
    clip_norm: float = None
    n_obs: int = 1

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.precision = np.atleast_2d(np.asarray(self.precision, dtype=np.float64))

    def grad(self, params, mask, batch):
        g = -(self.precision @ (params - self.mean))
        g[~mask] = 0.0
        return g

    def logdensity(self, params):
        d = params - self.mean
        return -0.5 * float(d @ self.precision @ d)


# ---------------------------------------------------------------- kernels


def annealed_grad(state, spec):
    """Gradient of ``(n/m) * batch loglik + eta * log_prior`` at ``state.params``."""
    m = spec.batch_size
    batch = None
    if m is not None and m < spec.n_obs:
        batch = state.batches.next(spec.n_obs, m)
    g = spec.grad(state.params, state.mask, batch)
    if spec.clip_norm is not None:
        norm = math.sqrt(float(g @ g)) / spec.n_obs
        if norm > spec.clip_norm:
            g *= spec.clip_norm / norm
    return g


def _checked_grad(state, spec):
    g = annealed_grad(state, spec)
    if not np.all(np.isfinite(g)):
        raise DivergenceError(state.step, "non-finite gradient")
    return g


def _finish(state):
    state.step += 1
    if not np.all(np.isfinite(state.params)):
        raise DivergenceError(state.step, "non-finite parameters")
    return state


def noise_scale(lr, tau, alpha=1.0):
    """Standard deviation of the injected noise: sqrt(2 alpha tau lr)."""
    return math.sqrt(2.0 * alpha * tau * lr)


def sgld_step(state, spec, lr):
    if not lr > 0.0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    g = _checked_grad(state, spec)
    xi = state.noise.normal(state.params.shape[0])
    _kernels.sgld_update(state.params, g, xi, state.mask, lr, noise_scale(lr, spec.tau))
    return _finish(state)


def sghmc_step(state, spec, lr, alpha=0.1):
    if not lr > 0.0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"friction alpha must lie in (0, 1], got {alpha}")
    g = _checked_grad(state, spec)
    xi = state.noise.normal(state.params.shape[0])
    _kernels.sghmc_update(
        state.params, state.momentum, g, xi, state.mask, lr, alpha, noise_scale(lr, spec.tau, alpha)
    )
    return _finish(state)


def sgd_step(state, spec, lr, momentum=0.0):
    """Momentum gradient ascent (no noise)."""
    if not 0.0 <= momentum < 1.0:
        raise ParameterError(f"momentum must lie in [0, 1), got {momentum}")
    g = _checked_grad(state, spec)
    _kernels.sgd_update(state.params, state.momentum, g, state.mask, lr, momentum)
    return _finish(state)


def adam_step(state, spec, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0 and eps > 0.0):
        raise ParameterError("Adam needs beta1, beta2 in [0, 1) and eps > 0")
    g = _checked_grad(state, spec)
    state.adam_t += 1
    bc1 = 1.0 - beta1 ** state.adam_t
    bc2 = 1.0 - beta2 ** state.adam_t
    _kernels.adam_update(state.params, state.adam_m, state.adam_v, g, state.mask, lr, beta1, beta2, eps, bc1, bc2)
    return _finish(state)


# ---------------------------------------------------------------- persistence


def dump_state(state):
    """JSON-ready snapshot of everything needed to continue a chain bit-exactly."""
    from .network import encode_array

    return {
        "step": state.step,
        "params": encode_array(state.params),
        "mask": [int(m) for m in state.mask],
        "momentum": encode_array(state.momentum),
        "adam_m": encode_array(state.adam_m),
        "adam_v": encode_array(state.adam_v),
        "adam_t": state.adam_t,
        "noise": state.noise.get_state(),
        "batches": state.batches.get_state(),
        "prng": PRNG_ALGORITHM,
    }


def load_state(state, doc):
    from .network import decode_array

    state.step = int(doc["step"])
    state.params = decode_array(doc["params"])
    state.mask = np.array(doc["mask"], dtype=bool)
    state.momentum = decode_array(doc["momentum"])
    state.adam_m = decode_array(doc["adam_m"])
    state.adam_v = decode_array(doc["adam_v"])
    state.adam_t = int(doc["adam_t"])
    state.noise.set_state(doc["noise"])
    state.batches.set_state(doc["batches"])
    return state
