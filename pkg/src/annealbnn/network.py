"""Masked fully connected regression network.

Parameters live in one flat float64 vector so samplers can treat the whole
network as a point in R^K.  Layer ``h`` occupies a contiguous slice holding
its weight matrix (``L_h x L_{h-1}``, row-major) followed by its bias.  The
binary mask has the same flat layout.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyStructureError, ParameterError, ShapeError

ACTIVATIONS = ("tanh", "relu", "identity")
CHECKPOINT_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)


def n_params_for(layer_sizes):
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def layer_slices(layer_sizes):
    """[(weight_slice, bias_slice), ...] into the flat parameter vector."""
    out = []
    pos = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = slice(pos, pos + fan_in * fan_out)
        pos += fan_in * fan_out
        b = slice(pos, pos + fan_out)
        pos += fan_out
        out.append((w, b))
    return out


@dataclass
class Network:
    layer_sizes: tuple
    activation: str = "tanh"
    params: np.ndarray = None
    mask: np.ndarray = None
    _slices: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ShapeError(f"bad layer sizes {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ShapeError("output layer must have width 1")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        k = n_params_for(self.layer_sizes)
        if self.params is None:
            self.params = np.zeros(k)
        self.params = np.array(self.params, dtype=np.float64)
        if self.params.shape != (k,):
            raise ShapeError(f"expected {k} parameters, got shape {self.params.shape}")
        if self.mask is None:
            self.mask = np.ones(k, dtype=bool)
        self.mask = np.array(self.mask, dtype=bool)
        if self.mask.shape != (k,):
            raise ShapeError(f"mask shape {self.mask.shape} does not match {k} parameters")
        self.params[~self.mask] = 0.0
        self._slices = layer_slices(self.layer_sizes)

    @classmethod
    def init(cls, layer_sizes, activation="tanh", rng=None, scale=1.0):
        """Random network: weights ~ N(0, scale^2 / fan_in), biases zero."""
        rng = np.random.default_rng(rng)
        layer_sizes = tuple(layer_sizes)
        params = np.zeros(n_params_for(layer_sizes))
        for (ws, _), fan_in in zip(layer_slices(layer_sizes), layer_sizes[:-1]):
            params[ws] = rng.standard_normal(ws.stop - ws.start) * (scale / math.sqrt(fan_in))
        return cls(layer_sizes, activation, params)

    @property
    def n_params(self):
        return self.params.shape[0]

    @property
    def n_active(self):
        return int(np.count_nonzero(self.mask))

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    def weights(self, h):
        """View of the weight matrix feeding layer ``h`` (1-based)."""
        ws, _ = self._slices[h - 1]
        return self.params[ws].reshape(self.layer_sizes[h], self.layer_sizes[h - 1])

    def biases(self, h):
        return self.params[self._slices[h - 1][1]]

    def weight_mask(self, h):
        ws, _ = self._slices[h - 1]
        return self.mask[ws].reshape(self.layer_sizes[h], self.layer_sizes[h - 1])

    def copy(self):
        return Network(self.layer_sizes, self.activation, self.params.copy(), self.mask.copy())

    def with_params(self, params):
        return Network(self.layer_sizes, self.activation, np.array(params, dtype=np.float64), self.mask.copy())

    def width_ratio(self, n):
        """Widest hidden layer over sample size (overparameterisation indicator)."""
        hidden = self.layer_sizes[1:-1]
        return max(hidden) / n if hidden else 0.0


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(np.atleast_2d(self.inputs), dtype=np.float64)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64).reshape(-1)
        n = self.inputs.shape[0]
        if n < 1:
            raise ShapeError("dataset needs at least one observation")
        if self.targets.shape[0] != n:
            raise ShapeError(f"{n} input rows but {self.targets.shape[0]} targets")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ParameterError("dataset contains non-finite values")

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def p(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx])


@dataclass(frozen=True)
class MiniBatch:
    indices: np.ndarray

    @property
    def m(self):
        return len(self.indices)

    def validate(self, n):
        idx = self.indices
        if len(idx) == 0:
            raise ParameterError("empty minibatch")
        if len(idx) > n or idx.min() < 0 or idx.max() >= n:
            raise ParameterError(f"minibatch indices out of range for n={n}")
        if len(np.unique(idx)) != len(idx):
            raise ParameterError("minibatch indices must be distinct")


def _act(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_deriv(z, a, kind):
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        # subgradient at 0 taken as 0
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def _check_inputs(net, X):
    if X.shape[-1] != net.layer_sizes[0]:
        raise ShapeError(f"input has {X.shape[-1]} features, network expects {net.layer_sizes[0]}")


def predict(net, X):
    """Network output for every row of ``X`` (shape ``(n,)``)."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _check_inputs(net, X)
    a = X
    H = net.n_layers
    for h in range(1, H + 1):
        z = a @ net.weights(h).T + net.biases(h)
        a = _act(z, net.activation) if h < H else z
    out = a[:, 0]
    return float(out[0]) if single else out


def forward(net, x):
    """Scalar output for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward takes a single input vector; use predict for batches")
    return predict(net, x)


def _check_noise_var(noise_var):
    if not noise_var > 0.0:
        raise ParameterError(f"noise variance must be positive, got {noise_var}")


def loglik(net, data, noise_var=1.0):
    """Gaussian log-likelihood summed over the dataset (n times l_n)."""
    _check_noise_var(noise_var)
    resid = data.targets - predict(net, data.inputs)
    return float(-np.dot(resid, resid) / (2.0 * noise_var) - 0.5 * data.n * (_LOG_2PI + math.log(noise_var)))


def _backprop(net, X, y, noise_var):
    H = net.n_layers
    acts = [X]
    pre = []
    a = X
    for h in range(1, H + 1):
        z = a @ net.weights(h).T + net.biases(h)
        pre.append(z)
        a = _act(z, net.activation) if h < H else z
        acts.append(a)
    delta = (y[:, None] - a) / noise_var
    grad = np.zeros(net.n_params)
    for h in range(H, 0, -1):
        ws, bs = net._slices[h - 1]
        grad[ws] = (delta.T @ acts[h - 1]).ravel()
        grad[bs] = delta.sum(axis=0)
        if h > 1:
            delta = (delta @ net.weights(h)) * _act_deriv(pre[h - 2], acts[h - 1], net.activation)
    return grad


def grad_loglik(net, batch, data, noise_var=1.0, rescale=True):
    """Gradient of the batch log-likelihood w.r.t. the flat parameters.

    ``batch`` may be ``None`` for the full dataset.  With ``rescale`` the result
    is multiplied by n/m, an unbiased estimate of the full-data gradient.
    Masked coordinates are exactly zero.
    """
    _check_noise_var(noise_var)
    if batch is None:
        X, y, m = data.inputs, data.targets, data.n
    else:
        if not isinstance(batch, MiniBatch):
            batch = MiniBatch(np.asarray(batch))
        batch.validate(data.n)
        X, y, m = data.inputs[batch.indices], data.targets[batch.indices], batch.m
    _check_inputs(net, X)
    grad = _backprop(net, X, y, noise_var)
    if rescale and m != data.n:
        grad *= data.n / m
    grad[~net.mask] = 0.0
    return grad


def fd_step(beta):
    return 1e-5 * max(1.0, abs(beta))


def active_hessian(net, data, noise_var=1.0, return_asymmetry=False):
    """Negative Hessian of l_n = loglik / n over the active coordinates.

    Central differences of the analytic gradient, then symmetrised.  With
    ``return_asymmetry`` also returns max |A - A^T| of the raw FD matrix.
    """
    active = np.flatnonzero(net.mask)
    r = active.size
    if r == 0:
        raise EmptyStructureError("no active parameters")
    probe = net.copy()
    A = np.empty((r, r))
    for col, k in enumerate(active):
        h = fd_step(net.params[k])
        probe.params[k] = net.params[k] + h
        g_plus = grad_loglik(probe, None, data, noise_var)[active]
        probe.params[k] = net.params[k] - h
        g_minus = grad_loglik(probe, None, data, noise_var)[active]
        probe.params[k] = net.params[k]
        A[:, col] = -(g_plus - g_minus) / (2.0 * h * data.n)
    asym = float(np.max(np.abs(A - A.T)))
    A = 0.5 * (A + A.T)
    return (A, asym) if return_asymmetry else A


def apply_mask(net, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != net.mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match {net.mask.shape}")
    return Network(net.layer_sizes, net.activation, net.params.copy(), mask.copy())


def output_gradient(net, X0):
    """d mu(x0) / d beta over active coordinates by central differences.

    Returns an array of shape ``(len(X0), r)``.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    active = np.flatnonzero(net.mask)
    probe = net.copy()
    J = np.empty((X0.shape[0], active.size))
    for col, k in enumerate(active):
        h = fd_step(net.params[k])
        probe.params[k] = net.params[k] + h
        up = predict(probe, X0)
        probe.params[k] = net.params[k] - h
        down = predict(probe, X0)
        probe.params[k] = net.params[k]
        J[:, col] = (up - down) / (2.0 * h)
    return J


# ---------------------------------------------------------------- checkpoints


def _fmt(x):
    return format(float(x), ".17g")


def encode_array(a):
    return [_fmt(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def decode_array(strings):
    return np.array([float(s) for s in strings], dtype=np.float64)


def network_to_dict(net):
    return {
        "format_version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "params": encode_array(net.params),
        "mask": [int(m) for m in net.mask],
    }


def network_from_dict(d):
    version = d.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ShapeError(f"unsupported checkpoint format_version {version!r}")
    return Network(
        tuple(d["layer_sizes"]),
        d["activation"],
        decode_array(d["params"]),
        np.array(d["mask"], dtype=bool),
    )


def save_checkpoint(path, net, **extra):
    doc = network_to_dict(net)
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    return network_from_dict(doc), doc
