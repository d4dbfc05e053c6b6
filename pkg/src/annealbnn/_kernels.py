"""Elementwise hot loops: mixture-prior terms and in-place sampler updates.

Every kernel exists twice, a numba ``@njit`` version and a pure-numpy twin
with identical floating point operation order.  The public names bound at
import time point at the numba versions unless ``ANNEALBNN_DISABLE_NUMBA`` is
set to a truthy value (or numba is missing).  Both variants stay importable as
``numba_<name>`` / ``numpy_<name>`` so tests and the benchmark can compare them.

Prior kernels take precomputed constants from :func:`prior_constants`:

    c0, c1   log-normalisers of the spike and slab components
    q0, q1   1 / (2 sigma^2) of the spike and slab components
"""
import math
import os

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


def _numba_requested():
    flag = os.environ.get("ANNEALBNN_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def prior_constants(lam, sigma0, sigma1):
    c1 = math.log(lam) - math.log(sigma1) - 0.5 * _LOG_2PI
    c0 = math.log1p(-lam) - math.log(sigma0) - 0.5 * _LOG_2PI
    q0 = 0.5 / (sigma0 * sigma0)
    q1 = 0.5 / (sigma1 * sigma1)
    return c0, c1, q0, q1


# ---------------------------------------------------------------- numpy twins


def numpy_log_prior(beta, c0, c1, q0, q1):
    b2 = beta * beta
    a0 = c0 - q0 * b2
    a1 = c1 - q1 * b2
    hi = np.maximum(a0, a1)
    return float(np.sum(hi + np.log1p(np.exp(-np.abs(a0 - a1)))))


def numpy_responsibilities(beta, c0, c1, q0, q1):
    """(spike, slab) posterior component weights, stable for any gap."""
    b2 = beta * beta
    d = (c0 - q0 * b2) - (c1 - q1 * b2)
    e = np.exp(-np.abs(d))
    big = 1.0 / (1.0 + e)
    small = e / (1.0 + e)
    pos = d >= 0.0
    r0 = np.where(pos, big, small)
    r1 = np.where(pos, small, big)
    return r0, r1


def numpy_grad_log_prior(beta, c0, c1, q0, q1, out):
    r0, r1 = numpy_responsibilities(beta, c0, c1, q0, q1)
    out[:] = -(r0 * (2.0 * q0) + r1 * (2.0 * q1)) * beta
    return out


def numpy_add_scaled_prior_grad(beta, eta, c0, c1, q0, q1, grad):
    """grad += eta * grad_log_prior(beta), in place."""
    r0, r1 = numpy_responsibilities(beta, c0, c1, q0, q1)
    grad += eta * (-(r0 * (2.0 * q0) + r1 * (2.0 * q1)) * beta)
    return grad


def numpy_sghmc_update(params, momentum, grad, noise, mask, lr, alpha, noise_scale):
    momentum *= 1.0 - alpha
    momentum += lr * grad + noise_scale * noise
    momentum[~mask] = 0.0
    params += momentum
    params[~mask] = 0.0


def numpy_sgld_update(params, grad, noise, mask, lr, noise_scale):
    params += lr * grad + noise_scale * noise
    params[~mask] = 0.0


def numpy_sgd_update(params, momentum, grad, mask, lr, mu):
    momentum *= mu
    momentum += lr * grad
    momentum[~mask] = 0.0
    params += momentum
    params[~mask] = 0.0


def numpy_adam_update(params, m, v, grad, mask, lr, b1, b2, eps, bc1, bc2):
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * (grad * grad)
    params += lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    m[~mask] = 0.0
    v[~mask] = 0.0
    params[~mask] = 0.0


# ---------------------------------------------------------------- numba twins

if HAVE_NUMBA:
    _jit = numba.njit(cache=False, nogil=True)

    @_jit
    def numba_log_prior(beta, c0, c1, q0, q1):
        total = 0.0
        for i in range(beta.shape[0]):
            b2 = beta[i] * beta[i]
            a0 = c0 - q0 * b2
            a1 = c1 - q1 * b2
            hi = max(a0, a1)
            total += hi + math.log1p(math.exp(-abs(a0 - a1)))
        return total

    @_jit
    def numba_responsibilities(beta, c0, c1, q0, q1):
        n = beta.shape[0]
        r0 = np.empty(n)
        r1 = np.empty(n)
        for i in range(n):
            b2 = beta[i] * beta[i]
            d = (c0 - q0 * b2) - (c1 - q1 * b2)
            e = math.exp(-abs(d))
            big = 1.0 / (1.0 + e)
            small = e / (1.0 + e)
            if d >= 0.0:
                r0[i] = big
                r1[i] = small
            else:
                r0[i] = small
                r1[i] = big
        return r0, r1

    @_jit
    def _prior_grad_elem(b, c0, c1, q0, q1):
        b2 = b * b
        d = (c0 - q0 * b2) - (c1 - q1 * b2)
        e = math.exp(-abs(d))
        big = 1.0 / (1.0 + e)
        small = e / (1.0 + e)
        if d >= 0.0:
            r0 = big
            r1 = small
        else:
            r0 = small
            r1 = big
        return -(r0 * (2.0 * q0) + r1 * (2.0 * q1)) * b

    @_jit
    def numba_grad_log_prior(beta, c0, c1, q0, q1, out):
        for i in range(beta.shape[0]):
            out[i] = _prior_grad_elem(beta[i], c0, c1, q0, q1)
        return out

    @_jit
    def numba_add_scaled_prior_grad(beta, eta, c0, c1, q0, q1, grad):
        for i in range(beta.shape[0]):
            grad[i] += eta * _prior_grad_elem(beta[i], c0, c1, q0, q1)
        return grad

    @_jit
    def numba_sghmc_update(params, momentum, grad, noise, mask, lr, alpha, noise_scale):
        keep = 1.0 - alpha
        for i in range(params.shape[0]):
            if mask[i]:
                momentum[i] = momentum[i] * keep + (lr * grad[i] + noise_scale * noise[i])
                params[i] = params[i] + momentum[i]
            else:
                momentum[i] = 0.0
                params[i] = 0.0

    @_jit
    def numba_sgld_update(params, grad, noise, mask, lr, noise_scale):
        for i in range(params.shape[0]):
            if mask[i]:
                params[i] = params[i] + (lr * grad[i] + noise_scale * noise[i])
            else:
                params[i] = 0.0

    @_jit
    def numba_sgd_update(params, momentum, grad, mask, lr, mu):
        for i in range(params.shape[0]):
            if mask[i]:
                momentum[i] = momentum[i] * mu + lr * grad[i]
                params[i] = params[i] + momentum[i]
            else:
                momentum[i] = 0.0
                params[i] = 0.0

    @_jit
    def numba_adam_update(params, m, v, grad, mask, lr, b1, b2, eps, bc1, bc2):
        for i in range(params.shape[0]):
            if mask[i]:
                g = grad[i]
                m[i] = m[i] * b1 + (1.0 - b1) * g
                v[i] = v[i] * b2 + (1.0 - b2) * (g * g)
                params[i] = params[i] + lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)
            else:
                m[i] = 0.0
                v[i] = 0.0
                params[i] = 0.0


_NAMES = (
    "log_prior",
    "responsibilities",
    "grad_log_prior",
    "add_scaled_prior_grad",
    "sghmc_update",
    "sgld_update",
    "sgd_update",
    "adam_update",
)


def kernels(backend):
    """Mapping name -> implementation for ``backend`` in {"numba", "numpy"}."""
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return {name: globals()[f"{backend}_{name}"] for name in _NAMES}


globals().update(kernels(BACKEND))
