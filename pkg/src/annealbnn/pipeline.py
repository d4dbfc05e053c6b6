"""End-to-end prior annealing: frequentist (sparse MLE) and Bayesian (samples).

Both variants share one step loop driven by the schedule:

    t < t1          initial training with the configured optimiser (eta = 0)
    t1 <= t <= t3   tempered SG-MCMC with eta(t), sigma0(t)
    t > t3          frequentist: cool tau(t) until tau <= cool_floor * tau_const,
                    then plain momentum ascent for the remaining steps;
                    bayesian: keep tau = 1 and collect snapshots
"""
import collections
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import samplers
from .errors import DivergenceError, EmptyStructureError
from .network import (
    Dataset,
    Network,
    decode_array,
    encode_array,
    grad_loglik,
    layer_slices,
    loglik,
    predict,
)
from .prior import PriorParams, active_count, sparsify, threshold
from .schedule import eta_at, phase_at, sigma0_at, tau_at

log = logging.getLogger(__name__)


@dataclass
class SparseModel:
    network: Network
    selected: tuple
    summary: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.network.n_active


@dataclass
class PosteriorSamples:
    layer_sizes: tuple
    activation: str
    params: list
    steps: list

    def __len__(self):
        return len(self.params)

    def networks(self):
        for p in self.params:
            yield Network(self.layer_sizes, self.activation, p)


def select_variables(mask, layer_sizes):
    """Input indices (0-based) with at least one active first-layer weight."""
    p, width = layer_sizes[0], layer_sizes[1]
    first = np.asarray(mask, dtype=bool)[: p * width].reshape(width, p)
    return tuple(int(j) for j in np.flatnonzero(first.any(axis=0)))


# ---------------------------------------------------------------- refinement


def compact(net, data):
    """Drop input columns with no active weight.

    Returns ``(small_net, small_data, index)`` where ``index[k]`` is the
    position of the small network's k-th parameter in ``net.params``.
    """
    cols = np.array(select_variables(net.mask, net.layer_sizes), dtype=np.int64)
    if cols.size == 0:
        cols = np.array([0], dtype=np.int64)
    sizes = (len(cols),) + net.layer_sizes[1:]
    pieces = []
    full = layer_slices(net.layer_sizes)
    width, p = net.layer_sizes[1], net.layer_sizes[0]
    rows = np.arange(width)[:, None] * p + cols[None, :]
    pieces.append(rows.ravel())
    pieces.append(np.arange(full[0][1].start, full[0][1].stop))
    for ws, bs in full[1:]:
        pieces.append(np.arange(ws.start, ws.stop))
        pieces.append(np.arange(bs.start, bs.stop))
    index = np.concatenate(pieces)
    small = Network(sizes, net.activation, net.params[index], net.mask[index])
    return small, Dataset(data.inputs[:, cols], data.targets), index


def refine(net, data, max_steps=40000, grad_tol=1e-8, noise_var=1.0, history=None):
    """Maximise the likelihood over the active coordinates (L-BFGS, full batch).

    Stops when the max-abs gradient of ``l_n`` drops to ``grad_tol`` or after
    ``max_steps`` iterations.  Returns ``(network, info)``; ``info["converged"]``
    is False when the budget ran out first.  ``history``, if a list, receives
    ``l_n`` after every accepted iteration.
    """
    if net.n_active == 0:
        raise EmptyStructureError("refinement needs at least one active parameter")
    small, sdata, index = compact(net, data)
    active = np.flatnonzero(small.mask)
    n = sdata.n
    work = small.copy()

    def objective(theta):
        work.params[active] = theta
        val = -loglik(work, sdata, noise_var) / n
        g = -grad_loglik(work, None, sdata, noise_var)[active] / n
        return val, g

    theta0 = small.params[active].copy()
    _, g0 = objective(theta0)
    if np.max(np.abs(g0)) <= grad_tol or max_steps == 0:
        info = {"steps": 0, "converged": bool(np.max(np.abs(g0)) <= grad_tol), "grad_norm": float(np.max(np.abs(g0)))}
        return net.copy(), info

    def callback(theta):
        if history is not None:
            work.params[active] = theta
            history.append(loglik(work, sdata, noise_var) / n)

    if history is not None:
        history.append(-objective(theta0)[0])
    res = optimize.minimize(
        objective, theta0, jac=True, method="L-BFGS-B", callback=callback,
        options={"maxiter": int(max_steps), "gtol": grad_tol, "ftol": 0.0, "maxcor": 20},
    )
    out = net.copy()
    full_params = out.params
    small.params[active] = res.x
    full_params[index] = small.params
    out = Network(net.layer_sizes, net.activation, full_params, net.mask)
    gmax = float(np.max(np.abs(res.jac)))
    return out, {"steps": int(res.nit), "converged": gmax <= grad_tol, "grad_norm": gmax, "message": str(res.message)}


# ---------------------------------------------------------------- main loop


def _initial_state(cfg, data, resume=None):
    seq = np.random.SeedSequence(cfg.seed)
    init_seq, noise_seq, batch_seq = seq.spawn(3)
    net = Network.init(cfg.network.layer_sizes, cfg.network.activation, np.random.default_rng(init_seq),
                       scale=cfg.network.init_scale)
    state = samplers.SamplerState(
        net.params, noise=samplers.GaussianNoise(noise_seq), batches=samplers.BatchStream(batch_seq)
    )
    if resume is not None:
        samplers.load_state(state, resume)
    return state


def _batch_size(cfg, data):
    m = cfg.sampler.batch_size
    return None if m is None or m >= data.n else m


class _Runner:
    def __init__(self, cfg, data, progress=None, checkpoint=None, hook=None):
        self.cfg = cfg
        self.data = data
        self.progress = progress
        self.checkpoint = checkpoint
        self.hook = hook
        s = cfg.sampler
        self.prior = PriorParams(cfg.prior.lam, cfg.anneal.sigma0_init, cfg.prior.sigma1)
        self.spec = samplers.TargetSpec(
            data, cfg.network.layer_sizes, cfg.network.activation, prior=self.prior,
            noise_var=s.noise_var, eta=0.0, tau=1.0, batch_size=_batch_size(cfg, data),
            clip_norm=s.clip_norm,
        )
        self.lr = s.lr / data.n
        # heavy-ball stability on the spike curvature 1 / sigma0_end^2
        mu = 1.0 - s.alpha if s.kernel == "sghmc" else 0.0
        stiff = self.lr / cfg.anneal.sigma0_end ** 2
        if stiff >= 2.0 * (1.0 + mu):
            log.warning(
                "lr / (n sigma0_end^2) = %.3g exceeds the stability bound %.3g; weights near zero "
                "will oscillate out of the spike", stiff, 2.0 * (1.0 + mu),
            )

    def _set_target(self, eta, sigma0, tau):
        self.spec.eta = eta
        self.spec.tau = tau
        if sigma0 != self.spec.prior.sigma0:
            self.spec.prior = self.prior.with_sigma0(sigma0)

    def _optimizer_step(self, state):
        s = self.cfg.sampler
        if s.optimizer == "adam":
            samplers.adam_step(state, self.spec, s.adam_lr)
        else:
            samplers.sgd_step(state, self.spec, self.lr, s.momentum)

    def _kernel_step(self, state):
        s = self.cfg.sampler
        if s.kernel == "sghmc":
            samplers.sghmc_step(state, self.spec, self.lr, s.alpha)
        else:
            samplers.sgld_step(state, self.spec, self.lr)

    def _tail_step(self, state):
        s = self.cfg.sampler
        mu = 1.0 - s.alpha if s.kernel == "sghmc" else 0.0
        samplers.sgd_step(state, self.spec, self.lr, mu)

    def step(self, state, bayesian):
        cfg, a = self.cfg, self.cfg.anneal
        t = state.step
        if cfg.sampler.reset_momentum and t in (a.t1, a.t2, a.t3) and t > 0:
            state.reset_momentum()
        eta, sigma0 = eta_at(t, a), sigma0_at(t, a)
        tau = 1.0 if bayesian else tau_at(t, a)
        phase = phase_at(t, a)
        self._set_target(eta, sigma0, tau)
        if self.hook is not None:
            self.hook(t, phase, eta, sigma0, tau)
        if phase == "initial":
            self._optimizer_step(state)
        elif self._is_tail(t, bayesian):
            phase = "tail"
            self._tail_step(state)
        else:
            self._kernel_step(state)
        return phase, eta, sigma0, tau

    def _is_tail(self, t, bayesian):
        a = self.cfg.anneal
        return (not bayesian and phase_at(t, a) == "cooling"
                and tau_at(t, a) <= self.cfg.sampler.cool_floor * a.tau_const)

    def phase_steps(self, bayesian=False):
        """Steps spent in each phase over the whole run (independent of resumption)."""
        counts = collections.Counter()
        for t in range(self.cfg.anneal.total_steps):
            counts["tail" if self._is_tail(t, bayesian) else phase_at(t, self.cfg.anneal)] += 1
        return dict(sorted(counts.items()))

    def record(self, state, phase, eta, sigma0, tau):
        net = Network(self.cfg.network.layer_sizes, self.cfg.network.activation, state.params)
        p = self.prior.with_sigma0(sigma0)
        rec = {
            "step": state.step,
            "phase": phase,
            "loglik": loglik(net, self.data, self.cfg.sampler.noise_var),
            "active": active_count(state.params, p),
            "eta": eta,
            "sigma0": sigma0,
            "tau": tau,
        }
        if self.progress is not None:
            self.progress(rec)
        return rec

    def run(self, state, bayesian=False, on_step=None):
        cfg = self.cfg
        total = cfg.anneal.total_steps
        every = cfg.output.progress_every
        ckpt_every = cfg.output.checkpoint_every
        last_good = (state.step, state.params.copy())
        info = None
        while state.step < total:
            try:
                info = self.step(state, bayesian)
            except DivergenceError as exc:
                exc.state = Network(cfg.network.layer_sizes, cfg.network.activation, last_good[1])
                exc.last_good_step = last_good[0]
                raise
            if on_step is not None:
                on_step(state)
            if state.step % every == 0 or state.step == total:
                self.record(state, *info)
                last_good = (state.step, state.params.copy())
            if ckpt_every and self.checkpoint is not None and state.step % ckpt_every == 0 and state.step < total:
                self.checkpoint(samplers.dump_state(state))
        return state


def run_frequentist(cfg, data, progress=None, checkpoint=None, resume=None, hook=None):
    """Anneal, sparsify at the final spike width, refine; returns a SparseModel.

    ``progress`` receives record dicts, ``checkpoint`` receives serialised
    sampler states every ``output.checkpoint_every`` steps, ``resume`` is such
    a serialised state, and ``hook(t, phase, eta, sigma0, tau)`` observes the
    schedule values handed to each step.
    """
    runner = _Runner(cfg, data, progress, checkpoint, hook)
    state = _initial_state(cfg, data, resume)
    runner.run(state)
    annealed = Network(cfg.network.layer_sizes, cfg.network.activation, state.params)
    p_end = PriorParams(cfg.prior.lam, cfg.anneal.sigma0_end, cfg.prior.sigma1)
    mask = sparsify(annealed, p_end)
    if not mask.any():
        raise EmptyStructureError(f"no weight exceeds the sparsification threshold {threshold(p_end):.3e}")
    sparse_net = Network(annealed.layer_sizes, annealed.activation, annealed.params, mask)
    noise_var = cfg.sampler.noise_var
    ll_sparse = loglik(sparse_net, data, noise_var)
    refined, rinfo = refine(sparse_net, data, cfg.refine.max_steps, cfg.refine.grad_tol, noise_var)
    ll_refined = loglik(refined, data, noise_var)
    summary = {
        "loglik_annealed": loglik(annealed, data, noise_var),
        "loglik_sparse": ll_sparse,
        "loglik": ll_refined,
        "msfe": float(np.mean((data.targets - predict(refined, data.inputs)) ** 2)),
        "r": refined.n_active,
        "threshold": threshold(p_end),
        "phase_steps": runner.phase_steps(),
        "refine_steps": rinfo["steps"],
        "refine_converged": rinfo["converged"],
        "refine_grad_norm": rinfo["grad_norm"],
        "width_ratio": refined.width_ratio(data.n),
    }
    progress and progress({"step": state.step, "phase": "refined", "loglik": ll_refined, "active": refined.n_active})
    return SparseModel(refined, select_variables(mask, cfg.network.layer_sizes), summary)


def run_bayesian(cfg, data, progress=None, checkpoint=None, resume=None, hook=None):
    """Annealed chain at tau = 1; keeps the last ``keep_last`` snapshots.

    Snapshots are taken after steps ``t > t3`` with ``total_steps - t`` a
    multiple of ``collect_every``, so the final state is always the last one.
    """
    total, t3 = cfg.anneal.total_steps, cfg.anneal.t3
    every, keep = cfg.bayes.collect_every, cfg.bayes.keep_last
    kept = collections.deque(maxlen=keep)
    if resume is not None:
        for step, params in resume.get("snapshots", []):
            kept.append((step, decode_array(params)))

    def checkpoint_with_snapshots(doc):
        doc["snapshots"] = [[s, encode_array(p)] for s, p in kept]
        checkpoint(doc)

    runner = _Runner(cfg, data, progress, checkpoint and checkpoint_with_snapshots, hook)
    state = _initial_state(cfg, data, resume)

    def collect(st):
        if st.step > t3 and (total - st.step) % every == 0:
            kept.append((st.step, st.params.copy()))

    runner.run(state, bayesian=True, on_step=collect)
    return PosteriorSamples(
        cfg.network.layer_sizes, cfg.network.activation,
        [p for _, p in kept], [s for s, _ in kept],
    )


def fit(cfg, data, **kwargs):
    if cfg.mode == "bayesian":
        return run_bayesian(cfg, data, **kwargs)
    return run_frequentist(cfg, data, **kwargs)
