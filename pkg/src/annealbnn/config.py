"""Run configuration: typed sections, named presets, YAML loading, overrides.

A config file is YAML with the top-level sections below; any key may be
omitted (defaults apply) and ``preset: <name>`` expands a named preset first.
Dotted overrides (``sampler.lr=0.01``) are applied last and win over both.
Unknown keys are rejected with the closest valid key as a hint.
"""
import copy
import dataclasses
import difflib
import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .schedule import AnnealConfig


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-3``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _yaml_load(text):
    return yaml.load(text, Loader=_Loader)


@dataclass(frozen=True)
class NetworkConfig:
    layer_sizes: tuple = (200, 64, 16, 1)
    activation: str = "tanh"
    init_scale: float = 1.0


@dataclass(frozen=True)
class PriorConfig:
    lam: float = 1e-7
    sigma1: float = 0.1


@dataclass(frozen=True)
class SamplerConfig:
    kernel: str = "sghmc"  # sghmc | sgld
    optimizer: str = "sgd"  # sgd | adam, used for initial training
    # step size per observation: kernels receive lr / n because they ascend
    # the summed (not averaged) log-likelihood
    lr: float = 1e-3
    alpha: float = 0.1  # SGHMC friction (momentum = 1 - alpha)
    momentum: float = 0.9  # SGD momentum during initial training
    adam_lr: float = 1e-3  # Adam is scale free, so this is in parameter units
    batch_size: int = 500
    noise_var: float = 1.0
    clip_norm: float = 10.0  # on grad / n; null disables
    reset_momentum: bool = False  # zero momentum at t1, t2, t3
    cool_floor: float = 1e-4  # switch to the plain optimiser once tau <= cool_floor * tau_const


@dataclass(frozen=True)
class RefineConfig:
    max_steps: int = 40000
    grad_tol: float = 1e-8


@dataclass(frozen=True)
class BayesConfig:
    collect_every: int = 100
    keep_last: int = 75


@dataclass(frozen=True)
class SynthSpec:
    n_train: int = 3000
    n_test: int = 1000
    p: int = 200
    noise_sd: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    replicates: int = 5
    coverage_replicates: int = 20
    workers: int = 1


@dataclass(frozen=True)
class OutputConfig:
    progress_every: int = 1000
    checkpoint_every: int = 0  # 0 disables periodic sampler checkpoints


@dataclass(frozen=True)
class RunConfig:
    mode: str = "frequentist"  # frequentist | bayesian
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    anneal: AnnealConfig = field(
        default_factory=lambda: AnnealConfig(
            t1=2000, t2=8000, t3=24000, total_steps=32000,
            sigma0_init=math.sqrt(5e-5), sigma0_end=math.sqrt(1e-6),
            tau_const=0.1, cooling_c=0.1,
        )
    )
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    bayes: BayesConfig = field(default_factory=BayesConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        validate_run(self)


@dataclass(frozen=True)
class Config:
    run: RunConfig = field(default_factory=RunConfig)
    data: SynthSpec = field(default_factory=SynthSpec)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)


_RUN_SECTIONS = {
    "network": NetworkConfig,
    "prior": PriorConfig,
    "anneal": AnnealConfig,
    "sampler": SamplerConfig,
    "refine": RefineConfig,
    "bayes": BayesConfig,
    "output": OutputConfig,
}
_TOP_SECTIONS = {"data": SynthSpec, "experiment": ExperimentConfig}
_TOP_SCALARS = ("mode", "seed")

PRESETS = {
    # reference settings of the 2000-dim simulated example (width 10000)
    "paper-sim": {
        "network": {"layer_sizes": [2000, 10000, 100, 10, 1], "activation": "tanh"},
        "prior": {"lam": 1e-7, "sigma1": math.sqrt(1e-2)},
        "anneal": {
            "t1": 5000, "t2": 20000, "t3": 60000, "total_steps": 80000,
            "sigma0_init": math.sqrt(5e-5), "sigma0_end": math.sqrt(1e-6),
            "tau_const": 0.1, "cooling_c": 0.1,
        },
        "sampler": {"kernel": "sghmc", "lr": 1e-3, "alpha": 0.1, "momentum": 0.9, "batch_size": 500},
        "refine": {"max_steps": 40000},
        "data": {"n_train": 10000, "n_test": 1000, "p": 2000, "noise_sd": 1.0},
        "experiment": {"replicates": 10},
    },
    # laptop scale: smaller problem, shorter phases and a wider initial spike (sigma0_init)
    "sim-small": {
        "network": {"layer_sizes": [200, 64, 16, 1], "activation": "tanh"},
        "prior": {"lam": 1e-7, "sigma1": math.sqrt(1e-2)},
        "anneal": {
            "t1": 2000, "t2": 8000, "t3": 24000, "total_steps": 32000,
            "sigma0_init": 0.07, "sigma0_end": math.sqrt(1e-6),
            "tau_const": 0.1, "cooling_c": 0.1,
        },
        "sampler": {"kernel": "sghmc", "lr": 1e-3, "alpha": 0.1, "momentum": 0.9, "batch_size": 500},
        "refine": {"max_steps": 40000},
        "data": {"n_train": 3000, "n_test": 1000, "p": 200, "noise_sd": 1.0},
        "experiment": {"replicates": 5},
    },
}


def validate_run(cfg):
    if cfg.mode not in ("frequentist", "bayesian"):
        raise ConfigError(f"mode: expected 'frequentist' or 'bayesian', got {cfg.mode!r}")
    net = cfg.network
    if len(net.layer_sizes) < 2 or net.layer_sizes[-1] != 1 or min(net.layer_sizes) < 1:
        raise ConfigError(f"network.layer_sizes: need positive widths ending in 1, got {list(net.layer_sizes)}")
    if net.activation not in ("tanh", "relu", "identity"):
        raise ConfigError(f"network.activation: unknown activation {net.activation!r}")
    if not 0.0 < cfg.prior.lam < 1.0:
        raise ConfigError("prior.lam: must lie in (0, 1)")
    if not cfg.prior.sigma1 > 0.0:
        raise ConfigError("prior.sigma1: must be positive")
    if cfg.anneal.sigma0_init > cfg.prior.sigma1:
        raise ConfigError("anneal.sigma0_init: must not exceed prior.sigma1")
    s = cfg.sampler
    if s.kernel not in ("sghmc", "sgld"):
        raise ConfigError(f"sampler.kernel: expected 'sghmc' or 'sgld', got {s.kernel!r}")
    if s.optimizer not in ("sgd", "adam"):
        raise ConfigError(f"sampler.optimizer: expected 'sgd' or 'adam', got {s.optimizer!r}")
    if not (s.lr > 0.0 and s.adam_lr > 0.0):
        raise ConfigError("sampler.lr: learning rates must be positive")
    if not 0.0 < s.alpha <= 1.0:
        raise ConfigError("sampler.alpha: must lie in (0, 1]")
    if not 0.0 <= s.momentum < 1.0:
        raise ConfigError("sampler.momentum: must lie in [0, 1)")
    if s.batch_size is not None and s.batch_size < 1:
        raise ConfigError("sampler.batch_size: must be >= 1")
    if not s.noise_var > 0.0:
        raise ConfigError("sampler.noise_var: must be positive")
    if s.clip_norm is not None and not s.clip_norm > 0.0:
        raise ConfigError("sampler.clip_norm: must be positive or null")
    if not 0.0 < s.cool_floor < 1.0:
        raise ConfigError("sampler.cool_floor: must lie in (0, 1)")
    if cfg.refine.max_steps < 0 or not cfg.refine.grad_tol > 0.0:
        raise ConfigError("refine: need max_steps >= 0 and grad_tol > 0")
    if cfg.bayes.keep_last < 1 or cfg.bayes.collect_every < 1:
        raise ConfigError("bayes: keep_last and collect_every must be >= 1")
    if cfg.output.progress_every < 1 or cfg.output.checkpoint_every < 0:
        raise ConfigError("output: progress_every >= 1 and checkpoint_every >= 0 required")


def _validate_synth(spec):
    if spec.p < 5:
        raise ConfigError("data.p: must be >= 5 (the signal uses x1..x5)")
    if spec.n_train < 1 or spec.n_test < 1:
        raise ConfigError("data: n_train and n_test must be positive")
    if not spec.noise_sd > 0.0:
        raise ConfigError("data.noise_sd: must be positive")


def _all_keys():
    keys = ["preset", *_TOP_SCALARS]
    for sec, cls in {**_RUN_SECTIONS, **_TOP_SECTIONS}.items():
        keys.append(sec)
        keys.extend(f"{sec}.{f.name}" for f in dataclasses.fields(cls))
    return keys


def _unknown(key):
    near = difflib.get_close_matches(key, _all_keys(), n=1, cutoff=0.5)
    hint = f"; did you mean {near[0]!r}?" if near else ""
    return ConfigError(f"unknown config key {key!r}{hint}")


def _merge(base, extra, prefix=""):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v, f"{prefix}{k}.")
        else:
            base[k] = v
    return base


def _check_keys(raw):
    for k, v in raw.items():
        if k in _TOP_SCALARS or k == "preset":
            continue
        cls = _RUN_SECTIONS.get(k) or _TOP_SECTIONS.get(k)
        if cls is None:
            raise _unknown(k)
        if not isinstance(v, dict):
            raise ConfigError(f"section {k!r} must be a mapping")
        names = {f.name for f in dataclasses.fields(cls)}
        for sub in v:
            if sub not in names:
                raise _unknown(f"{k}.{sub}")


def _build(cls, values, section):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            v = values[f.name]
            if f.name == "layer_sizes":
                v = tuple(int(x) for x in v)
            kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _expand(raw):
    raw = copy.deepcopy(raw or {})
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    _check_keys(raw)
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; available: {sorted(PRESETS)}")
        raw = _merge(copy.deepcopy(PRESETS[preset]), raw)
    return raw


def _run_from_expanded(raw):
    defaults = RunConfig()
    anneal_defaults = dataclasses.asdict(defaults.anneal)
    sections = {}
    for name, cls in _RUN_SECTIONS.items():
        vals = raw.get(name, {})
        if cls is AnnealConfig:
            vals = {**anneal_defaults, **vals}
            if "cooling_c" not in raw.get(name, {}) and "tau_const" in raw.get(name, {}):
                vals["cooling_c"] = vals["tau_const"]
        sections[name] = _build(cls, vals, name)
    run_kwargs = {k: raw[k] for k in _TOP_SCALARS if k in raw}
    try:
        return RunConfig(**run_kwargs, **sections)
    except (TypeError, ValueError) as exc:
        raise exc if isinstance(exc, ConfigError) else ConfigError(str(exc)) from None


def run_config_from_dict(raw):
    """Validated :class:`RunConfig` alone; data/experiment sections are ignored.

    Useful when the dataset does not come from the synthetic generator.
    """
    return _run_from_expanded(_expand(raw))


def from_dict(raw):
    """Validated :class:`Config` from a nested mapping (presets expanded)."""
    raw = _expand(raw)
    run = _run_from_expanded(raw)
    data = _build(SynthSpec, raw.get("data", {}), "data")
    _validate_synth(data)
    experiment = _build(ExperimentConfig, raw.get("experiment", {}), "experiment")
    if min(experiment.replicates, experiment.coverage_replicates, experiment.workers) < 1:
        raise ConfigError("experiment: replicates, coverage_replicates and workers must be >= 1")
    if run.network.layer_sizes[0] != data.p:
        raise ConfigError(
            f"network.layer_sizes[0] ({run.network.layer_sizes[0]}) must equal data.p ({data.p})"
        )
    return Config(run=run, data=data, experiment=experiment)


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = text.split("=", 1)
    key = key.strip()
    try:
        parsed = _yaml_load(value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {value!r}: {exc}") from None
    node = {}
    cur = node
    parts = key.split(".")
    for part in parts[:-1]:
        cur[part] = {}
        cur = cur[part]
    cur[parts[-1]] = parsed
    return node


def _read_yaml(text, source):
    try:
        doc = _yaml_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{source}: parse error{where}: {exc.problem}") from None
    return doc or {}


def load_config(path=None, overrides=(), text=None):
    """Load, expand and validate a config; overrides are ``key=value`` strings."""
    if text is None and path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = _read_yaml(text, path or "<config>") if text else {}
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    for ov in overrides:
        node = parse_override(ov)
        _check_keys(node)
        raw = _merge(raw, node)
    return from_dict(raw)


def to_dict(cfg):
    run = dataclasses.asdict(cfg.run)
    out = {"mode": run.pop("mode"), "seed": run.pop("seed")}
    for k, v in run.items():
        if "layer_sizes" in v:
            v["layer_sizes"] = list(v["layer_sizes"])
        out[k] = v
    out["data"] = dataclasses.asdict(cfg.data)
    out["experiment"] = dataclasses.asdict(cfg.experiment)
    return out


def dump_yaml(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def config_hash(cfg):
    doc = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()[:16]
