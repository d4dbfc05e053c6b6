"""Three-phase prior-annealing schedule.

* ``t < t1``: initial training, prior switched off (eta = 0).
* ``t1 <= t <= t2``: eta ramps linearly 0 -> 1 at the initial spike width.
* ``t2 <= t <= t3``: eta = 1, spike sd shrinks linearly to its final value.
* ``t > t3``: temperature cools as ``c / (t - t3)``, capped at the plateau.
"""
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class AnnealConfig:
    t1: int
    t2: int
    t3: int
    total_steps: int
    sigma0_init: float
    sigma0_end: float
    tau_const: float = 1.0
    cooling_c: float = None

    def __post_init__(self):
        if self.cooling_c is None:
            object.__setattr__(self, "cooling_c", self.tau_const)
        if not 0 <= self.t1 <= self.t2 <= self.t3:
            raise ConfigError(f"need 0 <= t1 <= t2 <= t3, got {self.t1}, {self.t2}, {self.t3}")
        if not self.total_steps > self.t3:
            raise ConfigError(f"total_steps ({self.total_steps}) must exceed t3 ({self.t3})")
        if not 0.0 < self.sigma0_end <= self.sigma0_init:
            raise ConfigError("need 0 < sigma0_end <= sigma0_init")
        if not (self.tau_const > 0.0 and self.cooling_c > 0.0):
            raise ConfigError("tau_const and cooling_c must be positive")


def eta_at(t, cfg):
    if t < cfg.t1:
        return 0.0
    if t >= cfg.t2:
        return 1.0
    return (t - cfg.t1) / (cfg.t2 - cfg.t1)


def sigma0_at(t, cfg):
    if t >= cfg.t3:
        return cfg.sigma0_end
    if t <= cfg.t2:
        return cfg.sigma0_init
    span = cfg.t3 - cfg.t2
    return ((cfg.t3 - t) * cfg.sigma0_init + (t - cfg.t2) * cfg.sigma0_end) / span


def tau_at(t, cfg):
    if t <= cfg.t3:
        return cfg.tau_const
    return min(cfg.tau_const, cfg.cooling_c / (t - cfg.t3))


def phase_at(t, cfg):
    if t < cfg.t1:
        return "initial"
    if t <= cfg.t3:
        return "anneal"
    return "cooling"
