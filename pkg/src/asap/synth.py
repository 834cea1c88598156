"""Synthetic attention stacks with controllable sink structure.

The planted-sink generator gives every row of every layer at least
``1/N + margin`` mass on the sink column (the sufficient condition for the
sink's cumulative column sum to grow monotonically while it stays below
1 + N*margin), distributes the rest of the row over the other columns with a
seeded Dirichlet, and attaches Gaussian features so the pooling paths are
exercisable end to end. The uniform generator is the matching negative
control: its accumulated column sums stay pinned at 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attnio import AttentionStack, build_stack
from .errors import ConfigError, InfeasibleMargin


@dataclass(frozen=True)
class SynthConfig:
    """n/l/h: shape; margin: sink-column floor above 1/n; sink_index: planted
    column (None = plain random rows); seed: RNG seed; noise: Dirichlet
    concentration for off-sink mass; sink_mass: (lo, hi) fraction of the
    remaining headroom added on top of the floor, drawn per row; near (0, 0)
    keeps the column sum just at its guaranteed-growth ceiling, the strong
    default makes the sink trigger detection quickly; feature_dim: token
    feature width."""

    n: int
    l: int
    h: int = 1
    margin: float = 0.0
    sink_index: int | None = None
    seed: int = 0
    noise: float = 1.0
    sink_mass: tuple[float, float] = (0.85, 0.98)
    feature_dim: int = 8

    def __post_init__(self):
        if self.n < 2 or self.l < 1 or self.h < 1:
            raise ConfigError(f"bad shape n={self.n} l={self.l} h={self.h}")
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.sink_index is not None and not 1 <= self.sink_index < self.n:
            raise ConfigError(f"sink_index {self.sink_index} outside [1, {self.n})")
        if self.margin > 0 and self.sink_index is None:
            raise ConfigError("margin > 0 requires a planted sink_index")
        if 1.0 / self.n + self.margin > 1.0:
            raise InfeasibleMargin(
                f"1/n + margin = {1.0 / self.n + self.margin:.4g} exceeds 1"
            )
        if self.noise <= 0:
            raise ConfigError(f"noise must be > 0, got {self.noise}")
        lo, hi = self.sink_mass
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"sink_mass must satisfy 0 <= lo <= hi <= 1, got {self.sink_mass}")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")


def _features(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    return rng.standard_normal((cfg.l, cfg.n, cfg.feature_dim))


def gen_sink_stack(cfg: SynthConfig) -> AttentionStack:
    """Stack whose every row puts >= 1/n + margin on the planted sink column.

    With sink_index unset (and margin 0) this degrades to a plain random
    row-stochastic stack, the negative control. Same seed, same bits.
    """
    rng = np.random.default_rng(cfg.seed)
    attn = np.empty((cfg.l, cfg.h, cfg.n, cfg.n), dtype=np.float64)
    alpha_off = np.full(cfg.n - 1, cfg.noise)
    alpha_all = np.full(cfg.n, cfg.noise)
    other = [j for j in range(cfg.n) if j != cfg.sink_index]
    lo, hi = cfg.sink_mass

    for layer in range(cfg.l):
        for head in range(cfg.h):
            if cfg.sink_index is None:
                attn[layer, head] = rng.dirichlet(alpha_all, size=cfg.n)
                continue
            floor = 1.0 / cfg.n + cfg.margin
            v = floor + rng.uniform(lo, hi, size=cfg.n) * (1.0 - floor)
            off = rng.dirichlet(alpha_off, size=cfg.n) * (1.0 - v)[:, None]
            rows = np.empty((cfg.n, cfg.n))
            rows[:, other] = off
            rows[:, cfg.sink_index] = v
            attn[layer, head] = rows

    meta = {
        "generator": "sink" if cfg.sink_index is not None else "random",
        "seed": str(cfg.seed),
        "margin": str(cfg.margin),
        "sink_index": "" if cfg.sink_index is None else str(cfg.sink_index),
    }
    return build_stack(attn, _features(rng, cfg), meta)


def gen_uniform_stack(cfg: SynthConfig) -> AttentionStack:
    """Every attention row exactly 1/n: accumulation never concentrates mass."""
    rng = np.random.default_rng(cfg.seed)
    attn = np.full((cfg.l, cfg.h, cfg.n, cfg.n), 1.0 / cfg.n)
    meta = {"generator": "uniform", "seed": str(cfg.seed)}
    return build_stack(attn, _features(rng, cfg), meta)
