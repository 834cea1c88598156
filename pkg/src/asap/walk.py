"""Lazy random walk over attention layers and the cumulative transition product.

Each layer's head-averaged attention matrix A is blended with the identity,
``A~ = alpha * A + (1 - alpha) * I``, so the walk models residual connections
as self-transition probability and stays aperiodic (strictly positive
diagonal). The cumulative matrix after t layers is the ordered product
``P = A~_1 @ A~_2 @ ... @ A~_t``; row i is the distribution over destinations
that token i's information has reached.

Accumulation watches ``max_{j>=1} sum_i P[i, j]`` (column mass over non-CLS
columns) and by default stops at the first layer where it exceeds the trigger
threshold tau: the layer at which an attention sink has emerged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attnio import AttentionStack, TransitionMatrix, head_average
from .errors import AlphaOutOfRange, ConfigError, EmptyStack, HistoryNotRetained


@dataclass(frozen=True)
class WalkConfig:
    """Accumulation parameters.

    alpha: residual blend in (0, 1); tau: sink trigger threshold (> 1);
    max_layers: optional cap on accumulation depth; early_stop: stop at the
    trigger layer (disable for full-depth diagnostics); keep_history: retain
    every intermediate cumulative matrix (memory O(L * N^2)).
    """

    alpha: float = 0.5
    tau: float = 7.0
    max_layers: int | None = None
    early_stop: bool = True
    keep_history: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.tau > 1.0:
            raise ConfigError(f"tau must exceed 1, got {self.tau}")
        if self.max_layers is not None and self.max_layers < 1:
            raise ConfigError(f"max_layers must be >= 1, got {self.max_layers}")


@dataclass(frozen=True)
class WalkState:
    """Result of accumulating a stack.

    cumulative: P at the final consumed depth; depth: layers consumed (1-based
    count); column_sum_history: per-layer max column sum over columns j >= 1;
    trigger_layer: first layer whose maximum exceeded tau, or None;
    matrices: per-layer cumulative matrices when history retention was on.
    """

    cumulative: TransitionMatrix
    depth: int
    column_sum_history: np.ndarray
    trigger_layer: int | None
    matrices: tuple[TransitionMatrix, ...] | None = None

    def matrix_at(self, t: int) -> TransitionMatrix:
        """Cumulative matrix after t layers (t in 1..depth)."""
        if not 1 <= t <= self.depth:
            raise ConfigError(f"t={t} outside accumulated depth 1..{self.depth}")
        if t == self.depth:
            return self.cumulative
        if self.matrices is None:
            raise HistoryNotRetained(
                "walk ran in streaming mode; rerun with keep_history to inspect "
                f"intermediate depth {t}"
            )
        return self.matrices[t - 1]


def lazify(a: TransitionMatrix, alpha: float) -> TransitionMatrix:
    """Blend a row-stochastic matrix with the identity: alpha*A + (1-alpha)*I."""
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    out = alpha * a.data
    idx = np.arange(a.n)
    out[idx, idx] += 1.0 - alpha
    return TransitionMatrix(out)


def _max_patch_column_sum(p: TransitionMatrix) -> float:
    return float(p.data[:, 1:].sum(axis=0).max())


def accumulate(stack: AttentionStack, cfg: WalkConfig) -> WalkState:
    """Run the layer-by-layer cumulative product with sink-trigger bookkeeping.

    The product is strictly left-to-right (P <- P @ A~_t). After each layer the
    max non-CLS column sum is recorded; with early stopping the walk halts at
    the first layer where it exceeds cfg.tau. Without a trigger, accumulation
    runs to min(L, max_layers) and the state carries trigger_layer=None.
    """
    limit = stack.layers if cfg.max_layers is None else min(stack.layers, cfg.max_layers)
    if limit < 1:
        raise EmptyStack("no layers to accumulate")
    retain = cfg.keep_history or not cfg.early_stop

    cumulative: TransitionMatrix | None = None
    history: list[float] = []
    matrices: list[TransitionMatrix] = []
    trigger: int | None = None
    depth = 0

    for t in range(1, limit + 1):
        step = lazify(head_average(stack, t - 1), cfg.alpha)
        cumulative = step if cumulative is None else TransitionMatrix(
            cumulative.data @ step.data
        )
        depth = t
        history.append(_max_patch_column_sum(cumulative))
        if retain:
            matrices.append(cumulative)
        if trigger is None and history[-1] > cfg.tau:
            trigger = t
            if cfg.early_stop:
                break

    return WalkState(
        cumulative=cumulative,
        depth=depth,
        column_sum_history=np.asarray(history),
        trigger_layer=trigger,
        matrices=tuple(matrices) if retain else None,
    )
