"""Second-stage plug-in pruning for extreme budgets.

Runs right after background pooling, at the same emergence layer, reusing the
already-computed cumulative matrix: first a CLS-mass top-k gate (only when the
survivor count exceeds 3T), then iterative bipartite redundancy removal. Each
iteration splits the survivor set (ascending index order) into even- and
odd-positioned groups, scores every odd-group token by its closest match in
the even group under the diffusion distance, and drops the most redundant
batch until exactly T remain.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .attnio import AttentionStack, TransitionMatrix
from .errors import ConfigError, TargetExceedsInput
from .geometry import pairwise_row_distances
from .reduce import (
    PoolResult,
    ReduceConfig,
    ReducedTokenSet,
    assemble,
    core_geometry,
    transition_weight_pool,
)
from .walk import WalkConfig


@dataclass(frozen=True)
class HybridConfig:
    """target: final survivor budget T; removal_batch: tokens dropped per
    iteration (default max(1, |S|//8)); metric: 'diffusion' or 'cosine'
    (ablation); topk_multiplier: the 3T gate width."""

    target: int
    removal_batch: int | None = None
    topk_multiplier: int = 3
    metric: str = "diffusion"

    def __post_init__(self):
        if self.target < 1:
            raise ConfigError(f"target must be >= 1, got {self.target}")
        if self.removal_batch is not None and self.removal_batch < 1:
            raise ConfigError(f"removal_batch must be >= 1, got {self.removal_batch}")
        if self.topk_multiplier < 1:
            raise ConfigError(f"topk_multiplier must be >= 1, got {self.topk_multiplier}")
        if self.metric not in ("diffusion", "cosine"):
            raise ConfigError(f"metric must be 'diffusion' or 'cosine', got {self.metric!r}")


def cls_topk_filter(survivors, matrix: TransitionMatrix, limit: int):
    """Keep the `limit` survivors with the largest CLS-row mass (ties: lower index)."""
    survivors = sorted(int(i) for i in survivors)
    if len(survivors) <= limit:
        return survivors
    masses = matrix.data[0, survivors]
    order = sorted(range(len(survivors)), key=lambda j: (-masses[j], survivors[j]))
    return sorted(survivors[j] for j in order[:limit])


def _group_distances(p: np.ndarray, ga, gb, metric: str) -> np.ndarray:
    a = p[np.asarray(ga)]
    b = p[np.asarray(gb)]
    if metric == "cosine":
        na = np.linalg.norm(a, axis=1, keepdims=True)
        nb = np.linalg.norm(b, axis=1, keepdims=True)
        return 1.0 - (a @ b.T) / (na * nb.T)
    return pairwise_row_distances(a, b)


def bipartite_prune(survivors, matrix: TransitionMatrix, cfg: HybridConfig):
    """Iteratively drop the odd-group tokens most redundant with the even group.

    Groups are recomputed each iteration from the ascending-index ordering of
    the current survivor set. Removal candidates are ranked by score then by
    index, and each batch is capped by the remaining quota, so the output size
    is exactly cfg.target. Returns (survivors, removal_log).
    """
    s = sorted(int(i) for i in survivors)
    if len(s) < cfg.target:
        raise TargetExceedsInput(f"{len(s)} survivors < target {cfg.target}")
    r = cfg.removal_batch if cfg.removal_batch is not None else max(1, len(s) // 8)
    n_remove = len(s) - cfg.target
    log: list[list[int]] = []
    while n_remove > 0:
        ga = s[0::2]
        gb = s[1::2]
        scores = _group_distances(matrix.data, ga, gb, cfg.metric).min(axis=0)
        r_prime = min(r, n_remove, len(gb))
        order = np.argsort(scores, kind="stable")[:r_prime]
        removed = {gb[int(j)] for j in order}
        log.append(sorted(removed))
        s = [i for i in s if i not in removed]
        n_remove -= r_prime
    return s, log


@dataclass(frozen=True)
class HybridResult:
    reduced: ReducedTokenSet
    pool: PoolResult
    prefilter_size: int
    removal_log: tuple
    timings_ms: dict


def run_hybrid(
    stack: AttentionStack,
    walk_cfg: WalkConfig,
    reduce_cfg: ReduceConfig,
    hybrid_cfg: HybridConfig,
) -> HybridResult:
    """Full two-stage pipeline producing at most T survivors plus CLS and the
    pooled background token (the pooled token rides along outside the budget;
    the report states both counts)."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    state, report, anchor, p_star, field_, assignment = core_geometry(
        stack, walk_cfg, reduce_cfg
    )
    timings["core_geometry"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    feats = None
    cls_feature = None
    pooled = None
    bg = assignment.background()
    if reduce_cfg.pool_background:
        layer = report.t_star - 1 if reduce_cfg.feature_layer is None else reduce_cfg.feature_layer
        feats = stack.features(layer)
        cls_feature = feats[0]
        pooled, _ = transition_weight_pool(assignment, field_, feats)
    elif stack.features32 is not None:
        layer = report.t_star - 1 if reduce_cfg.feature_layer is None else reduce_cfg.feature_layer
        feats = stack.features(layer)
        cls_feature = feats[0]
    timings["pool"] = time.perf_counter() - t0

    survivors: list[int] = []
    for c in range(reduce_cfg.p, reduce_cfg.k):
        survivors.extend(assignment.members[c])
    survivors = sorted(survivors)

    t0 = time.perf_counter()
    gate = hybrid_cfg.topk_multiplier * hybrid_cfg.target
    survivors = cls_topk_filter(survivors, p_star, gate)
    prefilter_size = len(survivors)
    timings["cls_topk"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    log: tuple = ()
    if len(survivors) > hybrid_cfg.target:
        survivors, removal_log = bipartite_prune(survivors, p_star, hybrid_cfg)
        log = tuple(tuple(batch) for batch in removal_log)
    timings["bipartite"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pairs = [(i, None if feats is None else feats[i]) for i in survivors]
    reduced = assemble(
        cls_feature,
        pairs,
        pooled,
        pooled_members=bg if reduce_cfg.pool_background else (),
    )
    timings["assemble"] = time.perf_counter() - t0

    pool_result = PoolResult(
        reduced=reduced,
        sink=report,
        anchor_index=anchor,
        state=state,
        field=field_,
        assignment=assignment,
        survivors=tuple(survivors),
        warnings=(),
        timings_ms={},
    )
    return HybridResult(
        reduced=reduced,
        pool=pool_result,
        prefilter_size=prefilter_size,
        removal_log=log,
        timings_ms={k: v * 1e3 for k, v in timings.items()},
    )
