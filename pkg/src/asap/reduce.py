"""Single-shot token reduction: radial clustering, pooling, sampling, assembly.

Patch tokens are binned into K level sets by normalized distance to the sink
(cluster id = clamp(floor(D_norm * K), 0, K-1)); the p sink-proximal clusters
form the background, which is compressed into one token whose pooling weights
are a softmax over the members' *raw* distances (farther from the sink means
stronger semantic identity, hence a larger weight). Foreground clusters survive
as-is, or are stride-sampled down to a token budget, sink-proximal clusters
first. The assembled output is [CLS] ++ survivors ++ [pooled background].
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attnio import AttentionStack, TransitionMatrix
from .errors import (
    BadClusterCounts,
    ConfigError,
    EmptyBackground,
    MissingFeatures,
)
from .geometry import DistanceField, diffusion_distances
from .sink import SinkReport, locate_sink
from .walk import WalkConfig, WalkState, accumulate


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the N-1 patch tokens into K radial level sets.

    labels[i-1] is the cluster of token i; members[c] lists the original token
    indices of cluster c in ascending order. Clusters 0..p-1 are background.
    """

    k: int
    p: int
    labels: np.ndarray
    members: tuple[tuple[int, ...], ...]

    def background(self) -> list[int]:
        out: list[int] = []
        for c in range(self.p):
            out.extend(self.members[c])
        return out

    def foreground_size(self) -> int:
        return sum(len(self.members[c]) for c in range(self.p, self.k))

    def sizes(self) -> list[int]:
        return [len(m) for m in self.members]


@dataclass(frozen=True)
class TokenEntry:
    """One output token with provenance: cls, survivor(index), or pooled(members)."""

    kind: str
    feature: np.ndarray | None = None
    index: int | None = None
    members: tuple[int, ...] = ()

    def to_json(self, include_features: bool = True) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "survivor":
            out["index"] = self.index
        elif self.kind == "pooled_background":
            out["members"] = list(self.members)
        if include_features and self.feature is not None:
            out["feature"] = [float(v) for v in self.feature]
        return out


@dataclass(frozen=True)
class ReducedTokenSet:
    """Final assembled token list: CLS first, pooled background (if any) last."""

    tokens: tuple[TokenEntry, ...]
    budget_used: int

    def survivor_indices(self) -> list[int]:
        return [t.index for t in self.tokens if t.kind == "survivor"]

    def pooled_members(self) -> list[int]:
        for t in self.tokens:
            if t.kind == "pooled_background":
                return list(t.members)
        return []

    def to_json(self, include_features: bool = True) -> dict:
        return {
            "budget_used": self.budget_used,
            "tokens": [t.to_json(include_features) for t in self.tokens],
        }


def radial_cluster(field: DistanceField, k: int, p: int) -> ClusterAssignment:
    """Assign each patch token to clamp(floor(D_norm * K), 0, K-1)."""
    if k < 2 or not 1 <= p < k:
        raise BadClusterCounts(f"need K >= 2 and 1 <= p < K, got K={k} p={p}")
    labels = np.clip(np.floor(field.normalized * k).astype(np.int64), 0, k - 1)
    members: list[tuple[int, ...]] = []
    for c in range(k):
        members.append(tuple(int(i) + 1 for i in np.nonzero(labels == c)[0]))
    return ClusterAssignment(k=k, p=p, labels=labels, members=tuple(members))


def transition_weight_pool(
    assignment: ClusterAssignment, field: DistanceField, features: np.ndarray
):
    """Compress the background set into one feature vector.

    Weights are a softmax over the members' raw sink distances, so they are
    positive, sum to 1, and increase strictly with distance. Returns
    (pooled, weights) with weights aligned to assignment.background() order.
    """
    if features is None:
        raise MissingFeatures("pooling requires token features")
    bg = assignment.background()
    if not bg:
        raise EmptyBackground("no tokens fell into the background clusters")
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != field.n_patches + 1:
        raise MissingFeatures(
            f"feature matrix shape {features.shape} does not cover {field.n_patches + 1} tokens"
        )
    d = field.raw[np.asarray(bg) - 1]
    w = np.exp(d - d.max())
    w /= w.sum()
    pooled = w @ features[np.asarray(bg)]
    return pooled, w


def _sorted_cluster(assignment: ClusterAssignment, field: DistanceField, c: int) -> list[int]:
    # distance-ascending, original index as a stable tie-break
    members = assignment.members[c]
    return sorted(members, key=lambda i: (field.normalized[i - 1], i))


def stride_sample(
    assignment: ClusterAssignment, field: DistanceField, budget: int
) -> list[int]:
    """Budget-proportional strided sampling of the foreground, near-to-far.

    Each cluster gets a quota proportional to its share of the foreground
    (floor(T * |C_k| / |C_fg|)) and contributes every stride-th token of its
    distance-sorted member list, stride = floor(|C_k| / quota). Clusters whose
    quota rounds to zero are retained whole. All takes are capped by the
    remaining budget so the survivor count never exceeds T; if the foreground
    already fits the budget everything survives.

    Survivors are listed cluster by cluster, index-ascending within each
    cluster's run.
    """
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    fg_total = assignment.foreground_size()
    if fg_total <= budget:
        out: list[int] = []
        for c in range(assignment.p, assignment.k):
            out.extend(assignment.members[c])
        return out

    survivors: list[int] = []
    remaining = budget
    for c in range(assignment.p, assignment.k):
        n = len(assignment.members[c])
        if n == 0 or remaining == 0:
            continue
        quota = (budget * n) // fg_total
        if quota == 0:
            quota = n  # tiny cluster: retain whole rather than starve it
        quota = min(quota, remaining)
        stride = n // quota
        take = _sorted_cluster(assignment, field, c)[::stride][:quota]
        survivors.extend(sorted(take))
        remaining -= len(take)
    return survivors


def assemble(
    cls_feature: np.ndarray | None,
    survivors,
    pooled: np.ndarray | None,
    pooled_members=(),
) -> ReducedTokenSet:
    """Concatenate [CLS] ++ survivors ++ [pooled background].

    survivors is a sequence of (original index, feature-or-None); pooled=None
    omits the background token (pruning mode).
    """
    tokens = [TokenEntry(kind="cls", feature=cls_feature)]
    for idx, feat in survivors:
        tokens.append(TokenEntry(kind="survivor", feature=feat, index=int(idx)))
    if pooled is not None:
        tokens.append(
            TokenEntry(
                kind="pooled_background",
                feature=pooled,
                members=tuple(int(i) for i in pooled_members),
            )
        )
    return ReducedTokenSet(tokens=tuple(tokens), budget_used=len(tokens))


@dataclass(frozen=True)
class ReduceConfig:
    """Knobs for the core pipeline.

    k/p: cluster counts; budget: optional survivor cap T (None keeps all
    foreground); anchor: "sink" or "random" (ablation; seeded); feature_layer:
    0-based layer whose features feed pooling, default the emergence layer;
    pool_background: False drops the background instead of pooling it.
    """

    k: int = 6
    p: int = 1
    budget: int | None = None
    anchor: str = "sink"
    anchor_seed: int = 0
    feature_layer: int | None = None
    pool_background: bool = True

    def __post_init__(self):
        if self.k < 2 or not 1 <= self.p < self.k:
            raise BadClusterCounts(f"need K >= 2 and 1 <= p < K, got K={self.k} p={self.p}")
        if self.budget is not None and self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if self.anchor not in ("sink", "random"):
            raise ConfigError(f"anchor must be 'sink' or 'random', got {self.anchor!r}")


@dataclass(frozen=True)
class PoolResult:
    """Everything the core pipeline produced, for reports and downstream stages."""

    reduced: ReducedTokenSet
    sink: SinkReport
    anchor_index: int
    state: WalkState
    field: DistanceField
    assignment: ClusterAssignment
    survivors: tuple[int, ...]
    warnings: tuple[str, ...]
    timings_ms: dict = field(default_factory=dict)


def resolve_anchor(report: SinkReport, cfg: ReduceConfig, n_tokens: int) -> int:
    """Sink index, or a seeded uniform patch index in random-anchor mode."""
    if cfg.anchor == "sink":
        return report.sink_index
    rng = np.random.default_rng(cfg.anchor_seed)
    return int(rng.integers(1, n_tokens))


def _feature_layer(stack: AttentionStack, report: SinkReport, cfg: ReduceConfig) -> int:
    layer = report.t_star - 1 if cfg.feature_layer is None else cfg.feature_layer
    if not 0 <= layer < stack.layers:
        raise ConfigError(f"feature layer {layer} outside [0, {stack.layers})")
    return layer


def core_geometry(stack: AttentionStack, walk_cfg: WalkConfig, cfg: ReduceConfig):
    """Shared front half: accumulate, locate sink, distances, radial clusters."""
    state = accumulate(stack, walk_cfg)
    report = locate_sink(state, walk_cfg)
    anchor = resolve_anchor(report, cfg, stack.tokens)
    p_star = state.matrix_at(report.t_star)
    field_ = diffusion_distances(p_star, anchor)
    assignment = radial_cluster(field_, cfg.k, cfg.p)
    return state, report, anchor, p_star, field_, assignment


def run_pool(stack: AttentionStack, walk_cfg: WalkConfig, cfg: ReduceConfig) -> PoolResult:
    """The full single-shot pipeline (clustering, pooling, optional sampling)."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    state = accumulate(stack, walk_cfg)
    timings["accumulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    report = locate_sink(state, walk_cfg)
    anchor = resolve_anchor(report, cfg, stack.tokens)
    timings["locate_sink"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    p_star = state.matrix_at(report.t_star)
    field_ = diffusion_distances(p_star, anchor)
    timings["distances"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    assignment = radial_cluster(field_, cfg.k, cfg.p)
    timings["cluster"] = time.perf_counter() - t0

    notes: list[str] = []
    if assignment.foreground_size() == 0:
        notes.append(
            "degenerate distance field: every patch token fell into the "
            "background and will be pooled into a single token"
        )
        warnings.warn(notes[-1], stacklevel=2)

    feats = None
    cls_feature = None
    pooled = None
    bg = assignment.background()
    t0 = time.perf_counter()
    if cfg.pool_background:
        layer = _feature_layer(stack, report, cfg)
        feats = stack.features(layer)
        cls_feature = feats[0]
        pooled, _ = transition_weight_pool(assignment, field_, feats)
    elif stack.features32 is not None:
        layer = _feature_layer(stack, report, cfg)
        feats = stack.features(layer)
        cls_feature = feats[0]
    timings["pool"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.budget is not None:
        survivors = stride_sample(assignment, field_, cfg.budget)
    else:
        survivors = []
        for c in range(cfg.p, cfg.k):
            survivors.extend(assignment.members[c])
    timings["sample"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pairs = [(i, None if feats is None else feats[i]) for i in survivors]
    reduced = assemble(
        cls_feature,
        pairs,
        pooled,
        pooled_members=bg if cfg.pool_background else (),
    )
    timings["assemble"] = time.perf_counter() - t0

    return PoolResult(
        reduced=reduced,
        sink=report,
        anchor_index=anchor,
        state=state,
        field=field_,
        assignment=assignment,
        survivors=tuple(survivors),
        warnings=tuple(notes),
        timings_ms={k: v * 1e3 for k, v in timings.items()},
    )
