"""Diffusion-distance geometry over the cumulative transition matrix.

The distance from token i to the sink s is the l2 norm of the difference of
their cumulative-matrix rows: zero iff both route information identically.
Under a uniform stationary measure this equals the classical diffusion
distance; the exact weighted form (dividing each squared column difference by
a stationary estimate) is kept alongside as the oracle for rank-preservation
checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attnio import TransitionMatrix
from .errors import (
    ConfigError,
    DegeneratePhi,
    LengthMismatch,
    SinkIsCls,
    TooShort,
)

EPSILON_NORM = 1e-6
PHI_FLOOR = 1e-12


@dataclass(frozen=True)
class DistanceField:
    """Token-to-sink distances for the N-1 patch tokens (token i at slot i-1).

    normalized = (raw - d_min) / (d_max - d_min + epsilon_norm), so a fully
    degenerate field (all distances equal) maps to ~0 everywhere instead of
    dividing by zero.
    """

    raw: np.ndarray
    normalized: np.ndarray
    d_min: float
    d_max: float
    sink_index: int
    epsilon_norm: float = EPSILON_NORM

    @property
    def n_patches(self) -> int:
        return self.raw.shape[0]

    def token_indices(self) -> np.ndarray:
        return np.arange(1, self.n_patches + 1)


@dataclass(frozen=True)
class StationaryEstimate:
    """Column-mean approximation of the walk's stationary distribution."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim != 1 or (phi <= 0).any():
            raise DegeneratePhi("phi must be a strictly positive vector")
        if abs(float(phi.sum()) - 1.0) > 1e-9:
            raise DegeneratePhi(f"phi sums to {phi.sum():.12g}, expected 1")
        object.__setattr__(self, "phi", phi)


def row_distances(p: np.ndarray, ref: int) -> np.ndarray:
    """l2 distance of every row of p to row ``ref`` (the O(N^2) kernel)."""
    diff = p - p[ref]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def pairwise_row_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """l2 distances between every row of ``a`` and every row of ``b``.

    Same arithmetic as :func:`row_distances` (direct squared-difference sums,
    no gram-matrix expansion), so cross-group scores elsewhere in the pipeline
    are numerically identical to the token-to-sink distances.
    """
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        diff = b - a[i]
        out[i] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return out


def diffusion_distances(matrix: TransitionMatrix, sink: int) -> DistanceField:
    """Distances of all patch tokens to the sink row, plus [0,1] normalization."""
    if sink == 0:
        raise SinkIsCls("sink index 0 is the CLS token")
    if not 1 <= sink < matrix.n:
        raise ConfigError(f"sink index {sink} outside [1, {matrix.n})")
    raw = row_distances(matrix.data, sink)[1:]
    d_min = float(raw.min())
    d_max = float(raw.max())
    normalized = (raw - d_min) / (d_max - d_min + EPSILON_NORM)
    return DistanceField(
        raw=raw,
        normalized=normalized,
        d_min=d_min,
        d_max=d_max,
        sink_index=sink,
    )


def stationary_estimate(matrix: TransitionMatrix) -> StationaryEstimate:
    """Column means, floored at 1e-12 and renormalized to sum 1."""
    phi = matrix.data.mean(axis=0)
    phi = np.maximum(phi, PHI_FLOOR)
    return StationaryEstimate(phi / phi.sum())


def weighted_diffusion_distances(
    matrix: TransitionMatrix, sink: int, phi: StationaryEstimate
) -> np.ndarray:
    """Exact stationary-weighted distances of patch tokens to the sink.

    Squared column differences are divided by phi(k) before summing; with a
    uniform phi this reduces to sqrt(N) times the unweighted distance.
    """
    if sink == 0:
        raise SinkIsCls("sink index 0 is the CLS token")
    if not 1 <= sink < matrix.n:
        raise ConfigError(f"sink index {sink} outside [1, {matrix.n})")
    if phi.phi.shape[0] != matrix.n:
        raise LengthMismatch(
            f"phi length {phi.phi.shape[0]} does not match N={matrix.n}"
        )
    diff = matrix.data - matrix.data[sink]
    sq = (diff * diff) / phi.phi
    return np.sqrt(sq.sum(axis=1))[1:]


def _average_ranks(x: np.ndarray) -> np.ndarray:
    # ranks 1..n with ties sharing the mean of their covered positions
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    while i < xs.shape[0]:
        j = i
        while j + 1 < xs.shape[0] and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rank(a, b) -> float:
    """Spearman rho with average ranks for ties.

    Returns 0.0 when either input is constant (no ordering information).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise TooShort("need at least 2 observations")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0.0:
        return 0.0
    return float((ra * rb).sum() / denom)
