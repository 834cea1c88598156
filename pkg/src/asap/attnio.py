"""Attention-tensor container and the ATNB on-disk format.

An :class:`AttentionStack` holds per-layer, per-head attention probability
matrices (and optionally per-layer token features) for a single forward pass.
Token index 0 is always the [CLS] token. The on-disk payload is float32; the
in-memory matrices are float64 with every row renormalized to sum exactly
to 1, because downstream accumulation treats the rows as Markov transition
probabilities.

ATNB layout (little-endian):

    magic    4 bytes   b"ATNB"
    version  u32       1
    L        u32       layers
    H        u32       heads
    N        u32       tokens (includes CLS at index 0)
    d        u32       feature dim, 0 if no features
    flags    u32       bit 0 = has_cls
    meta_len u32       length of UTF-8 JSON meta blob
    meta     bytes     JSON object of string key/values
    attn     L*H*N*N   float32, row-major, layer-major then head
    features L*N*d     float32, row-major (only if d > 0)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IoFailure,
    LayerOutOfRange,
    MagicMismatch,
    NegativeEntry,
    NotRowStochastic,
    ShapeMismatch,
    VersionUnsupported,
)

MAGIC = b"ATNB"
VERSION = 1
FLAG_HAS_CLS = 1

# float32 softmax exports drift a little; anything worse means a broken export
ROW_SUM_DRIFT = 1e-3
ENTRY_UPPER = 1.0 + 1e-6

_HEADER = struct.Struct("<4sIIIIIII")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TransitionMatrix:
    """A square row-stochastic matrix (single layer or cumulative product).

    Rows are renormalized at construction, so each row sums to 1 to within
    float64 roundoff regardless of drift in the input.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeMismatch(f"transition matrix must be square, got {a.shape}")
        if not np.isfinite(a).all():
            raise NotRowStochastic("non-finite entries in transition matrix")
        if (a < 0).any():
            raise NegativeEntry("negative entries in transition matrix")
        sums = a.sum(axis=1, keepdims=True)
        if (sums <= 0).any():
            raise NotRowStochastic("zero row in transition matrix")
        object.__setattr__(self, "data", _freeze(a / sums))

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class AttentionStack:
    """Validated per-layer, per-head attention tensors plus optional features.

    ``attn32``/``features32`` are the canonical float32 payloads that round-trip
    bit-exactly through the ATNB format. ``attn`` is the float64 row-renormalized
    view used for all arithmetic. Instances are immutable after construction.
    """

    attn32: np.ndarray                 # (L, H, N, N) float32
    features32: np.ndarray | None      # (L, N, d) float32 or None
    meta: dict = field(default_factory=dict)
    has_cls: bool = True
    attn: np.ndarray = field(init=False, repr=False)       # (L, H, N, N) float64

    def __post_init__(self):
        a = np.ascontiguousarray(self.attn32, dtype=np.float32)
        if a.ndim != 4:
            raise ShapeMismatch(f"attention payload must be 4-d (L,H,N,N), got {a.shape}")
        l, h, n, n2 = a.shape
        if l < 1 or h < 1 or n < 2 or n != n2:
            raise ShapeMismatch(f"bad attention dimensions L={l} H={h} N={n}x{n2}")
        if not self.has_cls:
            raise ShapeMismatch("stack without a CLS token at index 0 is not supported")
        if not np.isfinite(a).all():
            raise NotRowStochastic("attention payload contains non-finite values")
        if (a < 0).any():
            raise NegativeEntry("attention payload contains negative entries")
        if float(a.max()) > ENTRY_UPPER:
            raise NotRowStochastic(f"attention entry {a.max():.6g} exceeds {ENTRY_UPPER}")
        sums = a.sum(axis=3, dtype=np.float64)
        drift = float(np.abs(sums - 1.0).max())
        if drift > ROW_SUM_DRIFT:
            raise NotRowStochastic(f"row sum drift {drift:.3g} exceeds {ROW_SUM_DRIFT}")

        f = self.features32
        if f is not None:
            f = np.ascontiguousarray(f, dtype=np.float32)
            if f.ndim != 3 or f.shape[0] != l or f.shape[1] != n or f.shape[2] < 1:
                raise ShapeMismatch(
                    f"feature payload shape {f.shape} inconsistent with L={l} N={n}"
                )
            if not np.isfinite(f).all():
                raise ShapeMismatch("feature payload contains non-finite values")
            object.__setattr__(self, "features32", _freeze(f))

        a64 = a.astype(np.float64)
        a64 /= a64.sum(axis=3, keepdims=True)
        object.__setattr__(self, "attn32", _freeze(a))
        object.__setattr__(self, "attn", _freeze(a64))

    # --- shape accessors ---

    @property
    def layers(self) -> int:
        return self.attn32.shape[0]

    @property
    def heads(self) -> int:
        return self.attn32.shape[1]

    @property
    def tokens(self) -> int:
        return self.attn32.shape[2]

    @property
    def feature_dim(self) -> int:
        return 0 if self.features32 is None else self.features32.shape[2]

    def features(self, layer: int) -> np.ndarray:
        """Float64 feature matrix for one layer; raises if features are absent."""
        if self.features32 is None:
            from .errors import MissingFeatures

            raise MissingFeatures("stack carries no feature payload")
        if not 0 <= layer < self.layers:
            raise LayerOutOfRange(f"layer {layer} outside [0, {self.layers})")
        return self.features32[layer].astype(np.float64)

    @property
    def max_row_drift(self) -> float:
        """Largest |row sum - 1| of the raw float32 payload (pre-renormalization)."""
        sums = self.attn32.sum(axis=3, dtype=np.float64)
        return float(np.abs(sums - 1.0).max())

    def payload_equal(self, other: "AttentionStack") -> bool:
        """Bit-exact equality of the float32 tensor payloads."""
        if self.attn32.shape != other.attn32.shape:
            return False
        if not np.array_equal(self.attn32, other.attn32):
            return False
        if (self.features32 is None) != (other.features32 is None):
            return False
        if self.features32 is not None:
            return np.array_equal(self.features32, other.features32)
        return True


def build_stack(attn, features=None, meta: dict | None = None) -> AttentionStack:
    """Construct a validated stack from float arrays (cast to the f32 payload)."""
    a32 = np.ascontiguousarray(attn, dtype=np.float32)
    f32 = None if features is None else np.ascontiguousarray(features, dtype=np.float32)
    return AttentionStack(attn32=a32, features32=f32, meta=dict(meta or {}))


def read_stack(path) -> AttentionStack:
    """Read and validate an ATNB file."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    if len(blob) < _HEADER.size:
        raise MagicMismatch("file shorter than ATNB header")
    magic, version, l, h, n, d, flags, meta_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise MagicMismatch(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"version {version} unsupported (expected {VERSION})")

    off = _HEADER.size
    if len(blob) < off + meta_len:
        raise ShapeMismatch("meta blob truncated")
    try:
        meta = json.loads(blob[off:off + meta_len].decode("utf-8")) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ShapeMismatch(f"meta blob is not valid JSON: {exc}") from exc
    off += meta_len

    attn_count = l * h * n * n
    feat_count = l * n * d
    expected = off + 4 * (attn_count + feat_count)
    if len(blob) != expected:
        raise ShapeMismatch(
            f"payload length {len(blob) - off} bytes inconsistent with "
            f"declared L={l} H={h} N={n} d={d}"
        )

    attn = np.frombuffer(blob, dtype="<f4", count=attn_count, offset=off)
    if l < 1 or h < 1 or n < 2:
        raise ShapeMismatch(f"bad declared dimensions L={l} H={h} N={n}")
    attn = attn.reshape(l, h, n, n)
    feats = None
    if d > 0:
        feats = np.frombuffer(
            blob, dtype="<f4", count=feat_count, offset=off + 4 * attn_count
        ).reshape(l, n, d)

    return AttentionStack(
        attn32=attn,
        features32=feats,
        meta=meta,
        has_cls=bool(flags & FLAG_HAS_CLS),
    )


def write_stack(stack: AttentionStack, path) -> None:
    """Write a stack to the ATNB format (payload written bit-exactly)."""
    meta_blob = json.dumps(stack.meta, sort_keys=True).encode("utf-8")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        stack.layers,
        stack.heads,
        stack.tokens,
        stack.feature_dim,
        FLAG_HAS_CLS if stack.has_cls else 0,
        len(meta_blob),
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(meta_blob)
            fh.write(np.ascontiguousarray(stack.attn32, dtype="<f4").tobytes())
            if stack.features32 is not None:
                fh.write(np.ascontiguousarray(stack.features32, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def head_average(stack: AttentionStack, layer: int) -> TransitionMatrix:
    """Arithmetic mean of the layer's head matrices (row-stochastic output)."""
    if not 0 <= layer < stack.layers:
        raise LayerOutOfRange(f"layer {layer} outside [0, {stack.layers})")
    return TransitionMatrix(stack.attn[layer].mean(axis=0))
