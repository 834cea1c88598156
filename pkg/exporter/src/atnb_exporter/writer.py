"""Standalone ATNB writer.

The reduction engine consumes ATNB files; this module implements the same
wire format independently so the exporter has no code dependency on the
engine (little-endian): magic "ATNB", version u32 (=1), L u32, H u32, N u32,
d u32 (0 when no features), flags u32 (bit 0 = has_cls), meta_len u32, UTF-8
JSON meta blob, L*H attention matrices as N*N float32 row-major, then L
feature matrices as N*d float32 row-major when d > 0.
"""

import json
import struct

import numpy as np

MAGIC = b"ATNB"
VERSION = 1
FLAG_HAS_CLS = 1

_HEADER = struct.Struct("<4sIIIIIII")

# engine-side load tolerance; anything drifting past this is a broken export
ROW_SUM_DRIFT = 1e-3


class ExportError(Exception):
    pass


def write_atnb(path, attn, features=None, meta=None, has_cls=True):
    """Write attention (L, H, N, N) and optional features (L, N, d) to ATNB."""
    attn = np.ascontiguousarray(attn, dtype="<f4")
    if attn.ndim != 4 or attn.shape[2] != attn.shape[3]:
        raise ExportError(f"attention must be (L, H, N, N), got {attn.shape}")
    l, h, n, _ = attn.shape
    if (attn < 0).any():
        raise ExportError("negative attention entries")
    drift = float(np.abs(attn.sum(axis=3, dtype=np.float64) - 1.0).max())
    if drift > ROW_SUM_DRIFT:
        raise ExportError(f"attention rows drift {drift:.3g} from 1 (limit {ROW_SUM_DRIFT})")

    d = 0
    if features is not None:
        features = np.ascontiguousarray(features, dtype="<f4")
        if features.ndim != 3 or features.shape[0] != l or features.shape[1] != n:
            raise ExportError(
                f"features must be (L={l}, N={n}, d), got {features.shape}"
            )
        d = features.shape[2]

    meta_blob = json.dumps(dict(meta or {}), sort_keys=True).encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, l, h, n, d,
                          FLAG_HAS_CLS if has_cls else 0, len(meta_blob))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meta_blob)
        fh.write(attn.tobytes())
        if d:
            fh.write(features.tobytes())
