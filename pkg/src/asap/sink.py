"""Sink index resolution and mass-accumulation diagnostics.

The emergence layer t* comes from the walk's column-sum trigger; the sink
*index* is read off the CLS row of the cumulative matrix at t*: the patch
column where CLS routes the most mass. When the trigger never fired the final
accumulated depth serves as a flagged fallback anchor, so the pipeline always
has a well-defined sink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HistoryNotRetained
from .walk import WalkConfig, WalkState


@dataclass(frozen=True)
class SinkReport:
    """Where and when the sink emerged.

    t_star: emergence layer (1-based; final depth when not detected);
    sink_index: argmax over j >= 1 of the CLS row at t_star (never CLS itself);
    trigger_value: max patch column sum at t_star; cls_row: copy of P[0, :] at
    t_star; detected: whether the tau trigger actually fired; colsum_argmax:
    the column (j >= 1) with the largest column sum, logged for diagnosis since
    the CLS-row proxy can in principle disagree with it.
    """

    t_star: int
    sink_index: int
    trigger_value: float
    cls_row: np.ndarray
    detected: bool
    colsum_argmax: int

    def to_json(self) -> dict:
        return {
            "t_star": self.t_star,
            "sink_index": self.sink_index,
            "trigger_value": self.trigger_value,
            "detected": self.detected,
            "colsum_argmax": self.colsum_argmax,
        }


def locate_sink(state: WalkState, cfg: WalkConfig) -> SinkReport:
    """Resolve the sink token at the emergence layer (or fallback depth).

    Ties at the argmax break toward the lowest index so outputs are
    reproducible. cfg is accepted for interface symmetry with accumulate; the
    trigger decision is already frozen in the state.
    """
    del cfg
    detected = state.trigger_layer is not None
    t_star = state.trigger_layer if detected else state.depth
    p = state.matrix_at(t_star)
    cls_row = p.data[0].copy()
    sink_index = 1 + int(np.argmax(cls_row[1:]))
    colsum_argmax = 1 + int(np.argmax(p.data[:, 1:].sum(axis=0)))
    return SinkReport(
        t_star=t_star,
        sink_index=sink_index,
        trigger_value=float(state.column_sum_history[t_star - 1]),
        cls_row=cls_row,
        detected=detected,
        colsum_argmax=colsum_argmax,
    )


def mass_trajectory(state: WalkState, token: int) -> np.ndarray:
    """Column sum of the cumulative matrix at the given token, for t = 1..depth.

    Requires the walk to have retained per-layer matrices (diagnostic mode).
    """
    if state.matrices is None:
        raise HistoryNotRetained("mass_trajectory needs accumulate(keep_history=True)")
    n = state.cumulative.n
    if not 0 <= token < n:
        raise IndexError(f"token {token} outside [0, {n})")
    return np.asarray([float(m.data[:, token].sum()) for m in state.matrices])
