"""Exception hierarchy for the token-reduction engine.

Every error carries a stable machine-readable ``code`` so the CLI can emit
structured error reports without string matching.
"""


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "engine_error"


# --- container / file format ---

class MagicMismatch(EngineError):
    code = "magic_mismatch"


class VersionUnsupported(EngineError):
    code = "version_unsupported"


class ShapeMismatch(EngineError):
    code = "shape_mismatch"


class NotRowStochastic(EngineError):
    code = "not_row_stochastic"


class NegativeEntry(EngineError):
    code = "negative_entry"


class LayerOutOfRange(EngineError):
    code = "layer_out_of_range"


class IoFailure(EngineError):
    code = "io_failure"


# --- walk / sink ---

class AlphaOutOfRange(EngineError):
    code = "alpha_out_of_range"


class EmptyStack(EngineError):
    code = "empty_stack"


class HistoryNotRetained(EngineError):
    code = "history_not_retained"


# --- geometry ---

class SinkIsCls(EngineError):
    code = "sink_is_cls"


class DegeneratePhi(EngineError):
    code = "degenerate_phi"


class LengthMismatch(EngineError):
    code = "length_mismatch"


class TooShort(EngineError):
    code = "too_short"


# --- reduction ---

class BadClusterCounts(EngineError):
    code = "bad_cluster_counts"


class EmptyBackground(EngineError):
    code = "empty_background"


class MissingFeatures(EngineError):
    code = "missing_features"


class TargetExceedsInput(EngineError):
    code = "target_exceeds_input"


# --- synthesis / config ---

class InfeasibleMargin(EngineError):
    code = "infeasible_margin"


class ConfigError(EngineError):
    code = "config_error"
