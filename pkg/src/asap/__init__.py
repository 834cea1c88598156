"""Sink-anchored token reduction for Vision Transformer attention stacks.

Pipeline: accumulate per-layer attention as a lazy random walk, detect the
attention sink via a column-sum trigger, measure token-to-sink diffusion
distances in the cumulative matrix, bin tokens into radial level sets, pool
the background into one token, and optionally prune the foreground down to a
hard budget.

Re-exports resolve lazily so importing the package (e.g. for the CLI) does not
pull in numpy before thread limits are applied.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # attnio
    "AttentionStack": ".attnio",
    "TransitionMatrix": ".attnio",
    "build_stack": ".attnio",
    "head_average": ".attnio",
    "read_stack": ".attnio",
    "write_stack": ".attnio",
    # walk
    "WalkConfig": ".walk",
    "WalkState": ".walk",
    "accumulate": ".walk",
    "lazify": ".walk",
    # sink
    "SinkReport": ".sink",
    "locate_sink": ".sink",
    "mass_trajectory": ".sink",
    # geometry
    "DistanceField": ".geometry",
    "StationaryEstimate": ".geometry",
    "diffusion_distances": ".geometry",
    "stationary_estimate": ".geometry",
    "weighted_diffusion_distances": ".geometry",
    "spearman_rank": ".geometry",
    # reduce
    "ClusterAssignment": ".reduce",
    "ReducedTokenSet": ".reduce",
    "ReduceConfig": ".reduce",
    "radial_cluster": ".reduce",
    "transition_weight_pool": ".reduce",
    "stride_sample": ".reduce",
    "assemble": ".reduce",
    "run_pool": ".reduce",
    # hybrid
    "HybridConfig": ".hybrid",
    "cls_topk_filter": ".hybrid",
    "bipartite_prune": ".hybrid",
    "run_hybrid": ".hybrid",
    # synth
    "SynthConfig": ".synth",
    "gen_sink_stack": ".synth",
    "gen_uniform_stack": ".synth",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(importlib.import_module(module, __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
