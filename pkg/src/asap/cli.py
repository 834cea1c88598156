"""Command-line front end: run, synth, bench, validate.

Heavy imports are deferred so thread limits can be applied to the BLAS pool
before numpy loads (env var ASAP_THREADS overrides --threads). All outputs are
UTF-8 JSON/CSV; errors exit nonzero with a machine-readable code on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_ENGINE = 3


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration for the `run` subcommand."""

    input: str
    mode: str = "pool"
    alpha: float = 0.5
    tau: float = 7.0
    k: int = 6
    p: int = 1
    budget: int | None = None
    removal_batch: int | None = None
    anchor: str = "sink"
    anchor_seed: int = 0
    metric: str = "diffusion"
    feature_layer: int | None = None
    max_layers: int | None = None
    no_early_stop: bool = False
    out: str | None = None
    dump_distances: str | None = None
    dump_mask: str | None = None
    threads: int | None = None

    def validate(self) -> None:
        from .errors import ConfigError

        if self.mode not in ("pool", "prune", "hybrid", "report-only"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "hybrid" and self.budget is None:
            raise ConfigError("hybrid mode requires --budget")


def _apply_threads(threads: int | None) -> int | None:
    """Pin the BLAS pool size; effective only before numpy is imported."""
    env = os.environ.get("ASAP_THREADS")
    if env:
        threads = int(env)
    if threads is None or threads < 1:
        return None
    if "numpy" not in sys.modules:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    return threads


def _emit(obj: dict, path: str | None) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_distance_csv(path: str, field, assignment) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "raw", "normalized", "cluster"])
        for slot, token in enumerate(field.token_indices()):
            writer.writerow(
                [int(token), repr(float(field.raw[slot])),
                 repr(float(field.normalized[slot])), int(assignment.labels[slot])]
            )


def _write_mask_csv(path: str, n_tokens: int, survivors, pooled_members) -> None:
    keep = set(survivors)
    pooled = set(pooled_members)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "decision"])
        writer.writerow([0, "keep"])
        for i in range(1, n_tokens):
            decision = "keep" if i in keep else "pool" if i in pooled else "drop"
            writer.writerow([i, decision])


def cmd_run(cfg: RunConfig) -> int:
    cfg.validate()
    from .attnio import read_stack
    from .hybrid import HybridConfig, run_hybrid
    from .reduce import ReduceConfig, run_pool
    from .sink import locate_sink
    from .walk import WalkConfig, accumulate

    stack = read_stack(cfg.input)
    walk_cfg = WalkConfig(
        alpha=cfg.alpha,
        tau=cfg.tau,
        max_layers=cfg.max_layers,
        early_stop=not cfg.no_early_stop,
    )
    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "config": {k: v for k, v in asdict(cfg).items()},
        "n_tokens": stack.tokens,
        "layers": stack.layers,
        "heads": stack.heads,
        "feature_dim": stack.feature_dim,
    }

    if cfg.mode == "report-only":
        t0 = time.perf_counter()
        state = accumulate(stack, walk_cfg)
        sink = locate_sink(state, walk_cfg)
        report["timings_per_stage_ms"] = {"accumulate": (time.perf_counter() - t0) * 1e3}
        report["sink_report"] = sink.to_json()
        report["column_sum_history"] = [float(v) for v in state.column_sum_history]
        _emit(report, cfg.out)
        return EXIT_OK

    reduce_cfg = ReduceConfig(
        k=cfg.k,
        p=cfg.p,
        budget=cfg.budget,
        anchor=cfg.anchor,
        anchor_seed=cfg.anchor_seed,
        feature_layer=cfg.feature_layer,
        pool_background=cfg.mode != "prune",
    )

    if cfg.mode == "hybrid":
        hybrid_cfg = HybridConfig(
            target=cfg.budget,
            removal_batch=cfg.removal_batch,
            metric=cfg.metric,
        )
        result = run_hybrid(stack, walk_cfg, reduce_cfg, hybrid_cfg)
        pool = result.pool
        report["removal_log"] = [list(batch) for batch in result.removal_log]
        report["prefilter_size"] = result.prefilter_size
        report["timings_per_stage_ms"] = result.timings_ms
        report["budget"] = {
            "target": cfg.budget,
            "survivors": len(pool.survivors),
            "output_length": result.reduced.budget_used,
            "note": "pooled background token rides outside the survivor budget",
        }
    else:
        pool = run_pool(stack, walk_cfg, reduce_cfg)
        result = pool
        report["timings_per_stage_ms"] = pool.timings_ms
        report["budget"] = {
            "target": cfg.budget,
            "survivors": len(pool.survivors),
            "output_length": pool.reduced.budget_used,
        }

    report["sink_report"] = {**pool.sink.to_json(), "anchor_index": pool.anchor_index,
                             "anchor_mode": cfg.anchor}
    report["column_sum_history"] = [float(v) for v in pool.state.column_sum_history]
    report["cluster_sizes"] = pool.assignment.sizes()
    report["budget_used"] = result.reduced.budget_used
    report["warnings"] = list(getattr(pool, "warnings", ()))
    report["reduced"] = result.reduced.to_json()

    if cfg.dump_distances:
        _write_distance_csv(cfg.dump_distances, pool.field, pool.assignment)
    if cfg.dump_mask:
        _write_mask_csv(
            cfg.dump_mask,
            stack.tokens,
            result.reduced.survivor_indices(),
            result.reduced.pooled_members(),
        )
    _emit(report, cfg.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .attnio import write_stack
    from .synth import SynthConfig, gen_sink_stack, gen_uniform_stack

    cfg = SynthConfig(
        n=args.n,
        l=args.layers,
        h=args.heads,
        margin=args.margin,
        sink_index=args.sink_index,
        seed=args.seed,
        noise=args.noise,
        feature_dim=args.feature_dim,
    )
    stack = gen_uniform_stack(cfg) if args.uniform else gen_sink_stack(cfg)
    write_stack(stack, args.out)
    print(json.dumps({"written": args.out, "n": stack.tokens, "layers": stack.layers,
                      "heads": stack.heads, "feature_dim": stack.feature_dim}))
    return EXIT_OK


def _timed(fn, warmup: int, iters: int, min_batch_s: float = 2e-3):
    """Median seconds per call; calls are batched so each sample is measurable."""
    fn()
    t0 = time.perf_counter()
    fn()
    est = max(time.perf_counter() - t0, 1e-9)
    reps = max(1, int(min_batch_s / est))
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        samples.append((time.perf_counter() - t0) / reps)
    samples.sort()
    return samples[len(samples) // 2], reps


def cmd_bench(args) -> int:
    import numpy as np

    from .attnio import head_average
    from .geometry import row_distances
    from .synth import SynthConfig, gen_sink_stack
    from .walk import lazify

    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    for n in sizes:
        stack = gen_sink_stack(
            SynthConfig(n=n, l=3, h=1, margin=0.1, sink_index=1, seed=args.seed,
                        feature_dim=4)
        )
        mats = [lazify(head_average(stack, i), 0.5).data for i in range(stack.layers)]

        def _accumulate_step(mats=mats):
            p = mats[0]
            for m in mats[1:]:
                p = p @ m
            return p

        p_final = _accumulate_step()

        def _distances(p=p_final):
            return row_distances(p, 1)

        raw = _distances()[1:]

        def _sort(raw=raw):
            return np.argsort(raw, kind="stable")

        per_chain, reps = _timed(_accumulate_step, args.warmup, args.iters)
        rows.append(("accumulate_layer", n, reps, per_chain / (len(mats) - 1) * 1e3))
        per_call, reps = _timed(_distances, args.warmup, args.iters)
        rows.append(("distances", n, reps, per_call * 1e3))
        per_call, reps = _timed(_sort, args.warmup, args.iters)
        rows.append(("sort", n, reps, per_call * 1e3))

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "n", "reps", "median_ms"])
        for stage, n, reps, ms in rows:
            writer.writerow([stage, n, reps, repr(ms)])
    print(json.dumps({"written": args.out, "sizes": sizes}))
    return EXIT_OK


def cmd_validate(args) -> int:
    from .attnio import read_stack

    stack = read_stack(args.input)
    print(json.dumps({
        "ok": True,
        "layers": stack.layers,
        "heads": stack.heads,
        "n_tokens": stack.tokens,
        "feature_dim": stack.feature_dim,
        "has_cls": stack.has_cls,
        "max_row_drift": stack.max_row_drift,
        "meta": stack.meta,
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asap",
        description="Sink-anchored token reduction over exported attention stacks.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread count (default: machine parallelism; "
                             "env ASAP_THREADS overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the reduction pipeline on an ATNB file")
    run.add_argument("--input", required=True)
    run.add_argument("--mode", default="pool",
                     choices=["pool", "prune", "hybrid", "report-only"])
    run.add_argument("--alpha", type=float, default=0.5)
    run.add_argument("--tau", type=float, default=7.0)
    run.add_argument("-k", "--clusters", dest="k", type=int, default=6)
    run.add_argument("-p", "--background-clusters", dest="p", type=int, default=1)
    run.add_argument("--budget", type=int, default=None)
    run.add_argument("--removal-batch", type=int, default=None)
    run.add_argument("--anchor", default="sink", choices=["sink", "random"])
    run.add_argument("--anchor-seed", type=int, default=0)
    run.add_argument("--metric", default="diffusion", choices=["diffusion", "cosine"])
    run.add_argument("--feature-layer", type=int, default=None)
    run.add_argument("--max-layers", type=int, default=None)
    run.add_argument("--no-early-stop", action="store_true")
    run.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    run.add_argument("--dump-distances", default=None, help="per-token distance CSV path")
    run.add_argument("--dump-mask", default=None, help="keep/pool/drop mask CSV path")

    synth = sub.add_parser("synth", help="generate a synthetic ATNB file")
    synth.add_argument("-n", type=int, required=True)
    synth.add_argument("--layers", type=int, required=True)
    synth.add_argument("--heads", type=int, default=1)
    synth.add_argument("--margin", type=float, default=0.0)
    synth.add_argument("--sink-index", type=int, default=None)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--noise", type=float, default=1.0)
    synth.add_argument("--feature-dim", type=int, default=8)
    synth.add_argument("--uniform", action="store_true")
    synth.add_argument("--out", required=True)

    bench = sub.add_parser("bench", help="per-stage wall-time scaling table")
    bench.add_argument("--sizes", default="64,128,256,512,1024")
    bench.add_argument("--warmup", type=int, default=5)
    bench.add_argument("--iters", type=int, default=20)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True)

    validate = sub.add_parser("validate", help="validate an ATNB file")
    validate.add_argument("--input", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    from .errors import ConfigError, EngineError

    try:
        if args.command == "run":
            cfg = RunConfig(
                input=args.input,
                mode=args.mode,
                alpha=args.alpha,
                tau=args.tau,
                k=args.k,
                p=args.p,
                budget=args.budget,
                removal_batch=args.removal_batch,
                anchor=args.anchor,
                anchor_seed=args.anchor_seed,
                metric=args.metric,
                feature_layer=args.feature_layer,
                max_layers=args.max_layers,
                no_early_stop=args.no_early_stop,
                out=args.out,
                dump_distances=args.dump_distances,
                dump_mask=args.dump_mask,
                threads=args.threads,
            )
            return cmd_run(cfg)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "validate":
            return cmd_validate(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except EngineError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
