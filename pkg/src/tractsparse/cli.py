"""Batch command-line interface over the clustering pipeline.

Every subcommand persists its artifacts in the documented formats and
drops a ``manifest.json`` beside them recording the resolved settings,
input and output hashes, the tool version, and per-stage wall-clock
timings. Output artifacts are byte-stable for a fixed seed; the manifest
itself is not part of that contract because of the timings, which is why
it also carries the output hashes.

Exit codes: 0 success, 2 usage, 3 bad input data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .atlas import build_atlas, load_atlas, save_atlas, segment_with_atlas
from .distances import (
    DEFAULT_ENDPOINT_THRESHOLD_MM,
    MEASURES,
    build_endpoint_graph,
    graph_laplacian,
    pairwise_distances,
)
from .errors import DataError, NumericalError
from .io import (
    _atomic_write_text,
    read_dm,
    read_labels,
    read_sl,
    read_slb,
    sha256_file,
    write_dm,
    write_dm_csv,
    write_fit_dir,
    write_km,
    write_labels,
    write_slb,
    write_sparse_csv,
    SLB_MAGIC,
)
from .kernel import kernel_from_distances, nystrom_kernel
from .metrics import MetricReport, compute_metrics, silhouette
from .model import Labeling, SolverConfig
from .solvers import (
    DEFAULT_LAMBDA_L,
    gksc_fit,
    kkm_assign,
    kkm_fit,
    ksc_fit,
    random_selection_init,
    spectral_init,
)
from .synth import PRESETS, BundleSpec, generate


class UsageError(Exception):
    """Bad flag combination or unknown name; maps to exit code 2."""


def _default_threads() -> int:
    raw = os.environ.get("TRACTSPARSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise UsageError(f"TRACTSPARSE_THREADS={raw!r} is not an integer") from exc


def _read_tract(path):
    """Dispatch on content: binary magic wins, otherwise text."""
    p = Path(path)
    with open(p, "rb") as f:
        head = f.read(4)
    return read_slb(p) if head == SLB_MAGIC else read_sl(p)


class _Timer:
    def __init__(self):
        self.stages = {}

    def stage(self, name):
        timer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = round(time.perf_counter() - self.t0, 6)
                return False

        return _Span()


def _write_manifest(where, command, config, inputs, outputs, timer, extra=None):
    """Manifest next to a file output, or inside a directory output."""
    where = Path(where)
    path = where / "manifest.json" if where.is_dir() else where.with_name(
        where.name + ".manifest.json"
    )
    manifest = {
        "tool": "tractsparse",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "timings_s": timer.stages,
    }
    if extra:
        manifest["result"] = extra
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _specs_from_file(path):
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    entries = raw.get("specs") if isinstance(raw, dict) else raw
    if not isinstance(entries, list) or not entries:
        raise DataError(f"{path}: expected a list of bundle specs")
    specs = []
    for i, entry in enumerate(entries):
        try:
            entry = dict(entry)
            for key in ("center", "rotation_deg", "points_per_streamline"):
                if key in entry:
                    entry[key] = tuple(entry[key])
            specs.append(BundleSpec(**entry))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: spec {i}: {exc}") from exc
    return specs


# --- subcommands ------------------------------------------------------------

def cmd_synth(args) -> int:
    timer = _Timer()
    if args.preset in PRESETS:
        with timer.stage("generate"):
            tract, labels = PRESETS[args.preset](seed=args.seed)
        source = args.preset
        inputs = []
    elif Path(args.preset).is_file():
        specs = _specs_from_file(args.preset)
        with timer.stage("generate"):
            tract, labels = generate(specs, seed=args.seed)
        source = str(args.preset)
        inputs = [Path(args.preset)]
    else:
        raise UsageError(
            f"unknown preset {args.preset!r} (choose from {sorted(PRESETS)}) "
            "and no such spec file"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with timer.stage("write"):
        write_slb(tract, out / "tract.slb")
        write_labels(labels, out / "labels.txt")
    _write_manifest(
        out, "synth",
        {"preset": source, "seed": args.seed},
        inputs, [out / "tract.slb", out / "labels.txt"], timer,
        extra={"n_streamlines": len(tract), "m": labels.m},
    )
    return 0


def cmd_distances(args) -> int:
    timer = _Timer()
    with timer.stage("read"):
        tract = _read_tract(args.infile)
    with timer.stage("compute"):
        d = pairwise_distances(tract, args.measure, threads=args.threads)
    out = Path(args.out)
    outputs = [out]
    with timer.stage("write"):
        write_dm(d, out)
        if args.csv:
            write_dm_csv(d, args.csv)
            outputs.append(Path(args.csv))
    _write_manifest(
        out, "distances",
        {"measure": args.measure, "threads": args.threads},
        [Path(args.infile)], outputs, timer,
        extra={"n": d.n},
    )
    return 0


def _build_kernel(args, tract, timer):
    if args.nystrom is not None:
        if args.dist is not None:
            raise UsageError("--nystrom computes its own distances; drop --dist")
        with timer.stage("kernel"):
            return nystrom_kernel(
                tract, measure=args.measure, p=args.nystrom,
                seed=args.seed, threads=args.threads,
            )
    if args.dist is not None:
        with timer.stage("read_distances"):
            d = read_dm(args.dist)
        if d.n != len(tract):
            raise DataError(
                f"distance matrix is {d.n}x{d.n} but the tractogram has "
                f"{len(tract)} streamlines"
            )
    else:
        with timer.stage("distances"):
            d = pairwise_distances(tract, args.measure, threads=args.threads)
    with timer.stage("kernel"):
        return kernel_from_distances(d)


def cmd_cluster(args) -> int:
    timer = _Timer()
    if args.lambda2 is not None and args.lambdaL is not None:
        raise UsageError("--lambda2 and --lambdaL are mutually exclusive priors")
    manifold = args.method == "gksc-manifold"
    if args.lambdaL is not None and not manifold:
        raise UsageError("--lambdaL applies to gksc-manifold only")

    with timer.stage("read"):
        tract = _read_tract(args.infile)
    k = _build_kernel(args, tract, timer)

    lambda_l = (args.lambdaL if args.lambdaL is not None else DEFAULT_LAMBDA_L) \
        if manifold else 0.0
    cfg = SolverConfig(
        m=args.m, s_max=args.smax, lambda1=args.lambda1,
        lambda2=0.0 if manifold else args.lambda2,
        lambda_l=lambda_l, mu=args.mu, seed=args.seed,
    )

    with timer.stage("init"):
        if args.init == "random":
            selection = random_selection_init(k, m=args.m, seed=args.seed)
            init = selection
            if args.method == "kkm":
                init = Labeling(kkm_assign(k, selection), m=args.m)
        else:
            try:
                init = spectral_init(k, m=args.m, seed=args.seed)
            except NumericalError as exc:
                if args.nystrom is not None:
                    raise NumericalError(
                        f"{exc} (the landmark approximation is too coarse for "
                        "the spectral start; raise --nystrom or use --init random)"
                    ) from exc
                raise

    with timer.stage("fit"):
        if args.method == "kkm":
            result = kkm_fit(k, cfg, init)
        elif args.method == "ksc":
            result = ksc_fit(k, cfg, init)
        elif args.method == "gksc":
            result = gksc_fit(k, cfg, init)
        else:
            graph = build_endpoint_graph(tract, args.ep_threshold)
            result = gksc_fit(k, cfg, init, laplacian=graph_laplacian(graph))

    out = Path(args.out)
    with timer.stage("write"):
        write_fit_dir(result, cfg, out, method=args.method)
        if args.save_kernel:
            write_km(k, out / "kernel.km")
    row_norms = np.linalg.norm(result.assignment.w, axis=1)
    outputs = sorted(p for p in out.iterdir() if p.name != "manifest.json")
    _write_manifest(
        out, "cluster",
        dict(
            method=args.method, measure=args.measure, init=args.init,
            nystrom=args.nystrom, ep_threshold=args.ep_threshold if manifold else None,
            threads=args.threads, **{
                key: getattr(cfg, key)
                for key in ("m", "s_max", "lambda1", "lambda2", "lambda_l", "mu", "seed")
            },
        ),
        [Path(args.infile)] + ([Path(args.dist)] if args.dist else []),
        outputs, timer,
        extra={
            "non_empty_clusters": int(np.sum(row_norms > 0)),
            "unassigned": int(result.unassigned.sum()),
            "iterations": result.iterations,
            "converged": result.converged,
            "final_cost": result.cost_trace[-1] if result.cost_trace else None,
        },
    )
    return 0


def cmd_metrics(args) -> int:
    timer = _Timer()
    if args.truth is None and args.dist is None:
        raise UsageError("nothing to compute: give --truth and/or --dist")
    with timer.stage("read"):
        pred = read_labels(args.pred)
        truth = read_labels(args.truth) if args.truth else None
        d = read_dm(args.dist) if args.dist else None

    with timer.stage("compute"):
        if truth is not None:
            report = compute_metrics(truth, pred, d)
            payload_json = report.to_json()
            payload_csv = report.csv_header() + "\n" + report.to_csv_row() + "\n"
        else:
            mean_sil, _ = silhouette(d, pred)
            sizes = np.bincount(np.asarray(pred.labels), minlength=pred.m)
            sizes = [int(v) for v in sizes if v > 0]
            payload_json = json.dumps(
                {"silhouette": mean_sil, "cluster_sizes": sizes},
                indent=2, sort_keys=True,
            )
            payload_csv = (
                MetricReport.csv_header() + "\n"
                + f",,,{mean_sil!r},{len(sizes)},{min(sizes)},{max(sizes)}\n"
            )

    if args.out is None:
        print(payload_json)
        return 0
    out = Path(args.out)
    with timer.stage("write"):
        if out.suffix == ".csv":
            _atomic_write_text(out, payload_csv)
        else:
            _atomic_write_text(out, payload_json + "\n")
    inputs = [Path(args.pred)]
    inputs += [Path(args.truth)] if args.truth else []
    inputs += [Path(args.dist)] if args.dist else []
    _write_manifest(out, "metrics", {"format": out.suffix.lstrip(".") or "json"},
                    inputs, [out], timer)
    return 0


def cmd_atlas_build(args) -> int:
    timer = _Timer()
    with timer.stage("read"):
        subjects = [_read_tract(p) for p in args.infile]
    cfg = SolverConfig(
        m=args.m, s_max=args.smax, lambda1=args.lambda1, mu=args.mu, seed=args.seed,
    )
    with timer.stage("fit"):
        atlas, fit = build_atlas(
            subjects, cfg, measure=args.measure,
            sample_per_subject=args.sample, seed=args.seed, threads=args.threads,
        )
    out = Path(args.out)
    with timer.stage("write"):
        save_atlas(atlas, out)
        write_labels(fit.labels, out / "training_labels.txt")
    outputs = sorted(p for p in out.iterdir() if p.name != "manifest.json")
    _write_manifest(
        out, "atlas-build",
        {
            "measure": args.measure, "sample": args.sample, "method": args.method,
            "m": cfg.m, "s_max": cfg.s_max, "seed": args.seed, "threads": args.threads,
        },
        [Path(p) for p in args.infile], outputs, timer,
        extra={
            "n_training": len(atlas.training),
            "gamma": atlas.gamma,
            "shift": atlas.shift,
            "converged": fit.converged,
        },
    )
    return 0


def cmd_segment(args) -> int:
    timer = _Timer()
    with timer.stage("read"):
        atlas = load_atlas(args.atlas)
        tract = _read_tract(args.infile)
    with timer.stage("segment"):
        seg = segment_with_atlas(
            atlas, tract, s_max=args.smax, measure=args.measure,
            threads=args.threads,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with timer.stage("write"):
        write_labels(seg.labels, out / "labels.txt")
        write_sparse_csv(seg.assignment.w, out / "w.csv")
        unassigned = np.nonzero(np.asarray(seg.unassigned))[0]
        if unassigned.size:
            _atomic_write_text(
                out / "unassigned.txt", "\n".join(str(i) for i in unassigned) + "\n"
            )
    outputs = sorted(p for p in out.iterdir() if p.name != "manifest.json")
    atlas_dir = Path(args.atlas)
    atlas_files = sorted(p for p in atlas_dir.iterdir() if p.is_file())
    _write_manifest(
        out, "segment",
        {"atlas": str(args.atlas), "s_max": args.smax, "threads": args.threads},
        atlas_files + [Path(args.infile)], outputs, timer,
        extra={"unassigned": int(seg.unassigned.sum()), "m": atlas.m},
    )
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tractsparse",
        description="Streamline bundle clustering via sparse kernel dictionaries.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads(p):
        p.add_argument(
            "--threads", type=int, default=None,
            help="worker threads for distance computation "
                 "(default: $TRACTSPARSE_THREADS or 1)",
        )

    p = sub.add_parser("synth", help="generate a synthetic tractogram")
    p.add_argument("preset", help="preset name or bundle-spec JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("distances", help="pairwise distance matrix")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--measure", choices=sorted(MEASURES), default="mcp")
    p.add_argument("--out", required=True, help="output .dm file")
    p.add_argument("--csv", help="also write a CSV mirror here")
    add_threads(p)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("cluster", help="fit a clustering model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--dist", help="precomputed .dm file (else computed inline)")
    p.add_argument("--measure", choices=sorted(MEASURES), default="mcp")
    p.add_argument(
        "--method", choices=["kkm", "ksc", "gksc", "gksc-manifold"], required=True,
    )
    p.add_argument("--m", type=int, required=True, help="dictionary size")
    p.add_argument("--smax", type=int, default=3)
    p.add_argument("--lambda1", type=float, default=0.001)
    p.add_argument("--lambda2", type=float, default=None,
                   help="group weight (default: scale-aware heuristic)")
    p.add_argument("--lambdaL", type=float, default=None,
                   help=f"graph smoothing weight (default {DEFAULT_LAMBDA_L})")
    p.add_argument("--mu", type=float, default=0.01)
    p.add_argument("--nystrom", type=int, default=None, metavar="P",
                   help="landmark count for the low-rank kernel")
    p.add_argument("--init", choices=["spectral", "random"], default="spectral")
    p.add_argument("--ep-threshold", type=float, default=DEFAULT_ENDPOINT_THRESHOLD_MM,
                   help="endpoint graph threshold in mm (gksc-manifold)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-kernel", action="store_true",
                   help="also persist the kernel as kernel.km")
    p.add_argument("--out", required=True, help="output directory")
    add_threads(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("metrics", help="score a predicted labeling")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth")
    p.add_argument("--dist", help=".dm file enabling silhouette")
    p.add_argument("--out", help=".json or .csv (default: print JSON)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("atlas-build", help="fit an atlas from subject tractograms")
    p.add_argument("--in", dest="infile", nargs="+", required=True)
    p.add_argument("--sample", type=int, default=None,
                   help="streamlines sampled per subject (default: all)")
    p.add_argument("--method", choices=["ksc"], default="ksc")
    p.add_argument("--measure", choices=sorted(MEASURES), default="mcp")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--smax", type=int, default=3)
    p.add_argument("--lambda1", type=float, default=0.001)
    p.add_argument("--mu", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output atlas directory")
    add_threads(p)
    p.set_defaults(func=cmd_atlas_build)

    p = sub.add_parser("segment", help="label a tractogram against an atlas")
    p.add_argument("--atlas", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--smax", type=int, default=None,
                   help="override the atlas sparsity level")
    p.add_argument("--measure", help="safety check against the atlas measure")
    p.add_argument("--out", required=True, help="output directory")
    add_threads(p)
    p.set_defaults(func=cmd_segment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed the message; keep its code (2 on usage)
        return int(exc.code or 0)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        try:
            args.threads = _default_threads()
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
