import argparse, csv, json, logging, pathlib, sys, time
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv
from tqdm import tqdm

from packages.inference.exact import exact_marginals, exact_partition
from packages.inference.lfield import METHODS, lfield_infer
from packages.message_passing.graph import build_factor_graph, factors_from_model
from packages.message_passing.solver import run_parallel_mp, run_sequential_ep
from packages.segmentation.evaluation import evaluate
from packages.segmentation.model import ImageGrid, SegmentationParams, seeds_from_gray, segment
from packages.segmentation.superpixels import load_superpixels
from packages.segmentation.sweep import ALPHAS, BETAS, GAMMAS, THETAS, sweep
from packages.shared.errors import GroundSetError, ModelFormatError, ProblemTooLargeError, SolverError
from packages.shared.io_utils import (
    ModelFile,
    load_label_map,
    load_model,
    model_to_oracle,
    quantize,
    read_marginals_csv,
    read_pgm,
    read_values_csv,
    read_ppm,
    write_json,
    write_marginals_csv,
    write_pgm,
)
from packages.solvers.sfm import brute_force_sfm

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2
INFER_METHODS = METHODS + ("mp", "ep")
BENCH_METHODS = ("min_norm", "divide_and_conquer", "frank_wolfe", "mp")

logger = logging.getLogger("subvar")


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class NotConvergedError(Exception):
    """A solver hit its iteration cap while --strict was given."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(payload, out: Optional[str]) -> None:
    if out:
        write_json(out, payload)
        print(f"  -> wrote {out}", file=sys.stderr)
    else:
        print(json.dumps(payload, ensure_ascii=False, indent=2))


def _check_converged(converged: bool, strict: bool, what: str) -> None:
    if converged:
        return
    if strict:
        raise NotConvergedError(f"{what} did not converge")
    print(f"Warning: {what} did not converge; reporting the last iterate.", file=sys.stderr)


# --- subcommands -------------------------------------------------------

def cmd_infer(args) -> int:
    model = load_model(args.model)
    if args.method in ("mp", "ep"):
        graph = build_factor_graph(factors_from_model(model), n=model.n)
        if args.method == "mp":
            result, trace = run_parallel_mp(graph, tol=args.tol or 1e-7, max_iter=args.iters, workers=args.workers)
        else:
            result, trace = run_sequential_ep(graph, tol=args.tol or 1e-7, max_sweeps=args.iters)
        if args.trace_csv:
            trace.to_csv(args.trace_csv)
            print(f"  -> wrote {args.trace_csv}", file=sys.stderr)
    else:
        result = lfield_infer(model_to_oracle(model), method=args.method, iters=args.iters, tol=args.tol or 1e-10)
    _check_converged(result.report.converged, args.strict, f"method {args.method}")
    if args.marginals_csv:
        write_marginals_csv(args.marginals_csv, result.marginals)
        print(f"  -> wrote {args.marginals_csv}", file=sys.stderr)
    payload = result.to_dict()
    payload["method"] = args.method
    _emit(payload, args.out)
    return EXIT_OK


def cmd_exact(args) -> int:
    model = load_model(args.model)
    F = model_to_oracle(model)
    minimizers = brute_force_sfm(F)
    _emit(
        {
            "n": model.n,
            "log_z": exact_partition(F),
            "marginals": [float(p) for p in exact_marginals(F)],
            "min_value": minimizers.value,
            "map_minimal": [int(i) for i in np.flatnonzero(minimizers.minimal)],
            "map_maximal": [int(i) for i in np.flatnonzero(minimizers.maximal)],
        },
        args.out,
    )
    return EXIT_OK


def _segmentation_params(args) -> SegmentationParams:
    return SegmentationParams(
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        theta=args.theta,
        blocks=args.blocks,
        mode=args.mode,
        tol=args.tol,
        max_iter=args.max_iter,
    )


def _segmentation_inputs(args, image: ImageGrid):
    seeds = unaries = regions = None
    if args.seeds:
        gray, maxval = read_pgm(args.seeds)
        if gray.shape != image.shape:
            raise ModelFormatError(f"seed image {gray.shape} does not match image {image.shape}")
        seeds = seeds_from_gray(gray, maxval)
    if args.unaries:
        unaries = read_values_csv(args.unaries, "unary")
    if args.labels:
        regions = load_superpixels(load_label_map(args.labels, image.shape))
    return seeds, unaries, regions


def cmd_segment(args) -> int:
    image = ImageGrid(read_ppm(args.image))
    params = _segmentation_params(args)
    seeds, unaries, regions = _segmentation_inputs(args, image)
    print(f"Segmenting {image.width}x{image.height} image in '{params.mode}' mode...", file=sys.stderr)
    out = segment(image, params, unaries=unaries, seeds=seeds, regions=regions, workers=args.workers, progress=args.progress)
    prefix = args.out_prefix
    pathlib.Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_pgm(f"{prefix}_marginals.pgm", quantize(out.marginals))
    write_marginals_csv(f"{prefix}_marginals.csv", out.marginals)
    write_pgm(f"{prefix}_map.pgm", np.where(out.map_mask, 255, 0))
    for suffix in ("_marginals.pgm", "_marginals.csv", "_map.pgm"):
        print(f"  -> wrote {prefix}{suffix}", file=sys.stderr)
    meta = out.metadata()
    meta["params"] = params.model_dump()
    print(json.dumps(meta, ensure_ascii=False, indent=2))
    _check_converged(out.inference.report.converged, args.strict, "segmentation")
    return EXIT_OK


def _load_truth(path: str) -> np.ndarray:
    gray, _ = read_pgm(path)
    return gray > 0


def _load_marginals(path: str, shape) -> np.ndarray:
    if path.endswith(".csv"):
        p = read_marginals_csv(path)
        if p.size != shape[0] * shape[1]:
            raise ModelFormatError(f"{path}: {p.size} marginals for a {shape[1]}x{shape[0]} ground truth")
        return p.reshape(shape)
    gray, maxval = read_pgm(path)
    return gray / float(maxval)


def cmd_eval(args) -> int:
    truth = _load_truth(args.truth)
    marginals = _load_marginals(args.marginals, truth.shape)
    if marginals.shape != truth.shape:
        raise ModelFormatError(f"marginals {marginals.shape} and ground truth {truth.shape} differ in shape")
    payload = evaluate(marginals, truth).to_dict()
    if not args.roc:
        payload.pop("roc")
    _emit(payload, args.out)
    return EXIT_OK


def _grid_model(side: int, rng: np.random.Generator) -> ModelFile:
    n = side * side
    edges = []
    for r in range(side):
        for c in range(side):
            i = r * side + c
            if c + 1 < side:
                edges.append((i, i + 1, float(rng.uniform(0.1, 1.0))))
            if r + 1 < side:
                edges.append((i, i + side, float(rng.uniform(0.1, 1.0))))
    return ModelFile(n=n, modular=[float(x) for x in rng.normal(0.0, 1.0, n)], edges=edges)


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    jobs = [(side, method, rep) for side in args.sizes for rep in range(args.repeats) for method in args.methods]
    models = {}
    for side, method, rep in tqdm(jobs, desc="bench", file=sys.stderr):
        key = (side, rep)
        if key not in models:
            models[key] = _grid_model(side, rng)
        model = models[key]
        started = time.perf_counter()
        if method == "mp":
            result, _ = run_parallel_mp(build_factor_graph(factors_from_model(model), n=model.n), workers=args.workers)
        else:
            result = lfield_infer(model_to_oracle(model), method=method, iters=args.iters)
        rows.append(
            {
                "side": side,
                "n": model.n,
                "repeat": rep,
                "method": method,
                "milliseconds": round((time.perf_counter() - started) * 1000.0, 3),
                "objective": result.log_z_upper,
                "iterations": result.report.iterations,
                "converged": result.report.converged,
            }
        )
    stream = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(stream, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            stream.close()
            print(f"  -> wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    image = ImageGrid(read_ppm(args.image))
    truth = _load_truth(args.truth)
    if truth.shape != image.shape:
        raise ModelFormatError(f"ground truth {truth.shape} does not match image {image.shape}")
    base = SegmentationParams(blocks=args.blocks, mode=args.mode, tol=args.tol, max_iter=args.max_iter)
    seeds, unaries, regions = _segmentation_inputs(args, image)
    rows = sweep(
        image, truth, base,
        thetas=args.thetas, alphas=args.alphas, betas=args.betas, gammas=args.gammas,
        unaries=unaries, seeds=seeds, regions=regions, progress=True,
    )
    if args.top > 0:
        rows = rows[: args.top]
    _emit({"rows": [r.to_dict() for r in rows]}, args.out)
    return EXIT_OK


# --- parser ------------------------------------------------------------

def _add_segmentation_flags(p: argparse.ArgumentParser, with_weights: bool) -> None:
    if with_weights:
        p.add_argument("--alpha", type=float, default=1.0, help="unary weight")
        p.add_argument("--beta", type=float, default=1.0, help="pairwise cut weight")
        p.add_argument("--gamma", type=float, default=0.1, help="superpixel term weight")
        p.add_argument("--theta", type=float, default=0.1, help="colour sensitivity of edge weights")
    p.add_argument("--blocks", type=int, nargs="+", default=[4, 8], help="superpixel block sizes, one layer each")
    p.add_argument("--labels", default=None, help="superpixel label map (PGM or CSV) instead of blocks")
    p.add_argument("--seeds", default=None, help="seed PGM: 255 foreground, 0 background")
    p.add_argument("--unaries", default=None, help="CSV of per-pixel unaries (element_index, value), used verbatim")
    p.add_argument("--mode", choices=["pairwise", "hop", "both", "unary"], default="both")
    p.add_argument("--tol", type=float, default=1e-5, help="message-passing stopping tolerance")
    p.add_argument("--max-iter", type=int, default=500, help="message-passing round cap")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="subvar", description="L-Field variational inference in log-supermodular models")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    ap.add_argument("--strict", action="store_true", help="exit 2 when a solver hits its iteration cap")
    ap.add_argument("--workers", type=int, default=None, help="message-passing threads (default: SUBVAR_THREADS)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="marginals, log-partition bound and MAP sets for a JSON model")
    p.add_argument("model")
    p.add_argument("--method", choices=INFER_METHODS, default="min_norm")
    p.add_argument("--iters", type=int, default=2000, help="Frank-Wolfe iterations / message-passing rounds")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--marginals-csv", default=None)
    p.add_argument("--trace-csv", default=None, help="convergence trace (mp and ep only)")
    p.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("exact", help="brute-force log Z, marginals and minimizers (n <= 20)")
    p.add_argument("model")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("segment", help="foreground/background marginals for a PPM image")
    p.add_argument("image")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--progress", action="store_true", help="show a progress bar")
    _add_segmentation_flags(p, with_weights=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="AUC and trimap AUCs of marginals against a ground-truth PGM")
    p.add_argument("marginals", help="marginals as PGM or CSV")
    p.add_argument("truth", help="ground truth PGM, nonzero = foreground")
    p.add_argument("--roc", action="store_true", help="include ROC points")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="timing CSV on random grid models")
    p.add_argument("--sizes", type=int, nargs="+", default=[3, 4, 5, 6], help="grid side lengths")
    p.add_argument("--methods", nargs="+", choices=BENCH_METHODS, default=list(BENCH_METHODS))
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="rank weight settings by mean trimap AUC")
    p.add_argument("image")
    p.add_argument("truth")
    p.add_argument("--thetas", type=float, nargs="+", default=list(THETAS))
    p.add_argument("--alphas", type=float, nargs="+", default=list(ALPHAS))
    p.add_argument("--betas", type=float, nargs="+", default=list(BETAS))
    p.add_argument("--gammas", type=float, nargs="+", default=list(GAMMAS))
    p.add_argument("--top", type=int, default=10, help="rows to report (0 = all)")
    p.add_argument("--out", default=None)
    _add_segmentation_flags(p, with_weights=False)
    p.set_defaults(func=cmd_sweep)
    return ap


def cli_main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"subvar: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ModelFormatError, GroundSetError, ProblemTooLargeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, NotConvergedError) as e:
        print(f"Solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        # pydantic validation of the segmentation flags lands here.
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(cli_main())
