"""Command-line entry point: ``ferretnet <subcommand> ...``.

Results go to stdout as JSON (or an aligned table with --pretty); logs go
to stderr. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .benchmark import DEFAULT_WARMUP, benchmark_throughput, format_table, resolve_threads
from .corpus import gen_toy_corpus
from .data import DatasetError, PerturbationSpec, eval_transform, load_dataset, load_image, save_png
from .lpd import NeighborhoodSpec, lpd_map, lpd_to_uint8
from .model import build_ferretnet
from .nn import functional as F
from .nn.checkpoint import CheckpointError
from .training import TrainConfig, evaluate, load_trained, model_input, predict_logits, save_trained, train

log = logging.getLogger("ferretnet")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

LPD_HELP = ("LPD maps are written as 8-bit PNG with the affine mapping [-1, 1] -> [0, 255], "
            "rounding halves up.")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _non_negative_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _dropout(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"dropout must be in [0, 1), got {v}")
    return v


def _perturbation(text):
    try:
        return PerturbationSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=_non_negative_int, default=0, help="random seed (default 0)")
    g.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads; falls back to $FERRET_THREADS, then 1")
    g.add_argument("--n", type=int, choices=(3, 5, 7), default=None, help="LPD window size (default 3)")
    g.add_argument("--center", choices=("mask", "exclude", "retain"), default=None,
                   help="centre-pixel strategy (default mask)")
    g.add_argument("--stat", choices=("median", "max", "min", "avg"), default=None,
                   help="window statistic (default median)")
    g.add_argument("--variant", type=str.upper, choices=("S", "B", "L"), default="B",
                   help="FerretNet variant (default B)")
    g.add_argument("--dropout", type=_dropout, default=0.2, help="head dropout probability (default 0.2)")
    g.add_argument("--pretty", action="store_true", help="print a table instead of JSON")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="ferretnet", description="LPD extraction and FerretNet synthetic-image detection.",
                     epilog=LPD_HELP)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("extract-lpd", parents=[common], help="write the LPD map of an image as PNG",
                       description="Compute the LPD map of an image. " + LPD_HELP)
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)

    p = sub.add_parser("gen-corpus", parents=[common], help="generate a toy real/fake corpus")
    p.add_argument("root", type=Path)
    p.add_argument("--count", type=_positive_int, required=True, help="images per class")
    p.add_argument("--size", type=_positive_int, default=256, help="image side length (default 256)")

    p = sub.add_parser("train", parents=[common], help="train FerretNet on root/{real,fake}")
    p.add_argument("data", type=Path)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path; <out>.json gets the manifest")
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--raw-input", action="store_true", help="feed the cropped image instead of its LPD map")

    p = sub.add_parser("eval", parents=[common], help="report ACC/AP of a checkpoint")
    p.add_argument("data", type=Path)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--perturb", type=_perturbation, default=None, metavar="SPEC",
                   help="jpeg:Q, resize:S or rotate[:D] applied before the eval transform")
    p.add_argument("--batch-size", type=_positive_int, default=32)

    p = sub.add_parser("detect", parents=[common], help="probability that one image is synthetic")
    p.add_argument("image", type=Path)
    p.add_argument("--ckpt", type=Path, required=True)

    p = sub.add_parser("bench", parents=[common], help="measure inference throughput")
    p.add_argument("--batch", type=_positive_int, default=128)
    p.add_argument("--secs", type=float, default=10.0)
    p.add_argument("--size", type=_positive_int, default=256, help="input side length (default 256)")
    p.add_argument("--warmup", type=_non_negative_int, default=DEFAULT_WARMUP)
    p.add_argument("--no-lpd", action="store_true", help="time the network alone")

    p = sub.add_parser("gradcheck", parents=[common], help="run the finite-difference gradient checks")
    p.add_argument("--skip-model", action="store_true", help="only check individual layers")
    return parser


def _spec(args, default: NeighborhoodSpec | None = NeighborhoodSpec()) -> NeighborhoodSpec | None:
    if args.n is None and args.center is None and args.stat is None:
        return default
    base = default or NeighborhoodSpec()
    return NeighborhoodSpec(args.n or base.size, args.center or base.center, args.stat or base.statistic)


def _emit(result, pretty: bool):
    if pretty:
        if isinstance(result, list):
            print("\n\n".join(format_table(r) for r in result))
        else:
            print(format_table(result))
    else:
        print(json.dumps(result, sort_keys=True))


def _require_file(path: Path):
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")


def cmd_extract_lpd(args):
    _require_file(args.input)
    spec = _spec(args)
    img = load_image(args.input)
    lpd = lpd_map(img, spec)
    save_png(args.output, lpd_to_uint8(lpd).transpose(1, 2, 0))
    return {"input": str(args.input), "output": str(args.output), "shape": list(lpd.shape), "lpd": spec.to_dict()}


def cmd_gen_corpus(args):
    root = gen_toy_corpus(args.root, args.count, args.size, args.seed)
    return {"root": str(root), "count_per_class": args.count, "size": args.size, "seed": args.seed}


def cmd_train(args):
    dataset = load_dataset(args.data)
    spec = None if args.raw_input else _spec(args)
    config = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed)
    model = build_ferretnet(args.variant, dropout_p=args.dropout, seed=args.seed)
    log.info("training FerretNet-%s on %d images (%s)", args.variant, len(dataset),
             "raw input" if spec is None else f"LPD {spec.to_dict()}")
    result = train(model, dataset, config, spec)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_trained(args.out, model, config, spec, result.history)
    return {"checkpoint": str(args.out), "epochs": config.epochs, "final": result.history[-1],
            "input": "raw" if spec is None else "lpd"}


def _load_for_inference(args):
    _require_file(args.ckpt)
    model, spec = load_trained(args.ckpt)
    if spec is not None and _spec(args, spec) != spec:
        log.warning("ignoring LPD flags: the checkpoint was trained with %s", spec.to_dict())
    return model, spec


def cmd_eval(args):
    model, spec = _load_for_inference(args)
    dataset = load_dataset(args.data)
    return evaluate(model, dataset, spec, args.perturb, seed=args.seed, batch_size=args.batch_size)


def cmd_detect(args):
    _require_file(args.image)
    model, spec = _load_for_inference(args)
    x = model_input(eval_transform(load_image(args.image)), spec)[None]
    logit = float(predict_logits(model, x)[0])
    prob = float(F.sigmoid(np.float64(logit)))
    return {"image": str(args.image), "logit": logit, "probability": prob, "label": "fake" if prob >= 0.5 else "real"}


def cmd_bench(args):
    if not args.secs > 0:
        raise UsageError("--secs must be positive")
    model = build_ferretnet(args.variant, dropout_p=args.dropout, seed=args.seed)
    spec = None if args.no_lpd else _spec(args)
    res = benchmark_throughput(model, (3, args.size, args.size), args.batch, args.secs, spec,
                               warmup=args.warmup, threads=args.threads, seed=args.seed)
    res["variant"] = args.variant
    return res


def cmd_gradcheck(args):
    from .verification import run_gradcheck_suite

    results = run_gradcheck_suite(args.seed, include_model=not args.skip_model)
    failed = [r["name"] for r in results if not r["passed"]]
    if failed:
        raise RuntimeError(f"gradient check failed for: {', '.join(failed)}")
    return results


COMMANDS = {
    "extract-lpd": cmd_extract_lpd,
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "eval": cmd_eval,
    "detect": cmd_detect,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                         format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        print(f"ferretnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with threadpool_limits(limits=threads):
            result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ferretnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetError, CheckpointError, ValueError, RuntimeError) as exc:
        print(f"ferretnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _emit(result, args.pretty)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
