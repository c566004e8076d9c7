"""Command-line front end: texclass {synth,train,classify,eval,bench}.

Every command exits 0 on success. Bad arguments exit 2 (argparse usage
errors); any failure while running exits 1 with a single ``texclass: error:``
line on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .bench import load_plan, report_csv as bench_csv, run_plan
from .classify import FORMAT_VERSION, classify_image, load_model, save_model, train_models
from .descriptors import INVALID, DescriptorConfig, PartTable, default_workers, part_planes
from .evaluate import confusion, report_csv, report_text
from .glcm import GlcmConfig, GlcmModelSet, glcm_train
from .raster import (Raster, load_mask, load_pgm, load_raw, read_rects, save_mask, save_pgm,
                     write_rects)
from .synth import RecipeError, build_corpus, load_recipe

TD_CHOICES = ("lbp", "lbpriu", "var", "wld", "lbpriu_var", "wld_var", "glcm")


class UsageError(Exception):
    pass


def _scale(text: str) -> tuple[int, float]:
    try:
        p, r = text.split(",")
        P, R = int(p), float(r)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected P,R (e.g. 8,1), got {text!r}") from None
    return P, (int(R) if R.is_integer() else R)


def _add_image_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("image", help="input PGM (or raw file with --raw)")
    p.add_argument("--raw", action="store_true", help="input is headerless grayscale")
    p.add_argument("--width", type=int, help="raw image width")
    p.add_argument("--height", type=int, help="raw image height")
    p.add_argument("--depth", type=int, choices=(8, 16), default=8, help="raw bit depth")


def _read_image(args) -> Raster:
    if args.raw:
        if not args.width or not args.height:
            raise UsageError("--raw needs --width and --height")
        return load_raw(args.image, args.width, args.height, args.depth)
    return load_pgm(args.image)


def _workers(args) -> int:
    return args.workers if args.workers else default_workers()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texclass",
                                     description="Texture-descriptor land-cover classification")
    parser.add_argument("--version", action="version",
                        version=f"texclass {__version__} (model format_version {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic corpus recipe to PGM")
    p.add_argument("recipe", help="bundled recipe name or path to a JSON recipe")
    p.add_argument("out_prefix", help="writes PREFIX.pgm, PREFIX_mask.pgm, PREFIX_train.txt")
    p.add_argument("--seed", type=int, help="override the recipe's first seed")
    p.add_argument("--size", type=int, help="square output size instead of the recipe size")

    p = sub.add_parser("train", help="build class models from training areas")
    _add_image_args(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--rects", help="text file of 'class_id x y w h' lines")
    src.add_argument("--mask", help="8-bit PGM of training class ids (0 = unused)")
    p.add_argument("--td", choices=TD_CHOICES, default="wld", help="texture descriptor")
    p.add_argument("--scale", type=_scale, action="append",
                   help="P,R sampling scale; repeat for multi-scale (default 8,1)")
    p.add_argument("--window", type=int, default=40, help="classification window side W")
    p.add_argument("--var-bins", type=int, default=16)
    p.add_argument("--glcm-window", type=int, default=7)
    p.add_argument("--glcm-levels", type=int, default=32)
    p.add_argument("--names", help="comma-separated class names in id order")
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", required=True, help="model file (JSON)")

    p = sub.add_parser("classify", help="label every pixel of an image")
    _add_image_args(p)
    p.add_argument("model")
    path = p.add_mutually_exclusive_group()
    path.add_argument("--fast", dest="naive", action="store_false", help="cached path (default)")
    path.add_argument("--naive", dest="naive", action="store_true",
                      help="rebuild every window histogram from pixels")
    p.add_argument("--workers", type=int)
    p.add_argument("--dump-codes", metavar="PREFIX",
                   help="also write each code plane as PREFIX_partN.pgm")
    p.add_argument("-o", "--output", required=True, help="output label mask (PGM)")

    p = sub.add_parser("eval", help="confusion matrix, accuracy and kappa")
    p.add_argument("predicted")
    p.add_argument("reference")
    p.add_argument("--exclude", help="rects file of areas left out of scoring")
    p.add_argument("--csv", help="write the CSV report here")
    p.add_argument("-o", "--output", help="write the text report here instead of stdout")

    p = sub.add_parser("bench", help="time naive vs fast classification")
    p.add_argument("plan", help="JSON benchmark plan")
    p.add_argument("-o", "--output", required=True, help="CSV report")
    p.add_argument("--quiet", action="store_true")
    return parser


def cmd_synth(args) -> None:
    try:
        recipe = load_recipe(args.recipe)
    except RecipeError as exc:
        raise UsageError(str(exc)) from None
    corpus = build_corpus(recipe, args.seed, args.size)
    save_pgm(corpus.raster, f"{args.out_prefix}.pgm")
    save_mask(corpus.mask, f"{args.out_prefix}_mask.pgm")
    write_rects(f"{args.out_prefix}_train.txt", corpus.training)


def _names(text: str | None) -> dict[int, str]:
    if not text:
        return {}
    return {k + 1: n.strip() for k, n in enumerate(text.split(","))}


def cmd_train(args) -> None:
    raster = _read_image(args)
    training = load_mask(args.mask) if args.mask else read_rects(args.rects)
    names = _names(args.names)
    if args.td == "glcm":
        if args.mask:
            raise UsageError("glcm training takes --rects")
        by_class: dict[int, list] = {}
        for cid, r in training:
            by_class.setdefault(cid, []).append(r)
        cfg = GlcmConfig(window=args.glcm_window, levels=args.glcm_levels)
        models = glcm_train(raster, by_class, cfg, names, _workers(args))
    else:
        config = DescriptorConfig(args.td.upper(), tuple(args.scale or [(8, 1)]),
                                  var_bins=args.var_bins)
        models = train_models(raster, training, config, args.window, names, _workers(args))
    save_model(models, args.output)


def _dump_codes(raster: Raster, models, prefix: str, workers: int) -> None:
    if isinstance(models, GlcmModelSet):
        raise UsageError("--dump-codes needs a histogram model")
    planes = part_planes(raster, PartTable(models.config), workers)
    top = raster.maxval
    for i, p in enumerate(planes):
        img = np.clip(np.where(p == INVALID, 0, p), 0, top)
        save_pgm(Raster(img, raster.depth), f"{prefix}_part{i}.pgm")


def cmd_classify(args) -> None:
    raster = _read_image(args)
    models = load_model(args.model)
    workers = _workers(args)
    mask = classify_image(raster, models, naive=args.naive, workers=workers)
    save_mask(mask, args.output)
    if args.dump_codes:
        _dump_codes(raster, models, args.dump_codes, workers)


def cmd_eval(args) -> None:
    exclude = [r for _, r in read_rects(args.exclude)] if args.exclude else []
    m = confusion(load_mask(args.predicted), load_mask(args.reference), exclude)
    text = report_text(m)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report_csv(m))


def cmd_bench(args) -> None:
    plan = load_plan(args.plan)
    progress = None if args.quiet else (lambda s: print(s, file=sys.stderr, flush=True))
    rows = run_plan(plan, progress)
    with open(args.output, "w") as fh:
        fh.write(bench_csv(rows))
    bad = [r for r in rows if not r.equivalent]
    if bad:
        c = bad[0].condition
        raise ValueError(f"{len(bad)} condition(s) failed the equivalence check; first: "
                         f"{c.kind} {c.scale_text}: {bad[0].detail}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "classify": cmd_classify,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if isinstance(exc, OSError) and exc.filename:
            msg = f"{exc.strerror}: {os.fspath(exc.filename)}"
        print(f"texclass: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
