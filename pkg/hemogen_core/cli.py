# coding=utf-8
"""
Command line of hemogen.

    build-db               masks dir -> shape database + stats
    stats                  summary of a database or a masks dir
    generate               synthetic masks + JSON sidecars
    eval dice|ap|instances|adhesion
    compare-distribution   adhesion of two mask dirs, one-sided test
    config-help            every config item and its meaning

Exit codes: 0 ok, 1 invalid input or config, 2 I/O error, 3 internal error
(an error snapshot is dumped to error_dump/).
"""
import argparse
import sys

from configuration import Config
from utils.util import dump_error_snapshot, parse_cli_value

from . import CONSTS
from .core import HemogenApp
from .errors import HemogenError
from .shares import logger


def _rgb_arg(text):
    parts = text.replace("(", "").replace(")", "").split(",")
    try:
        rgb = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected R,G,B, got {text!r}")
    if len(rgb) != 3:
        raise argparse.ArgumentTypeError(f"expected R,G,B, got {text!r}")
    return rgb


def _set_arg(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), parse_cli_value(value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="config file, a python module like config.py or a json file")
    common.add_argument(
        "--set", dest="overrides", action="append", type=_set_arg, default=[], metavar="KEY=VALUE",
        help="override any config item, dotted keys for groups (sampler.cell_size=40); repeatable",
    )
    common.add_argument("-v", "--verbose", action="count", default=0, help="more output, repeatable")
    common.add_argument("-q", "--quiet", action="count", default=0, help="less output, repeatable")
    common.add_argument("--parallelism", type=int, help=f"parallel jobs (default ${CONSTS.ENV_THREADS} or 1)")

    parser = argparse.ArgumentParser(prog=CONSTS.__PROJECT__, description="synthetic blood cell instance masks")
    parser.add_argument("--version", action="version", version=f"{CONSTS.__PROJECT__} {CONSTS.__VERSION__}")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    p = commands.add_parser("build-db", parents=[common], help="build the shape database from instance masks")
    p.add_argument("masks_dir", nargs="?", help="directory of PNG masks (config: input_dir)")
    p.add_argument("--background", type=_rgb_arg, help="background color R,G,B of the masks (default: most frequent)")
    p.add_argument("-o", "--out", help="database file (config: db_path)")
    p.add_argument("--keep-going", action="store_true", default=None, help="skip invalid masks instead of failing")
    p.set_defaults(handler=cmd_build_db)

    p = commands.add_parser("stats", parents=[common], help="summary of a shape database or a masks directory")
    p.add_argument("source", nargs="?", help="database file or masks directory (config: db_path)")
    p.add_argument("--background", type=_rgb_arg, help="background color R,G,B of the masks")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(handler=cmd_stats)

    p = commands.add_parser("generate", parents=[common], help="generate synthetic masks")
    p.add_argument("--db", help="shape database (config: db_path)")
    p.add_argument("--count", type=int, help="number of masks (config: batch_count)")
    p.add_argument("--cells", type=int, help="fixed cells per mask instead of the normal draw (config: count)")
    p.add_argument("--seed", type=int, help="base seed, mask k uses seed + k")
    p.add_argument("--strategy", choices=("adhesion", "uniform-random"))
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out-dir", help="output directory (config: output_dir)")
    p.add_argument("--dump-maps", action="store_true", default=None, help="also write the final probability maps")
    p.add_argument("--no-progress", action="store_true", help="hide the progress bar")
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser("eval", help="evaluate segmentation and detection outputs")
    metrics = p.add_subparsers(dest="metric", metavar="metric")
    metrics.required = True

    m = metrics.add_parser("dice", parents=[common], help="dice score of two binary masks")
    m.add_argument("prediction")
    m.add_argument("target")
    m.add_argument("--background", type=_rgb_arg, help="background color R,G,B of RGB inputs")
    m.add_argument("--out")
    m.set_defaults(handler=cmd_eval_dice)

    m = metrics.add_parser("ap", parents=[common], help="average precision of detections")
    m.add_argument("detections", help="JSON detections [{bbox, score}], or a sidecar")
    m.add_argument("ground_truth", help="JSON boxes, or a sidecar")
    m.add_argument("--iou", type=float, help="IoU threshold (config: iou_threshold)")
    m.add_argument("--out")
    m.set_defaults(handler=cmd_eval_ap)

    m = metrics.add_parser("instances", parents=[common], help="instances from objectness and contour maps")
    m.add_argument("objectness", help="grayscale PNG or .npy float map")
    m.add_argument("contour", help="grayscale PNG or .npy float map")
    m.add_argument("--ground-truth", help="JSON boxes or a sidecar, also reports AP")
    m.add_argument("--objectness-threshold", type=float)
    m.add_argument("--contour-threshold", type=float)
    m.add_argument("--min-blob-size", type=int)
    m.add_argument("--contour-width", type=int)
    m.add_argument("--iou", type=float)
    m.add_argument("--out")
    m.set_defaults(handler=cmd_eval_instances)

    m = metrics.add_parser("adhesion", parents=[common], help="touch fraction, neighbor distances, clusters")
    m.add_argument("masks", nargs="+", help="mask files or directories")
    m.add_argument("--background", type=_rgb_arg)
    m.add_argument("--bins", type=int, help="nearest neighbor histogram bins")
    m.add_argument("--out")
    m.set_defaults(handler=cmd_eval_adhesion)

    p = commands.add_parser(
        "compare-distribution", parents=[common], help="compare the adhesion of two mask directories"
    )
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--names", nargs=2, default=("adhesion", "uniform-random"), metavar=("FIRST", "SECOND"))
    p.add_argument("--background", type=_rgb_arg)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_compare_distribution)

    p = commands.add_parser("config-help", parents=[common], help="list every config item")
    p.set_defaults(handler=cmd_config_help)
    return parser


# explicit flag -> config item
FLAG_KEYS = {
    "parallelism": "parallelism",
    "masks_dir": "input_dir",
    "keep_going": "keep_going",
    "db": "db_path",
    "count": "batch_count",
    "cells": "count",
    "seed": "seed",
    "strategy": "strategy",
    "width": "width",
    "height": "height",
    "out_dir": "output_dir",
    "dump_maps": "dump_maps",
    "iou": "iou_threshold",
    "objectness_threshold": "objectness_threshold",
    "contour_threshold": "contour_threshold",
    "min_blob_size": "min_blob_size",
    "contour_width": "contour_width",
    "bins": "histogram_bins",
    "background": "ingest_background",
}


def build_config(args):
    """defaults < config file < --set < explicit flags"""
    conf = Config(args.config)
    conf.update(dict(args.overrides))
    explicit = {}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            explicit[key] = value
    if args.command == "build-db" and getattr(args, "out", None):
        explicit["db_path"] = args.out
    if getattr(args, "no_progress", False):
        explicit["progress"] = False
    conf.update(explicit)
    conf.verbose_level = max(0, conf.verbose_level + args.verbose - args.quiet)
    return conf


######### handlers #########


def cmd_build_db(app, args):
    app.build_db()
    return CONSTS.EXIT_OK


def cmd_stats(app, args):
    app.emit(app.stats(args.source), args.out)
    return CONSTS.EXIT_OK


def cmd_generate(app, args):
    _, n_failed = app.generate()
    return CONSTS.EXIT_INTERNAL if n_failed else CONSTS.EXIT_OK


def cmd_eval_dice(app, args):
    app.emit(app.eval_dice(args.prediction, args.target), args.out)
    return CONSTS.EXIT_OK


def cmd_eval_ap(app, args):
    app.emit(app.eval_ap(args.detections, args.ground_truth), args.out)
    return CONSTS.EXIT_OK


def cmd_eval_instances(app, args):
    app.emit(app.eval_instances(args.objectness, args.contour, args.ground_truth), args.out)
    return CONSTS.EXIT_OK


def cmd_eval_adhesion(app, args):
    app.emit(app.eval_adhesion(args.masks), args.out)
    return CONSTS.EXIT_OK


def cmd_compare_distribution(app, args):
    app.emit(app.compare_distribution(args.first, args.second, names=args.names), args.out)
    return CONSTS.EXIT_OK


def cmd_config_help(app, args):
    app.conf.help()
    return CONSTS.EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    conf = None
    try:
        conf = build_config(args)
        app = HemogenApp(conf)
        return args.handler(app, args)
    except (HemogenError, ValueError) as e:
        logger.error(e)
        return CONSTS.EXIT_VALIDATION
    except OSError as e:
        logger.error(e)
        return CONSTS.EXIT_IO
    except Exception as e:
        snapshot = dump_error_snapshot(msg=repr(e), config=conf.to_dict() if conf is not None else None)
        logger.error("internal error:", repr(e))
        if snapshot:
            logger.error("error snapshot dumped to", snapshot)
        return CONSTS.EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
