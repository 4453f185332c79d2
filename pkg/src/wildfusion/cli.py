"""Command-line pipeline: ``wildfusion {synth,label,train,eval,plan,export}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from . import pipeline
from .errors import ConfigError, FormatError, InputError, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _xy(text: str):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from exc
    return (x, y)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wildfusion", description="Multimodal implicit mapping pipeline on synthetic scenes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="TOML config file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="override the stage's seed")
        return sp

    sp = add("synth", "generate a scene and its multimodal dataset")
    sp.add_argument("--out", required=True)
    sp = add("label", "label every frame of a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp = add("train", "fit the field on the train split")
    sp.add_argument("--data", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    sp = add("eval", "evaluate a checkpoint on the test splits")
    sp.add_argument("--data", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint")
    group.add_argument("--gt-as-prediction", action="store_true", help="score ground truth as the prediction")
    sp = add("plan", "plan a path on the costmap of one frame")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--frame", type=int, required=True)
    sp.add_argument("--start", type=_xy, required=True, help="world x,y (write --start=-1,2 when x is negative)")
    sp.add_argument("--goal", type=_xy, required=True, help="world x,y")
    sp.add_argument("--labels")
    sp.add_argument("--baseline", choices=("full", "semantic", "elevation"), default="full")
    sp.add_argument("--out", required=True)
    sp = add("export", "export field grids as PLY and PGM")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--frame", type=int, required=True)
    sp.add_argument("--labels")
    sp.add_argument("--out", required=True)
    return p


_SEED_KEY = {"synth": ("scene.seed", "dataset.seed"), "train": ("train.seed",), "eval": ("eval.seed",)}


def _load(args):
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        keys = _SEED_KEY.get(args.command)
        if not keys:
            raise UsageError(f"--seed has no effect on '{args.command}'")
        for key in keys:
            cfg[key] = args.seed
    return cfg


def _run(args) -> None:
    cfg = _load(args)
    out = sys.stdout
    if args.command == "synth":
        m = pipeline.run_synth(cfg, args.out)
        counts = {s: len(m.split_ids(s)) for s in ("train", "val", "test-seen", "test-unseen")}
        print(f"wrote {m.frame_count} frames to {args.out}: {counts}", file=out)
    elif args.command == "label":
        scores = pipeline.run_label(cfg, args.data, args.out)
        print(f"labeled {len(scores)} frames into {args.out}", file=out)
    elif args.command == "train":
        result, digest = pipeline.run_train(cfg, args.data, args.labels, args.out)
        print(f"best step {result.best_step}; checkpoint sha256 {digest}", file=out)
    elif args.command == "eval":
        reports = pipeline.run_eval(cfg, args.data, args.labels, args.out, args.checkpoint, args.gt_as_prediction)
        for name, rep in reports.items():
            sem = rep.semantic["accuracy"] if rep.semantic else float("nan")
            geo = rep.geometry["chamfer"] if rep.geometry else float("nan")
            print(f"{name}: semantic accuracy {sem:.4f}, chamfer {geo:.4f}, n={rep.n_samples_used}", file=out)
    elif args.command == "plan":
        res = pipeline.run_plan(cfg, args.data, args.checkpoint, args.frame, args.start, args.goal, args.out,
                                args.labels, args.baseline)
        if res.path:
            print(f"path of {len(res.path)} cells, cost {res.path.total_cost:.4f}", file=out)
        else:
            print("NO_PATH", file=out)
    elif args.command == "export":
        info = pipeline.run_export(cfg, args.data, args.checkpoint, args.frame, args.out, args.labels)
        print(f"exported {info['points']} surface points; slice z={info['z_slice']:.3f}", file=out)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("wildfusion: a subcommand is required (synth, label, train, eval, plan, export)")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        _run(args)
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
