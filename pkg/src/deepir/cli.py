"""Command-line front end: retarget, baseline, metrics, compare."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, imgio, metrics as metrics_mod
from .backbone import load_weights
from .errors import DeepirError
from .inversion import InversionConfig
from .pipeline import OPERATORS, RetargetConfig, retarget
from .tensors import Axis, Image


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _axis(value: str) -> Axis:
    if value == "cols":
        return Axis.COLUMNS
    if value == "rows":
        return Axis.ROWS
    raise UsageError(f"axis must be cols or rows, got {value!r}")


def _epsilon(value: str) -> float:
    try:
        eps = float(value)
    except ValueError:
        raise UsageError(f"epsilon must be a number, got {value!r}") from None
    if not 0.0 < eps <= 1.0:
        raise UsageError("epsilon must be in (0,1]")
    return eps


def _alphas(value: str) -> tuple:
    parts = value.split(",")
    if len(parts) != 3:
        raise UsageError("alpha must be three comma-separated values")
    try:
        alphas = tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"bad alpha list {value!r}") from None
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise UsageError("alpha values must lie in [0,1]")
    return alphas


def _limit_threads() -> None:
    cap = os.environ.get("DEEPIR_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        raise UsageError(f"DEEPIR_THREADS must be an integer, got {cap!r}") from None
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass
    try:
        import numba

        numba.set_num_threads(n)
    except (ImportError, ValueError):
        pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepir", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("retarget", help="content-aware retargeting in feature space")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--epsilon", required=True, type=_epsilon)
    p.add_argument("--output", required=True)
    p.add_argument("--axis", default="cols", choices=("cols", "rows"))
    p.add_argument("--alpha", default="0.7,0.8,0.9", type=_alphas)
    p.add_argument("--operator", default="urs", choices=OPERATORS)
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--dump-intermediate", default=None, metavar="DIR")
    p.add_argument("--no-normalize", action="store_true",
                   help="match raw feature vectors instead of unit-normalized ones")
    p.add_argument("--project-nonneg", action="store_true",
                   help="clamp inverted features to be nonnegative")
    p.add_argument("--inversion-iterations", default=None, type=int)

    p = sub.add_parser("baseline", help="pixel-space retargeting operators")
    p.add_argument("--method", required=True, choices=("scl", "cr", "sc", "colrm"))
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", required=True, type=_epsilon)
    p.add_argument("--output", required=True)
    p.add_argument("--axis", default="cols", choices=("cols", "rows"))
    p.add_argument("--offset", default=None, type=int,
                   help="manual crop offset (cr only)")

    p = sub.add_parser("metrics", help="score a retargeted image against its original")
    p.add_argument("--original", required=True)
    p.add_argument("--retargeted", required=True)
    p.add_argument("--weights", required=True)

    p = sub.add_parser("compare", help="run every feature-space operator and score it")
    p.add_argument("--input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--epsilon", required=True, type=_epsilon)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--inversion-iterations", default=None, type=int)
    return parser


def _cmd_retarget(args) -> int:
    image = imgio.load_image(args.input)
    bundle = load_weights(args.weights)
    inversion_kwargs = {"max_iterations": 30, "tolerance": 1e-4,
                        "project_nonneg": args.project_nonneg}
    if args.inversion_iterations is not None:
        inversion_kwargs["max_iterations"] = args.inversion_iterations
    cfg = RetargetConfig(
        epsilon=args.epsilon,
        axis=_axis(args.axis),
        alphas=args.alpha,
        seed=args.seed,
        operator=args.operator,
        inversion=InversionConfig(**inversion_kwargs),
        normalize_features=not args.no_normalize,
        dump_dir=args.dump_intermediate,
    )
    result = retarget(image, bundle, cfg)
    imgio.save_image(args.output, result.image)
    print(json.dumps({"output": args.output, "metrics": result.metrics}))
    return 0


def _cmd_baseline(args) -> int:
    image = imgio.load_image(args.input)
    axis = _axis(args.axis)
    if args.method == "scl":
        out = baselines.scl(image, args.epsilon, axis)
    elif args.method == "cr":
        out, _ = baselines.crop(image, args.epsilon, axis, offset=args.offset)
    elif args.method == "sc":
        out, _ = baselines.seam_carve(image, args.epsilon, axis)
    else:
        out, _ = baselines.column_removal(image, args.epsilon, axis)
    imgio.save_image(args.output, out)
    return 0


def _cmd_metrics(args) -> int:
    bundle = load_weights(args.weights)
    original = imgio.load_image(args.original)
    retargeted = imgio.load_image(args.retargeted)
    print(json.dumps(metrics_mod.evaluate(original, retargeted, bundle)))
    return 0


def _cmd_compare(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = imgio.load_image(args.input)
    bundle = load_weights(args.weights)
    scores = {}
    outputs = [image]
    inversion_kwargs = {"max_iterations": 30, "tolerance": 1e-4}
    if args.inversion_iterations is not None:
        inversion_kwargs["max_iterations"] = args.inversion_iterations
    for operator in OPERATORS:
        cfg = RetargetConfig(
            epsilon=args.epsilon, operator=operator, seed=args.seed,
            inversion=InversionConfig(**inversion_kwargs),
        )
        t0 = time.perf_counter()
        result = retarget(image, bundle, cfg)
        millis = int((time.perf_counter() - t0) * 1000)
        imgio.save_image(out_dir / f"{operator}.png", result.image)
        outputs.append(result.image)
        scores[operator] = {
            "frr": result.metrics["frr"], "fd": result.metrics["fd"], "millis": millis,
        }
    with open(out_dir / "scores.json", "w") as fh:
        json.dump(scores, fh, indent=2)
    imgio.save_image(out_dir / "grid.png", _grid(outputs))
    print(json.dumps(scores))
    return 0


def _grid(images, gap: int = 2) -> Image:
    height = max(im.height for im in images)
    width = sum(im.width for im in images) + gap * (len(images) - 1)
    canvas = np.full((height, width, 3), 255.0, dtype=np.float32)
    x = 0
    for im in images:
        canvas[: im.height, x:x + im.width] = im.data
        x += im.width + gap
    return Image(canvas)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (retarget, baseline, metrics, compare)")
        _limit_threads()
        handler = {
            "retarget": _cmd_retarget,
            "baseline": _cmd_baseline,
            "metrics": _cmd_metrics,
            "compare": _cmd_compare,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DeepirError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
