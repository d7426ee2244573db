"""CLI: ``fusion train``, ``fusion infer``.

``fusion infer`` also accepts positional <bundles> <out> so it can serve
directly as a pipeline segmenter command.
"""

from __future__ import annotations

import argparse
import json
import sys

from .model import FusionArchSpec
from .train import TrainConfig, train
from .infer import infer


def cmd_train(args) -> int:
    arch = FusionArchSpec(
        base_width=args.width,
        fusion_stages=tuple(args.fusion_stages),
    )
    config = TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        crop=args.crop,
        seed=args.seed,
    )
    weights = None
    if args.weights:
        with open(args.weights, encoding="utf-8") as f:
            data = json.load(f)
        import torch

        weights = torch.tensor(list(data["weights"].values()), dtype=torch.float32)
    history = train(args.bundles, args.checkpoint, config, arch, weights)
    if history:
        print(f"trained {len(history)} steps, final loss {history[-1]:.4f}")
    else:
        print("saved an untrained checkpoint")
    print(f"checkpoint: {args.checkpoint}")
    return 0


def cmd_infer(args) -> int:
    written = infer(args.checkpoint, args.bundles, args.out)
    print(f"wrote {len(written)} prediction rasters to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusion", description="Attention-fusion segmentation over BEV raster bundles."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the network to a bundle directory")
    p.add_argument("--bundles", required=True)
    p.add_argument("--checkpoint", required=True, help="output checkpoint file")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--crop", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=16, help="base channel width")
    p.add_argument("--fusion-stages", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--weights", help="weights.json with per-class loss weights")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write prediction rasters for a bundle directory")
    p.add_argument("bundles", nargs="?", help="bundle directory (positional for pipeline use)")
    p.add_argument("out", nargs="?", help="output directory")
    p.add_argument("--bundles", dest="bundles_flag")
    p.add_argument("--out", dest="out_flag")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "infer":
        args.bundles = args.bundles_flag or args.bundles
        args.out = args.out_flag or args.out
        if not args.bundles or not args.out:
            print("error: infer needs a bundle directory and an output directory", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
