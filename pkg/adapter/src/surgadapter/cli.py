"""Command-line entry points: `adapter serve` and `adapter emit-config`."""

from __future__ import annotations

import argparse
import sys

from .backends import BACKENDS, AdapterConfig
from .errors import AdapterError
from .finetune import FinetuneSpec, emit_finetune_config
from .server import serve


def cmd_serve(args) -> int:
    config = AdapterConfig(
        backend=args.backend,
        checkpoint=args.checkpoint,
        device=args.device,
        gt_dir=args.gt_dir,
        stub_dir=args.stub_dir,
    )
    serve(config, host=args.host, port=args.port)
    return 0


def cmd_emit_config(args) -> int:
    spec = FinetuneSpec(
        checkpoint_interval=args.checkpoint_interval,
        base_lr=args.base_lr,
        vision_lr=args.vision_lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
    )
    emit_finetune_config(spec, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the predictor protocol server")
    p.add_argument("--backend", required=True, choices=BACKENDS)
    p.add_argument("--gt-dir", default=None, help="oracle backend: ground-truth root")
    p.add_argument("--stub-dir", default=None, help="stub backend: predictions directory")
    p.add_argument("--checkpoint", default=None, help="sam2 backends: checkpoint path")
    p.add_argument("--device", default="cpu")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("emit-config", help="write a trainer config file")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--checkpoint-interval",
        type=int,
        required=True,
        help="epochs between checkpoints; the published protocol states both 2 and 5, so choose explicitly",
    )
    p.add_argument("--base-lr", type=float, default=5.0e-6)
    p.add_argument("--vision-lr", type=float, default=3.0e-6)
    p.add_argument("--weight-decay", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=1)
    p.set_defaults(func=cmd_emit_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
