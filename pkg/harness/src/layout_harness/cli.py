"""Command line entry points: train, serve, sample."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .records import SchemaError, load_records
from .sample import DecodeSettings, generate_text
from .train import NonFiniteLoss, TrainerConfig, load_checkpoint, train


def cmd_train(args) -> int:
    records = load_records(args.records)
    cfg = TrainerConfig(
        preset=args.preset, steps=args.steps, batch_size=args.batch_size,
        peak_lr=args.peak_lr, warmup_steps=args.warmup_steps, seed=args.seed,
        vocab_size=args.vocab_size, max_seq_len=args.max_seq_len)
    result = train(records, cfg, args.out_dir)
    first, last = result.losses[0], result.losses[-1]
    print(f"train: {len(records)} records, {cfg.steps} steps, "
          f"loss {first:.4f} -> {last:.4f}, checkpoint {result.checkpoint_dir}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    model, tok = load_checkpoint(args.checkpoint)
    server = serve(model, tok, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(f"serve: listening on http://{host}:{port}/complete", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_sample(args) -> int:
    model, tok = load_checkpoint(args.checkpoint)
    settings = DecodeSettings(
        strategy=args.strategy, k=args.k, temperature=args.temperature,
        max_new_tokens=args.max_new_tokens,
        stop=tuple(args.stop) if args.stop else ())
    print(generate_text(model, tok, args.prompt, settings))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layout-harness",
        description="train and serve a tiny layout completion model")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on training-pair JSONL")
    p.add_argument("--records", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--preset", default="tiny")
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--peak-lr", type=float, default=1e-4)
    p.add_argument("--warmup-steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=512)
    p.add_argument("--max-seq-len", type=int, default=512)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="serve completions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("sample", help="complete one prompt from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--strategy", default="greedy")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-new-tokens", type=int, default=256)
    p.add_argument("--stop", action="append")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, NonFiniteLoss, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
