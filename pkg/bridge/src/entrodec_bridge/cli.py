"""Command line: build a tiny checkpoint, or serve one."""

from __future__ import annotations

import argparse


def _cmd_make_tiny(args) -> int:
    from .tiny import make_tiny_checkpoint

    out = make_tiny_checkpoint(args.out, vocab_size=args.vocab_size,
                               n_positions=args.positions,
                               n_embd=args.embed, n_layer=args.layers,
                               n_head=args.heads, seed=args.seed)
    print(f"wrote checkpoint to {out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .backend import TorchCausalBackend
    from .server import create_app

    backend = TorchCausalBackend(args.model, device=args.device)
    app = create_app(backend)
    print(f"serving {backend.model_id}: vocab={backend.vocab_size} "
          f"eos={backend.eos_token} context={backend.context_limit}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrodec-bridge",
        description="serve a causal LM's next-token distribution over HTTP")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-tiny",
                       help="write a tiny random checkpoint for smoke tests")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=160)
    p.add_argument("--positions", type=int, default=64)
    p.add_argument("--embed", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_make_tiny)

    p = sub.add_parser("serve", help="serve a local checkpoint")
    p.add_argument("--model", required=True,
                   help="path to a transformers causal LM checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
