"""Command line entry point: ``qminimax <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .blocks import build_blocks
from .codec import CodecConfig, CodecError, QuantizedMessage, decode, encode
from .harness import emit_csv, load_config, run_experiment
from .sequence_model import sample_observation


def _read_vector(path) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ")
    values = np.array([float(tok) for tok in text.split()])
    if values.size == 0:
        raise ValueError(f"{path} holds no numbers")
    return values


def _write_vector(values, path) -> None:
    Path(path).write_text("".join(f"{v:.17g}\n" for v in values))


def cmd_blocks(args) -> int:
    blocks = build_blocks(args.epsilon)
    print("k,start,size")
    for k, (j, t) in enumerate(zip(blocks.starts, blocks.sizes), start=1):
        print(f"{k},{j},{t}")
    return 0


def cmd_encode(args) -> int:
    values = _read_vector(args.input)
    if args.sample_seed is not None:
        values = sample_observation(values, args.epsilon, args.sample_seed).values
    cfg = CodecConfig(args.epsilon, args.budget, args.seed, args.m0, args.c0, args.max_codebook_log2)
    msg = encode(values, cfg)
    data = msg.to_bytes()
    Path(args.out).write_bytes(data)
    print(f"wrote {len(data)} bytes ({msg.payload_bits} payload bits, {msg.direction_bits} direction bits)")
    return 0


def cmd_decode(args) -> int:
    msg = QuantizedMessage.from_bytes(Path(args.inp).read_bytes())
    estimate = decode(msg, msg.config(args.max_codebook_log2))
    _write_vector(estimate.coefficients, args.out)
    return 0


def cmd_bounds(args) -> int:
    P = bounds.pinsker_constant(args.m, args.c)
    Q = bounds.insufficient_constant(args.m, args.c)
    V = bounds.solve_variational(args.m, args.c, args.d).value if args.d is not None else None
    regime, upper = "", ""
    if args.epsilon is not None and args.budget is not None:
        bound = bounds.risk_upper_bound(args.epsilon, args.budget, args.m, args.c)
        regime, upper = bound.regime, f"{bound.value:.12g}"
    print("pinsker,insufficient,variational,regime,risk_upper_bound")
    print(f"{P:.12g},{Q:.12g},{'' if V is None else f'{V:.12g}'},{regime},{upper}")
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = args.out or config.out
    if out is None:
        raise ValueError("no output path: pass --out or set out = ... in the config")
    records = run_experiment(config, threads=args.threads)
    emit_csv(records, out)
    print(f"wrote {len(records)} records to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qminimax", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blocks", help="print the block partition for a noise level")
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=cmd_blocks)

    p = sub.add_parser("encode", help="quantize an observed sequence into a bitstream")
    p.add_argument("--input", required=True, help="numbers separated by commas or whitespace")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=0, help="codebook seed")
    p.add_argument("--out", required=True)
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--max-codebook-log2", type=int, default=26)
    p.add_argument(
        "--sample-seed",
        type=int,
        help="treat the input as true coefficients and draw the observation with this seed",
    )
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="rebuild coefficient estimates from a bitstream")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-codebook-log2", type=int, default=26)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bounds", help="risk constants and the closed-form upper bound")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--d", type=float, help="nats per effective coefficient for the variational value")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--budget", type=float)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="run a Monte Carlo risk experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CodecError, ValueError, OSError, bounds.VariationalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
