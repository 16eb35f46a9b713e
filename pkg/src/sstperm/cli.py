"""Command-line entry point: ``sstperm <subcommand> [options]``.

The default seed for ``simulate`` comes from ``SSTPERM_SEED`` when set. A
JSON config file given with ``--config`` supplies defaults for any option;
flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .analysis import oracle_checks, rounds_for_epsilon, sign_distribution
from .errors import SstError
from .masking import MaskedCipher, apply_bits, apply_bits_fast_many, decompose_to_riffle_rounds, BitPermutation
from .randomness import BitSource, parse_key_hex
from .rules import RuleKind
from .sampler import Scheme, ksa_double_star
from .shuffles import ShuffleKind
from .simulate import TrialConfig, reports_to_csv, run_trials


def _default_seed() -> int:
    return int(os.environ.get("SSTPERM_SEED", "0"))


def cmd_shuffle(args) -> int:
    scheme = Scheme.parse(args.scheme)
    if args.system_random:
        src = BitSource.system()
    elif args.key_hex:
        src = BitSource.from_key(parse_key_hex(args.key_hex), args.label)
    else:
        print("shuffle: one of --key-hex or --system-random is required", file=sys.stderr)
        return 2
    res = ksa_double_star(scheme.kind, scheme.rule, args.n, src, min_steps=args.min_steps)
    if args.emit == "deck":
        print(res.deck.to_line())
    else:
        out = res.to_dict()
        out["config"] = {"n": args.n, "scheme": scheme.label, "min_steps": args.min_steps,
                         "source": "system" if args.system_random else "key", "label": args.label}
        print(json.dumps(out))
    return 0


def cmd_simulate(args) -> int:
    cfg = TrialConfig(args.kind, args.rule, args.n, args.trials, args.seed, args.workers)
    rep = run_trials(cfg)
    if args.out == "json":
        print(rep.to_json(timing=args.timing))
    else:
        sys.stdout.write(reports_to_csv([rep]))
    return 0


def cmd_advantage(args) -> int:
    ts = list(args.t) if args.t else [args.n + k for k in args.k]
    digits = 40 if args.full_precision else 16
    if args.out == "json":
        rows = []
        for t in ts:
            law = sign_distribution(args.n, t)
            rows.append({"n": args.n, "t": t, "k": t - args.n, "plus": law.plus_decimal(40),
                         "minus": law.minus_decimal(40), "log2_epsilon": law.log2_advantage})
        print(json.dumps({"config": {"n": args.n, "t": ts}, "rows": rows}))
        return 0
    print("k,t,plus,minus,log2_epsilon")
    for t in ts:
        law = sign_distribution(args.n, t)
        eps = f"{law.log2_advantage:.17g}" if args.full_precision else f"{law.log2_advantage:.6g}"
        print(f"{t - args.n},{t},{law.plus_decimal(digits)},{law.minus_decimal(digits)},{eps}")
    return 0


def cmd_plan(args) -> int:
    print(rounds_for_epsilon(args.n, args.epsilon))
    return 0


def cmd_oracle(args) -> int:
    checks = oracle_checks(tuple(args.n), args.tail, args.tolerance)
    bad = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        bad += not c.passed
        print(f"{status} {c.kind.value}+{c.rule.value} n={c.n} deviation={c.deviation:.3e} "
              f"bound_violations={c.bound_violations} steps={c.steps}")
    print(f"{len(checks) - bad}/{len(checks)} checks passed")
    return 1 if bad else 0


def cmd_mask(args) -> int:
    mc = MaskedCipher(parse_key_hex(args.key_hex), args.block_bits, args.transform)
    with open(args.infile, "rb") as fh:
        data = fh.read()
    if len(data) % mc.block_bytes:
        print(f"mask: input is not a whole number of {mc.block_bytes}-byte blocks", file=sys.stderr)
        return 1
    out = mc.encrypt(data) if args.direction == "encrypt" else mc.decrypt(data)
    with open(args.outfile, "wb") as fh:
        fh.write(out)
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    nbytes = args.block_bits // 8
    perm = BitPermutation(rng.permutation(args.block_bits))
    dec = decompose_to_riffle_rounds(perm)
    blocks = rng.integers(0, 256, size=(args.blocks, nbytes), dtype=np.uint8)
    raw = [row.tobytes() for row in blocks]
    t0 = time.perf_counter()
    for b in raw:
        apply_bits(perm, b)
    slow = time.perf_counter() - t0
    t0 = time.perf_counter()
    apply_bits_fast_many(dec, blocks)
    fast = time.perf_counter() - t0
    print(json.dumps({
        "block_bits": args.block_bits,
        "blocks": args.blocks,
        "slow_blocks_per_sec": args.blocks / slow,
        "fast_blocks_per_sec": args.blocks / fast,
        "speedup": slow / fast,
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sstperm", description="Perfect-sampling permutations and SST tools.")
    p.add_argument("--config", help="JSON file with default option values")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("shuffle", help="sample one permutation")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--scheme", default="riffle", choices=[x.label for x in Scheme])
    s.add_argument("--key-hex")
    s.add_argument("--system-random", action="store_true")
    s.add_argument("--label", type=int, default=0)
    s.add_argument("--min-steps", type=int, default=0)
    s.add_argument("--emit", choices=["deck", "json"], default="deck")
    s.set_defaults(func=cmd_shuffle)

    s = sub.add_parser("simulate", help="Monte-Carlo statistics of the stopping time")
    s.add_argument("--kind", required=True, choices=[k.value for k in ShuffleKind])
    s.add_argument("--rule", required=True, choices=[r.value for r in RuleKind])
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", choices=["csv", "json"], default="csv")
    s.add_argument("--timing", action="store_true", help="include wall time in JSON")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("advantage", help="exact sign-distinguisher law after t CTRT steps")
    s.add_argument("--n", type=int, default=256)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--t", type=int, nargs="+")
    g.add_argument("--k", type=int, nargs="+", help="steps beyond n")
    s.add_argument("--out", choices=["csv", "json"], default="csv")
    s.add_argument("--full-precision", action="store_true")
    s.set_defaults(func=cmd_advantage)

    s = sub.add_parser("plan", help="RTRT rounds for a deck-probability tolerance")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("oracle", help="exact strong-stationarity checks")
    s.add_argument("--n", type=int, nargs="+", default=[3, 4])
    s.add_argument("--tail", type=float, default=1e-6)
    s.add_argument("--tolerance", type=float, default=1e-10)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("mask", help="encrypt or decrypt a file block by block")
    s.add_argument("direction", choices=["encrypt", "decrypt"])
    s.add_argument("--key-hex", required=True)
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--out", dest="outfile", required=True)
    s.add_argument("--block-bits", type=int, default=128)
    s.add_argument("--transform", choices=["xor", "identity"], default="xor")
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("bench", help="slow vs fast bit permutation throughput")
    s.add_argument("--block-bits", type=int, default=128)
    s.add_argument("--blocks", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        with open(pre.config) as fh:
            conf = json.load(fh)
        # defaults from the file; explicit flags still override them
        for action in parser._subparsers._group_actions:
            for name, sp in action.choices.items():
                section = conf.get(name, {})
                known = {a.dest for a in sp._actions}
                unknown = set(section) - known
                if unknown:
                    parser.error(f"unknown config keys for {name}: {sorted(unknown)}")
                sp.set_defaults(**section)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = _apply_config(parser, argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if getattr(args, "seed", 0) is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except SstError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
