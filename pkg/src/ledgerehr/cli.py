"""Operator command line: key generation, node start, chain inspection and
verification, deliberate tamper injection for demos, and simulation runs.

Exit codes are a stable contract: 0 success, 1 domain failure (failed
audit, simulation violation), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import secrets
import sys

from . import codec, identity, ledger, netsim, node, store

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ledgerehr",
        description="Permissioned consortium ledger for electronic health records.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("keygen", help="generate an Ed25519 seed file")
    p.add_argument("--out", required=True, help="path for the hex-encoded 32-byte seed")
    p.add_argument("--seed", help="fixed seed as 64 hex chars (deterministic keygen)")

    p = sub.add_parser("start", help="run the node HTTP service")
    p.add_argument(
        "--config",
        default=os.environ.get("LEDGEREHR_CONFIG"),
        help="node config JSON (default: $LEDGEREHR_CONFIG)",
    )

    p = sub.add_parser("inspect", help="print blocks and transactions from a data dir")
    p.add_argument("--data", required=True, help="node data directory")
    p.add_argument("--height", type=int, help="only this block")

    p = sub.add_parser("verify", help="audit the persisted chain")
    p.add_argument("--data", required=True, help="node data directory")
    p.add_argument("--config", help="node config JSON for keys/quorum/genesis")

    p = sub.add_parser("tamper", help="flip one bit in the stored log (TEST TOOL)")
    p.add_argument("--data", required=True, help="node data directory")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--offset", type=int, required=True, help="byte offset inside the frame")
    p.add_argument("--bit", type=int, default=0, help="bit index 0..7")

    p = sub.add_parser("simulate", help="run a scenario file through the net harness")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--deadline", type=int, help="liveness deadline in ticks")
    p.add_argument("--trace-out", help="write the line-delimited trace here")

    return parser


def _cmd_keygen(args: argparse.Namespace) -> int:
    if args.seed is not None:
        try:
            seed = codec.from_hex(args.seed, 32)
        except codec.CodecError as exc:
            print(f"error: --seed: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        seed = secrets.token_bytes(32)
    public, _ = identity.keygen(seed)
    with open(args.out, "w") as fh:
        fh.write(seed.hex() + "\n")
    os.chmod(args.out, 0o600)
    print(f"seed file: {args.out}")
    print(f"public_key: {public.hex()}")
    print(f"identity_id: {identity.identity_id_for(public).hex()}")
    return EXIT_OK


def _cmd_start(args: argparse.Namespace) -> int:
    if not args.config:
        print("error: --config (or LEDGEREHR_CONFIG) is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = node.NodeConfig.from_file(args.config)
    except node.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    import uvicorn

    host, _, port = config.listen.partition(":")
    app = node.create_app(config)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 9301), log_level="info")
    return EXIT_OK


def _load_chain(data_dir: str) -> store.LoadResult:
    return store.BlockLog(os.path.join(data_dir, "chain.log")).load()


def _cmd_inspect(args: argparse.Namespace) -> int:
    result = _load_chain(args.data)
    if not result.blocks:
        print("empty or unreadable chain log", file=sys.stderr)
        return EXIT_FAILURE
    for block in result.blocks:
        if args.height is not None and block.height != args.height:
            continue
        header = block.header
        print(
            f"block height={header.height} hash={ledger.block_hash(header).hex()}"
        )
        print(f"  prev_hash={header.prev_hash.hex()}")
        print(f"  timestamp_ms={header.timestamp_ms} nonce={header.nonce}")
        print(f"  body_root={header.body_root.hex()}")
        print(f"  proposer={header.proposer_id.hex()} signatures={len(block.commit_signatures)}")
        for tx in block.transactions:
            print(
                f"  tx {tx.tx_hash.hex()} method={tx.op_kind.label} "
                f"from={tx.actor_id.hex()} timestamp_ms={tx.timestamp_ms}"
            )
    if result.fault is not None:
        print(
            f"log fault at frame {result.fault.frame_index}: {result.fault.reason}",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    log = store.BlockLog(os.path.join(args.data, "chain.log"))
    quorum = 0
    validator_keys = None
    expected_genesis = None
    mode = ledger.MODE_CONSORTIUM
    if args.config:
        try:
            config = node.NodeConfig.from_file(args.config)
        except node.ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        mode = config.mode
        validator_keys = {
            identity.identity_id_for(v.public_key): v.public_key
            for v in config.validators
        }
        quorum = (
            len(config.validators) // 2 + 1
            if config.mode == ledger.MODE_CONSORTIUM and config.validators
            else 0
        )
        expected_genesis = ledger.make_genesis(
            config.network_name, config.genesis_time_ms
        )
    recovered = store.recover_chain(
        log,
        quorum,
        validator_keys=validator_keys,
        mode=mode,
        expected_genesis=expected_genesis,
    )
    print(recovered.report.describe())
    for violation in recovered.report.violations:
        print(f"  {violation.rule}: {violation.detail}")
    return EXIT_OK if recovered.report.ok else EXIT_FAILURE


def _cmd_tamper(args: argparse.Namespace) -> int:
    path = os.path.join(args.data, "chain.log")
    try:
        old, new = store.tamper_log(path, args.height, args.offset, args.bit)
    except (store.StoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("*** WARNING: the chain log was DELIBERATELY corrupted (test tool) ***")
    print(
        f"flipped bit {args.bit} at height {args.height} offset {args.offset}: "
        f"0x{old:02x} -> 0x{new:02x}"
    )
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        with open(args.scenario) as fh:
            scenario = netsim.Scenario.from_json(fh.read())
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except netsim.InvalidScenario as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    trace = netsim.run_scenario(scenario)
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            fh.write(netsim.render_trace(trace))
    safety = netsim.check_safety(trace)
    liveness = netsim.check_liveness(trace, args.deadline)
    commits = sum(len(c) for c in trace.commit_ticks)
    heights = [chain.height for chain in trace.final_chains]
    print(f"validators={scenario.n_validators} end_tick={trace.end_tick} heights={heights}")
    print(f"workload={len(trace.workload_tx_hashes)} committed-entries={commits}")
    print(f"safety: {'ok' if safety.ok else f'VIOLATION {safety.counterexample}'}")
    print(f"liveness: {liveness.verdict}" + (f" stuck={liveness.stuck}" if liveness.stuck else ""))
    if not safety.ok:
        return EXIT_FAILURE
    if liveness.within_tolerance and not liveness.ok:
        return EXIT_FAILURE
    return EXIT_OK


_COMMANDS = {
    "keygen": _cmd_keygen,
    "start": _cmd_start,
    "inspect": _cmd_inspect,
    "verify": _cmd_verify,
    "tamper": _cmd_tamper,
    "simulate": _cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return _COMMANDS[args.verb](args)


if __name__ == "__main__":
    sys.exit(main())
