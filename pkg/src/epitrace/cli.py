"""Command line front end.

Subcommands: keygen, server1, server2, provider, client query, build-db,
simulate, bench. Network roles read a JSON config with host/port settings;
simulate reads a JSON scenario config (see system.ScenarioConfig).
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time

from . import net, serverdb, system
from .group import TruncationParams
from .tokens import ContactLog


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def cmd_keygen(args) -> int:
    rng = random.SystemRandom()
    identity, pk = system.setup(rng)
    out = {"sk": identity.sk.hex(), "pk": pk.hex()}
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _identity_from_keys(path: str) -> system.ServerIdentity:
    keys = _load_json(path)
    return system.ServerIdentity(bytes.fromhex(keys["sk"]), bytes.fromhex(keys["pk"]))


def cmd_server1(args) -> int:
    cfg = _load_json(args.config)
    identity = _identity_from_keys(cfg["keys"])
    trunc = TruncationParams(out_bits=cfg.get("trunc_bits", 74))
    policy = system.QueryPolicy(cfg.get("min_batch", 64), cfg.get("rate_limit", 4))
    server = system.Server1(identity, random.SystemRandom(), trunc, policy)
    for day_dir in cfg.get("day_stores", []):
        store = serverdb.DayStore.load(day_dir)
        server.stores[store.day_received] = store
    addr = (cfg.get("host", "127.0.0.1"), cfg["port1"])
    frame_server = net.FrameServer(addr, server)
    print(f"server1 listening on {addr[0]}:{addr[1]}")
    frame_server.serve_forever()
    return 0


def cmd_server2(args) -> int:
    cfg = _load_json(args.config)
    server = system.Server2()
    addr = (cfg.get("host", "127.0.0.1"), cfg["port2"])
    frame_server = net.FrameServer(addr, server)
    print(f"server2 listening on {addr[0]}:{addr[1]}")
    frame_server.serve_forever()
    return 0


def cmd_provider(args) -> int:
    cfg = _load_json(args.config)
    provider = system.Provider(random.SystemRandom())
    conn = net.TcpConnection(cfg.get("host", "127.0.0.1"), cfg["port1"])
    for entry in cfg.get("uploads", []):
        provider.mark_diagnosed(entry["client_id"])
        with open(entry["sealed"], "rb") as fh:
            provider.collect(entry["client_id"], fh.read())
    n = provider.forward(conn, cfg.get("day", 0))
    print(f"forwarded {n} sealed seeds")
    return 0


def cmd_client_query(args) -> int:
    cfg = _load_json(args.config)
    rng = random.SystemRandom()
    app = system.ClientApp("cli-client", rng, bytes.fromhex(cfg["pk"]),
                           system.ClientConfig(caching=cfg.get("caching", False)))
    app.log = ContactLog.load(args.tokens) if args.tokens else app.log
    app.last_query_day = cfg.get("last_query_day")
    conn1 = net.TcpConnection(cfg.get("host", "127.0.0.1"), cfg["port1"])
    conn2 = net.TcpConnection(cfg.get("host", "127.0.0.1"), cfg["port2"])
    result, transcripts = system.daily_query(app, conn1, conn2, args.day)
    sent = sum(t.client_bytes_sent() for t in transcripts)
    recv = sum(t.client_bytes_received() for t in transcripts)
    print(json.dumps({
        "day": result.day, "cardinality": result.cardinality,
        "alerted": result.alerted, "bytes_sent": sent, "bytes_received": recv,
    }))
    return 0


def cmd_build_db(args) -> int:
    cfg = _load_json(args.config)
    identity = _identity_from_keys(cfg["keys"])
    rng = random.SystemRandom()
    trunc = TruncationParams(out_bits=cfg.get("trunc_bits", 74))
    server = system.Server1(identity, rng, trunc)
    with open(args.payloads, "rb") as fh:
        blob = fh.read()
    width = cfg.get("sealed_len", 100)
    payloads = [blob[i:i + width] for i in range(0, len(blob), width)]
    toks = serverdb.ingest(payloads, identity.sk, args.day)
    store = serverdb.build_day(toks, server.key_state, trunc, day=args.day)
    store.save(args.out)
    print(f"day {args.day}: {store.token_count} tokens, "
          f"{store.layout.n_shards} shards x 2^{store.layout.bucket_bits} buckets, "
          f"{store.layout.slots} slots")
    return 0


def cmd_simulate(args) -> int:
    cfg = system.ScenarioConfig.from_dict(_load_json(args.config))
    report = system.simulate(cfg, args.seed)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.to_jsonl())
    else:
        sys.stdout.write(report.to_jsonl())
    print(report.human_summary(), file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    from . import dpf as dpf_mod
    from .group import Scalar, blind, hash_to_group

    rng = random.Random(args.seed)
    print("group:")
    elems = [hash_to_group(rng.randbytes(16)) for _ in range(256)]
    k = Scalar.random(rng)
    t0 = time.perf_counter()
    for e in elems * 4:
        blind(e, k)
    per = (time.perf_counter() - t0) / (len(elems) * 4)
    print(f"  exponentiation: {per * 1e6:.1f} us")
    print("dpf:")
    for b in (args.domain_bits,):
        spec = dpf_mod.PointSpec(alpha=(1 << b) - 1)
        t0 = time.perf_counter()
        keys = [dpf_mod.dpf_gen(spec, b, rng) for _ in range(args.queries)]
        gen_dt = (time.perf_counter() - t0) / args.queries
        t0 = time.perf_counter()
        for k0, _ in keys:
            dpf_mod.dpf_eval_full(k0)
        eval_dt = (time.perf_counter() - t0) / args.queries
        size = dpf_mod.key_size(b)
        print(f"  b={b}: key {size} B ({size * 8} bits), gen {gen_dt * 1e3:.2f} ms, "
              f"eval_full {eval_dt * 1e3:.2f} ms "
              f"({args.queries} queries: {eval_dt * args.queries:.2f} s/server)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="epitrace")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate the server keypair")
    p.add_argument("--out", help="write keys JSON here instead of stdout")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("server1", help="run the transform + PIR server")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_server1)

    p = sub.add_parser("server2", help="run the second PIR server")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_server2)

    p = sub.add_parser("provider", help="forward sealed seeds to server 1")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_provider)

    p = sub.add_parser("client", help="client operations")
    client_sub = p.add_subparsers(dest="client_command", required=True)
    q = client_sub.add_parser("query", help="run a daily query against the servers")
    q.add_argument("--config", required=True)
    q.add_argument("--day", type=int, required=True)
    q.add_argument("--tokens", help="contact log file (fixed-width records)")
    q.set_defaults(func=cmd_client_query)

    p = sub.add_parser("build-db", help="ingest sealed seeds and build a day store")
    p.add_argument("--config", required=True)
    p.add_argument("--payloads", required=True, help="concatenated sealed seeds")
    p.add_argument("--day", type=int, required=True)
    p.add_argument("--out", required=True, help="output day-store directory")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("simulate", help="run a seeded end-to-end scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", help="write JSONL records here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="measure primitive throughput")
    p.add_argument("--domain-bits", type=int, default=18)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
