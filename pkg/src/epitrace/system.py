"""Role orchestration: client app, healthcare provider, the two servers, and
the end-to-end simulator.

Dataflow is enforced structurally: server 1 sees blinded elements, DPF keys,
and sealed seeds only; server 2 sees DPF keys and finished shard bytes only;
the provider sees ciphertext only. A diagnosed user who keeps querying gets
no self-alert: their received set drives the query, and their own sent
tokens only matter to contacts.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from . import net, serverdb, tokens as tokens_mod
from .dpf import DpfKey
from .group import GroupElement, TruncationParams
from .net import (M1ClientBlind, M2ServerTransform, M3PirQueryBatch,
                  M4PirAnswerBatch, M5DiagnosisUpload, M6DbSync, Message,
                  WireError)
from .pir import DbLayout, PirAnswer, PirQuery, Shard, membership, pir_query
from .psica import (ClientQueryState, PolicyError, ProtocolError,
                    ServerKeyState, client_blind, client_unblind,
                    server_transform)
from .serverdb import DayStore, LayoutPolicy, build_day, incremental_plan, ingest
from .tokens import ContactLog, Seed, Token, commit, generate


class EpochMismatch(RuntimeError):
    """Server rotated its epoch; the client must flush caches and re-blind."""


def setup(rng, security_bits: int = 128) -> tuple["ServerIdentity", bytes]:
    """Generate the seed-encryption keypair and the public key to publish.

    Re-running is only needed when the configuration changes; a late-joining
    client needs nothing beyond its own seed and this public key.
    """
    if security_bits != 128:
        raise ValueError("only the 128-bit parameter set is supported")
    sk = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    identity = ServerIdentity(sk.private_bytes_raw(), sk.public_key().public_bytes_raw())
    return identity, identity.pk


@dataclass(frozen=True)
class ServerIdentity:
    sk: bytes
    pk: bytes


@dataclass
class AlertResult:
    day: int
    cardinality: int
    alerted: bool

    def __post_init__(self):
        assert self.alerted == (self.cardinality >= 1)


@dataclass
class QueryPolicy:
    min_batch: int = 64
    rate_limit: int = 4


class Server1:
    """Primary server: transform, PIR over published stores, ingest, publish."""

    def __init__(self, identity: ServerIdentity, rng, trunc: TruncationParams,
                 policy: QueryPolicy | None = None,
                 layout_policy: LayoutPolicy | None = None):
        self.identity = identity
        self.rng = rng
        self.trunc = trunc
        self.policy = policy or QueryPolicy()
        self.layout_policy = layout_policy or LayoutPolicy()
        self.key_state = ServerKeyState.new(rng)
        self.stores: dict[int, DayStore] = {}
        self.raw_tokens: dict[int, set[bytes]] = {}
        self.staged: dict[int, list[Token]] = {}
        self.commitments: dict[tuple[str, int], bytes] = {}
        self._rate: dict[tuple[str, int], set[bytes]] = {}

    # -- policy --

    def _check_rate(self, credential: str, day: int, session_id: bytes) -> None:
        seen = self._rate.setdefault((credential, day), set())
        if session_id not in seen and len(seen) >= self.policy.rate_limit:
            raise PolicyError(f"rate limit of {self.policy.rate_limit} queries/day exceeded")
        seen.add(session_id)

    def register_commitment(self, client_id: str, day: int, merkle_root: bytes) -> None:
        self.commitments[(client_id, day)] = merkle_root

    # -- lifecycle --

    def ingest_batch(self, msg: M5DiagnosisUpload, day: int) -> int:
        """Decrypt a provider upload and stage tokens for day's build."""
        batch = ingest(list(msg.payloads), self.identity.sk, day)
        retained = set().union(*self.raw_tokens.values()) if self.raw_tokens else set()
        fresh = [t for t in batch if t.bits not in retained]
        self.staged.setdefault(day, []).extend(fresh)
        return len(fresh)

    def finalize_day(self, day: int, server2_conn) -> DayStore:
        """Build the day store from staged tokens and publish it to server 2."""
        staged = self.staged.pop(day, [])
        store = build_day(staged, self.key_state, self.trunc, self.layout_policy, day=day)
        self.stores[day] = store
        self.raw_tokens[day] = {t.bits for t in staged}
        ack = server2_conn.request(M6DbSync(
            day=day, epoch_id=store.epoch_id,
            n_shards=store.layout.n_shards, bucket_bits=store.layout.bucket_bits,
            slots=store.layout.slots, token_bits=store.layout.token_bits,
            digests=tuple(store.digests()),
            shard_payloads=tuple(s.to_bytes() for s in store.shards),
        ))
        if not isinstance(ack, M6DbSync) or list(ack.digests) != store.digests():
            raise RuntimeError(f"server 2 digest mismatch for day {day}")
        return store

    def prune(self, current_day: int, retention_days: int = serverdb.RETENTION_DAYS) -> None:
        serverdb.prune_retention(self.stores, current_day, retention_days)
        for day in [d for d in self.raw_tokens if d not in self.stores]:
            del self.raw_tokens[day]

    # -- wire handler --

    def handle(self, msg: Message, credential: str = "anon") -> Message:
        if isinstance(msg, M1ClientBlind):
            store = self.stores.get(msg.day)
            if store is None:
                raise WireError(f"no store for day {msg.day}")
            self._check_rate(credential, msg.day, msg.session_id)
            if msg.elements:
                elems = [GroupElement.decode(e) for e in msg.elements]
                out = server_transform(elems, self.key_state, self.rng,
                                       min_batch=self.policy.min_batch)
                replies = tuple(e.encode() for e in out)
            else:
                replies = ()
            lay = store.layout
            return M2ServerTransform(msg.session_id, self.key_state.epoch_id,
                                     lay.n_shards, lay.bucket_bits, lay.slots,
                                     lay.token_bits, replies)
        if isinstance(msg, M3PirQueryBatch):
            return self._answer_pir(msg)
        if isinstance(msg, M5DiagnosisUpload):
            # Receipt: echo the batch id with no payloads.
            self.ingest_batch(msg, self._upload_day)
            return M5DiagnosisUpload(msg.batch_id, ())
        raise WireError(f"server 1 does not accept message type {type(msg).__name__}")

    _upload_day = 0

    def set_upload_day(self, day: int) -> None:
        self._upload_day = day

    def _answer_pir(self, msg: M3PirQueryBatch) -> M4PirAnswerBatch:
        store = self.stores.get(msg.day)
        if store is None:
            raise WireError(f"no store for day {msg.day}")
        state = store.pir_state()
        queries = [PirQuery(sid, DpfKey.from_bytes(kb)) for sid, kb in msg.entries]
        answers = state.answer_batch(queries)
        return M4PirAnswerBatch(msg.session_id, tuple(a.share for a in answers))


class Server2:
    """Second, non-colluding PIR server: receives finished stores, answers PIR.

    Never sees group elements, seeds, or raw tokens; the handler rejects
    those message types outright.
    """

    def __init__(self):
        self.stores: dict[int, DayStore] = {}

    def prune(self, current_day: int, retention_days: int = serverdb.RETENTION_DAYS) -> None:
        serverdb.prune_retention(self.stores, current_day, retention_days)

    def handle(self, msg: Message, credential: str = "anon") -> Message:
        if isinstance(msg, M6DbSync):
            shards = [Shard.from_bytes(p) for p in msg.shard_payloads]
            store = DayStore(msg.day, msg.layout(), shards, msg.epoch_id,
                             token_count=-1)
            self.stores[msg.day] = store
            return M6DbSync(msg.day, msg.epoch_id, msg.n_shards, msg.bucket_bits,
                            msg.slots, msg.token_bits, tuple(store.digests()), ())
        if isinstance(msg, M3PirQueryBatch):
            store = self.stores.get(msg.day)
            if store is None:
                raise WireError(f"no store for day {msg.day}")
            state = store.pir_state()
            queries = [PirQuery(sid, DpfKey.from_bytes(kb)) for sid, kb in msg.entries]
            answers = state.answer_batch(queries)
            return M4PirAnswerBatch(msg.session_id, tuple(a.share for a in answers))
        raise WireError(f"server 2 does not accept message type {type(msg).__name__}")


class Provider:
    """Healthcare provider relay: verify diagnosis, batch, shuffle, forward."""

    def __init__(self, rng):
        self.rng = rng
        self.allowlist: set[str] = set()
        self.batch: list[bytes] = []

    def mark_diagnosed(self, client_id: str) -> None:
        self.allowlist.add(client_id)

    def collect(self, client_id: str, sealed: bytes) -> None:
        if client_id not in self.allowlist:
            raise PermissionError(f"client {client_id} has no verified diagnosis")
        self.batch.append(sealed)

    def forward(self, server1_conn, day: int) -> int:
        """Shuffle and upload the pending batch; returns the batch size."""
        if not self.batch:
            return 0
        self.rng.shuffle(self.batch)
        msg = M5DiagnosisUpload(self.rng.randbytes(16), tuple(self.batch))
        n = len(self.batch)
        self.batch = []
        ack = server1_conn.request(msg)
        if not isinstance(ack, M5DiagnosisUpload) or ack.batch_id != msg.batch_id:
            raise RuntimeError("provider upload was not acknowledged")
        return n


@dataclass
class ClientConfig:
    caching: bool = False
    padding: bool = False
    window_days: int = tokens_mod.WINDOW_DAYS
    slots_per_day: int = tokens_mod.SLOTS_PER_DAY
    submit_commitments: bool = False
    show_count: bool = True


class ClientApp:
    """Per-user state machine: seed, contact log, query cache, alert state."""

    def __init__(self, client_id: str, rng, server_pk: bytes,
                 config: ClientConfig | None = None):
        self.client_id = client_id
        self.rng = rng
        self.server_pk = server_pk
        self.config = config or ClientConfig()
        self.seed = Seed.new(rng)
        self.log = ContactLog(window_days=self.config.window_days)
        self.query_state: ClientQueryState | None = None
        self.last_query_day: int | None = None
        self.alerted_until: int | None = None
        self.commitments: dict[int, bytes] = {}
        self.diagnosed = False
        self._active: dict | None = None

    # -- contact phase --

    def contact_token(self, day: int, slot: int) -> Token:
        return generate(self.seed, day, slot, self.config.slots_per_day)

    def receive(self, token: Token, day: int) -> None:
        self.log.add(token, day)

    # -- diagnosis phase --

    def diagnose(self, provider: Provider, day: int, consent: bool) -> bool:
        """With consent, seal the seed for the server and hand it to the
        provider; without, nothing leaves the phone."""
        self.diagnosed = True
        provider.mark_diagnosed(self.client_id)
        if not consent:
            return False
        sealed = serverdb.seal_seed(self.server_pk, self.seed, day,
                                    self.config.window_days,
                                    self.config.slots_per_day, self.rng)
        provider.collect(self.client_id, sealed)
        return True

    # -- query phase (session driver for net.session) --

    def _current_tokens(self, day: int) -> list[Token]:
        self.log.expire(day)
        seen: set[bytes] = set()
        out = []
        for t, _ in self.log.received:
            if t.bits not in seen:
                seen.add(t.bits)
                out.append(t)
        return out

    def begin_query_run(self, day: int) -> bytes:
        """Start a daily query run: one session id shared by its sessions."""
        session_id = self.rng.randbytes(16)
        if self.query_state is None or not self.config.caching:
            self.query_state = ClientQueryState.new(self.rng)
        self.query_state.expire_cache(day, self.config.window_days)
        self._run = {"session_id": session_id, "day": day}
        return session_id

    def build_blind(self, day: int) -> M1ClientBlind:
        state = self.query_state
        fresh = [t for t in self._current_tokens(self._run["day"])
                 if t.bits not in state.cached_bits]
        if self.config.padding:
            target = self.config.window_days * self.config.slots_per_day
            while len(fresh) < target:
                filler = Token(self.rng.randbytes(16), day, 0)
                if filler.bits not in state.cached_bits:
                    fresh.append(filler)
        elems = client_blind(fresh, state)
        self._active = {"day": day, "fresh": fresh}
        return M1ClientBlind(self._run["session_id"], day,
                             tuple(e.encode() for e in elems))

    def consume_transform(self, m2: M2ServerTransform) -> None:
        state = self.query_state
        if self.config.caching and state.epoch_id is not None \
                and state.epoch_id != m2.epoch_id:
            state.flush_cache()
            raise EpochMismatch("server epoch rotated; cache flushed")
        state.epoch_id = m2.epoch_id
        trunc = TruncationParams(out_bits=m2.token_bits)
        replies = [GroupElement.decode(e) for e in m2.elements]
        values = client_unblind(replies, state, trunc)
        if values:
            state.cached_values.setdefault(self._run["day"], []).extend(values)
            state.cached_bits.update(t.bits for t in self._active["fresh"])
        self._active["layout"] = m2.layout()
        self._active["trunc"] = trunc

    def build_pir(self, day: int):
        """Queries for every live unblinded value; returns (M3a, M3b, finish)."""
        state = self.query_state
        layout: DbLayout = self._active["layout"]
        values = sorted(set(state.all_cached()), key=lambda v: v.value)
        entries1, entries2, remainders = [], [], []
        for v in values:
            q1, q2, rem = pir_query(v, layout, self.rng)
            entries1.append((q1.shard_id, q1.key.to_bytes()))
            entries2.append((q2.shard_id, q2.key.to_bytes()))
            remainders.append(rem)
        session_id = self._run["session_id"]
        m3a = M3PirQueryBatch(session_id, day, tuple(entries1))
        m3b = M3PirQueryBatch(session_id, day, tuple(entries2))

        def finish(m4a: M4PirAnswerBatch, m4b: M4PirAnswerBatch) -> int:
            if len(m4a.shares) != len(values) or len(m4b.shares) != len(values):
                raise ProtocolError("answer count does not match query count")
            return sum(
                membership(PirAnswer(a), PirAnswer(b), rem, layout)
                for a, b, rem in zip(m4a.shares, m4b.shares, remainders)
            )

        return m3a, m3b, finish

    # -- alerts --

    def record_alert(self, day: int, cardinality: int) -> AlertResult:
        if cardinality > 0:
            until = day + self.config.window_days
            self.alerted_until = max(self.alerted_until or 0, until)
        return AlertResult(day, cardinality, cardinality >= 1)

    def currently_alerted(self, day: int) -> bool:
        return self.alerted_until is not None and day < self.alerted_until


def daily_query(app: ClientApp, server1_conn, server2_conn, day: int,
                retention_days: int = serverdb.RETENTION_DAYS) -> tuple[AlertResult, list[net.SessionTranscript]]:
    """Run the day's full query: commitment, incremental plan, per-day PSI-CA.

    Any session failure defers the whole result (no partial alert-negative);
    an epoch rotation mid-run flushes caches and retries once.
    """
    if app.config.submit_commitments and app.log.received:
        commitment = commit(app.log, app.rng)
        app.commitments[day] = commitment.merkle_root
    plan = incremental_plan(app.last_query_day, day, retention_days)
    for attempt in (0, 1):
        app.begin_query_run(day)
        total = 0
        transcripts = []
        try:
            for entry in plan:
                result = net.session(app, server1_conn, server2_conn, entry.day)
                total += result.cardinality
                transcripts.append(result.transcript)
        except EpochMismatch:
            if attempt == 1:
                raise
            continue
        app.last_query_day = day
        return app.record_alert(day, total), transcripts
    raise RuntimeError("unreachable")


# --- Simulation ---


@dataclass
class ScenarioConfig:
    """Scenario knobs; everything has a desk-scale default.

    contacts_per_day is the number of random contact pairs sampled each day;
    diagnoses_per_day clients (never previously diagnosed) are diagnosed at
    the end of each day and consent with probability consent_rate.
    """

    population: int
    days: int
    contacts_per_day: int = 25
    diagnoses_per_day: int = 1
    max_diagnoses: int | None = None
    consent_rate: float = 1.0
    slots_per_day: int = 8
    window_days: int = 14
    retention_days: int = 15
    query_offline_rate: float = 0.0
    caching: bool = False
    padding: bool = False
    min_batch: int = 1
    rate_limit: int = 64
    trunc_bits: int = 74
    submit_commitments: bool = False
    show_count: bool = True
    transport: str = "inproc"

    def validate(self) -> None:
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.days < 1:
            raise ValueError("days must be at least 1")
        if not 0 <= self.consent_rate <= 1 or not 0 <= self.query_offline_rate <= 1:
            raise ValueError("rates must be in [0, 1]")
        if self.slots_per_day < 1 or self.window_days < 1:
            raise ValueError("slots_per_day and window_days must be positive")
        if self.transport not in ("inproc", "tcp"):
            raise ValueError(f"unknown transport {self.transport!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass
class SimWorld:
    """Test-only view of simulation internals (never part of the report body)."""

    clients: list
    server1: "Server1"
    server2: "Server2"
    provider: Provider
    day_token_bits: dict[int, set[bytes]]
    client_bits: dict[tuple[str, int], set[bytes]]  # (client, query day) -> live bits
    plans: dict[tuple[str, int], list[int]]


@dataclass
class Report:
    """Simulation output: deterministic JSONL records plus a human summary.

    Timings never enter the machine-readable body, so reruns with the same
    seed are byte-identical. wire_log and world are test-capture extras.
    """

    seed: int
    records: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    wire_log: list[tuple[str, int, bytes]] = field(default_factory=list)
    world: SimWorld | None = None

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records) + "\n"

    def human_summary(self) -> str:
        queries = [r for r in self.records if r["kind"] == "query"]
        alerts = sum(1 for r in queries if r["alerted"])
        mismatches = sum(1 for r in queries if r.get("expected") is not None
                         and r.get("cardinality") is not None
                         and r["expected"] != r["cardinality"])
        lines = [
            f"seed {self.seed}: {len(queries)} queries, {alerts} alerted, "
            f"{mismatches} ground-truth mismatches",
        ]
        for phase, secs in sorted(self.timings.items()):
            lines.append(f"  {phase}: {secs:.3f}s")
        return "\n".join(lines)


class _Tap:
    """Wire capture shim so tests can inspect every byte each party saw."""

    def __init__(self, inner, label: str, log: list):
        self._inner = inner
        self._label = label
        self._log = log

    def request_raw(self, msg):
        frame, reply_frame, reply = self._inner.request_raw(msg)
        self._log.append((f"->{self._label}", msg.msg_type, frame))
        self._log.append((f"{self._label}->", reply.msg_type, reply_frame))
        return frame, reply_frame, reply

    def request(self, msg):
        return self.request_raw(msg)[2]

    def close(self):
        self._inner.close()


def simulate(config: ScenarioConfig, seed: int, capture_wire: bool = False,
             keep_world: bool = False) -> Report:
    """Drive the whole lifecycle for a synthetic population.

    Deterministic given (config, seed): every source of randomness derives
    from the seed. Ground-truth exposure is computed in plaintext alongside
    each query record.
    """
    config.validate()
    master = random.Random(seed)
    report = Report(seed=seed)
    t_start = time.perf_counter()

    identity, pk = setup(random.Random(master.getrandbits(64)))
    trunc = TruncationParams(out_bits=config.trunc_bits)
    server1 = Server1(identity, random.Random(master.getrandbits(64)), trunc,
                      QueryPolicy(config.min_batch, config.rate_limit))
    server2 = Server2()
    provider = Provider(random.Random(master.getrandbits(64)))

    client_cfg = ClientConfig(
        caching=config.caching, padding=config.padding,
        window_days=config.window_days, slots_per_day=config.slots_per_day,
        submit_commitments=config.submit_commitments, show_count=config.show_count,
    )
    clients = [
        ClientApp(f"client{i:03d}", random.Random(master.getrandbits(64)), pk, client_cfg)
        for i in range(config.population)
    ]

    servers: list = []
    if config.transport == "tcp":
        srv1 = net.FrameServer(("127.0.0.1", 0), server1)
        srv2 = net.FrameServer(("127.0.0.1", 0), server2)
        srv1.serve_background()
        srv2.serve_background()
        servers = [srv1, srv2]
        conn1 = net.TcpConnection("127.0.0.1", srv1.server_address[1])
        conn2 = net.TcpConnection("127.0.0.1", srv2.server_address[1])
        conn_s2_for_s1 = net.TcpConnection("127.0.0.1", srv2.server_address[1])
        conn_provider = net.TcpConnection("127.0.0.1", srv1.server_address[1])
    else:
        conn1 = net.InProcessConnection(server1)
        conn2 = net.InProcessConnection(server2)
        conn_s2_for_s1 = net.InProcessConnection(server2)
        conn_provider = net.InProcessConnection(server1)
    if capture_wire:
        conn1 = _Tap(conn1, "s1", report.wire_log)
        conn2 = _Tap(conn2, "s2", report.wire_log)
        conn_s2_for_s1 = _Tap(conn_s2_for_s1, "s2", report.wire_log)
        conn_provider = _Tap(conn_provider, "s1", report.wire_log)

    # Plaintext ground truth: which token bits entered which day's store.
    day_token_bits: dict[int, set[bytes]] = {}
    all_published: set[bytes] = set()
    client_bits_log: dict[tuple[str, int], set[bytes]] = {}
    plans_log: dict[tuple[str, int], list[int]] = {}
    total_diagnosed = 0
    sim_rng = random.Random(master.getrandbits(64))
    t_phases = {"contacts": 0.0, "build": 0.0, "queries": 0.0}

    for day in range(config.days):
        # Contacts.
        t0 = time.perf_counter()
        for _ in range(config.contacts_per_day):
            a, b = sim_rng.sample(range(config.population), 2)
            slot = sim_rng.randrange(config.slots_per_day)
            ta = clients[a].contact_token(day, slot)
            tb = clients[b].contact_token(day, slot)
            clients[a].receive(tb, day)
            clients[b].receive(ta, day)
        t_phases["contacts"] += time.perf_counter() - t0

        # Diagnoses and upload.
        t0 = time.perf_counter()
        candidates = [c for c in clients if not c.diagnosed]
        n_diag = min(config.diagnoses_per_day, len(candidates))
        if config.max_diagnoses is not None:
            n_diag = min(n_diag, config.max_diagnoses - total_diagnosed)
        diagnosed_today = sim_rng.sample(candidates, n_diag) if n_diag > 0 else []
        total_diagnosed += len(diagnosed_today)
        new_bits: set[bytes] = set()
        for client in diagnosed_today:
            consent = sim_rng.random() < config.consent_rate
            submitted = client.diagnose(provider, day, consent)
            report.records.append({
                "kind": "diagnosis", "day": day, "client": client.client_id,
                "consent": bool(submitted),
            })
            if submitted:
                for t in tokens_mod.regenerate_window(
                        client.seed, day, config.window_days, config.slots_per_day):
                    if t.bits not in all_published:
                        new_bits.add(t.bits)
        server1.set_upload_day(day)
        provider.forward(conn_provider, day)
        day_token_bits[day] = new_bits
        all_published |= new_bits
        server1.finalize_day(day, conn_s2_for_s1)
        t_phases["build"] += time.perf_counter() - t0

        # Queries.
        t0 = time.perf_counter()
        for client in clients:
            if sim_rng.random() < config.query_offline_rate:
                continue
            plan = incremental_plan(client.last_query_day, day, config.retention_days)
            result, transcripts = daily_query(client, conn1, conn2, day,
                                              config.retention_days)
            client_bits = {t.bits for t in client._current_tokens(day)}
            expected = sum(
                len(client_bits & day_token_bits.get(entry.day, set()))
                for entry in plan
            )
            if keep_world:
                client_bits_log[(client.client_id, day)] = client_bits
                plans_log[(client.client_id, day)] = [e.day for e in plan]
            record = {
                "kind": "query", "day": day, "client": client.client_id,
                "alerted": result.alerted,
                "alert_active": client.currently_alerted(day),
                "expected": expected,
                "sessions": len(plan),
                "bytes_sent": sum(t.client_bytes_sent() for t in transcripts),
                "bytes_received": sum(t.client_bytes_received() for t in transcripts),
            }
            if config.show_count:
                record["cardinality"] = result.cardinality
            report.records.append(record)
        t_phases["queries"] += time.perf_counter() - t0

        server1.prune(day, config.retention_days)
        server2.prune(day, config.retention_days)

    for srv in servers:
        srv.shutdown()
    report.timings = {**t_phases, "total": time.perf_counter() - t_start}
    if keep_world:
        report.world = SimWorld(clients, server1, server2, provider,
                                day_token_bits, client_bits_log, plans_log)
    return report
