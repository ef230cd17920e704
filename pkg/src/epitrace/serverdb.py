"""Server-side database pipeline.

Sealed seeds arrive from the healthcare provider, get decrypted, and the
diagnosed users' sent tokens are regenerated for their infection window. Each
day's tokens are transformed with the epoch exponent, truncated, and packed
into the sharded bucket layout, then the finished day store is published to
the second PIR server. Stores are indexed by the day the server received the
tokens, which is what makes incremental querying sound.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import dataclass

from cryptography.hazmat.primitives.asymmetric.x25519 import (X25519PrivateKey,
                                                              X25519PublicKey)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives import hashes

from .group import TruncationParams, truncate
from .pir import DbLayout, PirServerState, Shard, address, build_shard
from .psica import ServerKeyState
from .tokens import Seed, Token, regenerate_window

logger = logging.getLogger(__name__)

RETENTION_DAYS = 15
DEFAULT_HARD_CAP = 200

_SEAL_INFO = b"epitrace/v1/seed-seal"
_SEAL_PLAINTEXT = struct.Struct("<32sIHH")  # seed, end_day, window, slots_per_day


class SealError(ValueError):
    """Sealed seed payload failed to decrypt or parse."""


def _seal_key(shared: bytes, epk: bytes, server_pk: bytes) -> bytes:
    hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=epk + server_pk,
                info=_SEAL_INFO)
    return hkdf.derive(shared)


def seal_seed(server_pk: bytes, seed: Seed, end_day: int, window: int,
              slots_per_day: int, rng) -> bytes:
    """Encrypt a seed (plus window metadata) to the server's public key.

    Ephemeral X25519 share + ChaCha20-Poly1305; output is a fixed 100-byte
    payload: ephemeral pk (32) || nonce (12) || ciphertext (56).
    """
    esk = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    epk = esk.public_key().public_bytes_raw()
    shared = esk.exchange(X25519PublicKey.from_public_bytes(server_pk))
    key = _seal_key(shared, epk, server_pk)
    nonce = rng.randbytes(12)
    plaintext = _SEAL_PLAINTEXT.pack(seed.data, end_day, window, slots_per_day)
    ct = ChaCha20Poly1305(key).encrypt(nonce, plaintext, epk)
    return epk + nonce + ct


def open_seed(server_sk: bytes, payload: bytes) -> tuple[Seed, int, int, int]:
    """Decrypt a sealed seed; raises SealError on any failure."""
    if len(payload) != 32 + 12 + _SEAL_PLAINTEXT.size + 16:
        raise SealError("sealed seed has wrong length")
    epk, nonce, ct = payload[:32], payload[32:44], payload[44:]
    try:
        sk = X25519PrivateKey.from_private_bytes(server_sk)
        shared = sk.exchange(X25519PublicKey.from_public_bytes(epk))
        key = _seal_key(shared, epk, sk.public_key().public_bytes_raw())
        plaintext = ChaCha20Poly1305(key).decrypt(nonce, ct, epk)
    except Exception as exc:
        raise SealError(f"seed decryption failed: {exc}") from exc
    seed, end_day, window, slots = _SEAL_PLAINTEXT.unpack(plaintext)
    return Seed(seed), end_day, window, slots


def ingest(payloads: list[bytes], server_sk: bytes, day: int) -> list[Token]:
    """Decrypt a provider batch and regenerate every sent token.

    Payloads arrive shuffled by the provider, so ordering carries no patient
    identity. A payload that fails to decrypt is skipped and logged; the
    batch continues. The result is deduplicated by token bits.
    """
    seen: set[bytes] = set()
    out: list[Token] = []
    failures = 0
    for payload in payloads:
        try:
            seed, end_day, window, slots = open_seed(server_sk, payload)
        except SealError as exc:
            failures += 1
            logger.warning("ingest day %d: dropping undecryptable payload (%s)", day, exc)
            continue
        for token in regenerate_window(seed, end_day, window, slots):
            if token.bits not in seen:
                seen.add(token.bits)
                out.append(token)
    if failures:
        logger.warning("ingest day %d: %d of %d payloads dropped", day, failures, len(payloads))
    return out


@dataclass(frozen=True)
class LayoutPolicy:
    """Auto-sizing rule for the day store shape.

    Targets up to 2^target_bucket_bits buckets per shard at a mean load of at
    most mean_load, growing the shard count for big days and shrinking
    bucket_bits for small ones. A bucket whose real load exceeds hard_cap
    fails the build.
    """

    target_bucket_bits: int = 18
    mean_load: float = 4.0
    min_bucket_bits: int = 4
    hard_cap: int = DEFAULT_HARD_CAP

    def choose(self, token_count: int, token_bits: int) -> tuple[int, int]:
        """Return (n_shards, bucket_bits) for a store of token_count tokens."""
        need = max(1.0, token_count / self.mean_load)
        bucket_bits = min(self.target_bucket_bits,
                          max(self.min_bucket_bits, math.ceil(math.log2(need))))
        n_shards = 1
        while token_count / (n_shards << bucket_bits) > self.mean_load:
            n_shards *= 2
        # Keep at least one remainder bit.
        while (n_shards.bit_length() - 1) + bucket_bits >= token_bits:
            if n_shards > 1:
                n_shards //= 2
            else:
                bucket_bits -= 1
        return n_shards, bucket_bits


@dataclass
class DayStore:
    """Immutable published database for one received-day."""

    day_received: int
    layout: DbLayout
    shards: list[Shard]
    epoch_id: bytes
    token_count: int

    def digests(self) -> list[bytes]:
        return [hashlib.sha256(s.to_bytes()).digest() for s in self.shards]

    def pir_state(self) -> PirServerState:
        return PirServerState(self.shards)

    def manifest(self) -> dict:
        return {
            "day": self.day_received,
            "epoch_id": self.epoch_id.hex(),
            "token_count": self.token_count,
            "n_shards": self.layout.n_shards,
            "bucket_bits": self.layout.bucket_bits,
            "slots": self.layout.slots,
            "token_bits": self.layout.token_bits,
            "shard_digests": [d.hex() for d in self.digests()],
        }

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
        for shard in self.shards:
            with open(os.path.join(directory, f"shard-{shard.shard_id:04d}.bin"), "wb") as fh:
                fh.write(shard.to_bytes())

    @classmethod
    def load(cls, directory: str) -> "DayStore":
        with open(os.path.join(directory, "manifest.json")) as fh:
            m = json.load(fh)
        shards = []
        for sid in range(m["n_shards"]):
            with open(os.path.join(directory, f"shard-{sid:04d}.bin"), "rb") as fh:
                shards.append(Shard.from_bytes(fh.read()))
        store = cls(m["day"], shards[0].layout, shards, bytes.fromhex(m["epoch_id"]),
                    m["token_count"])
        if store.manifest()["shard_digests"] != m["shard_digests"]:
            raise ValueError("shard digests do not match manifest")
        return store


def build_day(tokens: list[Token], key: ServerKeyState, trunc: TruncationParams,
              layout_policy: LayoutPolicy | DbLayout | None = None,
              day: int = 0) -> DayStore:
    """Transform, truncate, and bucket one day's ingested tokens.

    slots is fixed at the maximum observed bucket load, so every bucket
    serializes to the same size; pathological skew beyond the policy hard
    cap fails the build instead of overflowing silently.
    """
    bits_list = [t.bits for t in tokens]
    if len(set(bits_list)) != len(bits_list):
        raise ValueError("tokens must be deduplicated before building")
    policy = layout_policy if isinstance(layout_policy, LayoutPolicy) else LayoutPolicy()
    if isinstance(layout_policy, DbLayout):
        n_shards, bucket_bits = layout_policy.n_shards, layout_policy.bucket_bits
        fixed_slots = layout_policy.slots
    else:
        n_shards, bucket_bits = policy.choose(len(tokens), trunc.out_bits)
        fixed_slots = None
    base = DbLayout(n_shards, bucket_bits, 0, trunc.out_bits)
    per_shard: dict[int, dict[int, list[int]]] = {s: {} for s in range(n_shards)}
    max_load = 0
    for t in tokens:
        tt = truncate(key.transform_token(t.bits), trunc)
        shard_id, bucket, rem = address(tt, base)
        bucket_entries = per_shard[shard_id].setdefault(bucket, [])
        bucket_entries.append(rem)
        max_load = max(max_load, len(bucket_entries))
    if max_load > policy.hard_cap:
        raise ValueError(f"max bucket load {max_load} exceeds hard cap {policy.hard_cap}")
    slots = fixed_slots if fixed_slots is not None else max(1, max_load)
    if max_load > slots:
        raise ValueError(f"max bucket load {max_load} exceeds fixed layout slots {slots}")
    layout = base.with_slots(slots)
    shards = [build_shard(sid, day, layout, per_shard[sid]) for sid in range(n_shards)]
    return DayStore(day, layout, shards, key.epoch_id, len(tokens))


def publish(store: DayStore, transport) -> list[bytes]:
    """Push a finished day store to server 2 and verify its digest echo.

    transport.sync_db(...) receives only shard bytes and metadata, never raw
    tokens or seeds. A digest mismatch triggers one republish before failing.
    """
    expected = store.digests()
    for attempt in (0, 1):
        ack = transport.sync_db(
            day=store.day_received,
            epoch_id=store.epoch_id,
            layout=store.layout,
            shard_payloads=[s.to_bytes() for s in store.shards],
        )
        if ack == expected:
            return ack
        logger.warning("publish day %d: digest mismatch on attempt %d", store.day_received, attempt)
    raise RuntimeError(f"server 2 digest mismatch for day {store.day_received}")


@dataclass(frozen=True)
class PlanEntry:
    day: int
    token_rule: str  # "all": query with the client's entire received set


def incremental_plan(client_last_query_day: int | None, current_day: int,
                     retention_days: int = RETENTION_DAYS) -> list[PlanEntry]:
    """Which day stores a client must query to be as covered as a full query.

    A client current through yesterday only needs today's store. Day stores
    are keyed by server-received day, so tokens that arrived before the last
    query cannot newly intersect the client's set; each missed day is checked
    with the client's whole current token set.
    """
    oldest = current_day - retention_days + 1
    if client_last_query_day is None or client_last_query_day < oldest - 1:
        # Never queried, or gap exceeds retention: full retained window.
        return [PlanEntry(d, "all") for d in range(max(0, oldest), current_day + 1)]
    if client_last_query_day > current_day:
        raise ValueError("last query day is in the future")
    return [PlanEntry(d, "all") for d in range(client_last_query_day + 1, current_day + 1)]


def prune_retention(stores: dict[int, DayStore], current_day: int,
                    retention_days: int = RETENTION_DAYS) -> None:
    """Delete day stores older than the retention horizon."""
    cutoff = current_day - retention_days + 1
    for day in [d for d in stores if d < cutoff]:
        del stores[day]
