"""Two-server PIR over fixed-slot buckets, plus keyword lookup by bucketing.

A transformed token splits into shard bits (sent in the clear), bucket bits
(retrieved obliviously via a DPF key pair), and a remainder that is compared
locally against the reconstructed bucket. Every bucket in a shard serializes
to the same length, so answer sizes reveal nothing about the queried index.

Shard bytes (wire format v1): header <version:u8><day:u32le><shard_id:u16le>
<n_shards:u16le><bucket_bits:u8><slots:u16le><token_bits:u16le>, then
2^bucket_bits buckets of <count:u8> + slots big-endian remainders.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import dpf as dpf_mod
from .dpf import DpfKey, PointSpec
from .group import TransformedToken

SHARD_HEADER = struct.Struct("<BIHHBHH")
SHARD_FORMAT_VERSION = 1


class PirError(ValueError):
    """Layout mismatch or malformed shard/query data."""


class IntegrityError(PirError):
    """Reconstructed bucket is internally inconsistent (count > slots)."""


@dataclass(frozen=True)
class DbLayout:
    """Shape of one day's bucketed database.

    n_shards must be a power of two; addressing consumes log2(n_shards) +
    bucket_bits leading bits of a token and the remainder is what gets
    stored.
    """

    n_shards: int
    bucket_bits: int
    slots: int
    token_bits: int

    def __post_init__(self):
        if self.n_shards < 1 or self.n_shards & (self.n_shards - 1):
            raise PirError("n_shards must be a power of two")
        if not 1 <= self.bucket_bits <= 30:
            raise PirError("bucket_bits out of range")
        if self.slots < 0 or self.slots > 255:
            raise PirError("slots must fit a count byte")
        if self.remainder_bits < 1:
            raise PirError("token_bits too small for this addressing split")

    @property
    def shard_bits(self) -> int:
        return self.n_shards.bit_length() - 1

    @property
    def remainder_bits(self) -> int:
        return self.token_bits - self.shard_bits - self.bucket_bits

    @property
    def remainder_bytes(self) -> int:
        return (self.remainder_bits + 7) // 8

    @property
    def n_buckets(self) -> int:
        return 1 << self.bucket_bits

    @property
    def bucket_bytes(self) -> int:
        return 1 + self.slots * self.remainder_bytes

    def with_slots(self, slots: int) -> "DbLayout":
        return DbLayout(self.n_shards, self.bucket_bits, slots, self.token_bits)


def address(tt: TransformedToken, layout: DbLayout) -> tuple[int, int, int]:
    """Split a transformed token into (shard_id, bucket_index, remainder)."""
    if tt.bits != layout.token_bits:
        raise PirError(f"token has {tt.bits} bits, layout expects {layout.token_bits}")
    rem_bits = layout.remainder_bits
    shard_id = tt.value >> (layout.token_bits - layout.shard_bits) if layout.shard_bits else 0
    bucket = (tt.value >> rem_bits) & (layout.n_buckets - 1)
    remainder = tt.value & ((1 << rem_bits) - 1)
    return shard_id, bucket, remainder


def reconstruct(shard_id: int, bucket: int, remainder: int, layout: DbLayout) -> TransformedToken:
    """Inverse of address(): concatenate the three fields back into a token."""
    value = (shard_id << (layout.bucket_bits + layout.remainder_bits)) \
        | (bucket << layout.remainder_bits) | remainder
    return TransformedToken(value, layout.token_bits)


@dataclass
class Shard:
    """One shard's serialized bucket table plus its layout header."""

    shard_id: int
    day: int
    layout: DbLayout
    buckets: bytes  # n_buckets * bucket_bytes

    def to_bytes(self) -> bytes:
        header = SHARD_HEADER.pack(
            SHARD_FORMAT_VERSION, self.day, self.shard_id, self.layout.n_shards,
            self.layout.bucket_bits, self.layout.slots, self.layout.token_bits,
        )
        return header + self.buckets

    @classmethod
    def from_bytes(cls, data: bytes) -> "Shard":
        if len(data) < SHARD_HEADER.size:
            raise PirError("shard too short")
        version, day, shard_id, n_shards, bucket_bits, slots, token_bits = \
            SHARD_HEADER.unpack_from(data, 0)
        if version != SHARD_FORMAT_VERSION:
            raise PirError(f"unsupported shard format version {version}")
        layout = DbLayout(n_shards, bucket_bits, slots, token_bits)
        body = data[SHARD_HEADER.size:]
        if len(body) != layout.n_buckets * layout.bucket_bytes:
            raise PirError("shard body length does not match layout")
        return cls(shard_id, day, layout, body)

    def bucket_matrix(self) -> np.ndarray:
        return np.frombuffer(self.buckets, dtype=np.uint8).reshape(
            self.layout.n_buckets, self.layout.bucket_bytes)

    def read_bucket(self, index: int) -> bytes:
        w = self.layout.bucket_bytes
        return self.buckets[index * w:(index + 1) * w]


def build_shard(shard_id: int, day: int, layout: DbLayout,
                entries: dict[int, list[int]]) -> Shard:
    """Assemble a shard from {bucket_index: remainders}.

    Remainders are stored sorted; overfull buckets fail the build.
    """
    w = layout.remainder_bytes
    out = bytearray(layout.n_buckets * layout.bucket_bytes)
    for bucket, remainders in entries.items():
        if not 0 <= bucket < layout.n_buckets:
            raise PirError("bucket index out of range")
        if len(remainders) > layout.slots:
            raise PirError(
                f"bucket {bucket} holds {len(remainders)} entries, layout allows {layout.slots}")
        off = bucket * layout.bucket_bytes
        out[off] = len(remainders)
        for i, rem in enumerate(sorted(remainders)):
            out[off + 1 + i * w:off + 1 + (i + 1) * w] = rem.to_bytes(w, "big")
    return Shard(shard_id, day, layout, bytes(out))


def parse_bucket(data: bytes, layout: DbLayout) -> tuple[int, list[int]]:
    """Decode one bucket into (count, occupied remainders)."""
    if len(data) != layout.bucket_bytes:
        raise PirError("bucket length mismatch")
    count = data[0]
    if count > layout.slots:
        raise IntegrityError(f"bucket count {count} exceeds {layout.slots} slots")
    w = layout.remainder_bytes
    rems = [int.from_bytes(data[1 + i * w:1 + (i + 1) * w], "big") for i in range(count)]
    return count, rems


@dataclass(frozen=True)
class PirQuery:
    shard_id: int
    key: DpfKey


@dataclass(frozen=True)
class PirAnswer:
    share: bytes


def pir_query(tt: TransformedToken, layout: DbLayout, rng,
              gen=dpf_mod.dpf_gen) -> tuple[PirQuery, PirQuery, int]:
    """Build the two per-server queries for one token.

    Both queries carry the same clear shard id; the bucket index is hidden
    inside the DPF key pair. The remainder stays with the client. `gen` may
    be swapped for dpf.naive_gen to run against the sharing oracle.
    """
    shard_id, bucket, remainder = address(tt, layout)
    k0, k1 = gen(PointSpec(bucket, beta=1, out_bits=1), layout.bucket_bits, rng)
    return PirQuery(shard_id, k0), PirQuery(shard_id, k1), remainder


def pir_answer(query: PirQuery, shard: Shard) -> PirAnswer:
    """One server's share: XOR of the buckets selected by its expanded key."""
    layout = shard.layout
    if query.key.domain_bits != layout.bucket_bits:
        raise PirError("query key domain does not match shard bucket count")
    if query.shard_id != shard.shard_id:
        raise PirError("query addressed to a different shard")
    bits = dpf_mod.eval_full(query.key)
    selected = shard.bucket_matrix()[bits.view(bool)]
    if selected.shape[0] == 0:
        return PirAnswer(bytes(layout.bucket_bytes))
    return PirAnswer(np.bitwise_xor.reduce(selected, axis=0).tobytes())


def membership(answer1: PirAnswer, answer2: PirAnswer, remainder: int,
               layout: DbLayout) -> bool:
    """Reconstruct the bucket from the two shares and test the remainder."""
    if len(answer1.share) != len(answer2.share):
        raise PirError("answer shares differ in length")
    if len(answer1.share) != layout.bucket_bytes:
        raise PirError("answer length does not match layout")
    bucket = bytes(a ^ b for a, b in zip(answer1.share, answer2.share))
    count, rems = parse_bucket(bucket, layout)
    return remainder in rems[:count]


class PirServerState:
    """One server's immutable shard set for a single day."""

    def __init__(self, shards: list[Shard]):
        if not shards:
            raise PirError("server needs at least one shard")
        self.layout = shards[0].layout
        self.day = shards[0].day
        self._shards = {s.shard_id: s for s in shards}
        if any(s.layout != self.layout for s in shards):
            raise PirError("mixed layouts in one day store")

    def answer_batch(self, queries: list[PirQuery]) -> list[PirAnswer]:
        answers = []
        for q in queries:
            shard = self._shards.get(q.shard_id)
            if shard is None:
                raise PirError(f"no shard {q.shard_id}")
            answers.append(pir_answer(q, shard))
        return answers


class LocalTransport:
    """In-process transport over two PirServerState instances."""

    def __init__(self, server1: PirServerState, server2: PirServerState):
        self._servers = (server1, server2)

    def query_server(self, index: int, batch: list[PirQuery]) -> list[PirAnswer]:
        return self._servers[index].answer_batch(batch)


def multi_query(tts: list[TransformedToken], layout: DbLayout, transport,
                rng, gen=dpf_mod.dpf_gen) -> int:
    """Count how many of the tokens are present in the served database.

    All per-token queries are batched into one round trip per server; any
    transport failure aborts the whole batch with no partial count.
    """
    if len(set(tts)) != len(tts):
        raise PirError("query tokens must be deduplicated")
    if not tts:
        return 0
    queries1, queries2, remainders = [], [], []
    for tt in tts:
        q1, q2, rem = pir_query(tt, layout, rng, gen)
        queries1.append(q1)
        queries2.append(q2)
        remainders.append(rem)
    answers1 = transport.query_server(0, queries1)
    answers2 = transport.query_server(1, queries2)
    if len(answers1) != len(tts) or len(answers2) != len(tts):
        raise PirError("server returned wrong number of answers")
    return sum(
        membership(a1, a2, rem, layout)
        for a1, a2, rem in zip(answers1, answers2, remainders)
    )
