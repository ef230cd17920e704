import random

import numpy as np
import pytest

from epitrace import dpf
from epitrace.group import TransformedToken
from epitrace.pir import (DbLayout, IntegrityError, LocalTransport, PirAnswer,
                          PirError, PirServerState, Shard, address,
                          build_shard, membership, multi_query, parse_bucket,
                          pir_answer, pir_query, reconstruct)


def random_tt(rng, bits):
    return TransformedToken(rng.getrandbits(bits), bits)


def build_random_day(rng, layout, n_tokens):
    """Plain build: returns (shards dict, set of stored token values)."""
    tts = set()
    while len(tts) < n_tokens:
        tts.add(random_tt(rng, layout.token_bits))
    per_shard = {s: {} for s in range(layout.n_shards)}
    for tt in tts:
        sid, bucket, rem = address(tt, layout)
        per_shard[sid].setdefault(bucket, []).append(rem)
    max_load = max((len(v) for d in per_shard.values() for v in d.values()), default=0)
    assert max_load <= layout.slots, "test layout too tight"
    shards = [build_shard(s, 0, layout, per_shard[s]) for s in range(layout.n_shards)]
    return shards, tts


def test_paper_example_remainder_split():
    layout = DbLayout(n_shards=8, bucket_bits=18, slots=3, token_bits=74)
    assert layout.shard_bits == 3
    assert layout.remainder_bits == 74 - 3 - 18 == 53
    assert layout.bucket_bytes == 1 + 3 * 7


def test_tiny_split_by_inspection():
    layout = DbLayout(n_shards=1, bucket_bits=1, slots=1, token_bits=3)
    sid, bucket, rem = address(TransformedToken(0b101, 3), layout)
    assert (sid, bucket, rem) == (0, 0b1, 0b01)


def test_address_round_trip(rng):
    layout = DbLayout(n_shards=4, bucket_bits=10, slots=3, token_bits=40)
    for _ in range(100_000):
        tt = random_tt(rng, 40)
        assert reconstruct(*address(tt, layout), layout) == tt


def test_address_length_mismatch(rng):
    layout = DbLayout(n_shards=2, bucket_bits=4, slots=2, token_bits=16)
    with pytest.raises(PirError):
        address(random_tt(rng, 15), layout)


def test_layout_validation():
    with pytest.raises(PirError):
        DbLayout(n_shards=3, bucket_bits=4, slots=2, token_bits=16)
    with pytest.raises(PirError):
        DbLayout(n_shards=2, bucket_bits=15, slots=2, token_bits=16)  # no remainder room


def test_shard_serialization_round_trip(rng):
    layout = DbLayout(n_shards=1, bucket_bits=4, slots=4, token_bits=12)
    shards, _ = build_random_day(rng, layout, 10)
    blob = shards[0].to_bytes()
    back = Shard.from_bytes(blob)
    assert back == shards[0]
    with pytest.raises(PirError):
        Shard.from_bytes(blob[:-1])
    with pytest.raises(PirError):
        Shard.from_bytes(b"\x02" + blob[1:])  # bad version


def test_overfull_bucket_fails_build():
    layout = DbLayout(n_shards=1, bucket_bits=2, slots=1, token_bits=8)
    with pytest.raises(PirError):
        build_shard(0, 0, layout, {1: [3, 4]})


def test_single_real_bucket_reconstruction(rng):
    layout = DbLayout(n_shards=1, bucket_bits=1, slots=2, token_bits=8)
    shard = build_shard(0, 0, layout, {1: [5, 9]})
    tt = reconstruct(0, 1, 5, layout)
    q1, q2, rem = pir_query(tt, layout, rng)
    a1, a2 = pir_answer(q1, shard), pir_answer(q2, shard)
    bucket = bytes(x ^ y for x, y in zip(a1.share, a2.share))
    assert bucket == shard.read_bucket(1)
    assert membership(a1, a2, rem, layout)


def test_reconstruction_matches_plain_read(rng):
    layout = DbLayout(n_shards=2, bucket_bits=8, slots=6, token_bits=24)
    shards, _ = build_random_day(rng, layout, 300)
    state = PirServerState(shards)
    for _ in range(100):
        sid = rng.randrange(2)
        bucket_idx = rng.randrange(1 << 8)
        tt = reconstruct(sid, bucket_idx, rng.getrandbits(layout.remainder_bits), layout)
        q1, q2, _ = pir_query(tt, layout, rng)
        a1 = state.answer_batch([q1])[0]
        a2 = state.answer_batch([q2])[0]
        plain = shards[sid].read_bucket(bucket_idx)
        assert bytes(x ^ y for x, y in zip(a1.share, a2.share)) == plain


def test_unrelated_bucket_flip_leaves_target_unchanged(rng):
    layout = DbLayout(n_shards=1, bucket_bits=4, slots=4, token_bits=12)
    shards, _ = build_random_day(rng, layout, 12)
    shard = shards[0]
    target = 3
    tt = reconstruct(0, target, 1, layout)
    q1, q2, _ = pir_query(tt, layout, rng)
    rec1 = bytes(a ^ b for a, b in zip(pir_answer(q1, shard).share,
                                       pir_answer(q2, shard).share))
    flipped = bytearray(shard.buckets)
    other = 9  # != target
    off = other * layout.bucket_bytes + 1
    flipped[off] ^= 0xFF
    shard2 = Shard(0, 0, layout, bytes(flipped))
    rec2 = bytes(a ^ b for a, b in zip(pir_answer(q1, shard2).share,
                                       pir_answer(q2, shard2).share))
    assert rec1 == rec2


def test_membership_basics(rng):
    layout = DbLayout(n_shards=1, bucket_bits=2, slots=2, token_bits=8)
    shard = build_shard(0, 0, layout, {0: [7], 2: []})
    tt_hit = reconstruct(0, 0, 7, layout)
    q1, q2, rem = pir_query(tt_hit, layout, rng)
    assert membership(pir_answer(q1, shard), pir_answer(q2, shard), rem, layout)
    tt_empty = reconstruct(0, 2, 7, layout)
    q1, q2, rem = pir_query(tt_empty, layout, rng)
    assert not membership(pir_answer(q1, shard), pir_answer(q2, shard), rem, layout)


def test_membership_integrity_error():
    layout = DbLayout(n_shards=1, bucket_bits=1, slots=1, token_bits=8)
    bogus = bytes([9]) + bytes(layout.bucket_bytes - 1)
    zeros = bytes(layout.bucket_bytes)
    with pytest.raises(IntegrityError):
        membership(PirAnswer(bogus), PirAnswer(zeros), 0, layout)
    with pytest.raises(PirError):
        membership(PirAnswer(zeros), PirAnswer(zeros[:-1]), 0, layout)


def test_membership_against_hash_set_oracle(rng):
    layout = DbLayout(n_shards=2, bucket_bits=6, slots=8, token_bits=20)
    shards, stored = build_random_day(rng, layout, 180)
    state = PirServerState(shards)
    stored_values = {tt.value for tt in stored}
    for _ in range(1000):
        tt = random_tt(rng, 20) if rng.random() < 0.5 else rng.choice(sorted(stored, key=lambda t: t.value))
        q1, q2, rem = pir_query(tt, layout, rng)
        got = membership(state.answer_batch([q1])[0], state.answer_batch([q2])[0],
                         rem, layout)
        assert got == (tt.value in stored_values)


def test_answer_length_uniform(rng):
    layout = DbLayout(n_shards=1, bucket_bits=5, slots=3, token_bits=16)
    shards, _ = build_random_day(rng, layout, 40)
    state = PirServerState(shards)
    lengths = set()
    for bucket in range(1 << 5):
        tt = reconstruct(0, bucket, 0, layout)
        q1, _, _ = pir_query(tt, layout, rng)
        lengths.add(len(state.answer_batch([q1])[0].share))
    assert lengths == {layout.bucket_bytes}


def test_multi_query_matches_brute_force(rng):
    layout = DbLayout(n_shards=2, bucket_bits=6, slots=8, token_bits=22)
    for _ in range(20):
        shards, stored = build_random_day(rng, layout, rng.randrange(1, 200))
        transport = LocalTransport(PirServerState(shards), PirServerState(shards))
        stored_list = sorted(stored, key=lambda t: t.value)
        queries = {random_tt(rng, 22) for _ in range(rng.randrange(0, 20))}
        queries |= set(rng.sample(stored_list, min(5, len(stored_list))))
        tts = sorted(queries, key=lambda t: t.value)
        expected = sum(tt in stored for tt in tts)
        assert multi_query(tts, layout, transport, rng) == expected


def test_multi_query_empty_and_dedup(rng):
    layout = DbLayout(n_shards=1, bucket_bits=4, slots=2, token_bits=12)
    shards, _ = build_random_day(rng, layout, 5)
    transport = LocalTransport(PirServerState(shards), PirServerState(shards))
    assert multi_query([], layout, transport, rng) == 0
    tt = random_tt(rng, 12)
    with pytest.raises(PirError):
        multi_query([tt, tt], layout, transport, rng)


def test_multi_query_naive_oracle_equivalence(rng):
    layout = DbLayout(n_shards=1, bucket_bits=7, slots=6, token_bits=20)
    shards, stored = build_random_day(rng, layout, 150)
    transport = LocalTransport(PirServerState(shards), PirServerState(shards))
    stored_list = sorted(stored, key=lambda t: t.value)
    tts = sorted({random_tt(rng, 20) for _ in range(10)} | set(stored_list[:5]),
                 key=lambda t: t.value)
    real = multi_query(tts, layout, transport, rng)
    naive = multi_query(tts, layout, transport, rng, gen=dpf.naive_gen)
    assert real == naive


def test_false_positive_rate_bounded(rng):
    # Deliberately small remainders: collisions must track load / 2^rem_bits.
    layout = DbLayout(n_shards=1, bucket_bits=6, slots=16, token_bits=19)
    assert layout.remainder_bits == 13
    shards, stored = build_random_day(rng, layout, 300)
    state = PirServerState(shards)
    stored_values = {tt.value for tt in stored}
    trials, false_pos = 4000, 0
    for _ in range(trials):
        tt = random_tt(rng, 19)
        if tt.value in stored_values:
            continue
        q1, q2, rem = pir_query(tt, layout, rng)
        false_pos += membership(state.answer_batch([q1])[0],
                                state.answer_batch([q2])[0], rem, layout)
    mean_load = 300 / (1 << 6)
    expected = trials * mean_load / (1 << layout.remainder_bits)
    assert false_pos <= max(8.0, 6 * expected)


def test_query_key_growth_four_correction_words(rng):
    layouts = {b: DbLayout(1, b, 3, 74) for b in (16, 20)}
    sizes = {}
    for b, layout in layouts.items():
        tt = random_tt(rng, 74)
        q1, _, _ = pir_query(tt, layout, rng)
        sizes[b] = len(q1.key.to_bytes())
    assert sizes[20] - sizes[16] == 4 * 17
