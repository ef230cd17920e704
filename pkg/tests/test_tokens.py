import random

import pytest

from epitrace.tokens import (ContactLog, MerkleProof, Seed, Token, commit,
                             exchange, generate, prove_membership,
                             regenerate_window, verify_membership)


def make_seed(rng):
    return Seed.new(rng)


def test_generate_deterministic(rng):
    s = make_seed(rng)
    assert generate(s, 3, 7) == generate(s, 3, 7)


def test_generate_slot_range(rng):
    s = make_seed(rng)
    with pytest.raises(ValueError):
        generate(s, 0, 80)
    with pytest.raises(ValueError):
        generate(s, 0, -1)
    assert generate(s, 0, 5, slots_per_day=6).slot == 5


def test_distinct_seeds_distinct_tokens(rng):
    hits = 0
    for _ in range(10_000):
        s1, s2 = Seed.new(rng), Seed.new(rng)
        if generate(s1, 1, 2).bits == generate(s2, 1, 2).bits:
            hits += 1
    assert hits == 0


def test_window_regeneration_count_and_pointwise(rng):
    s = make_seed(rng)
    toks = regenerate_window(s, end_day=20, window=14)
    assert len(toks) == 14 * 80
    assert len({t.bits for t in toks}) == 1120
    probe = rng.sample(toks, 25)
    for t in probe:
        assert generate(s, t.day, t.slot) == t


def test_window_single_slot(rng):
    s = make_seed(rng)
    assert regenerate_window(s, 5, 1, slots_per_day=1) == [generate(s, 5, 0, slots_per_day=1)]


def test_window_clamps_at_day_zero(rng):
    s = make_seed(rng)
    toks = regenerate_window(s, end_day=2, window=14, slots_per_day=4)
    assert {t.day for t in toks} == {0, 1, 2}


def test_exchange_records_peer_token(rng):
    alice, bob = make_seed(rng), make_seed(rng)
    log_a, log_b = ContactLog(), ContactLog()
    ta, tb = generate(alice, 4, 1), generate(bob, 4, 1)
    exchange(ta, tb, log_a)
    exchange(tb, ta, log_b)
    assert log_a.tokens() == [tb]
    assert log_b.tokens() == [ta]


def test_exchange_requires_same_day(rng):
    s = make_seed(rng)
    with pytest.raises(ValueError):
        exchange(generate(s, 1, 0), generate(s, 2, 0), ContactLog())


def test_expiry_window(rng):
    s = make_seed(rng)
    log = ContactLog(window_days=14)
    exchange(generate(s, 10, 0), generate(make_seed(rng), 10, 0), log)
    log.expire(10 + 14)  # 15th day after receipt
    assert log.received == []
    exchange(generate(s, 30, 0), generate(make_seed(rng), 30, 0), log)
    log.expire(43)
    assert len(log.received) == 1
    assert min(d for _, d in log.received) >= 43 - 14 + 1


def test_log_persistence_fixed_width(rng, tmp_path):
    s = make_seed(rng)
    log = ContactLog()
    for day in (5, 6, 7):
        exchange(generate(s, day, 0), generate(make_seed(rng), day, 1), log)
    path = tmp_path / "log.bin"
    log.save(path)
    assert path.stat().st_size == 3 * 20  # 16-byte token + 4-byte day
    loaded = ContactLog.load(path)
    assert [(t.bits, d) for t, d in loaded.received] == \
        [(t.bits, d) for t, d in log.received]


def _filled_log(rng, n):
    log = ContactLog()
    for i in range(n):
        peer = generate(Seed.new(rng), 3, i % 8, slots_per_day=8)
        log.add(peer, 3)
    return log


def test_commit_membership_completeness(rng):
    log = _filled_log(rng, 8)
    c = commit(log, rng)
    for token, _ in log.received:
        proof = prove_membership(c, token)
        assert verify_membership(c.merkle_root, token, proof)


@pytest.mark.parametrize("n_leaves", range(1, 17))
def test_uncommitted_token_never_verifies(rng, n_leaves):
    log = _filled_log(rng, n_leaves)
    c = commit(log, rng)
    outsider = generate(Seed.new(rng), 3, 0, slots_per_day=8)
    with pytest.raises(KeyError):
        prove_membership(c, outsider)
    # even reusing an honest proof path, the outsider leaf cannot verify
    some_proof = prove_membership(c, log.received[0][0])
    assert not verify_membership(c.merkle_root, outsider, some_proof)


def test_commit_randomized_roots(rng):
    log = _filled_log(rng, 6)
    c1 = commit(log, random.Random(1))
    c2 = commit(log, random.Random(2))
    assert c1.merkle_root != c2.merkle_root


def test_commit_empty_log_rejected(rng):
    with pytest.raises(ValueError):
        commit(ContactLog(), rng)


@pytest.mark.parametrize("n_leaves", [1, 2, 3, 5, 8, 13])
def test_leaf_mutation_changes_root(rng, n_leaves):
    log = _filled_log(rng, n_leaves)
    c = commit(log, rng)
    for idx in range(len(c._values)):
        mutated = list(c._values)
        mutated[idx] = bytes(b ^ 1 for b in mutated[idx])
        from epitrace.tokens import _build_levels, _leaf_hash
        import hashlib
        salt = hashlib.sha256(b"salt" + c.permutation_seed).digest()[:16]
        root = _build_levels([_leaf_hash(salt, v) for v in mutated])[-1][0]
        assert root != c.merkle_root


def test_proof_for_wrong_root_fails(rng):
    log = _filled_log(rng, 5)
    c1 = commit(log, random.Random(3))
    c2 = commit(log, random.Random(4))
    token = log.received[0][0]
    proof = prove_membership(c1, token)
    assert not verify_membership(c2.merkle_root, token, proof)


def test_malformed_proof_is_false(rng):
    log = _filled_log(rng, 4)
    c = commit(log, rng)
    token = log.received[0][0]
    assert verify_membership(c.merkle_root, token, MerkleProof(0, b"x", ((None, True),))) is False
