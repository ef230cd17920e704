import random

import pytest
from hypothesis import given, settings, strategies as st

from epitrace import _sodium
from epitrace.group import (GROUP_ORDER, GroupElement, GroupError, Scalar,
                            SchnorrProof, TransformedToken, TruncationParams,
                            blind, generator, group_add, hash_to_group,
                            schnorr_prove, schnorr_verify, truncate)

nonzero_scalars = st.integers(min_value=1, max_value=GROUP_ORDER - 1)


def test_hash_to_group_deterministic():
    assert hash_to_group(b"m") == hash_to_group(b"m")


def test_hash_to_group_distinct_inputs(rng):
    msgs = {rng.randbytes(16) for _ in range(100_000)}
    encodings = {hash_to_group(m).data for m in msgs}
    assert len(encodings) == len(msgs)


def test_hash_to_group_round_trip():
    e = hash_to_group(b"\x00")
    assert GroupElement.decode(e.encode()) == e


def test_hash_to_group_rejects_empty():
    with pytest.raises(GroupError):
        hash_to_group(b"")


def test_hash_to_group_never_identity(rng):
    for _ in range(1000):
        assert not hash_to_group(rng.randbytes(8)).is_identity()


def test_decode_rejects_noncanonical(rng):
    bad = 0
    for _ in range(200):
        data = rng.randbytes(32)
        if not _sodium.is_valid_point(data):
            bad += 1
            with pytest.raises(GroupError):
                GroupElement.decode(data)
    assert bad > 0  # random 32-byte strings are mostly invalid


def test_scalar_decode_rejects_out_of_range():
    with pytest.raises(GroupError):
        Scalar.from_bytes(GROUP_ORDER.to_bytes(32, "little"))
    with pytest.raises(GroupError):
        Scalar.from_bytes(b"\x01" * 31)


def test_blind_identity_exponent():
    e = hash_to_group(b"x")
    assert blind(e, Scalar(1)) == e


def test_blind_rejects_zero():
    with pytest.raises(GroupError):
        blind(hash_to_group(b"x"), Scalar(0))


@settings(max_examples=50, deadline=None)
@given(r=nonzero_scalars)
def test_blind_inverse_round_trip(r):
    e = hash_to_group(b"roundtrip")
    s = Scalar(r)
    assert blind(blind(e, s), s.invert()) == e


@settings(max_examples=50, deadline=None)
@given(r=nonzero_scalars, k=nonzero_scalars)
def test_blind_commutes(r, k):
    e = hash_to_group(b"commute")
    assert blind(blind(e, Scalar(r)), Scalar(k)) == blind(blind(e, Scalar(k)), Scalar(r))


@settings(max_examples=50, deadline=None)
@given(r=nonzero_scalars, k=nonzero_scalars)
def test_unblinding_identity(r, k):
    # ((e^r)^k)^(1/r) == e^k
    e = hash_to_group(b"unblind")
    lhs = blind(blind(blind(e, Scalar(r)), Scalar(k)), Scalar(r).invert())
    assert lhs == blind(e, Scalar(k))


@settings(max_examples=100, deadline=None)
@given(a=nonzero_scalars, b=nonzero_scalars, c=nonzero_scalars)
def test_scalar_field_axioms(a, b, c):
    sa, sb, sc = Scalar(a), Scalar(b), Scalar(c)
    assert (sa * sb) * sc == sa * (sb * sc)
    assert sa * sa.invert() == Scalar(1)
    assert (sa + sb).value == (a + b) % GROUP_ORDER


def test_scalar_random_never_zero(rng):
    assert all(Scalar.random(rng).value != 0 for _ in range(2000))


# --- truncation ---


def test_truncation_default_width():
    assert TruncationParams().out_bits == 74
    tt = truncate(hash_to_group(b"t"), TruncationParams())
    assert tt.bits == 74
    assert 0 <= tt.value < 1 << 74


def test_truncation_exact_length():
    tt = truncate(hash_to_group(b"t"), TruncationParams(out_bits=8))
    assert tt.bits == 8
    assert 0 <= tt.value < 256
    assert len(tt.to_bytes()) == 1


def test_truncation_deterministic_on_encoding():
    e = hash_to_group(b"same")
    p = TruncationParams(out_bits=74)
    assert truncate(e, p) == truncate(GroupElement.decode(e.encode()), p)


def test_truncation_no_collisions_at_74_bits(rng):
    p = TruncationParams(out_bits=74)
    values = {truncate(hash_to_group(rng.randbytes(12)), p).value for _ in range(1 << 16)}
    assert len(values) == 1 << 16  # birthday bound 2^32/2^74 per pair


def test_truncation_params_for_bound():
    p = TruncationParams.for_bound(40, 1 << 22)
    assert p.out_bits == 62
    with pytest.raises(GroupError):
        TruncationParams(out_bits=70, lambda_=40, n_upper=1 << 22)
    with pytest.raises(GroupError):
        TruncationParams(out_bits=0)


def test_transformed_token_bytes_round_trip(rng):
    for _ in range(100):
        bits = rng.randrange(1, 120)
        v = rng.getrandbits(bits)
        tt = TransformedToken(v, bits)
        assert TransformedToken.from_bytes(tt.to_bytes(), bits) == tt


# --- Schnorr ---


def test_schnorr_honest_prove_verify(rng):
    g = generator()
    k = Scalar.random(rng)
    public = blind(g, k)
    proof = schnorr_prove(k, g, public, rng)
    assert schnorr_verify(g, public, proof)


def test_schnorr_wrong_public_rejected(rng):
    g = generator()
    k = Scalar.random(rng)
    public_bad = blind(g, k + Scalar(1))
    proof = schnorr_prove(k, g, blind(g, k), rng)
    assert not schnorr_verify(g, public_bad, proof)


def test_schnorr_malformed_proof_is_false_not_exception(rng):
    g = generator()
    k = Scalar.random(rng)
    public = blind(g, k)
    assert schnorr_verify(g, public, "not a proof") is False
    garbled = SchnorrProof(hash_to_group(b"junk"), Scalar(5))
    assert schnorr_verify(g, public, garbled) is False
    with pytest.raises(GroupError):
        SchnorrProof.from_bytes(b"\x00" * 10)


def test_schnorr_proof_is_two_objects(rng):
    g = generator()
    k = Scalar.random(rng)
    proof = schnorr_prove(k, g, blind(g, k), rng)
    assert len(proof.to_bytes()) == 64  # one element + one scalar
    assert SchnorrProof.from_bytes(proof.to_bytes()) == proof


def test_schnorr_three_exponentiations(rng, monkeypatch):
    calls = {"n": 0}
    real = _sodium.scalarmult

    def counting(scalar, point):
        calls["n"] += 1
        return real(scalar, point)

    monkeypatch.setattr("epitrace.group._sodium.scalarmult", counting)
    g = generator()
    k = Scalar.random(rng)
    public = blind(g, k)
    calls["n"] = 0
    proof = schnorr_prove(k, g, public, rng)
    assert schnorr_verify(g, public, proof)
    assert calls["n"] == 3  # one to prove, two to verify


def test_group_add_matches_exponent_addition(rng):
    g = generator()
    a, b = Scalar.random(rng), Scalar.random(rng)
    assert group_add(blind(g, a), blind(g, b)) == blind(g, a + b)
