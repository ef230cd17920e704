import random

import numpy as np
import pytest
from scipy import stats

from epitrace.dpf import (DpfError, DpfKey, PointSpec, dpf_eval, dpf_eval_full,
                          dpf_gen, eval_full, key_size, naive_eval_full,
                          naive_gen)


def unit_vector(alpha, domain_bits):
    out = np.zeros(1 << domain_bits, dtype=np.uint8)
    out[alpha] = 1
    return out


@pytest.mark.parametrize("b", range(1, 6))
def test_exhaustive_unit_vectors(rng, b):
    for alpha in range(1 << b):
        k0, k1 = dpf_gen(PointSpec(alpha), b, rng)
        full = dpf_eval_full(k0) ^ dpf_eval_full(k1)
        assert np.array_equal(full, unit_vector(alpha, b))


def test_b1_alpha0(rng):
    k0, k1 = dpf_gen(PointSpec(0), 1, rng)
    assert list(dpf_eval_full(k0) ^ dpf_eval_full(k1)) == [1, 0]


def test_full_eval_matches_pointwise(rng):
    k0, k1 = dpf_gen(PointSpec(321), 10, rng)
    for key in (k0, k1):
        full = dpf_eval_full(key)
        for x in range(1 << 10):
            assert int(full[x]) == dpf_eval(key, x)


@pytest.mark.parametrize("out_bits,beta", [(8, 0x5A), (16, 0xBEEF), (64, 2**63 + 5),
                                           (128, (1 << 127) | 3)])
def test_wide_payloads(rng, out_bits, beta):
    b = 6
    alpha = 37
    k0, k1 = dpf_gen(PointSpec(alpha, beta, out_bits), b, rng)
    out = dpf_eval_full(k0) ^ dpf_eval_full(k1)
    for x in range(1 << b):
        val = int.from_bytes(out[x].tobytes(), "little")
        assert val == (beta if x == alpha else 0)
        assert dpf_eval(k0, x) ^ dpf_eval(k1, x) == (beta if x == alpha else 0)


def test_serialization_round_trip(rng):
    for b in (1, 7, 18):
        k0, k1 = dpf_gen(PointSpec((1 << b) - 1, 1, 1), b, rng)
        for key in (k0, k1):
            blob = key.to_bytes()
            assert len(blob) == key_size(b, 1)
            assert DpfKey.from_bytes(blob) == key


def test_corrupted_key_rejected_before_evaluation(rng):
    k0, _ = dpf_gen(PointSpec(3), 4, rng)
    blob = k0.to_bytes()
    with pytest.raises(DpfError):
        DpfKey.from_bytes(blob[:-1])  # truncated
    with pytest.raises(DpfError):
        DpfKey.from_bytes(blob + b"\x00")  # oversize
    bad_party = bytes([7]) + blob[1:]
    with pytest.raises(DpfError):
        DpfKey.from_bytes(bad_party)
    bad_tbits = bytearray(blob)
    bad_tbits[4 + 16 + 16] = 0xFF  # control-bit byte of level 0
    with pytest.raises(DpfError):
        DpfKey.from_bytes(bytes(bad_tbits))


def test_key_size_affine_in_domain_bits(rng):
    sizes = []
    for b in range(1, 21):
        k0, _ = dpf_gen(PointSpec(0), b, rng)
        sizes.append(len(k0.to_bytes()))
    deltas = {sizes[i + 1] - sizes[i] for i in range(len(sizes) - 1)}
    assert deltas == {17}  # exactly one correction word per extra level


def test_gen_input_validation(rng):
    with pytest.raises(DpfError):
        dpf_gen(PointSpec(4), 2, rng)  # alpha >= 2^b
    with pytest.raises(DpfError):
        dpf_gen(PointSpec(0), 0, rng)
    with pytest.raises(DpfError):
        dpf_gen(PointSpec(0), 33, rng)
    with pytest.raises(DpfError):
        PointSpec(0, beta=2, out_bits=1)


def test_eval_input_validation(rng):
    k0, _ = dpf_gen(PointSpec(0), 3, rng)
    with pytest.raises(DpfError):
        dpf_eval(k0, 8)
    with pytest.raises(DpfError):
        eval_full(b"not a key")


def test_naive_oracle_unit_vector(rng):
    for _ in range(50):
        b = rng.randrange(1, 10)
        alpha = rng.randrange(1 << b)
        n0, n1 = naive_gen(PointSpec(alpha), b, rng)
        assert np.array_equal(naive_eval_full(n0) ^ naive_eval_full(n1),
                              unit_vector(alpha, b))


def test_naive_oracle_agrees_with_tree(rng):
    # Same point spec through both constructions gives the same XOR result.
    for _ in range(20):
        b = rng.randrange(1, 9)
        alpha = rng.randrange(1 << b)
        k0, k1 = dpf_gen(PointSpec(alpha), b, rng)
        n0, n1 = naive_gen(PointSpec(alpha), b, rng)
        assert np.array_equal(dpf_eval_full(k0) ^ dpf_eval_full(k1),
                              naive_eval_full(n0) ^ naive_eval_full(n1))


def test_random_alphas_large_domains(rng):
    for b in (12, 16):
        for _ in range(10):
            alpha = rng.randrange(1 << b)
            k0, k1 = dpf_gen(PointSpec(alpha), b, rng)
            full = dpf_eval_full(k0) ^ dpf_eval_full(k1)
            assert full[alpha] == 1 and int(full.sum()) == 1


def test_single_key_distribution_smoke(rng):
    # Marginal distribution of one party's expansion should not depend on
    # alpha. Sanity check, not a security proof: chi-square over 32 bins of
    # the packed expansion at b=4.
    b, trials, bins = 4, 10_000, 32
    counts = np.zeros((2, bins), dtype=np.int64)
    for row, alpha in enumerate((0, (1 << b) - 1)):
        for _ in range(trials):
            k0, _ = dpf_gen(PointSpec(alpha), b, rng)
            vec = dpf_eval_full(k0)
            packed = int.from_bytes(np.packbits(vec).tobytes(), "big")
            counts[row][packed % bins] += 1
    _, p, _, _ = stats.chi2_contingency(counts)
    assert p > 0.001
