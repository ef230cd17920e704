"""Distributed point function over the XOR group.

Two compact keys whose full-domain evaluations XOR to a vector that is zero
everywhere except position alpha, where it equals beta. Tree construction
with one correction word per level; the PRG is AES-128 in MMO form
(E_K(s) ^ s) under fixed public keys, so both servers expand keys
identically with hardware AES.

Key layout (wire format v1): party id (1), domain_bits (1), out_bits (2, LE),
root seed (16), then per level a 16-byte seed correction plus one packed
control-bit byte, then the final output correction of ceil(out_bits/8) bytes.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

SEED_BYTES = 16
MAX_DOMAIN_BITS = 32
MAX_OUT_BITS = 128

_K_LEFT = hashlib.sha256(b"epitrace/v1/dpf-left").digest()[:16]
_K_RIGHT = hashlib.sha256(b"epitrace/v1/dpf-right").digest()[:16]
_K_CONVERT = hashlib.sha256(b"epitrace/v1/dpf-convert").digest()[:16]

_tls = threading.local()


def _encryptors():
    # OpenSSL cipher contexts are not safe to share across threads.
    encs = getattr(_tls, "encs", None)
    if encs is None:
        encs = tuple(
            Cipher(algorithms.AES(k), modes.ECB()).encryptor()
            for k in (_K_LEFT, _K_RIGHT, _K_CONVERT)
        )
        _tls.encs = encs
    return encs


class DpfError(ValueError):
    """Malformed key bytes or out-of-range point specification."""


@dataclass(frozen=True)
class PointSpec:
    """The point function: alpha in [0, 2^domain_bits), beta an out_bits-wide value."""

    alpha: int
    beta: int = 1
    out_bits: int = 1

    def __post_init__(self):
        if not 1 <= self.out_bits <= MAX_OUT_BITS:
            raise DpfError("out_bits must be in [1, 128]")
        if not 0 <= self.beta < (1 << self.out_bits):
            raise DpfError("beta does not fit in out_bits")


@dataclass(frozen=True)
class DpfKey:
    party_id: int
    domain_bits: int
    out_bits: int
    root_seed: bytes
    correction_words: tuple[tuple[bytes, int, int], ...]  # (seed cw, t_left, t_right)
    final_correction: bytes

    def to_bytes(self) -> bytes:
        out = [struct.pack("<BBH", self.party_id, self.domain_bits, self.out_bits),
               self.root_seed]
        for s_cw, tl, tr in self.correction_words:
            out.append(s_cw)
            out.append(bytes([tl | (tr << 1)]))
        out.append(self.final_correction)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DpfKey":
        if len(data) < 20:
            raise DpfError("key too short")
        party_id, domain_bits, out_bits = struct.unpack_from("<BBH", data, 0)
        if party_id not in (0, 1):
            raise DpfError("bad party id")
        if not 1 <= domain_bits <= MAX_DOMAIN_BITS:
            raise DpfError("bad domain_bits")
        if not 1 <= out_bits <= MAX_OUT_BITS:
            raise DpfError("bad out_bits")
        fc_len = (out_bits + 7) // 8
        expected = 4 + SEED_BYTES + domain_bits * (SEED_BYTES + 1) + fc_len
        if len(data) != expected:
            raise DpfError(f"key length {len(data)} != expected {expected}")
        off = 4
        root = data[off:off + SEED_BYTES]
        off += SEED_BYTES
        cws = []
        for _ in range(domain_bits):
            s_cw = data[off:off + SEED_BYTES]
            bits = data[off + SEED_BYTES]
            if bits > 3:
                raise DpfError("bad control-bit byte")
            cws.append((s_cw, bits & 1, (bits >> 1) & 1))
            off += SEED_BYTES + 1
        return cls(party_id, domain_bits, out_bits, root, tuple(cws), data[off:])


def key_size(domain_bits: int, out_bits: int = 1) -> int:
    """Serialized key size in bytes; affine in domain_bits."""
    return 4 + SEED_BYTES + domain_bits * (SEED_BYTES + 1) + (out_bits + 7) // 8


def _xor16(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(16, "little")


def _expand(seed: bytes) -> tuple[bytes, int, bytes, int]:
    enc_l, enc_r, _ = _encryptors()
    left = _xor16(enc_l.update(seed), seed)
    right = _xor16(enc_r.update(seed), seed)
    return left, left[0] & 1, right, right[0] & 1


def _convert(seed: bytes, out_bits: int) -> int:
    block = _xor16(_encryptors()[2].update(seed), seed)
    return int.from_bytes(block, "little") & ((1 << out_bits) - 1)


def dpf_gen(spec: PointSpec, domain_bits: int, rng) -> tuple[DpfKey, DpfKey]:
    """Split the point function into two keys.

    For every x in [0, 2^domain_bits): eval(k0, x) ^ eval(k1, x) equals beta
    if x == alpha, else 0.
    """
    if not 1 <= domain_bits <= MAX_DOMAIN_BITS:
        raise DpfError("domain_bits must be in [1, 32]")
    if not 0 <= spec.alpha < (1 << domain_bits):
        raise DpfError("alpha outside the domain")
    s0, s1 = rng.randbytes(SEED_BYTES), rng.randbytes(SEED_BYTES)
    root0, root1 = s0, s1
    t0, t1 = 0, 1
    cws = []
    for level in range(domain_bits):
        bit = (spec.alpha >> (domain_bits - 1 - level)) & 1
        l0, tl0, r0, tr0 = _expand(s0)
        l1, tl1, r1, tr1 = _expand(s1)
        if bit == 0:
            keep0, keep1, lose0, lose1 = l0, l1, r0, r1
            kt0, kt1 = tl0, tl1
        else:
            keep0, keep1, lose0, lose1 = r0, r1, l0, l1
            kt0, kt1 = tr0, tr1
        s_cw = _xor16(lose0, lose1)
        tl_cw = tl0 ^ tl1 ^ bit ^ 1
        tr_cw = tr0 ^ tr1 ^ bit
        t_cw_keep = tl_cw if bit == 0 else tr_cw
        s0 = _xor16(keep0, s_cw) if t0 else keep0
        s1 = _xor16(keep1, s_cw) if t1 else keep1
        t0, t1 = kt0 ^ (t0 & t_cw_keep), kt1 ^ (t1 & t_cw_keep)
        cws.append((s_cw, tl_cw, tr_cw))
    fc_len = (spec.out_bits + 7) // 8
    final = _convert(s0, spec.out_bits) ^ _convert(s1, spec.out_bits) ^ spec.beta
    final_bytes = final.to_bytes(fc_len, "little")
    k0 = DpfKey(0, domain_bits, spec.out_bits, root0, tuple(cws), final_bytes)
    k1 = DpfKey(1, domain_bits, spec.out_bits, root1, tuple(cws), final_bytes)
    return k0, k1


def dpf_eval(key: DpfKey, x: int) -> int:
    """Evaluate one point; two PRG calls per level."""
    if not 0 <= x < (1 << key.domain_bits):
        raise DpfError("x outside the domain")
    s, t = key.root_seed, key.party_id
    for level, (s_cw, tl_cw, tr_cw) in enumerate(key.correction_words):
        bit = (x >> (key.domain_bits - 1 - level)) & 1
        left, tl, right, tr = _expand(s)
        if bit == 0:
            s, tn = left, tl
            cw_t = tl_cw
        else:
            s, tn = right, tr
            cw_t = tr_cw
        if t:
            s = _xor16(s, s_cw)
            tn ^= cw_t
        t = tn
    out = _convert(s, key.out_bits)
    if t:
        out ^= int.from_bytes(key.final_correction, "little")
    return out


_bitrev_cache: dict[int, np.ndarray] = {}


def _bitrev_perm(bits: int) -> np.ndarray:
    """perm[x] = bit-reversal of x over `bits` bits."""
    perm = _bitrev_cache.get(bits)
    if perm is None:
        idx = np.arange(1 << bits, dtype=np.uint32)
        rev = np.zeros_like(idx)
        for _ in range(bits):
            rev = (rev << 1) | (idx & 1)
            idx >>= 1
        perm = rev
        _bitrev_cache[bits] = perm
    return perm


def dpf_eval_full(key: DpfKey) -> np.ndarray:
    """Expand the key over the whole domain.

    Returns a uint8 array of shape (2^domain_bits,) holding 0/1 when
    out_bits == 1, otherwise shape (2^domain_bits, ceil(out_bits/8)) with
    little-endian rows. Bit-identical to pointwise dpf_eval; two batched PRG
    calls per level.
    """
    enc_l, enc_r, enc_c = _encryptors()
    n_final = 1 << key.domain_bits
    # Ping-pong seed buffers plus AES/correction scratch (update_into needs a
    # block of slack at the end). Levels write [left block | right block]
    # contiguously; a single bit-reversal gather restores index order at the
    # end.
    buf_a = np.empty((n_final, 16), dtype=np.uint8)
    buf_b = np.empty((n_final, 16), dtype=np.uint8)
    scratch = np.empty(n_final * 16 + 16, dtype=np.uint8)
    corr = np.empty((max(1, n_final // 2), 16), dtype=np.uint8)
    buf_a[0] = np.frombuffer(key.root_seed, dtype=np.uint8)
    ts = np.array([key.party_id], dtype=np.uint8)
    n = 1
    for s_cw, tl_cw, tr_cw in key.correction_words:
        parents = buf_a[:n]
        left = buf_b[:n]
        right = buf_b[n:2 * n]
        enc_view = scratch[:n * 16].reshape(n, 16)
        enc_l.update_into(parents.data, scratch.data)
        np.bitwise_xor(enc_view, parents, out=left)
        enc_r.update_into(parents.data, scratch.data)
        np.bitwise_xor(enc_view, parents, out=right)
        # Control bits come from the raw expansion, before seed correction.
        tl = left[:, 0] & 1
        tr = right[:, 0] & 1
        tl ^= ts * tl_cw
        tr ^= ts * tr_cw
        c = corr[:n]
        np.multiply(ts[:, None], np.frombuffer(s_cw, dtype=np.uint8), out=c)
        left ^= c
        right ^= c
        ts = np.concatenate([tl, tr])
        buf_a, buf_b = buf_b, buf_a
        n *= 2
    leaves = buf_a[:n]
    enc_c.update_into(leaves.data, scratch.data)
    conv = scratch[:n * 16].reshape(n, 16)
    perm = _bitrev_perm(key.domain_bits)
    if key.out_bits == 1:
        out = (conv[:, 0] ^ leaves[:, 0]) & 1
        out ^= ts & (key.final_correction[0] & 1)
        return out[perm]
    n_bytes = (key.out_bits + 7) // 8
    out = conv[:, :n_bytes] ^ leaves[:, :n_bytes]
    fc = np.frombuffer(key.final_correction, dtype=np.uint8)
    out ^= ts[:, None] * fc
    if key.out_bits % 8:
        out[:, -1] &= (1 << (key.out_bits % 8)) - 1
    return out[perm]


# --- Naive XOR-sharing oracle ---
#
# Same contract as (dpf_gen, dpf_eval_full) but with O(2^b)-size keys: two
# random vectors XORing to the unit vector. Exists so the tree construction
# can be checked against something that is correct by inspection.


@dataclass(frozen=True)
class NaiveKey:
    party_id: int
    domain_bits: int
    out_bits: int
    vector: bytes  # 2^b entries, ceil(out_bits/8) bytes each, little-endian


def naive_gen(spec: PointSpec, domain_bits: int, rng) -> tuple[NaiveKey, NaiveKey]:
    if not 0 <= spec.alpha < (1 << domain_bits):
        raise DpfError("alpha outside the domain")
    n = 1 << domain_bits
    width = (spec.out_bits + 7) // 8
    mask = (1 << spec.out_bits) - 1
    v0 = np.frombuffer(rng.randbytes(n * width), dtype=np.uint8).reshape(n, width).copy()
    if spec.out_bits % 8:
        v0[:, -1] &= (1 << (spec.out_bits % 8)) - 1
    v1 = v0.copy()
    beta_arr = np.frombuffer((spec.beta & mask).to_bytes(width, "little"), dtype=np.uint8)
    v1[spec.alpha] ^= beta_arr
    return (NaiveKey(0, domain_bits, spec.out_bits, v0.tobytes()),
            NaiveKey(1, domain_bits, spec.out_bits, v1.tobytes()))


def naive_eval_full(key: NaiveKey) -> np.ndarray:
    n = 1 << key.domain_bits
    width = (key.out_bits + 7) // 8
    arr = np.frombuffer(key.vector, dtype=np.uint8).reshape(n, width)
    if key.out_bits == 1:
        return (arr[:, 0] & 1).copy()
    return arr.copy()


def eval_full(key) -> np.ndarray:
    """Full-domain evaluation for either key flavor."""
    if isinstance(key, DpfKey):
        return dpf_eval_full(key)
    if isinstance(key, NaiveKey):
        return naive_eval_full(key)
    raise DpfError(f"not a DPF key: {type(key).__name__}")
