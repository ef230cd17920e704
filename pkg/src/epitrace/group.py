"""Prime-order group layer: ristretto255 scalars and elements, hash-to-group,
exponent blinding, the truncation map used to shrink stored tokens, and a
Schnorr discrete-log proof.

All operations are pure; nothing here holds mutable state.
"""

from __future__ import annotations

import hashlib
import math
import secrets
from dataclasses import dataclass

from . import _sodium

# Order of the ristretto255 group (prime).
GROUP_ORDER = 2**252 + 27742317777372353535851937790883648493

ELEMENT_BYTES = 32
SCALAR_BYTES = 32

_HASH_DST = b"epitrace/v1/hash-to-group"
_TAU_DST = b"epitrace/v1/truncate"
_SCHNORR_DST = b"epitrace/v1/schnorr"

_IDENTITY = bytes(ELEMENT_BYTES)


class GroupError(ValueError):
    """Invalid scalar/element encoding or a disallowed operation."""


@dataclass(frozen=True)
class Scalar:
    """Exponent in Z_p for the group order p."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < GROUP_ORDER:
            raise GroupError("scalar out of range")

    @classmethod
    def random(cls, rng) -> "Scalar":
        """Uniform over [1, p-1]; zero is excluded so inversion never fails."""
        return cls(rng.randrange(1, GROUP_ORDER))

    def invert(self) -> "Scalar":
        if self.value == 0:
            raise GroupError("zero scalar has no inverse")
        return Scalar(pow(self.value, -1, GROUP_ORDER))

    def __mul__(self, other: "Scalar") -> "Scalar":
        return Scalar(self.value * other.value % GROUP_ORDER)

    def __add__(self, other: "Scalar") -> "Scalar":
        return Scalar((self.value + other.value) % GROUP_ORDER)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(SCALAR_BYTES, "little")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Scalar":
        if len(data) != SCALAR_BYTES:
            raise GroupError("scalar encoding must be 32 bytes")
        v = int.from_bytes(data, "little")
        if v >= GROUP_ORDER:
            raise GroupError("non-canonical scalar encoding")
        return cls(v)


@dataclass(frozen=True)
class GroupElement:
    """Element of the prime-order group, held in canonical 32-byte encoding."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != ELEMENT_BYTES:
            raise GroupError("element encoding must be 32 bytes")

    def encode(self) -> bytes:
        return self.data

    @classmethod
    def decode(cls, data: bytes) -> "GroupElement":
        """Strict decode: rejects non-canonical or off-group encodings."""
        if len(data) != ELEMENT_BYTES or not _sodium.is_valid_point(data):
            raise GroupError("invalid group element encoding")
        return cls(data)

    def is_identity(self) -> bool:
        return self.data == _IDENTITY


def generator() -> GroupElement:
    return GroupElement(_sodium.scalarmult_base(Scalar(1).to_bytes()))


def hash_to_group(msg: bytes) -> GroupElement:
    """Map an arbitrary nonempty byte string to a uniform group element.

    Uses the standard 64-byte one-way map over SHA-512; deterministic, and
    never returns the identity.
    """
    if not msg:
        raise GroupError("message must be nonempty")
    counter = 0
    while True:
        suffix = b"" if counter == 0 else counter.to_bytes(4, "little")
        h = hashlib.sha512(_HASH_DST + msg + suffix).digest()
        data = _sodium.from_hash(h)
        if data != _IDENTITY:
            return GroupElement(data)
        counter += 1  # probability ~2^-250, unreachable in practice


def blind(elem: GroupElement, exp: Scalar) -> GroupElement:
    """Raise elem to exp. exp must be nonzero so the operation is invertible."""
    if exp.value == 0:
        raise GroupError("blinding exponent must be nonzero")
    return GroupElement(_sodium.scalarmult(exp.to_bytes(), elem.data))


def group_add(a: GroupElement, b: GroupElement) -> GroupElement:
    return GroupElement(_sodium.point_add(a.data, b.data))


@dataclass(frozen=True)
class TruncationParams:
    """Output width for the truncation map.

    out_bits defaults to 74. When built from (lambda, N) via for_bound it is
    lambda + ceil(log2(N)), which bounds spurious-collision probability per
    comparison by 2^-lambda.
    """

    out_bits: int = 74
    lambda_: int | None = None
    n_upper: int | None = None

    def __post_init__(self):
        if not 1 <= self.out_bits <= 256:
            raise GroupError("out_bits must be in [1, 256]")
        if self.lambda_ is not None and self.n_upper is not None:
            expected = self.lambda_ + max(1, self.n_upper - 1).bit_length()
            if self.out_bits != expected:
                raise GroupError(
                    f"out_bits {self.out_bits} != lambda + ceil(log2 N) = {expected}"
                )

    @classmethod
    def for_bound(cls, lambda_: int, n_upper: int) -> "TruncationParams":
        out = lambda_ + max(1, math.ceil(math.log2(max(2, n_upper))))
        return cls(out_bits=out, lambda_=lambda_, n_upper=n_upper)


@dataclass(frozen=True)
class TransformedToken:
    """First `bits` bits of the hashed canonical encoding of a group element.

    The unit stored in, and queried against, the bucketed database.
    """

    value: int
    bits: int

    def __post_init__(self):
        if not 1 <= self.bits <= 256:
            raise GroupError("bit length out of range")
        if not 0 <= self.value < (1 << self.bits):
            raise GroupError("value does not fit in bit length")

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.bits + 7) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes, bits: int) -> "TransformedToken":
        return cls(int.from_bytes(data, "big"), bits)


def truncate(elem: GroupElement, params: TruncationParams) -> TransformedToken:
    """Truncation map: first out_bits bits of SHA-256 over the canonical
    encoding.

    Hashing first (rather than slicing the encoding) keeps the output bits
    uniform; curve encodings are not uniform bitstrings.
    """
    digest = hashlib.sha256(_TAU_DST + elem.data).digest()
    value = int.from_bytes(digest, "big") >> (256 - params.out_bits)
    return TransformedToken(value, params.out_bits)


@dataclass(frozen=True)
class SchnorrProof:
    """Proof of knowledge of k with public = base^k: 2 group-field objects."""

    commitment: GroupElement
    response: Scalar

    def to_bytes(self) -> bytes:
        return self.commitment.encode() + self.response.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SchnorrProof":
        if len(data) != ELEMENT_BYTES + SCALAR_BYTES:
            raise GroupError("malformed proof encoding")
        return cls(
            GroupElement.decode(data[:ELEMENT_BYTES]),
            Scalar.from_bytes(data[ELEMENT_BYTES:]),
        )


def _schnorr_challenge(base: GroupElement, public: GroupElement, commitment: GroupElement) -> int:
    h = hashlib.sha512(_SCHNORR_DST + base.data + public.data + commitment.data).digest()
    return int.from_bytes(h, "little") % GROUP_ORDER


def schnorr_prove(secret: Scalar, base: GroupElement, public: GroupElement | None = None,
                  rng=None) -> SchnorrProof:
    """Non-interactive (Fiat-Shamir) proof of knowledge of secret.

    Passing the precomputed public key keeps the prover at one exponentiation;
    verification costs two more.
    """
    if rng is None:
        rng = secrets.SystemRandom()
    if public is None:
        public = blind(base, secret)
    w = Scalar.random(rng)
    commitment = blind(base, w)
    c = _schnorr_challenge(base, public, commitment)
    response = Scalar((w.value + c * secret.value) % GROUP_ORDER)
    return SchnorrProof(commitment, response)


def schnorr_verify(base: GroupElement, public: GroupElement, proof: SchnorrProof) -> bool:
    """True iff proof demonstrates knowledge of log_base(public).

    Malformed input yields False, never an exception.
    """
    try:
        if not isinstance(proof, SchnorrProof):
            return False
        c = _schnorr_challenge(base, public, proof.commitment)
        if c == 0 or proof.response.value == 0:
            return False
        lhs = blind(base, proof.response)
        rhs = group_add(proof.commitment, blind(public, Scalar(c)))
        return lhs == rhs
    except (GroupError, RuntimeError, AttributeError, TypeError):
        return False
