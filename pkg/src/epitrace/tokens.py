"""Contact tokens: deterministic generation from a per-user seed, exchange
bookkeeping with infection-window expiry, append-only log persistence, and the
Merkle-root commitment of local token lists.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

SEED_BYTES = 32
TOKEN_BYTES = 16
SLOTS_PER_DAY = 80
WINDOW_DAYS = 14

_LOG_RECORD = struct.Struct("<16sI")  # token bits, day received


@dataclass(frozen=True)
class Seed:
    """256-bit secret from which all of a user's sent tokens derive."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != SEED_BYTES:
            raise ValueError("seed must be 32 bytes")

    @classmethod
    def new(cls, rng) -> "Seed":
        return cls(rng.randbytes(SEED_BYTES))


@dataclass(frozen=True, order=True)
class Token:
    """128-bit contact token for one (day, slot)."""

    bits: bytes
    day: int
    slot: int

    def __post_init__(self):
        if len(self.bits) != TOKEN_BYTES:
            raise ValueError("token must be 16 bytes")


def _prf_blocks(seed: Seed, pairs: list[tuple[int, int]]) -> bytes:
    # AES-256 keyed by the seed over <day:u32le><slot:u32le> zero-padded blocks.
    buf = b"".join(struct.pack("<II8x", d, s) for d, s in pairs)
    enc = Cipher(algorithms.AES(seed.data), modes.ECB()).encryptor()
    return enc.update(buf)


def generate(seed: Seed, day: int, slot: int, slots_per_day: int = SLOTS_PER_DAY) -> Token:
    """Deterministically derive the token sent on (day, slot)."""
    if not 0 <= slot < slots_per_day:
        raise ValueError(f"slot {slot} out of range [0, {slots_per_day})")
    if not 0 <= day < 2**32:
        raise ValueError("day out of range")
    return Token(_prf_blocks(seed, [(day, slot)]), day, slot)


def regenerate_window(seed: Seed, end_day: int, window: int,
                      slots_per_day: int = SLOTS_PER_DAY) -> list[Token]:
    """All tokens sent over the `window` days ending at end_day, inclusive.

    Matches generate() pointwise; used server-side to rebuild a diagnosed
    user's sent set from their seed alone.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    start = max(0, end_day - window + 1)
    pairs = [(d, s) for d in range(start, end_day + 1) for s in range(slots_per_day)]
    blob = _prf_blocks(seed, pairs)
    return [
        Token(blob[i * TOKEN_BYTES:(i + 1) * TOKEN_BYTES], d, s)
        for i, (d, s) in enumerate(pairs)
    ]


@dataclass
class ContactLog:
    """Received-token list with infection-window expiry.

    Single writer; sent tokens are never stored (they regenerate from the
    seed).
    """

    received: list[tuple[Token, int]] = field(default_factory=list)
    window_days: int = WINDOW_DAYS

    def add(self, token: Token, day: int) -> None:
        self.received.append((token, day))

    def expire(self, current_day: int) -> None:
        """Drop entries older than the window relative to current_day."""
        cutoff = current_day - self.window_days + 1
        self.received = [(t, d) for t, d in self.received if d >= cutoff]

    def tokens(self) -> list[Token]:
        return [t for t, _ in self.received]

    def save(self, path) -> None:
        """Append-only fixed-width records: 16-byte token bits, 4-byte day."""
        with open(path, "wb") as fh:
            for token, day in self.received:
                fh.write(_LOG_RECORD.pack(token.bits, day))

    @classmethod
    def load(cls, path, window_days: int = WINDOW_DAYS) -> "ContactLog":
        log = cls(window_days=window_days)
        with open(path, "rb") as fh:
            data = fh.read()
        if len(data) % _LOG_RECORD.size:
            raise ValueError("truncated contact log record")
        for off in range(0, len(data), _LOG_RECORD.size):
            bits, day = _LOG_RECORD.unpack_from(data, off)
            # day/slot of origin are unknown to the receiver; day recorded is
            # the exchange day.
            log.add(Token(bits, day, 0), day)
        return log


def exchange(my_token: Token, peer_token: Token, log: ContactLog) -> ContactLog:
    """Record a contact event: the peer's token enters the received log.

    Nothing is stored for the sent side.
    """
    if my_token.day != peer_token.day:
        raise ValueError("exchanged tokens must carry the same day")
    log.add(peer_token, peer_token.day)
    return log


# --- Merkle commitment of the local token list ---

_LEAF_DST = b"epitrace/v1/merkle-leaf"
_NODE_DST = b"epitrace/v1/merkle-node"


def _leaf_hash(salt: bytes, value: bytes) -> bytes:
    return hashlib.sha256(_LEAF_DST + salt + value).digest()


def _node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(_NODE_DST + left + right).digest()


def _build_levels(leaves: list[bytes]) -> list[list[bytes]]:
    # Duplicate-last-leaf padding up to a power of two.
    padded = list(leaves)
    while len(padded) & (len(padded) - 1):
        padded.append(padded[-1])
    levels = [padded]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        levels.append([_node_hash(prev[i], prev[i + 1]) for i in range(0, len(prev), 2)])
    return levels


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    salt: bytes
    siblings: tuple[tuple[bytes, bool], ...]  # (hash, sibling_is_left)


@dataclass
class TokenCommitment:
    """Published Merkle root over the permuted local token list plus a dummy.

    permutation_seed and dummy stay local; the root reveals neither order nor
    exact count parity.
    """

    merkle_root: bytes
    permutation_seed: bytes
    dummy: bytes
    _values: list[bytes] = field(repr=False, default_factory=list)


def commit(log: ContactLog, rng) -> TokenCommitment:
    """Commit to the log's tokens: permute, append a dummy leaf, Merkle-hash."""
    if not log.received:
        raise ValueError("cannot commit an empty log")
    perm_seed = rng.randbytes(16)
    dummy = rng.randbytes(TOKEN_BYTES)
    values = [t.bits for t, _ in log.received]
    order = sorted(
        range(len(values)),
        key=lambda i: hashlib.sha256(perm_seed + i.to_bytes(4, "little")).digest(),
    )
    values = [values[i] for i in order]
    values.append(dummy)
    salt = hashlib.sha256(b"salt" + perm_seed).digest()[:16]
    levels = _build_levels([_leaf_hash(salt, v) for v in values])
    return TokenCommitment(levels[-1][0], perm_seed, dummy, values)


def prove_membership(commitment: TokenCommitment, token: Token) -> MerkleProof:
    """Inclusion proof for a committed token; raises KeyError if absent."""
    try:
        index = commitment._values.index(token.bits)
    except ValueError:
        raise KeyError("token was not committed") from None
    salt = hashlib.sha256(b"salt" + commitment.permutation_seed).digest()[:16]
    levels = _build_levels([_leaf_hash(salt, v) for v in commitment._values])
    siblings = []
    i = index
    for level in levels[:-1]:
        sib = i ^ 1  # always valid: leaf level is padded to a power of two
        siblings.append((level[sib], sib < i))
        i //= 2
    return MerkleProof(index, salt, tuple(siblings))


def verify_membership(root: bytes, token: Token, proof: MerkleProof) -> bool:
    """Check an inclusion proof against a published root.

    Any mismatch (wrong token, wrong path, stale root) yields False.
    """
    try:
        node = _leaf_hash(proof.salt, token.bits)
        for sib, sib_is_left in proof.siblings:
            node = _node_hash(sib, node) if sib_is_left else _node_hash(node, sib)
        return node == root
    except (TypeError, AttributeError):
        return False
