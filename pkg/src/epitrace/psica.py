"""Private set intersection cardinality for asymmetric sets.

Client blinds hashed tokens with a session exponent r, the server raises them
to its epoch exponent k and returns them in a randomly permuted order, the
client unblinds and truncates, then checks each value against the published
database via two-server keyword PIR. The permutation means an unblinded value
can never be attributed to a specific sent token; everything downstream
treats the unblinded list as a set.

Also provides the plain DH-PSI reference oracle (same algebra, no
permutation, no truncation) used by tests to cross-check cardinalities.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field

from . import pir as pir_mod
from .group import (GROUP_ORDER, GroupElement, Scalar, TransformedToken,
                    TruncationParams, blind, generator, group_add,
                    hash_to_group, truncate)
from .tokens import Token

DEFAULT_MIN_BATCH = 64
DEFAULT_RATE_LIMIT = 4


class ProtocolError(RuntimeError):
    """Session-fatal mismatch between client and server messages."""


class PolicyError(RuntimeError):
    """Server policy rejection (batch size, rate limit)."""


@dataclass
class ServerKeyState:
    """Epoch-scoped server exponent with a transform cache.

    k stays fixed for the whole epoch; rotating it invalidates client caches
    and every published day store.
    """

    k: Scalar
    epoch_id: bytes
    precomputed: dict[bytes, GroupElement] = field(default_factory=dict)

    @classmethod
    def new(cls, rng) -> "ServerKeyState":
        return cls(Scalar.random(rng), rng.randbytes(16))

    def transform_token(self, token_bits: bytes) -> GroupElement:
        elem = self.precomputed.get(token_bits)
        if elem is None:
            elem = blind(hash_to_group(token_bits), self.k)
            self.precomputed[token_bits] = elem
        return elem


@dataclass
class ClientQueryState:
    """Client-side session state: blinding exponent, in-flight batch, cache.

    With caching enabled r must stay fixed for the epoch; unblinded values
    are cached per blind-round day since the server's permutation makes
    per-token attribution impossible.
    """

    r: Scalar
    pending: list[tuple[Token, GroupElement]] = field(default_factory=list)
    cached_values: dict[int, list[TransformedToken]] = field(default_factory=dict)
    cached_bits: set[bytes] = field(default_factory=set)
    epoch_id: bytes | None = None

    @classmethod
    def new(cls, rng) -> "ClientQueryState":
        return cls(Scalar.random(rng))

    def flush_cache(self) -> None:
        self.cached_values.clear()
        self.cached_bits.clear()
        self.epoch_id = None

    def expire_cache(self, current_day: int, window_days: int) -> None:
        # cached_bits may keep stale entries; expired tokens leave the
        # contact log, so they are never queried again either way.
        cutoff = current_day - window_days + 1
        for day in [d for d in self.cached_values if d < cutoff]:
            del self.cached_values[day]

    def all_cached(self) -> list[TransformedToken]:
        return [v for day in sorted(self.cached_values) for v in self.cached_values[day]]


def client_blind(tokens: list[Token], state: ClientQueryState) -> list[GroupElement]:
    """Blind each token: m_i = H(token)^r, order preserved in state.pending.

    Empty input is legal (everything already cached) and yields [].
    """
    bits = [t.bits for t in tokens]
    if len(set(bits)) != len(bits):
        raise ProtocolError("tokens must be deduplicated before blinding")
    elems = [blind(hash_to_group(b), state.r) for b in bits]
    state.pending = list(zip(tokens, elems))
    return elems


def server_transform(blinded: list[GroupElement], state: ServerKeyState, rng,
                     min_batch: int | None = None) -> list[GroupElement]:
    """Raise each element to k and return them in uniformly random order.

    The permutation is never persisted; replies are a multiset, not a
    sequence.
    """
    if not blinded:
        raise ProtocolError("transform batch must be nonempty")
    if min_batch is not None and len(blinded) < min_batch:
        raise PolicyError(f"batch of {len(blinded)} below minimum {min_batch}")
    out = [blind(m, state.k) for m in blinded]
    rng.shuffle(out)
    return out


def client_unblind(replies: list[GroupElement], state: ClientQueryState,
                   trunc: TruncationParams) -> list[TransformedToken]:
    """Unblind and truncate the server's permuted replies.

    The result is positionally meaningless; callers must treat it as a set.
    """
    if len(replies) != len(state.pending):
        raise ProtocolError(
            f"got {len(replies)} replies for {len(state.pending)} pending tokens")
    r_inv = state.r.invert()
    return [truncate(blind(m, r_inv), trunc) for m in replies]


def psi_ca(client_tokens: list[Token], server1, server2, trunc: TruncationParams,
           rng, gen=None) -> int:
    """Run the full query in process and return the intersection cardinality.

    server1 must expose transform(elems) and answer_batch(queries) plus a
    `layout` attribute; server2 exposes answer_batch(queries). Both must
    serve the same published day store.
    """
    if not client_tokens:
        return 0
    state = ClientQueryState.new(rng)
    blinded = client_blind(client_tokens, state)
    replies = server1.transform(blinded)
    values = client_unblind(replies, state, trunc)
    layout = server1.layout
    unique = sorted(set(values), key=lambda v: v.value)

    class _Transport:
        def query_server(self, index, batch):
            return (server1 if index == 0 else server2).answer_batch(batch)

    kwargs = {} if gen is None else {"gen": gen}
    return pir_mod.multi_query(unique, layout, _Transport(), rng, **kwargs)


def dh_psi_oracle(xs: list[bytes], ys: list[bytes], rng) -> set[bytes]:
    """Reference two-party PSI without permutation or truncation.

    Returns the actual intersection items; |dh_psi_oracle(X, Y)| must agree
    with psi_ca on the same instance up to truncation collisions.
    """
    k = Scalar.random(rng)
    r = Scalar.random(rng)
    u = {blind(hash_to_group(x), k).data for x in set(xs)}
    out = set()
    for y in set(ys):
        m = blind(hash_to_group(y), r)
        m_k = blind(m, k)
        v = blind(m_k, r.invert())
        if v.data in u:
            out.add(y)
    return out


# --- Experimental batch consistency proof (default off) ---
#
# Aggregated Chaum-Pedersen: the client publishes R = g^r and the weighted
# base aggregate B = prod H(y_i)^{e_i}, then proves log_B(prod m_i^{e_i}) =
# log_g(R) with Fiat-Shamir weights e_i derived from the blinded transcript.
# The server can recompute the m-side aggregate but cannot check that B
# matches the true bases without an external commitment to them, so this
# binds the batch to one exponent, not the bases themselves.

_BATCH_DST = b"epitrace/v1/batch-consistency"


@dataclass(frozen=True)
class BatchConsistencyProof:
    base_aggregate: GroupElement
    session_key: GroupElement  # g^r
    commitment_base: GroupElement
    commitment_gen: GroupElement
    response: Scalar


def _batch_weights(blinded: list[GroupElement]) -> list[int]:
    seed = hashlib.sha512(_BATCH_DST + b"".join(m.data for m in blinded)).digest()
    weights = []
    for i in range(len(blinded)):
        h = hashlib.sha512(seed + i.to_bytes(4, "little")).digest()
        weights.append(1 + int.from_bytes(h, "little") % (2**128))
    return weights


def _weighted_product(elems: list[GroupElement], weights: list[int]) -> GroupElement:
    acc = None
    for elem, w in zip(elems, weights):
        term = blind(elem, Scalar(w % GROUP_ORDER))
        acc = term if acc is None else group_add(acc, term)
    return acc


def batch_consistency_proof(blinded: list[GroupElement], r: Scalar,
                            tokens: list[Token], rng=None) -> BatchConsistencyProof:
    """Prove all blinded elements share the exponent r. Experimental."""
    if rng is None:
        rng = secrets.SystemRandom()
    if len(blinded) != len(tokens) or not blinded:
        raise ProtocolError("blinded list and token list must align and be nonempty")
    weights = _batch_weights(blinded)
    bases = [hash_to_group(t.bits) for t in tokens]
    base_agg = _weighted_product(bases, weights)
    g = generator()
    session_key = blind(g, r)
    w = Scalar.random(rng)
    a1 = blind(base_agg, w)
    a2 = blind(g, w)
    c = _batch_challenge(blinded, base_agg, session_key, a1, a2)
    response = Scalar((w.value + c * r.value) % GROUP_ORDER)
    return BatchConsistencyProof(base_agg, session_key, a1, a2, response)


def _batch_challenge(blinded, base_agg, session_key, a1, a2) -> int:
    h = hashlib.sha512(
        _BATCH_DST + b"chal" + b"".join(m.data for m in blinded)
        + base_agg.data + session_key.data + a1.data + a2.data
    ).digest()
    return int.from_bytes(h, "little") % GROUP_ORDER


def verify_batch_consistency(blinded: list[GroupElement],
                             proof: BatchConsistencyProof) -> bool:
    """Server-side check; False on any mismatch or malformed proof."""
    try:
        if not blinded:
            return False
        weights = _batch_weights(blinded)
        m_agg = _weighted_product(blinded, weights)
        c = _batch_challenge(blinded, proof.base_aggregate, proof.session_key,
                             proof.commitment_base, proof.commitment_gen)
        if c == 0 or proof.response.value == 0:
            return False
        z = proof.response
        ok_base = blind(proof.base_aggregate, z) == group_add(
            proof.commitment_base, blind(m_agg, Scalar(c)))
        ok_gen = blind(generator(), z) == group_add(
            proof.commitment_gen, blind(proof.session_key, Scalar(c)))
        return ok_base and ok_gen
    except Exception:
        return False
