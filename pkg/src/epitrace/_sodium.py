"""ctypes bindings for the ristretto255 subset of libsodium.

Only the handful of functions the group layer needs are exposed; everything
returns plain bytes and raises RuntimeError on library-level failure.
"""

import ctypes
import ctypes.util

_lib = None


def _load() -> ctypes.CDLL:
    global _lib
    if _lib is not None:
        return _lib
    name = ctypes.util.find_library("sodium")
    candidates = [name] if name else []
    candidates += ["libsodium.so.23", "libsodium.so", "libsodium.dylib"]
    last_err = None
    for cand in candidates:
        if not cand:
            continue
        try:
            lib = ctypes.CDLL(cand)
            break
        except OSError as exc:  # pragma: no cover - depends on host
            last_err = exc
    else:  # pragma: no cover
        raise RuntimeError(f"libsodium not found (tried {candidates}): {last_err}")
    if lib.sodium_init() < 0:  # pragma: no cover
        raise RuntimeError("sodium_init failed")
    _lib = lib
    return lib


BYTES = 32
HASH_BYTES = 64


def is_valid_point(data: bytes) -> bool:
    if len(data) != BYTES:
        return False
    return _load().crypto_core_ristretto255_is_valid_point(data) == 1


def from_hash(h64: bytes) -> bytes:
    assert len(h64) == HASH_BYTES
    out = ctypes.create_string_buffer(BYTES)
    _load().crypto_core_ristretto255_from_hash(out, h64)
    return out.raw


def scalarmult(scalar_le: bytes, point: bytes) -> bytes:
    out = ctypes.create_string_buffer(BYTES)
    rc = _load().crypto_scalarmult_ristretto255(out, scalar_le, point)
    if rc != 0:
        raise RuntimeError("scalarmult failed (zero scalar, identity result, or invalid point)")
    return out.raw


def scalarmult_base(scalar_le: bytes) -> bytes:
    out = ctypes.create_string_buffer(BYTES)
    rc = _load().crypto_scalarmult_ristretto255_base(out, scalar_le)
    if rc != 0:
        raise RuntimeError("scalarmult_base failed (zero scalar)")
    return out.raw


def point_add(p: bytes, q: bytes) -> bytes:
    out = ctypes.create_string_buffer(BYTES)
    rc = _load().crypto_core_ristretto255_add(out, p, q)
    if rc != 0:
        raise RuntimeError("point addition failed (invalid input)")
    return out.raw
