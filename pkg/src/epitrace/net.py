"""Versioned binary wire protocol and transports.

Frame: <length:u32le><version:u8><msg_type:u8><payload>, where length covers
version + type + payload. Six message types (M1..M6) cover the whole
lifecycle; byte-level layouts are documented in WIRE.md. All multi-byte
integers are little-endian; element/key/share lengths are declared in
headers and validated before allocation.

Both transports (in-process and TCP) run every message through the same
encoder and decoder, so transcripts are byte-identical for identical RNG
seeds.
"""

from __future__ import annotations

import hashlib
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field

from .pir import DbLayout

FRAME_VERSION = 1
FRAME_HEADER = struct.Struct("<IBB")
DEFAULT_MAX_FRAME = 256 * 1024 * 1024
DEFAULT_MAX_COUNT = 1 << 20
ELEMENT_LEN = 32

MSG_CLIENT_BLIND = 1
MSG_SERVER_TRANSFORM = 2
MSG_PIR_QUERY = 3
MSG_PIR_ANSWER = 4
MSG_DIAGNOSIS_UPLOAD = 5
MSG_DB_SYNC = 6


class WireError(ValueError):
    """Typed decode failure; offset locates the first bad byte."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class M1ClientBlind:
    session_id: bytes
    day: int
    elements: tuple[bytes, ...]
    msg_type = MSG_CLIENT_BLIND


@dataclass(frozen=True)
class M2ServerTransform:
    session_id: bytes
    epoch_id: bytes
    n_shards: int
    bucket_bits: int
    slots: int
    token_bits: int
    elements: tuple[bytes, ...]
    msg_type = MSG_SERVER_TRANSFORM

    def layout(self) -> DbLayout:
        return DbLayout(self.n_shards, self.bucket_bits, self.slots, self.token_bits)


@dataclass(frozen=True)
class M3PirQueryBatch:
    session_id: bytes
    day: int
    entries: tuple[tuple[int, bytes], ...]  # (shard_id, serialized DPF key)
    msg_type = MSG_PIR_QUERY


@dataclass(frozen=True)
class M4PirAnswerBatch:
    session_id: bytes
    shares: tuple[bytes, ...]  # uniform length
    msg_type = MSG_PIR_ANSWER


@dataclass(frozen=True)
class M5DiagnosisUpload:
    batch_id: bytes
    payloads: tuple[bytes, ...]  # sealed seeds, uniform length
    msg_type = MSG_DIAGNOSIS_UPLOAD


@dataclass(frozen=True)
class M6DbSync:
    day: int
    epoch_id: bytes
    n_shards: int
    bucket_bits: int
    slots: int
    token_bits: int
    digests: tuple[bytes, ...]
    shard_payloads: tuple[bytes, ...]
    msg_type = MSG_DB_SYNC

    def layout(self) -> DbLayout:
        return DbLayout(self.n_shards, self.bucket_bits, self.slots, self.token_bits)


Message = (M1ClientBlind | M2ServerTransform | M3PirQueryBatch
           | M4PirAnswerBatch | M5DiagnosisUpload | M6DbSync)


class _Reader:
    """Bounded cursor over a payload; every read is length-checked."""

    def __init__(self, data: bytes, base_offset: int, max_count: int):
        self.data = data
        self.off = 0
        self.base = base_offset
        self.max_count = max_count

    def _take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.data):
            raise WireError("truncated payload", self.base + self.off)
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def count(self) -> int:
        n = self.u32()
        if n > self.max_count:
            raise WireError(f"count {n} exceeds policy limit", self.base + self.off - 4)
        return n

    def vec(self, n: int, width: int) -> tuple[bytes, ...]:
        if width < 0 or n * width > len(self.data) - self.off:
            raise WireError("declared vector exceeds payload", self.base + self.off)
        return tuple(self._take(width) for _ in range(n))

    def done(self) -> None:
        if self.off != len(self.data):
            raise WireError("trailing bytes after message", self.base + self.off)


def _encode_payload(msg: Message) -> bytes:
    if isinstance(msg, M1ClientBlind):
        head = msg.session_id + struct.pack("<II", msg.day, len(msg.elements))
        return head + b"".join(msg.elements)
    if isinstance(msg, M2ServerTransform):
        head = msg.session_id + msg.epoch_id + struct.pack(
            "<HBHHI", msg.n_shards, msg.bucket_bits, msg.slots, msg.token_bits,
            len(msg.elements))
        return head + b"".join(msg.elements)
    if isinstance(msg, M3PirQueryBatch):
        key_len = len(msg.entries[0][1]) if msg.entries else 0
        head = msg.session_id + struct.pack("<III", msg.day, len(msg.entries), key_len)
        return head + b"".join(struct.pack("<H", sid) + key for sid, key in msg.entries)
    if isinstance(msg, M4PirAnswerBatch):
        share_len = len(msg.shares[0]) if msg.shares else 0
        head = msg.session_id + struct.pack("<II", len(msg.shares), share_len)
        return head + b"".join(msg.shares)
    if isinstance(msg, M5DiagnosisUpload):
        p_len = len(msg.payloads[0]) if msg.payloads else 0
        head = msg.batch_id + struct.pack("<II", len(msg.payloads), p_len)
        return head + b"".join(msg.payloads)
    if isinstance(msg, M6DbSync):
        head = struct.pack("<I", msg.day) + msg.epoch_id + struct.pack(
            "<HBHHH", msg.n_shards, msg.bucket_bits, msg.slots, msg.token_bits,
            len(msg.digests))
        body = b"".join(msg.digests)
        body += struct.pack("<H", len(msg.shard_payloads))
        for p in msg.shard_payloads:
            body += struct.pack("<Q", len(p)) + p
        return head + body
    raise WireError(f"unknown message {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    """Frame a message: length prefix, version, type, payload."""
    payload = _encode_payload(msg)
    return FRAME_HEADER.pack(len(payload) + 2, FRAME_VERSION, msg.msg_type) + payload


def _check_uniform(items: tuple[bytes, ...], width: int, what: str, offset: int):
    if any(len(i) != width for i in items):
        raise WireError(f"non-uniform {what} length", offset)


def decode(data: bytes, max_frame: int = DEFAULT_MAX_FRAME,
           max_count: int = DEFAULT_MAX_COUNT) -> tuple[Message, int]:
    """Decode one frame; returns (message, bytes consumed).

    Rejects unknown versions/types, oversize frames, and any count that
    exceeds policy limits, all before payload allocation.
    """
    if len(data) < FRAME_HEADER.size:
        raise WireError("incomplete frame header", len(data))
    length, version, msg_type = FRAME_HEADER.unpack_from(data, 0)
    if length < 2:
        raise WireError("frame length too small", 0)
    if length > max_frame:
        raise WireError(f"frame length {length} exceeds max", 0)
    if version != FRAME_VERSION:
        raise WireError(f"unsupported version {version}", 4)
    end = FRAME_HEADER.size + length - 2
    if len(data) < end:
        raise WireError("incomplete frame body", len(data))
    payload = data[FRAME_HEADER.size:end]
    r = _Reader(payload, FRAME_HEADER.size, max_count)
    if msg_type == MSG_CLIENT_BLIND:
        session_id = r._take(16)
        day = r.u32()
        n = r.count()
        elements = r.vec(n, ELEMENT_LEN)
        r.done()
        return M1ClientBlind(session_id, day, elements), end
    if msg_type == MSG_SERVER_TRANSFORM:
        session_id = r._take(16)
        epoch_id = r._take(16)
        n_shards, bucket_bits, slots, token_bits = r.u16(), r.u8(), r.u16(), r.u16()
        n = r.count()
        elements = r.vec(n, ELEMENT_LEN)
        r.done()
        return M2ServerTransform(session_id, epoch_id, n_shards, bucket_bits,
                                 slots, token_bits, elements), end
    if msg_type == MSG_PIR_QUERY:
        session_id = r._take(16)
        day = r.u32()
        n = r.count()
        key_len = r.u32()
        if key_len > len(payload):
            raise WireError("declared key length exceeds payload", r.base + r.off - 4)
        entries = []
        for _ in range(n):
            sid = r.u16()
            entries.append((sid, r._take(key_len)))
        r.done()
        return M3PirQueryBatch(session_id, day, tuple(entries)), end
    if msg_type == MSG_PIR_ANSWER:
        session_id = r._take(16)
        n = r.count()
        share_len = r.u32()
        if share_len > len(payload):
            raise WireError("declared share length exceeds payload", r.base + r.off - 4)
        shares = r.vec(n, share_len)
        r.done()
        return M4PirAnswerBatch(session_id, shares), end
    if msg_type == MSG_DIAGNOSIS_UPLOAD:
        batch_id = r._take(16)
        n = r.count()
        p_len = r.u32()
        if p_len > len(payload):
            raise WireError("declared payload length exceeds payload", r.base + r.off - 4)
        payloads = r.vec(n, p_len)
        r.done()
        return M5DiagnosisUpload(batch_id, payloads), end
    if msg_type == MSG_DB_SYNC:
        day = r.u32()
        epoch_id = r._take(16)
        n_shards, bucket_bits, slots, token_bits = r.u16(), r.u8(), r.u16(), r.u16()
        n_digests = r.u16()
        digests = r.vec(n_digests, 32)
        n_payloads = r.u16()
        shard_payloads = []
        for _ in range(n_payloads):
            p_len = r.u64()
            shard_payloads.append(r._take(p_len))
        r.done()
        return M6DbSync(day, epoch_id, n_shards, bucket_bits, slots, token_bits,
                        digests, tuple(shard_payloads)), end
    raise WireError(f"unknown message type {msg_type}", 5)


# --- Transcripts ---


@dataclass(frozen=True)
class TranscriptEntry:
    msg_type: int
    direction: str  # e.g. "c->s1"
    n_bytes: int
    payload_sha256: bytes


@dataclass
class SessionTranscript:
    """Per-message byte counts and payload hashes for one query session."""

    entries: list[TranscriptEntry] = field(default_factory=list)

    def record(self, msg_type: int, direction: str, frame: bytes) -> None:
        self.entries.append(TranscriptEntry(
            msg_type, direction, len(frame), hashlib.sha256(frame).digest()))

    def message_order(self) -> list[int]:
        return [e.msg_type for e in self.entries]

    def client_bytes_sent(self) -> int:
        return sum(e.n_bytes for e in self.entries if e.direction.startswith("c->"))

    def client_bytes_received(self) -> int:
        return sum(e.n_bytes for e in self.entries if e.direction.endswith("->c"))

    def total_bytes(self) -> int:
        return sum(e.n_bytes for e in self.entries)


# --- Transports ---


class TransportError(RuntimeError):
    """Connection-level failure; sessions abort with no partial result."""


class InProcessConnection:
    """Loopback connection that still round-trips every frame through the
    codec, so byte accounting matches the TCP transport exactly."""

    def __init__(self, handler, credential: str = "local",
                 max_frame: int = DEFAULT_MAX_FRAME):
        self._handler = handler
        self._credential = credential
        self._max_frame = max_frame

    def request_raw(self, msg: Message) -> tuple[bytes, bytes, Message]:
        """Round-trip one message; returns both frames for transcripts."""
        frame = encode(msg)
        decoded, _ = decode(frame, self._max_frame)
        reply = self._handler.handle(decoded, credential=self._credential)
        reply_frame = encode(reply)
        decoded_reply, _ = decode(reply_frame, self._max_frame)
        return frame, reply_frame, decoded_reply

    def request(self, msg: Message) -> Message:
        return self.request_raw(msg)[2]

    def close(self) -> None:
        pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket, max_frame: int = DEFAULT_MAX_FRAME) -> bytes:
    header = _recv_exact(sock, FRAME_HEADER.size)
    length = struct.unpack_from("<I", header)[0]
    if length < 2 or length > max_frame:
        raise TransportError(f"refusing frame of length {length}")
    return header + _recv_exact(sock, length - 2)


class TcpConnection:
    """Client side of a framed TCP connection."""

    def __init__(self, host: str, port: int, max_frame: int = DEFAULT_MAX_FRAME,
                 timeout: float = 30.0):
        self._max_frame = max_frame
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"connect to {host}:{port} failed: {exc}") from exc

    def request_raw(self, msg: Message) -> tuple[bytes, bytes, Message]:
        frame = encode(msg)
        try:
            self._sock.sendall(frame)
            reply_frame = read_frame(self._sock, self._max_frame)
        except OSError as exc:
            raise TransportError(f"request failed: {exc}") from exc
        reply, _ = decode(reply_frame, self._max_frame)
        return frame, reply_frame, reply

    def request(self, msg: Message) -> Message:
        return self.request_raw(msg)[2]

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class FrameServer(socketserver.ThreadingTCPServer):
    """TCP server dispatching decoded frames to a role handler.

    handler_obj.handle(msg) -> reply message. Each connection is independent;
    a WireError on a connection closes it.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], handler_obj,
                 max_frame: int = DEFAULT_MAX_FRAME):
        self.handler_obj = handler_obj
        self.max_frame = max_frame
        super().__init__(address, _FrameRequestHandler)

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class _FrameRequestHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: FrameServer = self.server
        credential = str(self.client_address[0])
        while True:
            try:
                frame = read_frame(self.request, server.max_frame)
            except TransportError:
                return
            try:
                msg, _ = decode(frame, server.max_frame)
                reply = server.handler_obj.handle(msg, credential=credential)
            except (WireError, RuntimeError):
                return  # malformed input or policy rejection: drop the connection
            self.request.sendall(encode(reply))


@dataclass
class SessionResult:
    cardinality: int
    transcript: SessionTranscript


def session(client, server1_conn, server2_conn, day: int) -> SessionResult:
    """Run one PSI-CA query over connections: M1 -> M2, then M3/M4 per server.

    `client` is the protocol driver (system.ClientApp or compatible): it
    provides build_blind(day) -> M1, consume_transform(M2) -> None, and
    build_pir(day) -> (M3 for server 1, M3 for server 2, finish callback).
    Any transport failure aborts the whole session; no cardinality is
    emitted.
    """
    transcript = SessionTranscript()
    m1 = client.build_blind(day)
    f1, f2, m2 = server1_conn.request_raw(m1)
    transcript.record(MSG_CLIENT_BLIND, "c->s1", f1)
    transcript.record(MSG_SERVER_TRANSFORM, "s1->c", f2)
    client.consume_transform(m2)
    m3_a, m3_b, finish = client.build_pir(day)
    f3a, f4a, m4_a = server1_conn.request_raw(m3_a)
    transcript.record(MSG_PIR_QUERY, "c->s1", f3a)
    f3b, f4b, m4_b = server2_conn.request_raw(m3_b)
    transcript.record(MSG_PIR_QUERY, "c->s2", f3b)
    transcript.record(MSG_PIR_ANSWER, "s1->c", f4a)
    transcript.record(MSG_PIR_ANSWER, "s2->c", f4b)
    count = finish(m4_a, m4_b)
    return SessionResult(count, transcript)
