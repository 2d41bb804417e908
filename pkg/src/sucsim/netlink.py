"""Binary TCP link between the authority service and device agents.

Wire format, fixed 7-byte header then payload:

    magic "SUC1" | kind (1 byte) | length (u16 big-endian) | payload

Serial strings travel as UTF-8, blocks as 8 raw bytes, enrollment sizes
as u16 big-endian, authentication results as one status byte.

A session is one TCP connection. The agent opens with HELLO carrying
its serial; the service answers HELLO_ACK and then either enrolls the
device (unknown serial: ENROLL_BEGIN, t challenge/response exchanges,
ENROLL_END) or runs a single authentication (known serial: CHALLENGE,
RESPONSE, AUTH_RESULT; an exhausted record sends AUTH_RESULT straight
away). An agent that cannot answer a challenge replies with an ERROR
frame, which the service scores as a rejection.
"""

from __future__ import annotations

import enum
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import authority
from .authority import AuthResult, UirStore
from .cipher import apply
from .entropy import EntropySource, SystemEntropy
from .errors import ChannelError, FrameError, ProtocolError

log = logging.getLogger("sucsim.netlink")

MAGIC = b"SUC1"
HEADER = struct.Struct(">4sBH")
MAX_PAYLOAD = 65535


class FrameKind(enum.IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    CHALLENGE = 3
    RESPONSE = 4
    ENROLL_BEGIN = 5
    ENROLL_END = 6
    AUTH_RESULT = 7
    ERROR = 8


_KINDS = {int(k) for k in FrameKind}

_STATUS_BYTE = {
    AuthResult.ACCEPTED: 0,
    AuthResult.REJECTED: 1,
    AuthResult.EXHAUSTED: 2,
}
_STATUS_FROM_BYTE = {v: k for k, v in _STATUS_BYTE.items()}


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    payload: bytes = b""


def encode(frame: Frame) -> bytes:
    payload = bytes(frame.payload)
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds u16 length")
    return HEADER.pack(MAGIC, int(frame.kind), len(payload)) + payload


class StreamDecoder:
    """Incremental frame parser; feed() returns every completed frame."""

    def __init__(self) -> None:
        self._buf = bytearray()

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list:
        self._buf += data
        frames = []
        while len(self._buf) >= HEADER.size:
            magic, kind, length = HEADER.unpack_from(self._buf, 0)
            if magic != MAGIC:
                raise FrameError(f"bad magic {bytes(magic)!r}")
            if kind not in _KINDS:
                raise FrameError(f"unknown frame kind {kind}")
            if len(self._buf) < HEADER.size + length:
                break
            payload = bytes(self._buf[HEADER.size : HEADER.size + length])
            del self._buf[: HEADER.size + length]
            frames.append(Frame(kind=FrameKind(kind), payload=payload))
        return frames


def decode(data: bytes) -> Frame:
    """Strict single-frame decode; trailing or missing bytes are errors."""
    dec = StreamDecoder()
    frames = dec.feed(data)
    if not frames:
        raise FrameError("truncated frame")
    if len(frames) > 1 or dec.pending:
        raise FrameError("trailing bytes after frame")
    return frames[0]


class FrameChannel:
    """Blocking frame I/O over a connected socket."""

    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        self._decoder = StreamDecoder()
        self._ready: list = []

    def send(self, frame: Frame) -> None:
        try:
            self._sock.sendall(encode(frame))
        except OSError as exc:
            raise ChannelError(f"send failed: {exc}") from exc

    def recv(self) -> Frame:
        while not self._ready:
            try:
                data = self._sock.recv(4096)
            except socket.timeout as exc:
                raise ChannelError("session timed out") from exc
            except OSError as exc:
                raise ChannelError(f"recv failed: {exc}") from exc
            if not data:
                if self._decoder.pending:
                    raise FrameError("connection closed mid-frame")
                raise ChannelError("connection closed")
            self._ready.extend(self._decoder.feed(data))
        return self._ready.pop(0)

    def expect(self, kind: FrameKind) -> Frame:
        frame = self.recv()
        if frame.kind == FrameKind.ERROR:
            raise ChannelError(
                f"peer error: {frame.payload.decode('utf-8', 'replace')}"
            )
        if frame.kind != kind:
            raise ProtocolError(f"expected {kind.name}, got {frame.kind.name}")
        return frame


class _SessionChannel:
    """authority.DeviceChannel over a live agent session (service side)."""

    def __init__(self, serial: str, channel: FrameChannel) -> None:
        self.serial = serial
        self._channel = channel

    def respond(self, block: bytes) -> bytes:
        self._channel.send(Frame(FrameKind.CHALLENGE, block))
        frame = self._channel.expect(FrameKind.RESPONSE)
        if len(frame.payload) != 8:
            raise ProtocolError(f"response of {len(frame.payload)} bytes")
        return frame.payload


class TaService:
    """Threaded authority endpoint.

    Unknown serials are enrolled with `enroll_pairs` challenges on first
    contact; known serials get one authentication per session. Wall-clock
    seconds per authentication are kept in `auth_log`.
    """

    def __init__(
        self,
        store: UirStore,
        listen: tuple = ("127.0.0.1", 0),
        enroll_pairs: int = 16,
        entropy: EntropySource | None = None,
        timeout: float = 10.0,
    ) -> None:
        self.store = store
        self.enroll_pairs = enroll_pairs
        self.entropy = entropy or SystemEntropy()
        self.timeout = timeout
        self.auth_log: list = []
        self._listener = socket.create_server(listen)
        self.address = self._listener.getsockname()
        self._threads: list = []
        self._accept_thread: threading.Thread | None = None
        self._stopping = threading.Event()

    def __enter__(self) -> "TaService":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def start(self) -> None:
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="ta-accept", daemon=True
        )
        self._accept_thread.start()
        log.info("authority listening on %s:%d", *self.address[:2])

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
        for t in self._threads:
            t.join(timeout=5)

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stopping.wait(0.5):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, peer = self._listener.accept()
            except OSError:
                break
            t = threading.Thread(
                target=self._serve_session, args=(conn, peer), daemon=True
            )
            t.start()
            self._threads.append(t)

    def _serve_session(self, conn: socket.socket, peer) -> None:
        conn.settimeout(self.timeout)
        channel = FrameChannel(conn)
        try:
            hello = channel.recv()
            if hello.kind != FrameKind.HELLO:
                raise ProtocolError(f"expected HELLO, got {hello.kind.name}")
            serial = hello.payload.decode("utf-8")
            channel.send(Frame(FrameKind.HELLO_ACK))
            if self.store.has(serial):
                self._run_authentication(channel, serial)
            else:
                self._run_enrollment(channel, serial)
        except (FrameError, ProtocolError, ChannelError, OSError) as exc:
            log.warning("session with %s aborted: %s", peer, exc)
            try:
                channel.send(Frame(FrameKind.ERROR, str(exc).encode()))
            except (ChannelError, OSError):
                pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _run_enrollment(self, channel: FrameChannel, serial: str) -> None:
        t = self.enroll_pairs
        channel.send(Frame(FrameKind.ENROLL_BEGIN, struct.pack(">H", t)))
        record = authority.enroll(_SessionChannel(serial, channel), t, self.entropy)
        self.store.create(record)
        channel.send(Frame(FrameKind.ENROLL_END))
        log.info("enrolled %s with %d pairs", serial, t)

    def _run_authentication(self, channel: FrameChannel, serial: str) -> None:
        started = time.perf_counter()
        with self.store.lock_for(serial):
            record = self.store.load(serial)
            result = authority.authenticate(_SessionChannel(serial, channel), record)
            self.store.save(record)
        elapsed = time.perf_counter() - started
        self.auth_log.append((serial, result, elapsed))
        log.info("auth %s: %s (%.1f ms)", serial, result.value, elapsed * 1e3)
        channel.send(
            Frame(FrameKind.AUTH_RESULT, bytes([_STATUS_BYTE[result]]))
        )


@dataclass
class AgentOutcome:
    """What one agent session accomplished."""

    serial: str
    enrolled: int = 0
    result: AuthResult | None = None
    error: str | None = None
    answered: int = 0
    elapsed: float = field(default=0.0)

    @property
    def ok(self) -> bool:
        return self.error is None and self.result in (None, AuthResult.ACCEPTED)


def run_agent(dev, address: tuple, timeout: float = 10.0) -> AgentOutcome:
    """One agent session for a loaded (or deliberately unbootable) device.

    Answers CHALLENGE frames with the device cipher until the service
    closes the exchange. A device with nothing loaded answers ERROR, so
    the service rejects it.
    """
    outcome = AgentOutcome(serial=dev.serial)
    started = time.perf_counter()
    with socket.create_connection(address, timeout=timeout) as sock:
        sock.settimeout(timeout)
        channel = FrameChannel(sock)
        channel.send(Frame(FrameKind.HELLO, dev.serial.encode()))
        channel.expect(FrameKind.HELLO_ACK)
        expect_pairs = 0
        while True:
            try:
                frame = channel.recv()
            except ChannelError:
                break  # service closed the session
            if frame.kind == FrameKind.CHALLENGE:
                if dev.loaded is None:
                    channel.send(
                        Frame(FrameKind.ERROR, b"device not initialized")
                    )
                    outcome.error = "device not initialized"
                    break
                if len(frame.payload) != 8:
                    raise ProtocolError("challenge must be 8 bytes")
                channel.send(
                    Frame(FrameKind.RESPONSE, apply(dev.loaded, frame.payload))
                )
                outcome.answered += 1
            elif frame.kind == FrameKind.ENROLL_BEGIN:
                (expect_pairs,) = struct.unpack(">H", frame.payload)
            elif frame.kind == FrameKind.ENROLL_END:
                outcome.enrolled = expect_pairs
                break
            elif frame.kind == FrameKind.AUTH_RESULT:
                outcome.result = _STATUS_FROM_BYTE.get(frame.payload[0])
                if outcome.result is None:
                    raise ProtocolError(f"bad status byte {frame.payload!r}")
                break
            elif frame.kind == FrameKind.ERROR:
                outcome.error = frame.payload.decode("utf-8", "replace")
                break
            else:
                raise ProtocolError(f"unexpected {frame.kind.name} frame")
    outcome.elapsed = time.perf_counter() - started
    return outcome
