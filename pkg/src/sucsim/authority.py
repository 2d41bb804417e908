"""Trusted-Authority records and the single-use challenge-response flow.

Enrollment challenges a personalized device with t random blocks and
stores the (challenge, response) pairs in a per-serial record. Each
authentication consumes exactly one pair, whether or not it succeeds,
so a challenge is never transmitted twice. Because the device cipher is
an involution, the record also supports the reversed handshake: send
the stored response and expect the stored challenge back.

Records live in a directory, one text file per serial, rewritten
atomically; per-serial locks serialize mutation.
"""

from __future__ import annotations

import datetime as _dt
import enum
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Protocol

from .cipher import SucParams, apply
from .entropy import EntropySource
from .errors import ChannelError, EnrollmentError

_HEX_RE = re.compile(r"\A[0-9a-f]*\Z")


class AuthResult(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    EXHAUSTED = "exhausted"


class DeviceChannel(Protocol):
    """Anything that can answer a challenge block for a given device."""

    serial: str

    def respond(self, block: bytes) -> bytes: ...


@dataclass
class CrPair:
    x: bytes
    y: bytes
    used: bool = False


@dataclass
class UirRecord:
    serial: str
    params: SucParams
    pairs: list = field(default_factory=list)
    created_at: str = ""

    @property
    def unused_count(self) -> int:
        return sum(1 for p in self.pairs if not p.used)

    @property
    def payload_bytes(self) -> int:
        # 8 challenge + 8 response bytes per enrolled pair
        return 16 * len(self.pairs)


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def enroll(
    channel: DeviceChannel,
    t: int,
    entropy: EntropySource,
    params: SucParams | None = None,
) -> UirRecord:
    """Collect t distinct-challenge response pairs from the device."""
    if t < 1:
        raise ValueError("t must be >= 1")
    record = UirRecord(
        serial=channel.serial, params=params or SucParams(), created_at=_utcnow()
    )
    seen = set()
    while len(record.pairs) < t:
        x = entropy.read(8)
        if x in seen:
            continue
        seen.add(x)
        y = channel.respond(x)
        record.pairs.append(CrPair(x=x, y=bytes(y)))
    return record


def _consume_next(record: UirRecord, entropy: EntropySource | None) -> CrPair | None:
    unused = [p for p in record.pairs if not p.used]
    if not unused:
        return None
    if entropy is None:
        pair = unused[0]  # lowest index first: deterministic, auditable
    else:
        pair = unused[entropy.draw_index(len(unused))]
    pair.used = True
    return pair


def authenticate(
    channel: DeviceChannel,
    record: UirRecord,
    entropy: EntropySource | None = None,
) -> AuthResult:
    """One handshake: send a stored challenge, require the stored response.

    The selected pair is consumed even when the device answers wrongly or
    not at all. Pass an entropy source to randomize pair selection.
    """
    pair = _consume_next(record, entropy)
    if pair is None:
        return AuthResult.EXHAUSTED
    try:
        answer = channel.respond(pair.x)
    except ChannelError:
        return AuthResult.REJECTED
    return AuthResult.ACCEPTED if bytes(answer) == pair.y else AuthResult.REJECTED


def inverse_authenticate(
    channel: DeviceChannel,
    record: UirRecord,
    entropy: EntropySource | None = None,
) -> AuthResult:
    """Reversed handshake: send the stored response, expect the challenge."""
    pair = _consume_next(record, entropy)
    if pair is None:
        return AuthResult.EXHAUSTED
    try:
        answer = channel.respond(pair.y)
    except ChannelError:
        return AuthResult.REJECTED
    return AuthResult.ACCEPTED if bytes(answer) == pair.x else AuthResult.REJECTED


# ---------------------------------------------------------------------------
# persistence

_PAIR_RE = re.compile(r"\Apair: ([0-9a-f]{16}) ([0-9a-f]{16}) ([01])\Z")
_FIELD_KEYS = ("serial", "created_at", "rounds", "feistel_r", "pool_digest")


class UirStore:
    """Directory of `<serial>.uir` records with per-serial write locks."""

    def __init__(self, directory) -> None:
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, serial: str) -> str:
        return os.path.join(self.directory, f"{serial}.uir")

    def lock_for(self, serial: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(serial, threading.Lock())

    def has(self, serial: str) -> bool:
        return os.path.exists(self._path(serial))

    def serials(self) -> list:
        return sorted(
            name[: -len(".uir")]
            for name in os.listdir(self.directory)
            if name.endswith(".uir")
        )

    def save(self, record: UirRecord) -> None:
        lines = [
            f"serial: {record.serial}",
            f"created_at: {record.created_at}",
            f"rounds: {record.params.rounds}",
            f"feistel_r: {record.params.feistel_r}",
            f"pool_digest: {record.params.pool_digest.hex()}",
        ]
        lines += [
            f"pair: {p.x.hex()} {p.y.hex()} {1 if p.used else 0}"
            for p in record.pairs
        ]
        path = self._path(record.serial)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="ascii") as f:
            f.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    def load(self, serial: str) -> UirRecord:
        try:
            with open(self._path(serial), "r", encoding="ascii") as f:
                lines = [ln for ln in f.read().split("\n") if ln]
        except FileNotFoundError:
            raise EnrollmentError(f"no record for serial {serial!r}") from None
        fields = {}
        pairs = []
        for ln in lines:
            m = _PAIR_RE.match(ln)
            if m:
                pairs.append(
                    CrPair(
                        x=bytes.fromhex(m.group(1)),
                        y=bytes.fromhex(m.group(2)),
                        used=m.group(3) == "1",
                    )
                )
                continue
            if ": " not in ln:
                raise EnrollmentError(f"malformed record line: {ln!r}")
            key, value = ln.split(": ", 1)
            if key not in _FIELD_KEYS or key in fields:
                raise EnrollmentError(f"malformed record line: {ln!r}")
            fields[key] = value
        try:
            digest_hex = fields["pool_digest"]
            if not _HEX_RE.match(digest_hex):
                raise EnrollmentError("pool_digest is not canonical hex")
            record = UirRecord(
                serial=fields["serial"],
                params=SucParams(
                    rounds=int(fields["rounds"]),
                    feistel_r=int(fields["feistel_r"]),
                    pool_digest=bytes.fromhex(digest_hex),
                ),
                pairs=pairs,
                created_at=fields["created_at"],
            )
        except KeyError as exc:
            raise EnrollmentError(f"record for {serial!r} missing field {exc}") from exc
        if record.serial != serial:
            raise EnrollmentError("record serial does not match file name")
        return record

    def create(self, record: UirRecord) -> None:
        """Persist a new record; duplicate serials are refused."""
        with self.lock_for(record.serial):
            if self.has(record.serial):
                raise EnrollmentError(f"serial {record.serial!r} already enrolled")
            self.save(record)

    def stats(self) -> list:
        """(serial, total pairs, used, unused) per enrolled device."""
        out = []
        for serial in self.serials():
            record = self.load(serial)
            used = sum(1 for p in record.pairs if p.used)
            out.append((serial, len(record.pairs), used, len(record.pairs) - used))
        return out


class LocalDeviceChannel:
    """In-process channel over a booted device; used by tests and the CLI."""

    def __init__(self, dev) -> None:
        if dev.loaded is None:
            raise ChannelError(f"device {dev.serial} has no loaded instance")
        self.serial = dev.serial
        self._dev = dev

    def respond(self, block: bytes) -> bytes:
        return apply(self._dev.loaded, block)
