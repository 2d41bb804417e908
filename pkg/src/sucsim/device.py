"""Device lifecycle emulation.

A device is two files: `<serial>.silicon`, 32 read-only bytes standing
in for a memoryless hardware fingerprint, and `<serial>.envm`, a small
text record standing in for embedded non-volatile memory. The device
key is derived fresh from the silicon seed on every use and never
stored.

Personalization (one permitted run per device) draws S-box selections
from a pool, builds the eight involutive byte tables, seals the 2048
byte concatenation under the device key with authenticated encryption,
and flips the lifecycle flag. Every boot thereafter unseals the tables,
revalidates them, and loads the cipher instance into volatile state.

The envm text format is deliberately strict (fixed key order, lowercase
hex only) so that any single-byte corruption of the file is detected at
parse time or by the authentication tag.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, replace

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .cipher import SucInstance, SucParams, draw_instance
from .entropy import EntropySource, SystemEntropy
from .errors import DeviceError, IntegrityError, LifecycleError
from .sbox4 import SBoxPool
from .sbox8 import SBox8

SILICON_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
TABLES_BYTES = 2048  # 8 S-boxes x 256 bytes

LIFECYCLE_BLANK = "blank"
LIFECYCLE_PERSONALIZED = "personalized"

_KDF_SALT = b"sucsim.device-key.v1"
_HEX_RE = re.compile(r"\A[0-9a-f]*\Z")
_INT_RE = re.compile(r"\A[0-9]+\Z")


@dataclass(frozen=True)
class SealedBlob:
    nonce: bytes
    ciphertext: bytes
    tag: bytes


@dataclass
class Envm:
    """Persistent per-device record."""

    lifecycle: str = LIFECYCLE_BLANK
    params: SucParams | None = None
    blob: SealedBlob | None = None


@dataclass
class DeviceState:
    serial: str
    silicon_seed: bytes
    envm: Envm
    loaded: SucInstance | None = None


def silicon_path(directory, serial: str) -> str:
    return os.path.join(directory, f"{serial}.silicon")


def envm_path(directory, serial: str) -> str:
    return os.path.join(directory, f"{serial}.envm")


def derive_device_key(dev: DeviceState) -> bytes:
    """32-byte device key from the silicon seed, bound to the serial."""
    if not dev.silicon_seed:
        raise DeviceError(f"fingerprint unavailable for {dev.serial}")
    kdf = HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=_KDF_SALT,
        info=b"device-key:" + dev.serial.encode(),
    )
    return kdf.derive(dev.silicon_seed)


def _aad(serial: str, params: SucParams) -> bytes:
    # Binds serial and parameters to the sealed payload, so editing any
    # of them in the envm record breaks authentication.
    return b"|".join(
        [
            b"sucsim-envm-v1",
            serial.encode(),
            str(params.rounds).encode(),
            str(params.feistel_r).encode(),
            params.pool_digest.hex().encode(),
        ]
    )


def seal(key: bytes, data: bytes, aad: bytes, entropy: EntropySource) -> SealedBlob:
    if len(key) != 32:
        raise ValueError("key must be 32 bytes")
    nonce = entropy.read(NONCE_BYTES)
    out = AESGCM(key).encrypt(nonce, data, aad)
    return SealedBlob(nonce=nonce, ciphertext=out[:-TAG_BYTES], tag=out[-TAG_BYTES:])


def unseal(key: bytes, blob: SealedBlob, aad: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(blob.nonce, blob.ciphertext + blob.tag, aad)
    except InvalidTag as exc:
        raise IntegrityError("sealed tables failed authentication") from exc


def manufacture(
    directory, serial: str, entropy: EntropySource | None = None
) -> DeviceState:
    """Create the silicon fingerprint and a blank envm record on disk."""
    entropy = entropy or SystemEntropy()
    spath = silicon_path(directory, serial)
    if os.path.exists(spath):
        raise DeviceError(f"device {serial} already exists at {spath}")
    seed = entropy.read(SILICON_BYTES)
    os.makedirs(directory, exist_ok=True)
    with open(spath, "wb") as f:
        f.write(seed)
    dev = DeviceState(serial=serial, silicon_seed=seed, envm=Envm())
    save_envm(dev, directory)
    return dev


def otpp(
    dev: DeviceState,
    pool: SBoxPool,
    params: SucParams,
    entropy: EntropySource,
) -> DeviceState:
    """One-time personalization: select, build, seal, flip the lifecycle.

    Consumes exactly 4*(feistel_r+1) pool-index draws (plus the seal
    nonce) from `entropy`. Permitted once; a personalized device refuses.
    """
    if dev.envm.lifecycle != LIFECYCLE_BLANK:
        raise LifecycleError(f"device {dev.serial} already personalized")
    if params.pool_digest and params.pool_digest != pool.digest:
        raise DeviceError("pool does not match params.pool_digest")
    if not params.pool_digest:
        params = replace(params, pool_digest=pool.digest)

    instance = draw_instance(pool, params, entropy)
    key = derive_device_key(dev)
    blob = seal(key, instance.tables_blob(), _aad(dev.serial, params), entropy)
    dev.envm = Envm(lifecycle=LIFECYCLE_PERSONALIZED, params=params, blob=blob)
    return dev


def reinit(dev: DeviceState) -> SucInstance:
    """Per-boot reload: unseal, revalidate every table, publish `loaded`."""
    if dev.envm.lifecycle != LIFECYCLE_PERSONALIZED:
        raise LifecycleError(f"device {dev.serial} not personalized")
    key = derive_device_key(dev)
    data = unseal(key, dev.envm.blob, _aad(dev.serial, dev.envm.params))
    if len(data) != TABLES_BYTES:
        raise IntegrityError(f"sealed payload has {len(data)} bytes, want {TABLES_BYTES}")
    sboxes = []
    for i in range(8):
        table = data[256 * i : 256 * (i + 1)]
        if len(set(table)) != 256:
            raise IntegrityError(f"table {i} is not a permutation")
        if any(table[table[x]] != x for x in range(256)):
            raise IntegrityError(f"table {i} is not an involution")
        sboxes.append(SBox8.from_bytes(table))
    instance = SucInstance(sboxes=tuple(sboxes), params=dev.envm.params)
    dev.loaded = instance
    return instance


def power_off(dev: DeviceState) -> None:
    """Drop volatile state; envm survives."""
    dev.loaded = None


# ---------------------------------------------------------------------------
# envm file format

def _render_envm(dev: DeviceState) -> str:
    lines = [f"serial: {dev.serial}", f"lifecycle: {dev.envm.lifecycle}"]
    if dev.envm.lifecycle == LIFECYCLE_PERSONALIZED:
        p, b = dev.envm.params, dev.envm.blob
        lines += [
            f"rounds: {p.rounds}",
            f"feistel_r: {p.feistel_r}",
            f"pool_digest: {p.pool_digest.hex()}",
            f"nonce: {b.nonce.hex()}",
            f"ciphertext: {b.ciphertext.hex()}",
            f"tag: {b.tag.hex()}",
        ]
    return "\n".join(lines) + "\n"


def save_envm(dev: DeviceState, directory) -> None:
    path = envm_path(directory, dev.serial)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as f:
        f.write(_render_envm(dev))
    os.replace(tmp, path)


def _parse_kv(text: str, expected_keys) -> dict:
    lines = [ln for ln in text.split("\n") if ln != ""]
    if len(lines) != len(expected_keys):
        raise IntegrityError("envm record has unexpected structure")
    fields = {}
    for line, want_key in zip(lines, expected_keys):
        if ": " not in line:
            raise IntegrityError("envm line missing separator")
        key, value = line.split(": ", 1)
        if key != want_key:
            raise IntegrityError(f"envm field {key!r} unexpected")
        fields[key] = value
    return fields


def _hex_field(fields: dict, key: str, nbytes: int | None = None) -> bytes:
    value = fields[key]
    if not _HEX_RE.match(value) or len(value) % 2:
        raise IntegrityError(f"envm field {key!r} is not canonical hex")
    raw = bytes.fromhex(value)
    if nbytes is not None and len(raw) != nbytes:
        raise IntegrityError(f"envm field {key!r} has wrong length")
    return raw


def _int_field(fields: dict, key: str) -> int:
    value = fields[key]
    if not _INT_RE.match(value):
        raise IntegrityError(f"envm field {key!r} is not a decimal integer")
    return int(value)


def load_device(directory, serial: str) -> DeviceState:
    spath = silicon_path(directory, serial)
    try:
        with open(spath, "rb") as f:
            seed = f.read()
    except FileNotFoundError:
        raise DeviceError(f"fingerprint unavailable: {spath} missing") from None
    if len(seed) != SILICON_BYTES:
        raise DeviceError(f"silicon file {spath} has wrong size")

    epath = envm_path(directory, serial)
    try:
        with open(epath, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise DeviceError(f"envm record missing: {epath}") from None
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise IntegrityError("envm record is not ascii text") from exc

    head = text.split("\n", 2)
    if len(head) < 2 or not head[1].startswith("lifecycle: "):
        raise IntegrityError("envm record has unexpected structure")
    state = head[1][len("lifecycle: ") :]

    if state == LIFECYCLE_BLANK:
        fields = _parse_kv(text, ["serial", "lifecycle"])
        envm = Envm()
    elif state == LIFECYCLE_PERSONALIZED:
        fields = _parse_kv(
            text,
            [
                "serial",
                "lifecycle",
                "rounds",
                "feistel_r",
                "pool_digest",
                "nonce",
                "ciphertext",
                "tag",
            ],
        )
        try:
            params = SucParams(
                rounds=_int_field(fields, "rounds"),
                feistel_r=_int_field(fields, "feistel_r"),
                pool_digest=_hex_field(fields, "pool_digest", 32),
            )
        except ValueError as exc:
            raise IntegrityError(f"envm parameters invalid: {exc}") from exc
        blob = SealedBlob(
            nonce=_hex_field(fields, "nonce", NONCE_BYTES),
            ciphertext=_hex_field(fields, "ciphertext", TABLES_BYTES),
            tag=_hex_field(fields, "tag", TAG_BYTES),
        )
        envm = Envm(lifecycle=LIFECYCLE_PERSONALIZED, params=params, blob=blob)
    else:
        raise IntegrityError(f"envm lifecycle {state!r} unknown")

    if fields["serial"] != serial:
        raise IntegrityError(
            f"envm serial {fields['serial']!r} does not match {serial!r}"
        )
    return DeviceState(serial=serial, silicon_seed=seed, envm=envm)


def boot(directory, serial: str) -> DeviceState:
    """Load device files and run reinitialization."""
    dev = load_device(directory, serial)
    reinit(dev)
    return dev


def tamper_envm(directory, serial: str, byte_index: int, xor: int = 0xFF) -> None:
    """Test helper: flip one byte of the envm record in place."""
    if not 1 <= xor <= 255:
        raise ValueError("xor must be a nonzero byte value")
    path = envm_path(directory, serial)
    with open(path, "rb") as f:
        raw = bytearray(f.read())
    if not 0 <= byte_index < len(raw):
        raise ValueError(f"byte index {byte_index} outside file of {len(raw)} bytes")
    raw[byte_index] ^= xor
    with open(path, "wb") as f:
        f.write(raw)
