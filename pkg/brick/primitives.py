"""
Hashing, Ed25519 signatures and the canonical byte layouts every other module
signs or hashes.

All signed plaintexts start with an ASCII domain-separation tag followed by
fixed-width fields, so a plaintext of one kind can never be read as another.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, NewType, Tuple, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from brick.errors import EncodingError

logger = logging.getLogger(__name__)

DIGEST_SIZE = 32
KEY_SIZE = 32
SIGNATURE_SIZE = 64
UINT_SIZE = 8
UINT_MAX = 2 ** 64 - 1

Digest = NewType('Digest', bytes)
Signature = NewType('Signature', bytes)

ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))

# Field kinds used in message layouts
U64 = 'u64'
DIGEST = 'digest'
KEY = 'key'

TAG_COMMIT = 'BRICK/commit'
TAG_SEQ = 'BRICK/seq'
TAG_ACK = 'BRICK/ack'
TAG_CLOSE = 'BRICK/close'
TAG_STATE = 'BRICK/state'
TAG_HEAD = 'BRICK/head'
TAG_ACK_HEAD = 'BRICK/ack+'
TAG_CLOSE_HEAD = 'BRICK/close+'
TAG_FEE = 'BRICK/fee'
TAG_CHANNEL = 'BRICK/channel'
TAG_AUDIT = 'BRICK/audit'
TAG_KEYSEED = 'BRICK/keyseed'

MESSAGE_LAYOUTS: Dict[str, Tuple[str, ...]] = {
    TAG_COMMIT: (DIGEST, DIGEST, U64),             # channel, commitment, seq
    TAG_SEQ: (DIGEST, U64),                        # channel, seq
    TAG_ACK: (DIGEST, U64),                        # channel, seq
    TAG_CLOSE: (DIGEST, U64),                      # channel, seq
    TAG_STATE: (DIGEST, U64, U64, U64, DIGEST),    # channel, seq, balance_a, balance_b, salt
    TAG_HEAD: (DIGEST, DIGEST, U64),               # channel, head, seq
    TAG_ACK_HEAD: (DIGEST, DIGEST, U64),           # channel, head, seq
    TAG_CLOSE_HEAD: (DIGEST, DIGEST, U64),         # channel, head, seq
    TAG_FEE: (DIGEST, KEY, U64),                   # channel, warden, cumulative
    TAG_CHANNEL: (KEY, KEY, U64),                  # party a, party b, nonce
    TAG_AUDIT: (DIGEST, KEY),                      # channel, auditor
    TAG_KEYSEED: (U64, U64),                       # run seed, index
}

_FIELD_WIDTHS = {U64: UINT_SIZE, DIGEST: DIGEST_SIZE, KEY: KEY_SIZE}

FieldValue = Union[int, bytes]


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of ``data``."""
    return Digest(hashlib.sha256(data).digest())


def encode_uint(value: int) -> bytes:
    """8-byte big-endian unsigned integer."""
    if not isinstance(value, int) or isinstance(value, bool) or value < 0 or value > UINT_MAX:
        raise EncodingError('bad-integer', f"cannot encode {value!r} as u64")
    return value.to_bytes(UINT_SIZE, 'big')


def decode_uint(data: bytes) -> int:
    if len(data) != UINT_SIZE:
        raise EncodingError('bad-integer', f"expected {UINT_SIZE} bytes, got {len(data)}")
    return int.from_bytes(data, 'big')


def _encode_field(kind: str, value: FieldValue) -> bytes:
    if kind == U64:
        return encode_uint(value)  # type: ignore[arg-type]
    if isinstance(value, PublicKey):
        value = value.raw
    if not isinstance(value, (bytes, bytearray)) or len(value) != _FIELD_WIDTHS[kind]:
        raise EncodingError('bad-field', f"{kind} field must be {_FIELD_WIDTHS[kind]} bytes")
    return bytes(value)


def encode_message(tag: str, *values: FieldValue) -> bytes:
    """Tag followed by the layout's fields in declared order."""
    layout = MESSAGE_LAYOUTS.get(tag)
    if layout is None:
        raise EncodingError('unknown-tag', tag)
    if len(values) != len(layout):
        raise EncodingError('bad-arity', f"{tag} takes {len(layout)} fields, got {len(values)}")
    return tag.encode('ascii') + b''.join(_encode_field(k, v) for k, v in zip(layout, values))


def message_size(tag: str) -> int:
    return len(tag) + sum(_FIELD_WIDTHS[k] for k in MESSAGE_LAYOUTS[tag])


def decode_message(data: bytes) -> Tuple[str, Tuple[FieldValue, ...]]:
    """Inverse of :func:`encode_message`; identifies the kind by tag and length."""
    for tag in sorted(MESSAGE_LAYOUTS, key=len, reverse=True):
        raw_tag = tag.encode('ascii')
        if not data.startswith(raw_tag) or len(data) != message_size(tag):
            continue
        offset = len(raw_tag)
        values = []
        for kind in MESSAGE_LAYOUTS[tag]:
            width = _FIELD_WIDTHS[kind]
            chunk = data[offset:offset + width]
            values.append(decode_uint(chunk) if kind == U64 else bytes(chunk))
            offset += width
        return tag, tuple(values)
    raise EncodingError('unknown-message', f"no layout matches {len(data)} bytes")


@dataclass(frozen=True, order=True)
class PublicKey:
    """Raw 32-byte Ed25519 verification key."""

    raw: bytes

    def __post_init__(self):
        if len(self.raw) != KEY_SIZE:
            raise EncodingError('bad-key', f"public key must be {KEY_SIZE} bytes")

    def verify(self, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(self.raw).verify(bytes(signature), message)
            return True
        except (InvalidSignature, ValueError, TypeError):
            return False

    def fingerprint(self) -> Digest:
        """H(pk), the form committed on-chain at open."""
        return hash_bytes(self.raw)

    def hex(self) -> str:
        return self.raw.hex()

    def short(self) -> str:
        return self.raw.hex()[:8]


@dataclass(frozen=True)
class KeyPair:
    """Seed-derived Ed25519 key pair."""

    seed: bytes = field(repr=False)
    public: PublicKey
    _private: Ed25519PrivateKey = field(repr=False, compare=False)

    def sign(self, message: bytes) -> Signature:
        return Signature(self._private.sign(message))


def keygen(seed: bytes) -> KeyPair:
    """Same seed, same key pair."""
    if len(seed) != KEY_SIZE:
        raise EncodingError('bad-seed', f"seed must be {KEY_SIZE} bytes")
    private = Ed25519PrivateKey.from_private_bytes(seed)
    raw_public = private.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return KeyPair(seed=bytes(seed), public=PublicKey(raw_public), _private=private)


def derive_seed(run_seed: int, index: int) -> bytes:
    """Per-actor key seed for a seeded run."""
    return hash_bytes(encode_message(TAG_KEYSEED, run_seed, index))


def sign(key: KeyPair, message: bytes) -> Signature:
    return key.sign(message)


def verify(public: PublicKey, message: bytes, signature: bytes) -> bool:
    return public.verify(message, signature)
