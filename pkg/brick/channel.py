"""
Pure data model of a Brick channel: states, blinded commitments, announcements
and warden acknowledgements, plus the update construction/validation rules.

Nothing here touches the network or the chain.
"""

import logging
from dataclasses import dataclass, replace
from typing import NewType, Optional

import numpy as np

from brick.errors import ChannelError
from brick.primitives import (
    DIGEST_SIZE,
    TAG_ACK,
    TAG_ACK_HEAD,
    TAG_CHANNEL,
    TAG_CLOSE,
    TAG_CLOSE_HEAD,
    TAG_COMMIT,
    TAG_HEAD,
    TAG_SEQ,
    TAG_STATE,
    Digest,
    KeyPair,
    PublicKey,
    Signature,
    encode_message,
    hash_bytes,
)

logger = logging.getLogger(__name__)

ChannelId = NewType('ChannelId', bytes)

ROLE_A = 'A'
ROLE_B = 'B'

CONSERVATION_VIOLATION = 'conservation-violation'
NON_MONOTONE_SEQ = 'non-monotone-seq'
MISSING_COUNTERPARTY_SIGNATURE = 'missing-counterparty-signature'


def derive_channel_id(party_a: PublicKey, party_b: PublicKey, nonce: int) -> ChannelId:
    """Contract address stand-in: unique per (parties, deployment nonce)."""
    return ChannelId(hash_bytes(encode_message(TAG_CHANNEL, party_a.raw, party_b.raw, nonce)))


def draw_salt(rng: np.random.Generator) -> bytes:
    """Fresh 32-byte blinding value r_i from the run's seeded generator."""
    return rng.bytes(DIGEST_SIZE)


# Signed plaintexts

def commit_plaintext(channel: ChannelId, commitment: Digest, seq: int) -> bytes:
    return encode_message(TAG_COMMIT, channel, commitment, seq)


def announce_plaintext(channel: ChannelId, seq: int, head: Optional[Digest] = None) -> bytes:
    if head is None:
        return encode_message(TAG_SEQ, channel, seq)
    return encode_message(TAG_HEAD, channel, head, seq)


def ack_plaintext(channel: ChannelId, seq: int, head: Optional[Digest] = None) -> bytes:
    if head is None:
        return encode_message(TAG_ACK, channel, seq)
    return encode_message(TAG_ACK_HEAD, channel, head, seq)


def close_plaintext(channel: ChannelId, seq: int, head: Optional[Digest] = None) -> bytes:
    if head is None:
        return encode_message(TAG_CLOSE, channel, seq)
    return encode_message(TAG_CLOSE_HEAD, channel, head, seq)


@dataclass(frozen=True)
class ChannelState:
    """State s_i with its salt r_i. Balances are integer base units."""

    seq: int
    balance_a: int
    balance_b: int
    salt: bytes

    @property
    def total(self) -> int:
        return self.balance_a + self.balance_b

    def balance_of(self, role: str) -> int:
        return self.balance_a if role == ROLE_A else self.balance_b

    def encode(self, channel: ChannelId) -> bytes:
        return encode_message(TAG_STATE, channel, self.seq, self.balance_a, self.balance_b, self.salt)

    def digest(self, channel: ChannelId) -> Digest:
        """H(s_i, r_i)."""
        return hash_bytes(self.encode(channel))


def initial_state(balance_a: int, balance_b: int, rng: np.random.Generator) -> ChannelState:
    """The channel's first state; sequence numbers start at 1."""
    return ChannelState(seq=1, balance_a=balance_a, balance_b=balance_b, salt=draw_salt(rng))


def next_state(previous: ChannelState, balance_a: int, balance_b: int,
               rng: np.random.Generator) -> ChannelState:
    """Successor of ``previous``; same balances still make a new, distinct state."""
    return ChannelState(seq=previous.seq + 1, balance_a=balance_a, balance_b=balance_b,
                        salt=draw_salt(rng))


@dataclass(frozen=True)
class StateCommitment:
    """{H(s_i, r_i), i} with whatever party signatures have been collected."""

    channel: ChannelId
    commitment: Digest
    seq: int
    sig_a: Optional[Signature] = None
    sig_b: Optional[Signature] = None

    def plaintext(self) -> bytes:
        return commit_plaintext(self.channel, self.commitment, self.seq)

    def signature_of(self, role: str) -> Optional[Signature]:
        return self.sig_a if role == ROLE_A else self.sig_b

    def with_signature(self, role: str, signature: Signature) -> 'StateCommitment':
        if role == ROLE_A:
            return replace(self, sig_a=signature)
        return replace(self, sig_b=signature)

    def signed_by(self, role: str, public: PublicKey) -> bool:
        signature = self.signature_of(role)
        return signature is not None and public.verify(self.plaintext(), signature)

    def is_fully_signed(self, party_a: PublicKey, party_b: PublicKey) -> bool:
        return self.signed_by(ROLE_A, party_a) and self.signed_by(ROLE_B, party_b)

    def matches(self, state: ChannelState) -> bool:
        return state.seq == self.seq and state.digest(self.channel) == self.commitment


@dataclass(frozen=True)
class Announcement:
    """Both-party-signed sequence number M = i, or hash-chain head in Brick+."""

    channel: ChannelId
    seq: int
    sig_a: Optional[Signature] = None
    sig_b: Optional[Signature] = None
    head: Optional[Digest] = None

    def plaintext(self) -> bytes:
        return announce_plaintext(self.channel, self.seq, self.head)

    def verify(self, party_a: PublicKey, party_b: PublicKey) -> bool:
        message = self.plaintext()
        return (self.sig_a is not None and self.sig_b is not None
                and party_a.verify(message, self.sig_a)
                and party_b.verify(message, self.sig_b))

    def summary(self) -> str:
        suffix = f" head={self.head.hex()[:8]}" if self.head is not None else ''
        return f"announce seq={self.seq}{suffix}"


@dataclass(frozen=True)
class WardenAck:
    """σ_W(M): a warden's signature over the announcement it stored."""

    channel: ChannelId
    seq: int
    warden: PublicKey
    sig: Signature
    head: Optional[Digest] = None

    def plaintext(self) -> bytes:
        return ack_plaintext(self.channel, self.seq, self.head)

    def verify(self) -> bool:
        return self.warden.verify(self.plaintext(), self.sig)

    def summary(self) -> str:
        return f"ack seq={self.seq} by {self.warden.short()}"


def sign_commitment(commitment: StateCommitment, role: str, key: KeyPair) -> StateCommitment:
    return commitment.with_signature(role, key.sign(commitment.plaintext()))


def sign_announcement(channel: ChannelId, seq: int, key: KeyPair,
                      head: Optional[Digest] = None) -> Signature:
    return key.sign(announce_plaintext(channel, seq, head))


def make_commitment(channel: ChannelId, state: ChannelState, *, total: int, previous_seq: int,
                    key_a: Optional[KeyPair] = None,
                    key_b: Optional[KeyPair] = None) -> StateCommitment:
    """
    Build {H(s_i, r_i), i} and sign it with whichever party keys are given.

    Raises ChannelError('conservation-violation') when the balances do not sum to
    ``total`` and ChannelError('non-monotone-seq') unless seq = previous + 1.
    """
    if state.balance_a < 0 or state.balance_b < 0 or state.total != total:
        raise ChannelError(CONSERVATION_VIOLATION,
                           f"{state.balance_a}+{state.balance_b} != {total}")
    if state.seq != previous_seq + 1:
        raise ChannelError(NON_MONOTONE_SEQ, f"seq {state.seq} after {previous_seq}")
    commitment = StateCommitment(channel=channel, commitment=state.digest(channel), seq=state.seq)
    if key_a is not None:
        commitment = sign_commitment(commitment, ROLE_A, key_a)
    if key_b is not None:
        commitment = sign_commitment(commitment, ROLE_B, key_b)
    return commitment


def make_announcement(commitment: StateCommitment, *, party_a: PublicKey, party_b: PublicKey,
                      key_a: KeyPair, key_b: KeyPair,
                      head: Optional[Digest] = None) -> Announcement:
    """Announcement for a fully countersigned commitment."""
    if not commitment.is_fully_signed(party_a, party_b):
        raise ChannelError(MISSING_COUNTERPARTY_SIGNATURE, f"commitment seq {commitment.seq}")
    return Announcement(
        channel=commitment.channel,
        seq=commitment.seq,
        sig_a=sign_announcement(commitment.channel, commitment.seq, key_a, head),
        sig_b=sign_announcement(commitment.channel, commitment.seq, key_b, head),
        head=head,
    )


def validate_announcement(ann: Announcement, expected_seq: int,
                          party_a: PublicKey, party_b: PublicKey) -> bool:
    """Both signatures verify and the sequence number is exactly the expected one."""
    return ann.seq == expected_seq and ann.verify(party_a, party_b)
