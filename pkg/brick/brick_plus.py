"""
Brick+ extension: hash-chained announcements and the audit flow.

Parties announce the head of a hash chain over their blinded states instead of
a bare sequence number, wardens keep only (head, seq), optimistic close is
disabled, and an authorised auditor can force a close and then check each
party's full history against the head that ended up on-chain.
"""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

from brick.channel import ROLE_A, ROLE_B, Announcement, ChannelId, ChannelState
from brick.ledger.chain import Block, Chain, Transaction
from brick.ledger.contract import MODE_BRICK_PLUS, ChannelParams, Phase
from brick.netsim import US_PER_MS
from brick.primitives import (
    TAG_AUDIT,
    ZERO_DIGEST,
    Digest,
    KeyPair,
    PublicKey,
    encode_message,
    encode_uint,
    hash_bytes,
)

if TYPE_CHECKING:
    from brick.netsim import Envelope, Simulator

logger = logging.getLogger(__name__)

GENESIS_HEAD = ZERO_DIGEST

VERDICT_CONSISTENT = 'consistent'
VERDICT_TAMPERED = 'tampered'
VERDICT_UNRESPONSIVE = 'unresponsive'

TX_REQUEST_AUDIT = 'request-audit'

DEFAULT_HISTORY_TIMEOUT_MS = 5000


def link_head(prev_head: Digest, commitment: Digest, seq: int) -> Digest:
    """H_s = H(H_p ‖ H(s_i, r_i) ‖ i)."""
    return hash_bytes(bytes(prev_head) + bytes(commitment) + encode_uint(seq))


def extend_chain(channel: ChannelId, prev_head: Digest, state: ChannelState) -> Announcement:
    """Unsigned chained announcement for ``state`` on top of ``prev_head``."""
    return Announcement(channel=channel, seq=state.seq,
                        head=link_head(prev_head, state.digest(channel), state.seq))


@dataclass(frozen=True)
class ProtocolVariant:
    optimistic_close: bool
    chained_announcements: bool
    warden_storage: str


def brickplus_mode(params: ChannelParams) -> ProtocolVariant:
    if params.mode == MODE_BRICK_PLUS:
        return ProtocolVariant(optimistic_close=False, chained_announcements=True, warden_storage='head+seq')
    return ProtocolVariant(optimistic_close=True, chained_announcements=False, warden_storage='announcement')


@dataclass(frozen=True)
class StateHistory:
    """States s_1..s_k with their salts, as a party reveals them."""

    states: Tuple[ChannelState, ...]

    def heads(self, channel: ChannelId) -> List[Digest]:
        heads = []
        head = GENESIS_HEAD
        for state in self.states:
            head = link_head(head, state.digest(channel), state.seq)
            heads.append(head)
        return heads

    def final_head(self, channel: ChannelId) -> Optional[Digest]:
        heads = self.heads(channel)
        return heads[-1] if heads else None


def verify_history(channel: ChannelId, history: Optional[StateHistory],
                   closing_seq: int, closing_head: Digest) -> str:
    """
    Recreate the hash chain and compare it with the on-chain head at the
    closing sequence number.
    """
    if history is None:
        return VERDICT_UNRESPONSIVE
    seqs = [state.seq for state in history.states]
    if seqs != list(range(1, closing_seq + 1)):
        return VERDICT_TAMPERED
    if history.final_head(channel) != closing_head:
        return VERDICT_TAMPERED
    return VERDICT_CONSISTENT


def closing_head_of(contract) -> Optional[Tuple[int, Digest]]:
    """(seq, head) of the claim the channel closed on."""
    if contract.closing_seq is None:
        return None
    for claim in contract.ordered_claims():
        if claim.seq == contract.closing_seq and claim.warden not in contract.slashed:
            return claim.seq, claim.head
    return None


@dataclass(frozen=True)
class HistoryRequest:
    channel: ChannelId
    auditor: PublicKey

    def summary(self) -> str:
        return "history request"


@dataclass(frozen=True)
class HistoryResponse:
    channel: ChannelId
    role: str
    history: StateHistory

    def summary(self) -> str:
        return f"history of {self.role} ({len(self.history.states)} states)"


@dataclass(frozen=True)
class AuditVerdict:
    role: str
    verdict: str
    closing_seq: Optional[int]
    head_hex: Optional[str]

    @property
    def punish(self) -> bool:
        return self.verdict != VERDICT_CONSISTENT

    def to_dict(self) -> Dict[str, object]:
        return {'role': self.role, 'verdict': self.verdict, 'closing_seq': self.closing_seq,
                'head_hex': self.head_hex, 'punish': self.punish}


@dataclass
class Auditor:
    """Requests access on-chain, waits for the close, then audits both histories."""

    name: str
    keys: KeyPair
    chain: Chain
    channel: ChannelId
    party_names: Dict[str, str]
    history_timeout_ms: float = DEFAULT_HISTORY_TIMEOUT_MS
    request_tx: Optional[Transaction] = None
    histories: Dict[str, StateHistory] = field(default_factory=dict)
    verdicts: Dict[str, AuditVerdict] = field(default_factory=dict)
    _asked: bool = False
    _sim: Optional['Simulator'] = None

    @property
    def public(self) -> PublicKey:
        return self.keys.public

    def attach(self, sim: 'Simulator') -> None:
        self._sim = sim
        self.chain.subscribe(self.on_block)

    def audit_request(self) -> Transaction:
        """Publish the access request on-chain."""
        contract = self.chain.contract(self.channel)
        payload = encode_message(TAG_AUDIT, self.channel, self.public)
        self.request_tx = self.chain.submit(Transaction(
            kind=TX_REQUEST_AUDIT, sender=self.name, payload=payload,
            call=lambda tx: contract.request_audit(self.public, tx.tx_id, tx.included_height)))
        logger.info(f"🔍 {self.name} requested access to channel {self.channel.hex()[:8]}")
        return self.request_tx

    def on_block(self, block: Block) -> None:
        if self._asked or self.request_tx is None or not self.request_tx.ok:
            return
        contract = self.chain.contract(self.channel)
        if contract.phase != Phase.CLOSED or contract.closing_seq is None:
            return
        self._asked = True
        for name in self.party_names.values():
            self._sim.send(self.name, name, HistoryRequest(channel=self.channel, auditor=self.public))
        self._sim.schedule(int(self.history_timeout_ms * US_PER_MS), self.conclude,
                           source=self.name, summary='audit deadline')

    def on_message(self, sim: 'Simulator', envelope: 'Envelope') -> None:
        message = envelope.payload
        if isinstance(message, HistoryResponse) and message.channel == self.channel:
            if message.role not in self.verdicts:
                self.histories[message.role] = message.history
                self._judge(message.role)

    def _judge(self, role: str) -> None:
        contract = self.chain.contract(self.channel)
        located = closing_head_of(contract)
        if located is None:
            return
        seq, head = located
        verdict = verify_history(self.channel, self.histories.get(role), seq, head)
        self.verdicts[role] = AuditVerdict(role=role, verdict=verdict, closing_seq=seq, head_hex=head.hex())
        icon = '✅' if verdict == VERDICT_CONSISTENT else '🚨'
        logger.info(f"{icon} Audit of party {role}: {verdict} at seq {seq}")

    def conclude(self) -> Dict[str, AuditVerdict]:
        for role in (ROLE_A, ROLE_B):
            if role not in self.verdicts:
                self._judge(role)
        return dict(self.verdicts)

    def external_punishment(self) -> List[str]:
        return sorted(role for role, verdict in self.verdicts.items() if verdict.punish)


def tamper(history: StateHistory, index: int, delta: int = 1) -> StateHistory:
    """Copy of ``history`` with one state's balances shifted by ``delta``."""
    states = list(history.states)
    original = states[index]
    states[index] = ChannelState(seq=original.seq, balance_a=original.balance_a + delta,
                                 balance_b=original.balance_b - delta, salt=original.salt)
    return StateHistory(states=tuple(states))


def history_from(states: Sequence[ChannelState]) -> StateHistory:
    return StateHistory(states=tuple(sorted(states, key=lambda state: state.seq)))
