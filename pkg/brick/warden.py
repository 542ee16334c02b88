"""
Warden state machine.

A warden stores the latest announcement of its channel, acknowledges each
announcement whose sequence number is exactly one higher (for a fee), and on
a close request publishes a claim over what it stored. Deviant strategies
(unresponsive, acking without storing, signing after close, closing an old
state for a bribe, crashing) are selected by tag.
"""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Set

from brick.channel import Announcement, ChannelId, WardenAck, ack_plaintext, close_plaintext
from brick.errors import BrickError, ConfigError, WardenRejection
from brick.ledger.chain import Block, Chain, Transaction
from brick.ledger.contract import (
    CLOSED_PESSIMISTIC,
    ClosingClaim,
    Phase,
)
from brick.primitives import TAG_FEE, KeyPair, PublicKey, Signature, encode_message

if TYPE_CHECKING:
    from brick.netsim import Envelope, Simulator

logger = logging.getLogger(__name__)

HONEST = 'honest'
UNRESPONSIVE = 'unresponsive'
ACK_WITHOUT_STORE = 'ack-without-store'
SIGN_AFTER_CLOSE = 'sign-after-close'
BRIBED_OLD_CLAIM = 'bribed-old-claim'
CRASH = 'crash'

STRATEGY_KINDS = (HONEST, UNRESPONSIVE, ACK_WITHOUT_STORE, SIGN_AFTER_CLOSE, BRIBED_OLD_CLAIM, CRASH)

STALE_OR_GAP_SEQ = 'stale-or-gap-seq'
BAD_SIGNATURES = 'bad-signatures'
INSUFFICIENT_FEE = 'insufficient-fee'
IGNORED_AFTER_CLOSE = 'ignored-after-close'
NOTHING_STORED = 'nothing-stored'

TX_FUND_WARDEN = 'fund-warden'
TX_CLOSING_CLAIM = 'closing-claim'
TX_REDEEM = 'redeem-warden'


@dataclass(frozen=True)
class WardenStrategy:
    """
    Parsed strategy tag.

    Tags: ``honest``, ``unresponsive``, ``ack-without-store``,
    ``sign-after-close``, ``bribed-old-claim`` (rational: needs collateral + ε),
    ``bribed-old-claim:byz`` (Byzantine: any offer), ``bribed-old-claim:B``
    (asks at least B), ``crash:N`` (stops after N handled events).
    """

    kind: str = HONEST
    byzantine: bool = False
    min_bribe: Optional[int] = None
    crash_after: Optional[int] = None

    @property
    def tag(self) -> str:
        if self.kind == CRASH:
            return f"{CRASH}:{self.crash_after}"
        if self.kind == BRIBED_OLD_CLAIM and self.byzantine:
            return f"{BRIBED_OLD_CLAIM}:byz"
        if self.kind == BRIBED_OLD_CLAIM and self.min_bribe is not None:
            return f"{BRIBED_OLD_CLAIM}:{self.min_bribe}"
        return self.kind

    @property
    def deviant(self) -> bool:
        return self.kind != HONEST


def parse_strategy(tag: str) -> WardenStrategy:
    kind, _, option = tag.strip().lower().partition(':')
    if kind not in STRATEGY_KINDS:
        raise ConfigError('config-invalid', f"unknown warden strategy {tag!r}")
    if kind == CRASH:
        if not option.isdigit():
            raise ConfigError('config-invalid', f"crash needs an event count: {tag!r}")
        return WardenStrategy(kind=CRASH, crash_after=int(option))
    if kind == BRIBED_OLD_CLAIM and option:
        if option in ('byz', 'byzantine'):
            return WardenStrategy(kind=kind, byzantine=True)
        if not option.isdigit():
            raise ConfigError('config-invalid', f"bad bribe amount in {tag!r}")
        return WardenStrategy(kind=kind, min_bribe=int(option))
    if option:
        raise ConfigError('config-invalid', f"strategy {kind} takes no option")
    return WardenStrategy(kind=kind)


def fee_plaintext(channel: ChannelId, warden: PublicKey, cumulative: int) -> bytes:
    return encode_message(TAG_FEE, channel, warden, cumulative)


@dataclass(frozen=True)
class FeeTicket:
    """Latest state of a one-way fee channel from ``payer`` to ``warden``."""

    channel: ChannelId
    warden: PublicKey
    payer: PublicKey
    cumulative: int
    sig: Signature

    def verify(self) -> bool:
        return self.payer.verify(fee_plaintext(self.channel, self.warden, self.cumulative), self.sig)


def issue_fee_ticket(channel: ChannelId, warden: PublicKey, payer: KeyPair, cumulative: int) -> FeeTicket:
    return FeeTicket(channel=channel, warden=warden, payer=payer.public, cumulative=cumulative,
                     sig=payer.sign(fee_plaintext(channel, warden, cumulative)))


# Messages a warden receives or sends

@dataclass(frozen=True)
class BroadcastRequest:
    announcement: Announcement
    payer: PublicKey
    fee_ticket: Optional[FeeTicket] = None

    def summary(self) -> str:
        return f"broadcast {self.announcement.summary()}"


@dataclass(frozen=True)
class CloseRequest:
    channel: ChannelId
    requester: PublicKey

    def summary(self) -> str:
        return f"close() from {self.requester.short()}"


@dataclass(frozen=True)
class BribeOffer:
    channel: ChannelId
    briber: PublicKey
    amount: int
    announcement: Announcement

    def summary(self) -> str:
        return f"bribe {self.amount} for seq={self.announcement.seq}"


@dataclass(frozen=True)
class BribeReply:
    channel: ChannelId
    warden: PublicKey
    accepted: bool
    amount: int

    def summary(self) -> str:
        return f"bribe {'accepted' if self.accepted else 'refused'} by {self.warden.short()}"


@dataclass(frozen=True)
class Rejection:
    channel: ChannelId
    warden: PublicKey
    seq: int
    reason: str
    stored_seq: int

    def summary(self) -> str:
        return f"reject seq={self.seq} ({self.reason}, stored {self.stored_seq})"


@dataclass
class Warden:
    """One committee member bound to one channel."""

    name: str
    keys: KeyPair
    strategy: WardenStrategy = field(default_factory=WardenStrategy)
    update_fee: int = 1
    epsilon: int = 1
    channel: Optional[ChannelId] = None
    party_a: Optional[PublicKey] = None
    party_b: Optional[PublicKey] = None
    directory: Dict[PublicKey, str] = field(default_factory=dict)
    chain: Optional[Chain] = None
    stored: Optional[Announcement] = None
    closed_flag: bool = False
    crashed: bool = False
    fee_ledger: Dict[PublicKey, int] = field(default_factory=dict)
    emitted_acks: List[WardenAck] = field(default_factory=list)
    claims_made: List[ClosingClaim] = field(default_factory=list)
    bribes_received: int = 0
    bribe_announcement: Optional[Announcement] = None
    funded: bool = False
    redeemed: bool = False
    events_handled: int = 0
    _submitted: Set[str] = field(default_factory=set)
    _sim: Optional['Simulator'] = None

    @property
    def public(self) -> PublicKey:
        return self.keys.public

    @property
    def stored_seq(self) -> int:
        return self.stored.seq if self.stored is not None else 0

    def bind(self, channel: ChannelId, party_a: PublicKey, party_b: PublicKey,
             directory: Dict[PublicKey, str], chain: Optional[Chain] = None,
             sim: Optional['Simulator'] = None) -> None:
        self.channel = channel
        self.party_a = party_a
        self.party_b = party_b
        self.directory = dict(directory)
        self.chain = chain
        self._sim = sim
        if chain is not None:
            chain.subscribe(self.on_block)

    # ------------------------------------------------------------------ updates

    def _sign_ack(self, ann: Announcement) -> WardenAck:
        ack = WardenAck(channel=ann.channel, seq=ann.seq, warden=self.public,
                        sig=self.keys.sign(ack_plaintext(ann.channel, ann.seq, ann.head)), head=ann.head)
        self.emitted_acks.append(ack)
        return ack

    def _reject(self, reason: str, detail: str) -> WardenRejection:
        return WardenRejection(reason, detail, stored_seq=self.stored_seq)

    def _charge(self, ann: Announcement, ticket: Optional[FeeTicket], payer: PublicKey) -> bool:
        """
        Validate the fee for ``ann``; True when a fresh r was collected.

        The opening announcement (seq 1) is free. A ticket equal to what the
        payer already paid is accepted only as a re-send of the stored
        announcement.
        """
        if ann.seq == 1:
            return False
        paid = self.fee_ledger.get(payer, 0)
        if (ticket is None or ticket.payer != payer or ticket.warden != self.public
                or ticket.channel != self.channel or not ticket.verify()):
            raise self._reject(INSUFFICIENT_FEE, "missing or invalid fee ticket")
        if ticket.cumulative == paid + self.update_fee:
            return True
        if ticket.cumulative == paid and self.stored == ann:
            return False
        raise self._reject(INSUFFICIENT_FEE, f"ticket {ticket.cumulative}, ledger {paid}")

    def on_announcement(self, ann: Announcement, fee_ticket: Optional[FeeTicket] = None,
                        payer: Optional[PublicKey] = None) -> WardenAck:
        """
        Store ``ann`` and acknowledge it, or raise WardenRejection.

        Accepts the next sequence number, or a repeat of the stored
        announcement (another party relaying it). Works for plain
        announcements and for Brick+ head announcements alike.
        """
        payer = payer or (fee_ticket.payer if fee_ticket is not None else self.party_a)
        ignores_close = self.strategy.kind == SIGN_AFTER_CLOSE
        if self.closed_flag and not ignores_close:
            raise self._reject(IGNORED_AFTER_CLOSE, f"seq {ann.seq}")
        if ann.channel != self.channel or not ann.verify(self.party_a, self.party_b):
            raise self._reject(BAD_SIGNATURES, ann.summary())
        repeat = self.stored is not None and ann == self.stored
        if self.strategy.kind == ACK_WITHOUT_STORE:
            # acks anything newer than what it keeps, keeps only the first
            in_order = ann.seq > self.stored_seq or repeat
        else:
            in_order = ann.seq == self.stored_seq + 1 or repeat
        if not in_order:
            raise self._reject(STALE_OR_GAP_SEQ, f"got {ann.seq}, stored {self.stored_seq}")
        if self._charge(ann, fee_ticket, payer):
            self.fee_ledger[payer] = self.fee_ledger.get(payer, 0) + self.update_fee
        if self.strategy.kind != ACK_WITHOUT_STORE or self.stored is None:
            self.stored = ann
        return self._sign_ack(ann)

    # aliased so callers can name the Brick+ path explicitly
    brickplus_on_announcement = on_announcement

    # ------------------------------------------------------------------ closing

    def make_claim(self, ann: Announcement) -> ClosingClaim:
        return ClosingClaim(channel=ann.channel, warden=self.public, seq=ann.seq,
                            warden_sig=self.keys.sign(close_plaintext(ann.channel, ann.seq, ann.head)),
                            party_sig_a=ann.sig_a, party_sig_b=ann.sig_b, head=ann.head)

    def on_close_request(self) -> Optional[ClosingClaim]:
        """
        Stop acking and publish a claim on what is stored.

        Returns None on a repeated request. A bribed warden claims the
        announcement it was paid to close instead.
        """
        if self.claims_made:
            return None
        target = self.stored
        if self.bribe_announcement is not None:
            target = self.bribe_announcement
        if target is None:
            raise WardenRejection(NOTHING_STORED, f"{self.name} never stored an announcement")
        self.closed_flag = True
        claim = self.make_claim(target)
        self.claims_made.append(claim)
        if target is not self.stored:
            logger.warning(f"💸 {self.name} claims old seq {claim.seq} (stored {self.stored_seq})")
        else:
            logger.info(f"🔒 {self.name} claims seq {claim.seq}")
        self._submit_claim(claim)
        return claim

    def decide_bribe(self, offer: int, collateral: int) -> bool:
        """Rational: offer >= collateral + ε. Byzantine: anything."""
        if self.strategy.byzantine:
            return True
        floor = collateral + self.epsilon
        if self.strategy.min_bribe is not None:
            floor = max(floor, self.strategy.min_bribe)
        return offer >= floor

    def on_bribe(self, offer: BribeOffer, collateral: int) -> bool:
        if self.strategy.kind != BRIBED_OLD_CLAIM or self.claims_made:
            return False
        if offer.channel != self.channel or not offer.announcement.verify(self.party_a, self.party_b):
            return False
        if not self.decide_bribe(offer.amount, collateral):
            return False
        self.bribes_received += offer.amount
        self.bribe_announcement = offer.announcement
        return True

    # ------------------------------------------------------------------ chain side

    def _contract(self):
        if self.chain is None or self.channel is None:
            return None
        return self.chain.contracts.get(self.channel)

    def _submit(self, kind: str, call, payload: bytes = b'') -> Optional[Transaction]:
        if self.chain is None:
            return None
        return self.chain.submit(Transaction(kind=kind, sender=self.name, payload=payload, call=call))

    def _submit_claim(self, claim: ClosingClaim) -> None:
        contract = self._contract()
        if contract is None:
            return
        self._submit(TX_CLOSING_CLAIM, lambda tx: contract.record_closing_claim(claim), claim.payload())

    def on_block(self, block: Block) -> None:
        if self._inactive():
            return
        contract = self._contract()
        if contract is None:
            return
        if contract.phase == Phase.BOTH_PARTIES_FUNDED and not self.funded:
            self.funded = True
            amount = contract.collateral_per_warden
            self._submit(TX_FUND_WARDEN, lambda tx: contract.fund_warden(self.public, amount))
            return
        if not self.claims_made and contract.phase in (Phase.OPEN, Phase.OPTIMISTIC_PENDING,
                                                       Phase.PESSIMISTIC_PENDING):
            others_claimed = any(warden != self.public for warden in contract.claims)
            audited = contract.valid_access_request() is not None
            if (others_claimed or audited) and self.strategy.kind != UNRESPONSIVE:
                trigger = 'valid access request' if audited else 'claim on chain'
                logger.info(f"🔄 {self.name} closing after {trigger}")
                self._close_quietly()
        if (contract.phase == Phase.CLOSED and contract.closed_via == CLOSED_PESSIMISTIC
                and not self.redeemed and self.public in contract.collateral
                and self.public not in contract.slashed):
            self.redeemed = True
            self._submit(TX_REDEEM, lambda tx: contract.redeem_warden(self.public))

    def _close_quietly(self) -> None:
        try:
            self.on_close_request()
        except WardenRejection as exc:
            logger.warning(f"⚠️  {self.name} cannot close: {exc}")

    # ------------------------------------------------------------------ simulator side

    def _inactive(self) -> bool:
        return self.crashed

    def _reply(self, sim: 'Simulator', recipient: PublicKey, payload) -> None:
        name = self.directory.get(recipient)
        if name is not None:
            sim.send(self.name, name, payload)

    def on_message(self, sim: 'Simulator', envelope: 'Envelope') -> None:
        if self.crashed:
            return
        self.events_handled += 1
        if self.strategy.kind == CRASH and self.events_handled > self.strategy.crash_after:
            self.crashed = True
            logger.warning(f"💥 {self.name} crashed after {self.strategy.crash_after} events")
            return
        if self.strategy.kind == UNRESPONSIVE:
            return
        message = envelope.payload
        if isinstance(message, BroadcastRequest):
            self._handle_broadcast(sim, message)
        elif isinstance(message, CloseRequest):
            if message.channel == self.channel:
                self._close_quietly()
        elif isinstance(message, BribeOffer):
            contract = self._contract()
            collateral = contract.collateral_per_warden if contract is not None else 0
            accepted = self.on_bribe(message, collateral)
            self._reply(sim, message.briber, BribeReply(channel=message.channel, warden=self.public,
                                                        accepted=accepted, amount=message.amount))

    def _handle_broadcast(self, sim: 'Simulator', message: BroadcastRequest) -> None:
        ann = message.announcement
        try:
            ack = self.on_announcement(ann, message.fee_ticket, message.payer)
        except WardenRejection as exc:
            logger.debug(f"{self.name} rejects seq {ann.seq} from {message.payer.short()}: {exc.reason}")
            self._reply(sim, message.payer, Rejection(channel=ann.channel, warden=self.public, seq=ann.seq,
                                                      reason=exc.reason, stored_seq=exc.stored_seq))
            return
        except BrickError as exc:
            logger.warning(f"⚠️  {self.name} could not process seq {ann.seq}: {exc}")
            return
        self._reply(sim, message.payer, ack)

    # ------------------------------------------------------------------ accounting

    def fee_income(self) -> int:
        return sum(self.fee_ledger.values())
