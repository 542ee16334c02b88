"""
Channel party state machine.

Covers the update handshake (propose, countersign, exchange announcement
signatures), the consistent broadcast to the wardens with per-warden in-order
outboxes and fee channels, both close paths, claim monitoring with
proof-of-fraud assembly, and the deviant party strategies used by scenarios.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Deque, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from brick.brick_plus import (
    GENESIS_HEAD,
    HistoryRequest,
    HistoryResponse,
    history_from,
    link_head,
    tamper,
)
from brick.channel import (
    ROLE_A,
    ROLE_B,
    Announcement,
    ChannelId,
    ChannelState,
    StateCommitment,
    WardenAck,
    make_commitment,
    next_state,
    sign_announcement,
    sign_commitment,
)
from brick.errors import BrickError, ChannelError, ConfigError, PartyError
from brick.ledger.chain import Block, Chain, Transaction
from brick.ledger.contract import (
    MODE_BRICK_PLUS,
    ChannelParams,
    ClosingClaim,
    Phase,
    ProofOfFraud,
)
from brick.netsim import US_PER_MS
from brick.primitives import Digest, KeyPair, PublicKey, Signature
from brick.warden import (
    IGNORED_AFTER_CLOSE,
    INSUFFICIENT_FEE,
    TX_CLOSING_CLAIM,
    BribeOffer,
    BribeReply,
    BroadcastRequest,
    CloseRequest,
    Rejection,
    issue_fee_ticket,
)

if TYPE_CHECKING:
    from brick.netsim import Envelope, Simulator

logger = logging.getLogger(__name__)

HONEST = 'honest'
WITHHOLD_COUNTERSIGN = 'withhold-countersign'
STALE_CLOSE_BRIBER = 'stale-close-briber'
CRASH_AFTER_COMMIT = 'crash-after-commit'
SILENT = 'silent'
NO_BROADCAST = 'no-broadcast'
TAMPER_HISTORY = 'tamper-history'
ANNOUNCE_AFTER_CLOSE = 'announce-after-close'

STRATEGY_KINDS = (HONEST, WITHHOLD_COUNTERSIGN, STALE_CLOSE_BRIBER, CRASH_AFTER_COMMIT,
                  SILENT, NO_BROADCAST, TAMPER_HISTORY, ANNOUNCE_AFTER_CLOSE)

CLOSE_OPTIMISTIC = 'optimistic'
CLOSE_PESSIMISTIC = 'pessimistic'
CLOSE_AUDIT = 'audit'
CLOSE_NONE = 'none'
CLOSE_MODES = (CLOSE_OPTIMISTIC, CLOSE_PESSIMISTIC, CLOSE_AUDIT, CLOSE_NONE)

TX_FUND_PARTY = 'fund-party'
TX_OPEN = 'open'
TX_OPTIMISTIC_REQUEST = 'optimistic-close-request'
TX_OPTIMISTIC_AGREE = 'optimistic-close-agree'
TX_PESSIMISTIC_CLOSE = 'pessimistic-close'

DEFAULT_STALL_MS = 10_000
DEFAULT_CRASH_SEQ = 2


@dataclass(frozen=True)
class PartyStrategy:
    kind: str = HONEST
    crash_seq: int = DEFAULT_CRASH_SEQ

    @property
    def tag(self) -> str:
        return f"{self.kind}:{self.crash_seq}" if self.kind == CRASH_AFTER_COMMIT else self.kind


def parse_party_strategy(tag: str) -> PartyStrategy:
    kind, _, option = tag.strip().lower().partition(':')
    if kind not in STRATEGY_KINDS:
        raise ConfigError('config-invalid', f"unknown party strategy {tag!r}")
    if kind == CRASH_AFTER_COMMIT:
        if option and not option.isdigit():
            raise ConfigError('config-invalid', f"bad crash seq in {tag!r}")
        return PartyStrategy(kind=kind, crash_seq=int(option) if option else DEFAULT_CRASH_SEQ)
    if option:
        raise ConfigError('config-invalid', f"party strategy {kind} takes no option")
    return PartyStrategy(kind=kind)


@dataclass
class FeeChannel:
    """One-way payment channel towards one warden; only the total is ever signed."""

    warden: PublicKey
    cumulative_paid: int = 0
    signed_total: int = 0


# Messages exchanged between the parties

@dataclass(frozen=True)
class Proposal:
    channel: ChannelId
    state: ChannelState
    commitment: StateCommitment
    head: Optional[Digest] = None

    def summary(self) -> str:
        return f"propose seq={self.state.seq} ({self.state.balance_a}, {self.state.balance_b})"


@dataclass(frozen=True)
class Countersign:
    channel: ChannelId
    seq: int
    commit_sig: Signature
    announce_sig: Signature

    def summary(self) -> str:
        return f"countersign seq={self.seq}"


@dataclass(frozen=True)
class AnnouncementSignature:
    channel: ChannelId
    seq: int
    announce_sig: Signature

    def summary(self) -> str:
        return f"announce-sig seq={self.seq}"


@dataclass(frozen=True)
class OptimisticCloseRequest:
    channel: ChannelId
    claimed_balance_a: int

    def summary(self) -> str:
        return f"optimistic close at balance_a={self.claimed_balance_a}"


@dataclass
class PendingUpdate:
    state: ChannelState
    commitment: StateCommitment
    head: Optional[Digest]
    proposer: str


def proposer_of(amount: int) -> str:
    """A payment from A to B is proposed by A; negative amounts flow B to A."""
    return ROLE_A if amount >= 0 else ROLE_B


@dataclass
class Party:
    """One side of the channel."""

    name: str
    role: str
    keys: KeyPair
    salt_rng: np.random.Generator
    strategy: PartyStrategy = field(default_factory=PartyStrategy)
    update_fee: int = 1
    epsilon: int = 1
    stall_ms: float = DEFAULT_STALL_MS
    payments: List[int] = field(default_factory=list)
    close_mode: str = CLOSE_NONE
    closer: bool = False
    on_settled: Optional[Callable[[], None]] = None

    channel: Optional[ChannelId] = None
    params: Optional[ChannelParams] = None
    counterparty_name: str = ''
    counterparty: Optional[PublicKey] = None
    warden_names: Dict[PublicKey, str] = field(default_factory=dict)
    chain: Optional[Chain] = None

    states: Dict[int, ChannelState] = field(default_factory=dict)
    commitments: Dict[int, StateCommitment] = field(default_factory=dict)
    announcements: Dict[int, Announcement] = field(default_factory=dict)
    heads: Dict[int, Digest] = field(default_factory=dict)
    latest_valid_seq: int = 0
    committed_seq: int = 0
    in_flight: Optional[PendingUpdate] = None
    acks: Dict[int, Set[PublicKey]] = field(default_factory=dict)
    ack_archive: Dict[PublicKey, WardenAck] = field(default_factory=dict)
    fee_channels: Dict[PublicKey, FeeChannel] = field(default_factory=dict)
    outbox: Dict[PublicKey, Deque[Announcement]] = field(default_factory=dict)
    awaiting: Dict[PublicKey, int] = field(default_factory=dict)

    broadcast_started_ms: Dict[int, float] = field(default_factory=dict)
    commit_times_ms: Dict[int, float] = field(default_factory=dict)
    all_acks_ms: Dict[int, float] = field(default_factory=dict)
    close_requested_ms: Optional[float] = None
    bribes_paid: int = 0
    bribe_target_seq: Optional[int] = None
    late_update_sent: bool = False
    crashed: bool = False
    funded: bool = False
    open_submitted: bool = False
    saw_fully_funded: bool = False
    closing_started: bool = False
    optimistic_request_seen: Optional[OptimisticCloseRequest] = None
    agreed: bool = False
    finalize_tx: Optional[Transaction] = None
    rejected_updates: int = 0
    _finalize_key: Optional[Tuple] = None
    _stall_generation: int = 0
    _pending_announce_sig: Optional[Signature] = None
    _sim: Optional['Simulator'] = None

    # ------------------------------------------------------------------ wiring

    @property
    def public(self) -> PublicKey:
        return self.keys.public

    @property
    def threshold(self) -> int:
        return self.params.threshold

    @property
    def brick_plus(self) -> bool:
        return self.params is not None and self.params.mode == MODE_BRICK_PLUS

    def bind(self, channel: ChannelId, params: ChannelParams, counterparty_name: str,
             warden_names: Dict[PublicKey, str], chain: Optional[Chain] = None,
             sim: Optional['Simulator'] = None) -> None:
        self.channel = channel
        self.params = params
        self.counterparty_name = counterparty_name
        self.counterparty = params.party_b if self.role == ROLE_A else params.party_a
        self.warden_names = dict(warden_names)
        self.fee_channels = {warden: FeeChannel(warden=warden) for warden in warden_names}
        self.outbox = {warden: deque() for warden in warden_names}
        self.chain = chain
        self._sim = sim
        if chain is not None:
            chain.subscribe(self.on_block)

    def _now_ms(self) -> float:
        return self._sim.now_ms() if self._sim is not None else 0.0

    def _send(self, recipient: str, payload) -> None:
        if self._sim is not None:
            self._sim.send(self.name, recipient, payload)

    def _contract(self):
        if self.chain is None:
            return None
        return self.chain.contracts.get(self.channel)

    def _submit(self, kind: str, call, payload: bytes = b'') -> Optional[Transaction]:
        if self.chain is None:
            return None
        return self.chain.submit(Transaction(kind=kind, sender=self.name, payload=payload, call=call))

    # ------------------------------------------------------------------ state bookkeeping

    def _head_for(self, state: ChannelState) -> Optional[Digest]:
        if not self.brick_plus:
            return None
        prev = self.heads.get(state.seq - 1, GENESIS_HEAD)
        return link_head(prev, state.digest(self.channel), state.seq)

    def _accept_valid(self, state: ChannelState, commitment: StateCommitment,
                      head: Optional[Digest]) -> None:
        self.states[state.seq] = state
        self.commitments[state.seq] = commitment
        if head is not None:
            self.heads[state.seq] = head
        self.latest_valid_seq = state.seq

    def install_initial(self, state: ChannelState, commitment: StateCommitment,
                        announcement: Announcement) -> None:
        """Record the both-signed opening state s_1 and its announcement."""
        self._accept_valid(state, commitment, announcement.head)
        self.announcements[state.seq] = announcement

    def latest_state(self) -> Optional[ChannelState]:
        return self.states.get(self.latest_valid_seq)

    def committed_state(self) -> Optional[ChannelState]:
        return self.states.get(self.committed_seq)

    # ------------------------------------------------------------------ updates

    def propose_update(self, balance_a: int, balance_b: int) -> StateCommitment:
        """
        Start an update at latest+1, signed by this party only.

        Raises PartyError('update-in-flight') while the previous update is
        neither committed nor abandoned, ChannelError('conservation-violation')
        when the balances do not sum to v.
        """
        if self.in_flight is not None:
            raise PartyError('update-in-flight', f"seq {self.in_flight.state.seq} pending")
        previous = self.latest_state()
        state = next_state(previous, balance_a, balance_b, self.salt_rng)
        commitment = make_commitment(self.channel, state, total=previous.total,
                                     previous_seq=previous.seq)
        commitment = sign_commitment(commitment, self.role, self.keys)
        head = self._head_for(state)
        self.in_flight = PendingUpdate(state=state, commitment=commitment, head=head, proposer=self.role)
        self._send(self.counterparty_name, Proposal(channel=self.channel, state=state,
                                                    commitment=commitment, head=head))
        logger.debug(f"{self.name} proposes seq {state.seq} ({balance_a}, {balance_b})")
        return commitment

    def countersign_update(self, proposal: Proposal) -> Tuple[Signature, Signature]:
        """
        Check and countersign the counterparty's proposal.

        Returns (commitment signature, announcement signature); the state is
        valid for this party from here on.
        """
        state = proposal.state
        other_role = ROLE_B if self.role == ROLE_A else ROLE_A
        own = self.in_flight
        if own is not None and own.proposer == self.role and own.state.seq >= state.seq:
            raise PartyError('update-in-flight', f"seq {own.state.seq} pending")
        previous = self.latest_state()
        expected_head = self._head_for(state)
        valid = (proposal.channel == self.channel
                 and state.seq == self.latest_valid_seq + 1
                 and state.total == previous.total
                 and state.balance_a >= 0 and state.balance_b >= 0
                 and proposal.commitment.matches(state)
                 and proposal.commitment.signed_by(other_role, self.counterparty)
                 and proposal.head == expected_head)
        if not valid:
            raise PartyError('bad-commitment', proposal.summary())
        if self.strategy.kind == WITHHOLD_COUNTERSIGN:
            raise PartyError('rejected-by-policy', f"{self.name} withholds its signature")
        commitment = sign_commitment(proposal.commitment, self.role, self.keys)
        announce_sig = sign_announcement(self.channel, state.seq, self.keys, expected_head)
        self._accept_valid(state, commitment, expected_head)
        self.in_flight = PendingUpdate(state=state, commitment=commitment, head=expected_head,
                                       proposer=other_role)
        self._pending_announce_sig = announce_sig
        return commitment.signature_of(self.role), announce_sig

    def _announcement(self, seq: int, own_sig: Signature, other_sig: Signature,
                      head: Optional[Digest]) -> Announcement:
        if self.role == ROLE_A:
            return Announcement(channel=self.channel, seq=seq, sig_a=own_sig, sig_b=other_sig, head=head)
        return Announcement(channel=self.channel, seq=seq, sig_a=other_sig, sig_b=own_sig, head=head)

    def _on_proposal(self, proposal: Proposal) -> None:
        try:
            commit_sig, announce_sig = self.countersign_update(proposal)
        except PartyError as exc:
            self.rejected_updates += 1
            logger.warning(f"⚠️  {self.name} does not countersign seq {proposal.state.seq}: {exc}")
            return
        self._send(self.counterparty_name, Countersign(channel=self.channel, seq=proposal.state.seq,
                                                       commit_sig=commit_sig, announce_sig=announce_sig))

    def _on_countersign(self, message: Countersign) -> None:
        pending = self.in_flight
        if pending is None or pending.proposer != self.role or pending.state.seq != message.seq:
            return
        other_role = ROLE_B if self.role == ROLE_A else ROLE_A
        commitment = pending.commitment.with_signature(other_role, message.commit_sig)
        announcement = self._announcement(message.seq, sign_announcement(self.channel, message.seq,
                                                                         self.keys, pending.head),
                                          message.announce_sig, pending.head)
        if not commitment.signed_by(other_role, self.counterparty) or \
                not announcement.verify(self.params.party_a, self.params.party_b):
            logger.warning(f"⚠️  {self.name} got a bad countersignature for seq {message.seq}")
            return
        self._accept_valid(pending.state, commitment, pending.head)
        own_sig = announcement.sig_a if self.role == ROLE_A else announcement.sig_b
        self._send(self.counterparty_name, AnnouncementSignature(channel=self.channel, seq=message.seq,
                                                                 announce_sig=own_sig))
        self.announcements[message.seq] = announcement
        self.broadcast_update(announcement)

    def _on_announcement_signature(self, message: AnnouncementSignature) -> None:
        pending = self.in_flight
        if pending is None or pending.proposer == self.role or pending.state.seq != message.seq:
            return
        announcement = self._announcement(message.seq, self._pending_announce_sig,
                                          message.announce_sig, pending.head)
        if not announcement.verify(self.params.party_a, self.params.party_b):
            logger.warning(f"⚠️  {self.name} got a bad announcement signature for seq {message.seq}")
            return
        self.announcements[message.seq] = announcement
        self.broadcast_update(announcement)

    # ------------------------------------------------------------------ consistent broadcast

    def broadcast_update(self, announcement: Announcement) -> None:
        """Queue ``announcement`` to every warden, in order per warden."""
        self.announcements[announcement.seq] = announcement
        self.broadcast_started_ms.setdefault(announcement.seq, self._now_ms())
        if self.strategy.kind == NO_BROADCAST:
            return
        for warden in self.warden_names:
            self.outbox[warden].append(announcement)
            self._pump(warden)

    def pay_fee(self, warden: PublicKey):
        """Ticket for the next r on the fee channel to ``warden``."""
        fee_channel = self.fee_channels[warden]
        cumulative = fee_channel.cumulative_paid + self.update_fee
        fee_channel.signed_total = max(fee_channel.signed_total, cumulative)
        return issue_fee_ticket(self.channel, warden, self.keys, cumulative)

    def _pump(self, warden: PublicKey) -> None:
        if warden in self.awaiting or not self.outbox[warden]:
            return
        announcement = self.outbox[warden][0]
        ticket = None if announcement.seq == 1 else self.pay_fee(warden)
        self.awaiting[warden] = announcement.seq
        self._send(self.warden_names[warden], BroadcastRequest(announcement=announcement, payer=self.public,
                                                               fee_ticket=ticket))

    def _on_ack(self, ack: WardenAck) -> None:
        if ack.warden not in self.warden_names or self.awaiting.get(ack.warden) != ack.seq:
            return
        sent = self.outbox[ack.warden][0]
        if ack.channel != self.channel or ack.head != sent.head or not ack.verify():
            logger.warning(f"⚠️  {self.name} discards invalid ack from {ack.warden.short()}")
            return
        self.outbox[ack.warden].popleft()
        del self.awaiting[ack.warden]
        if ack.seq > 1:
            self.fee_channels[ack.warden].cumulative_paid += self.update_fee
        archived = self.ack_archive.get(ack.warden)
        if archived is None or ack.seq > archived.seq:
            self.ack_archive[ack.warden] = ack
        holders = self.acks.setdefault(ack.seq, set())
        holders.add(ack.warden)
        if len(holders) == len(self.warden_names):
            self.all_acks_ms.setdefault(ack.seq, self._now_ms())
        if self.params is not None and len(holders) >= self.threshold and ack.seq > self.committed_seq:
            self._on_committed(ack.seq)
        self._pump(ack.warden)

    def _on_rejection(self, rejection: Rejection) -> None:
        warden = rejection.warden
        if self.awaiting.get(warden) != rejection.seq:
            return
        del self.awaiting[warden]
        queue = self.outbox[warden]
        if rejection.reason == IGNORED_AFTER_CLOSE:
            queue.clear()
            return
        if rejection.reason == INSUFFICIENT_FEE:
            logger.error(f"❌ {self.name}: fee ticket refused by {warden.short()}")
        queue.popleft()
        while queue and queue[0].seq <= rejection.stored_seq:
            queue.popleft()
        self._pump(warden)

    def _on_committed(self, seq: int) -> None:
        self.committed_seq = seq
        self.commit_times_ms[seq] = self._now_ms()
        if self.in_flight is not None and self.in_flight.state.seq <= seq:
            self.in_flight = None
        logger.info(f"✅ {self.name} sees seq {seq} committed at {self._now_ms():.1f} ms")
        if self.strategy.kind == CRASH_AFTER_COMMIT and seq >= self.strategy.crash_seq:
            self.crashed = True
            logger.warning(f"💥 {self.name} crashed after committing seq {seq}")
            return
        self._progress()

    # ------------------------------------------------------------------ plan

    def _plan_done(self) -> bool:
        return self.committed_seq >= len(self.payments) + 1

    def _progress(self) -> None:
        """Drive the scripted payments, then the configured close."""
        self._arm_stall_timer()
        contract = self._contract()
        if contract is None or contract.phase != Phase.OPEN:
            return
        if self.committed_seq != self.latest_valid_seq or self.in_flight is not None:
            return
        index = self.committed_seq - 1
        if index < len(self.payments):
            amount = self.payments[index]
            if proposer_of(amount) == self.role:
                state = self.latest_state()
                try:
                    self.propose_update(state.balance_a - amount, state.balance_b + amount)
                except BrickError as exc:
                    logger.error(f"❌ {self.name} cannot propose payment {amount}: {exc}")
            return
        if self.closer and not self.closing_started:
            self.start_close()

    def start_close(self) -> None:
        self.closing_started = True
        mode = self.close_mode
        if mode == CLOSE_OPTIMISTIC and self.brick_plus:
            mode = CLOSE_PESSIMISTIC
        if mode == CLOSE_OPTIMISTIC:
            self.request_optimistic_close()
        elif mode == CLOSE_PESSIMISTIC:
            self.request_pessimistic_close()
        elif mode == CLOSE_AUDIT and self.on_settled is not None:
            self.on_settled()

    def _arm_stall_timer(self) -> None:
        if self._sim is None or self.chain is None:
            return
        self._stall_generation += 1
        generation = self._stall_generation
        self._sim.schedule(int(self.stall_ms * US_PER_MS), lambda: self._on_stall(generation),
                           source=self.name, summary='stall check')

    def _on_stall(self, generation: int) -> None:
        if generation != self._stall_generation or self.crashed:
            return
        contract = self._contract()
        if contract is None or contract.is_terminal():
            return
        if contract.phase == Phase.OPTIMISTIC_PENDING and contract.optimistic_claim.claimant == self.public:
            logger.warning(f"⚠️  {self.name}: counterparty silent on optimistic close, escalating")
            self.request_pessimistic_close()
            return
        unfinished = self.in_flight is not None or not self._plan_done()
        if contract.phase == Phase.OPEN and self.closer and self.close_mode != CLOSE_NONE:
            if self.closing_started and self.close_mode == CLOSE_AUDIT:
                return
            if unfinished:
                logger.warning(f"⚠️  {self.name} stalled at seq {self.committed_seq} "
                               f"(valid {self.latest_valid_seq}); closing")
            self.in_flight = None
            self.closing_started = True
            self.request_pessimistic_close()
            return
        if unfinished and contract.phase in (Phase.OPEN, Phase.BOTH_PARTIES_FUNDED):
            logger.warning(f"⚠️  {self.name} stalled at seq {self.committed_seq}")

    # ------------------------------------------------------------------ optimistic close

    def request_optimistic_close(self) -> Optional[Transaction]:
        contract = self._contract()
        state = self.committed_state()
        if contract is None or state is None:
            return None
        self.close_requested_ms = self._now_ms()
        claimed = state.balance_a
        logger.info(f"🔒 {self.name} requests optimistic close at ({state.balance_a}, {state.balance_b})")
        tx = self._submit(TX_OPTIMISTIC_REQUEST,
                          lambda tx: contract.optimistic_close_request(self.public, claimed))
        self._send(self.counterparty_name, OptimisticCloseRequest(channel=self.channel, claimed_balance_a=claimed))
        self._arm_stall_timer()
        return tx

    def respond_optimistic_close(self) -> Optional[Transaction]:
        """Agree when the on-chain claim matches the latest valid state, else go pessimistic."""
        contract = self._contract()
        request = self.optimistic_request_seen
        if (self.agreed or request is None or contract is None
                or contract.phase != Phase.OPTIMISTIC_PENDING
                or contract.optimistic_claim.claimant != self.counterparty):
            return None
        if self.strategy.kind == SILENT:
            return None
        self.agreed = True
        latest = self.latest_state()
        if contract.optimistic_claim.claimed_balance_a != latest.balance_a:
            logger.warning(f"⚠️  {self.name} disputes optimistic claim "
                           f"{contract.optimistic_claim.claimed_balance_a} (latest {latest.balance_a})")
            self.request_pessimistic_close()
            return None
        return self._submit(TX_OPTIMISTIC_AGREE, lambda tx: contract.optimistic_close_agree(self.public))

    # ------------------------------------------------------------------ pessimistic close

    def _stale_announcement(self) -> Announcement:
        """Announcement of the committed state where this party held the most."""
        candidates = [seq for seq in self.announcements if seq < self.committed_seq and seq in self.states]
        if not candidates:
            return self.announcements[1]
        best = max(candidates, key=lambda seq: (self.states[seq].balance_of(self.role), -seq))
        return self.announcements[best]

    def offer_bribes(self) -> None:
        contract = self._contract()
        stale = self._stale_announcement()
        self.bribe_target_seq = stale.seq
        amount = contract.collateral_per_warden + self.epsilon
        logger.warning(f"💸 {self.name} offers {amount} per warden to close at seq {stale.seq}")
        for warden, name in self.warden_names.items():
            self._send(name, BribeOffer(channel=self.channel, briber=self.public, amount=amount,
                                        announcement=stale))

    def request_pessimistic_close(self) -> None:
        """Broadcast close() to every warden."""
        if self.close_requested_ms is None:
            self.close_requested_ms = self._now_ms()
        if self.strategy.kind == STALE_CLOSE_BRIBER and self.bribe_target_seq is None:
            self.offer_bribes()
        logger.info(f"🔒 {self.name} requests pessimistic close (committed seq {self.committed_seq})")
        for name in self.warden_names.values():
            self._send(name, CloseRequest(channel=self.channel, requester=self.public))
        if self.strategy.kind == ANNOUNCE_AFTER_CLOSE and not self.late_update_sent:
            self.announce_after_close()

    def announce_after_close(self) -> Optional[StateCommitment]:
        """
        Push one more update right behind close(): pay the counterparty 1 when
        possible. Wardens see close() first, so only wardens that keep acking
        after close can store it, and their acks become proofs of fraud.
        """
        self.late_update_sent = True
        state = self.latest_state()
        if self.in_flight is not None or state is None:
            return None
        amount = 1 if state.balance_of(self.role) >= 1 else 0
        if self.role == ROLE_B:
            amount = -amount
        logger.warning(f"📣 {self.name} announces seq {state.seq + 1} after requesting close")
        return self.propose_update(state.balance_a - amount, state.balance_b + amount)

    def assemble_proofs(self, claims: Sequence[ClosingClaim]) -> List[ProofOfFraud]:
        """PoF for every claim below the same warden's archived ack."""
        proofs = []
        for claim in claims:
            ack = self.ack_archive.get(claim.warden)
            if ack is not None and ack.seq > claim.seq:
                proofs.append(ProofOfFraud(warden=claim.warden, ack=ack, claim=claim))
        return proofs

    def final_claims(self) -> List[ClosingClaim]:
        """Claims already on the persistent part of the chain."""
        return [tx.result for tx in self.chain.transactions(TX_CLOSING_CLAIM)
                if tx.ok and self.chain.is_final(tx) and tx.result.channel == self.channel]

    def monitor_and_finalize(self) -> Optional[Transaction]:
        """
        Submit the closing state once t usable claims are final, with proofs
        against every claimant caught contradicting its own ack.
        """
        contract = self._contract()
        if contract is None or contract.phase != Phase.PESSIMISTIC_PENDING:
            return None
        if self.finalize_tx is not None and self.finalize_tx.status == 'pending':
            return None
        if self.close_requested_ms is None:
            self.close_requested_ms = self._now_ms()
        proofs = [] if self.strategy.kind == STALE_CLOSE_BRIBER else self.assemble_proofs(contract.ordered_claims())
        proven = {proof.warden for proof in proofs}
        excluded = proven | contract.slashed
        final = [claim for claim in self.final_claims() if claim.warden not in excluded]
        if len(proven) >= contract.f + 1:
            key = ('fraud', frozenset(proven))
            state = None
            closing_seq = None
        else:
            if len(final) < contract.t:
                return None
            usable = [claim for claim in contract.ordered_claims() if claim.warden not in excluded]
            closing_seq = max(claim.seq for claim in usable)
            if self.strategy.kind == STALE_CLOSE_BRIBER and self.bribe_target_seq is not None:
                closing_seq = self.bribe_target_seq
            key = (closing_seq, frozenset(proven), len(contract.claims))
            state = self.states.get(closing_seq)
            if state is None:
                logger.error(f"❌ {self.name}: {PartyError('missing-state', f'seq {closing_seq}')}")
                self._finalize_key = key
                return None
        if key == self._finalize_key:
            return None
        self._finalize_key = key
        commitment = self.commitments.get(closing_seq) if closing_seq is not None else None
        sig_a = commitment.sig_a if commitment is not None else None
        sig_b = commitment.sig_b if commitment is not None else None
        prev_head = None
        if self.brick_plus and closing_seq is not None:
            prev_head = self.heads.get(closing_seq - 1, GENESIS_HEAD)
        logger.info(f"📝 {self.name} finalizes at seq {closing_seq} with {len(proofs)} proof(s) of fraud")
        self.finalize_tx = self._submit(
            TX_PESSIMISTIC_CLOSE,
            lambda tx: contract.pessimistic_close(self.public, state, sig_a, sig_b, proofs, prev_head))
        return self.finalize_tx

    # ------------------------------------------------------------------ chain events

    def fund(self) -> Optional[Transaction]:
        contract = self._contract()
        if contract is None or self.funded:
            return None
        self.funded = True
        amount = self.params.initial_balance_a if self.role == ROLE_A else self.params.initial_balance_b
        return self._submit(TX_FUND_PARTY, lambda tx: contract.fund_party(self.public, amount))

    def start(self) -> None:
        """Fund (A) and broadcast the opening announcement."""
        if self.role == ROLE_A:
            self.fund()
        if 1 in self.announcements:
            self.broadcast_update(self.announcements[1])
        self._arm_stall_timer()

    def on_block(self, block: Block) -> None:
        if self.crashed:
            return
        contract = self._contract()
        if contract is None:
            return
        phase = contract.phase
        if phase == Phase.PARTY_A_FUNDED and self.role == ROLE_B:
            self.fund()
        elif phase == Phase.BOTH_PARTIES_FUNDED and contract.all_wardens_funded():
            ready = self.role == ROLE_A or self.saw_fully_funded
            self.saw_fully_funded = True
            if ready and self.committed_seq >= 1 and not self.open_submitted:
                self.open_submitted = True
                self._submit(TX_OPEN, lambda tx: contract.open(self.public))
        elif phase == Phase.OPEN:
            if any(tx.kind == TX_OPEN and tx.ok for tx in block.transactions):
                self._progress()
        elif phase == Phase.OPTIMISTIC_PENDING:
            self.respond_optimistic_close()
        elif phase == Phase.PESSIMISTIC_PENDING:
            self.monitor_and_finalize()

    # ------------------------------------------------------------------ messages

    def on_message(self, sim: 'Simulator', envelope: 'Envelope') -> None:
        if self.crashed:
            return
        message = envelope.payload
        if isinstance(message, WardenAck):
            self._on_ack(message)
        elif isinstance(message, Rejection):
            self._on_rejection(message)
        elif isinstance(message, Proposal):
            self._on_proposal(message)
        elif isinstance(message, Countersign):
            self._on_countersign(message)
        elif isinstance(message, AnnouncementSignature):
            self._on_announcement_signature(message)
        elif isinstance(message, OptimisticCloseRequest):
            self.optimistic_request_seen = message
            self.respond_optimistic_close()
        elif isinstance(message, BribeReply):
            if message.accepted:
                self.bribes_paid += message.amount
        elif isinstance(message, HistoryRequest):
            self._on_history_request(envelope.sender)

    def _on_history_request(self, auditor_name: str) -> None:
        if self.strategy.kind == SILENT:
            return
        contract = self._contract()
        last = contract.closing_seq if contract is not None and contract.closing_seq else self.latest_valid_seq
        history = history_from([state for seq, state in self.states.items() if seq <= last])
        if self.strategy.kind == TAMPER_HISTORY and len(history.states) > 1:
            history = tamper(history, len(history.states) // 2)
            logger.warning(f"🕵️  {self.name} hands over a doctored history")
        self._send(auditor_name, HistoryResponse(channel=self.channel, role=self.role, history=history))
