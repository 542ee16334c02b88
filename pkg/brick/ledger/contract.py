"""
Brick channel contract: funding, opening, optimistic close, warden closing
claims, pessimistic close with fraud-proof adjudication and payouts.

Every operation validates completely before it mutates anything, so a
rejected call (a failed transaction) leaves the contract untouched.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

from brick.channel import (
    ROLE_A,
    ROLE_B,
    Announcement,
    ChannelId,
    ChannelState,
    WardenAck,
    close_plaintext,
    commit_plaintext,
    derive_channel_id,
)
from brick.errors import ContractError
from brick.primitives import Digest, PublicKey, Signature, hash_bytes

logger = logging.getLogger(__name__)

MODE_BRICK = 'brick'
MODE_BRICK_PLUS = 'brick+'

MIN_COMMITTEE = 8

CLOSED_OPTIMISTIC = 'optimistic'
CLOSED_PESSIMISTIC = 'pessimistic'

BRANCH_COMMITTEE = 'committee'
BRANCH_FRAUD_MAJORITY = 'fraud-majority'


class Phase(str, Enum):
    DEPLOYED = 'Deployed'
    PARTY_A_FUNDED = 'PartyAFunded'
    BOTH_PARTIES_FUNDED = 'BothPartiesFunded'
    OPEN = 'Open'
    OPTIMISTIC_PENDING = 'OptimisticPending'
    PESSIMISTIC_PENDING = 'PessimisticPending'
    CLOSED = 'Closed'
    CANCELLED = 'Cancelled'


PRE_OPEN_PHASES = (Phase.DEPLOYED, Phase.PARTY_A_FUNDED, Phase.BOTH_PARTIES_FUNDED, Phase.CANCELLED)
CLAIMABLE_PHASES = (Phase.OPEN, Phase.OPTIMISTIC_PENDING, Phase.PESSIMISTIC_PENDING)


def byzantine_bound(n: int) -> int:
    return (n - 1) // 3


def collateral_for(total: int, f: int) -> int:
    """ceil(v / f)."""
    return -(-total // f)


@dataclass(frozen=True)
class ChannelParams:
    """Everything fixed by ``open(H(W_1), ..., t, s_1, F)``."""

    party_a: PublicKey
    party_b: PublicKey
    warden_hashes: Tuple[Digest, ...]
    threshold: int
    closing_fee: int
    initial_balance_a: int
    initial_balance_b: int
    mode: str = MODE_BRICK
    auditors: Tuple[PublicKey, ...] = ()

    @property
    def n(self) -> int:
        return len(self.warden_hashes)

    @property
    def f(self) -> int:
        return byzantine_bound(self.n)

    @property
    def fee_share_a(self) -> int:
        return self.closing_fee - self.closing_fee // 2

    @property
    def fee_share_b(self) -> int:
        return self.closing_fee // 2


@dataclass(frozen=True)
class ClosingClaim:
    """A warden's on-chain σ_W(M, close) with both parties' signatures on M."""

    channel: ChannelId
    warden: PublicKey
    seq: int
    warden_sig: Signature
    party_sig_a: Signature
    party_sig_b: Signature
    head: Optional[Digest] = None
    inclusion_order: int = 0

    def close_plaintext(self) -> bytes:
        return close_plaintext(self.channel, self.seq, self.head)

    def announcement(self) -> Announcement:
        return Announcement(channel=self.channel, seq=self.seq, sig_a=self.party_sig_a,
                            sig_b=self.party_sig_b, head=self.head)

    def verify(self, party_a: PublicKey, party_b: PublicKey) -> bool:
        return (self.warden.verify(self.close_plaintext(), self.warden_sig)
                and self.announcement().verify(party_a, party_b))

    def payload(self) -> bytes:
        return self.close_plaintext() + self.warden.raw + self.warden_sig

    def summary(self) -> str:
        return f"claim seq={self.seq} by {self.warden.short()}"


@dataclass(frozen=True)
class ProofOfFraud:
    """Ack at seq i and closing claim at seq j < i signed by the same warden."""

    warden: PublicKey
    ack: WardenAck
    claim: ClosingClaim

    def defect(self, channel: ChannelId) -> Optional[str]:
        """None when the proof holds, otherwise why it does not."""
        if self.ack.warden != self.warden or self.claim.warden != self.warden:
            return 'key-mismatch'
        if self.ack.channel != channel or self.claim.channel != channel:
            return 'wrong-channel'
        if self.ack.seq <= self.claim.seq:
            return 'not-contradictory'
        if not self.ack.verify():
            return 'bad-ack-signature'
        if not self.warden.verify(self.claim.close_plaintext(), self.claim.warden_sig):
            return 'bad-claim-signature'
        return None


@dataclass(frozen=True)
class OptimisticClaim:
    claimant: PublicKey
    claimed_balance_a: int


@dataclass(frozen=True)
class AccessRequest:
    """Auditor's on-chain request; only valid requests make wardens close."""

    channel: ChannelId
    auditor: PublicKey
    tx_ref: int
    height: int
    valid: bool


@dataclass(frozen=True)
class CloseOutcome:
    branch: str
    closing_seq: Optional[int]
    slashed: Tuple[PublicKey, ...] = ()
    rejected_proofs: Tuple[Tuple[PublicKey, str], ...] = ()
    fee_winners: Tuple[PublicKey, ...] = ()


@dataclass
class BrickContract:
    """On-chain account of one channel."""

    channel: ChannelId
    params: ChannelParams
    phase: Phase = Phase.DEPLOYED
    total_funds: Optional[int] = None
    collateral_per_warden: Optional[int] = None
    deposits: Dict[PublicKey, int] = field(default_factory=dict)
    collateral: Dict[PublicKey, int] = field(default_factory=dict)
    payouts: Dict[PublicKey, int] = field(default_factory=dict)
    claims: Dict[PublicKey, ClosingClaim] = field(default_factory=dict)
    slashed: Set[PublicKey] = field(default_factory=set)
    withdrawn: Set[PublicKey] = field(default_factory=set)
    redeemed: Set[PublicKey] = field(default_factory=set)
    optimistic_claim: Optional[OptimisticClaim] = None
    optimistic_disabled: bool = False
    fee_winners: Tuple[PublicKey, ...] = ()
    closed_via: Optional[str] = None
    closing_seq: Optional[int] = None
    closing_state: Optional[ChannelState] = None
    close_outcome: Optional[CloseOutcome] = None
    access_requests: List[AccessRequest] = field(default_factory=list)

    # ------------------------------------------------------------------ helpers

    @property
    def f(self) -> int:
        return self.params.f

    @property
    def t(self) -> int:
        return self.params.threshold

    @property
    def brick_plus(self) -> bool:
        return self.params.mode == MODE_BRICK_PLUS

    def role_of(self, actor: PublicKey) -> Optional[str]:
        if actor == self.params.party_a:
            return ROLE_A
        if actor == self.params.party_b:
            return ROLE_B
        return None

    def is_warden(self, actor: PublicKey) -> bool:
        return actor.fingerprint() in self.params.warden_hashes

    def all_wardens_funded(self) -> bool:
        return len(self.collateral) == self.params.n

    def _require_party(self, actor: PublicKey) -> str:
        role = self.role_of(actor)
        if role is None:
            raise ContractError('wrong-caller', f"{actor.short()} is not a channel party")
        return role

    def _credit(self, actor: PublicKey, amount: int) -> None:
        if amount:
            self.payouts[actor] = self.payouts.get(actor, 0) + amount

    def _fee_share(self, role: str) -> int:
        return self.params.fee_share_a if role == ROLE_A else self.params.fee_share_b

    # ------------------------------------------------------------------ funding

    def fund_party(self, party: PublicKey, amount: int) -> Phase:
        """
        A funds first, then B. Each deposit is the party's initial balance plus
        its share of the closing fee F.
        """
        role = self._require_party(party)
        if party in self.deposits:
            raise ContractError('double-funding', f"party {role}")
        if self.phase not in (Phase.DEPLOYED, Phase.PARTY_A_FUNDED):
            raise ContractError('wrong-phase', self.phase.value)
        if role == ROLE_B and self.phase == Phase.DEPLOYED:
            raise ContractError('out-of-order-funding', "party A funds first")
        expected = self.params.initial_balance_a if role == ROLE_A else self.params.initial_balance_b
        if amount != expected:
            raise ContractError('wrong-funding-amount', f"expected {expected}, got {amount}")
        self.deposits[party] = amount + self._fee_share(role)
        if role == ROLE_A:
            self.phase = Phase.PARTY_A_FUNDED
        else:
            self.total_funds = self.params.initial_balance_a + self.params.initial_balance_b
            self.collateral_per_warden = collateral_for(self.total_funds, self.f)
            self.phase = Phase.BOTH_PARTIES_FUNDED
            logger.info(f"💰 Channel {self.channel.hex()[:8]} funded: v={self.total_funds}, "
                        f"collateral/warden={self.collateral_per_warden}")
        return self.phase

    def fund_warden(self, warden: PublicKey, amount: int) -> Dict[PublicKey, int]:
        if self.phase != Phase.BOTH_PARTIES_FUNDED:
            raise ContractError('wrong-phase', self.phase.value)
        if not self.is_warden(warden):
            raise ContractError('unknown-warden', warden.short())
        if warden in self.collateral:
            raise ContractError('double-funding', warden.short())
        if amount != self.collateral_per_warden:
            raise ContractError('wrong-collateral-amount',
                                f"expected {self.collateral_per_warden}, got {amount}")
        self.collateral[warden] = amount
        return dict(self.collateral)

    def withdraw_before_open(self, actor: PublicKey) -> int:
        """Cancel the channel (if not already) and return the actor's own deposit."""
        if self.phase not in PRE_OPEN_PHASES:
            raise ContractError('wrong-phase', self.phase.value)
        if actor in self.withdrawn:
            raise ContractError('already-withdrawn', actor.short())
        amount = self.deposits.get(actor, 0) + self.collateral.get(actor, 0)
        if not amount:
            raise ContractError('nothing-to-withdraw', actor.short())
        if self.phase != Phase.CANCELLED:
            logger.info(f"🛑 Channel {self.channel.hex()[:8]} cancelled before open")
        self.phase = Phase.CANCELLED
        self.withdrawn.add(actor)
        self._credit(actor, amount)
        return amount

    def open(self, caller: PublicKey) -> Phase:
        if self.phase in (Phase.DEPLOYED, Phase.PARTY_A_FUNDED) or (
                self.phase == Phase.BOTH_PARTIES_FUNDED and not self.all_wardens_funded()):
            raise ContractError('not-fully-funded',
                                f"{len(self.collateral)}/{self.params.n} wardens funded")
        if self.phase != Phase.BOTH_PARTIES_FUNDED:
            raise ContractError('wrong-phase', self.phase.value)
        self._require_party(caller)
        self.phase = Phase.OPEN
        logger.info(f"✅ Channel {self.channel.hex()[:8]} open")
        return self.phase

    # ------------------------------------------------------------------ optimistic close

    def optimistic_close_request(self, claimant: PublicKey, claimed_balance_a: int) -> Phase:
        if self.brick_plus:
            raise ContractError('wrong-mode', "optimistic close is disabled in Brick+")
        self._require_party(claimant)
        if self.phase != Phase.OPEN or self.optimistic_disabled:
            raise ContractError('wrong-phase', self.phase.value)
        if claimed_balance_a < 0 or claimed_balance_a > self.total_funds:
            raise ContractError('over-claim', f"{claimed_balance_a} of {self.total_funds}")
        self.optimistic_claim = OptimisticClaim(claimant=claimant, claimed_balance_a=claimed_balance_a)
        self.optimistic_disabled = True
        self.phase = Phase.OPTIMISTIC_PENDING
        return self.phase

    def optimistic_close_agree(self, counterparty: PublicKey) -> Phase:
        if self.phase != Phase.OPTIMISTIC_PENDING:
            raise ContractError('wrong-phase', self.phase.value)
        self._require_party(counterparty)
        claim = self.optimistic_claim
        if counterparty == claim.claimant:
            raise ContractError('wrong-caller', "the claimant cannot agree to its own claim")
        balance_a = claim.claimed_balance_a
        self._credit(self.params.party_a, balance_a + self.params.fee_share_a)
        self._credit(self.params.party_b, self.total_funds - balance_a + self.params.fee_share_b)
        for warden, amount in self.collateral.items():
            self._credit(warden, amount)
            self.redeemed.add(warden)
        self.phase = Phase.CLOSED
        self.closed_via = CLOSED_OPTIMISTIC
        logger.info(f"🔒 Channel {self.channel.hex()[:8]} closed optimistically "
                    f"({balance_a}, {self.total_funds - balance_a})")
        return self.phase

    # ------------------------------------------------------------------ pessimistic close

    def record_closing_claim(self, claim: ClosingClaim) -> ClosingClaim:
        if self.phase not in CLAIMABLE_PHASES:
            raise ContractError('wrong-phase', self.phase.value)
        if (claim.head is not None) != self.brick_plus:
            raise ContractError('wrong-mode', "claim format does not match channel mode")
        if not self.is_warden(claim.warden):
            raise ContractError('unknown-warden', claim.warden.short())
        if claim.warden in self.claims:
            raise ContractError('duplicate-claim', claim.warden.short())
        if (claim.channel != self.channel or claim.seq < 1
                or not claim.verify(self.params.party_a, self.params.party_b)):
            raise ContractError('bad-signature', claim.summary())
        recorded = replace(claim, inclusion_order=len(self.claims) + 1)
        self.claims[claim.warden] = recorded
        self.optimistic_disabled = True
        self.optimistic_claim = None
        self.phase = Phase.PESSIMISTIC_PENDING
        return recorded

    def ordered_claims(self) -> List[ClosingClaim]:
        return sorted(self.claims.values(), key=lambda claim: claim.inclusion_order)

    def _screen_proofs(self, proofs: Sequence[ProofOfFraud]
                       ) -> Tuple[List[PublicKey], List[Tuple[PublicKey, str]]]:
        proven: List[PublicKey] = []
        rejected: List[Tuple[PublicKey, str]] = []
        for proof in proofs:
            reason = proof.defect(self.channel)
            if reason is None and not self.is_warden(proof.warden):
                reason = 'unknown-warden'
            if reason is None and (proof.warden in proven or proof.warden in self.slashed):
                reason = 'duplicate-proof'
            if reason is None:
                proven.append(proof.warden)
            else:
                rejected.append((proof.warden, reason))
        return proven, rejected

    def _check_closing_state(self, state: ChannelState, closing_seq: int,
                             commit_sig_a: Optional[Signature], commit_sig_b: Optional[Signature],
                             prev_head: Optional[Digest], usable: List[ClosingClaim]) -> None:
        if state.seq != closing_seq:
            raise ContractError('wrong-state', f"submitted seq {state.seq}, max claimed {closing_seq}")
        if state.total != self.total_funds or state.balance_a < 0 or state.balance_b < 0:
            raise ContractError('wrong-state', "balances do not conserve v")
        commitment = state.digest(self.channel)
        if self.brick_plus:
            # Brick+ binds the state through the hash chain the parties signed
            from brick.brick_plus import link_head
            if prev_head is None:
                raise ContractError('wrong-state', "previous head required in Brick+")
            head = link_head(prev_head, commitment, closing_seq)
            if all(claim.head != head for claim in usable if claim.seq == closing_seq):
                raise ContractError('wrong-state', "state does not extend the claimed head")
            return
        message = commit_plaintext(self.channel, commitment, closing_seq)
        if (commit_sig_a is None or commit_sig_b is None
                or not self.params.party_a.verify(message, commit_sig_a)
                or not self.params.party_b.verify(message, commit_sig_b)):
            raise ContractError('bad-commit-signature', f"seq {closing_seq}")

    def pessimistic_close(self, submitter: PublicKey, state: Optional[ChannelState],
                          commit_sig_a: Optional[Signature] = None,
                          commit_sig_b: Optional[Signature] = None,
                          proofs: Sequence[ProofOfFraud] = (),
                          prev_head: Optional[Digest] = None) -> CloseOutcome:
        """
        Adjudicate and close.

        Valid proofs slash the proven wardens to the submitter and exclude their
        claims. With at least f+1 proven wardens the counterparty takes the
        whole channel; otherwise the state at the highest seq among >= t
        remaining claims closes the channel and the first t of those claimants
        share F.
        """
        if self.phase != Phase.PESSIMISTIC_PENDING:
            raise ContractError('wrong-phase', self.phase.value)
        role = self._require_party(submitter)
        proven, rejected = self._screen_proofs(proofs)
        for warden, reason in rejected:
            logger.warning(f"⚠️  Ignoring proof against {warden.short()}: {reason}")
        collateral = self.collateral_per_warden
        counterparty = self.params.party_b if role == ROLE_A else self.params.party_a

        if len(proven) >= self.f + 1:
            self.slashed.update(proven)
            self._credit(submitter, collateral * len(proven))
            self._credit(counterparty, self.total_funds + self.params.closing_fee)
            outcome = CloseOutcome(branch=BRANCH_FRAUD_MAJORITY, closing_seq=None,
                                   slashed=tuple(proven), rejected_proofs=tuple(rejected))
            self._finish_pessimistic(outcome, None)
            logger.warning(f"🚨 {len(proven)} proofs of fraud: channel balance awarded to counterparty")
            return outcome

        excluded = set(proven) | self.slashed
        usable = [claim for claim in self.ordered_claims() if claim.warden not in excluded]
        if len(usable) < self.t:
            raise ContractError('insufficient-claims', f"{len(usable)} usable of t={self.t}")
        closing_seq = max(claim.seq for claim in usable)
        if state is None:
            raise ContractError('wrong-state', "no state submitted")
        self._check_closing_state(state, closing_seq, commit_sig_a, commit_sig_b, prev_head, usable)

        self.slashed.update(proven)
        winners = tuple(claim.warden for claim in usable[:self.t])
        fee_remainder = self.params.closing_fee - (self.params.closing_fee // self.t) * self.t
        self._credit(self.params.party_a, state.balance_a)
        self._credit(self.params.party_b, state.balance_b)
        self._credit(submitter, collateral * len(proven) + fee_remainder)
        self.fee_winners = winners
        outcome = CloseOutcome(branch=BRANCH_COMMITTEE, closing_seq=closing_seq,
                               slashed=tuple(proven), rejected_proofs=tuple(rejected),
                               fee_winners=winners)
        self._finish_pessimistic(outcome, state)
        for warden in proven:
            logger.warning(f"🔪 Slashed warden {warden.short()} ({collateral})")
        logger.info(f"🔒 Channel {self.channel.hex()[:8]} closed pessimistically at seq {closing_seq}")
        return outcome

    def _finish_pessimistic(self, outcome: CloseOutcome, state: Optional[ChannelState]) -> None:
        self.phase = Phase.CLOSED
        self.closed_via = CLOSED_PESSIMISTIC
        self.closing_seq = outcome.closing_seq
        self.closing_state = state
        self.close_outcome = outcome

    def fee_per_winner(self) -> int:
        return self.params.closing_fee // self.t

    def redeem_warden(self, warden: PublicKey) -> int:
        """Collateral back, plus F/t for the first t included claimants."""
        if self.phase != Phase.CLOSED or self.closed_via != CLOSED_PESSIMISTIC:
            raise ContractError('wrong-phase', self.phase.value)
        if not self.is_warden(warden):
            raise ContractError('unknown-warden', warden.short())
        if warden in self.slashed:
            raise ContractError('slashed-warden', warden.short())
        if warden in self.redeemed:
            raise ContractError('already-redeemed', warden.short())
        amount = self.collateral.get(warden, 0)
        if warden in self.fee_winners:
            amount += self.fee_per_winner()
        self.redeemed.add(warden)
        self._credit(warden, amount)
        return amount

    # ------------------------------------------------------------------ audit (Brick+)

    def request_audit(self, auditor: PublicKey, tx_ref: int = 0, height: int = 0) -> AccessRequest:
        if not self.brick_plus:
            raise ContractError('wrong-mode', "audit requires a Brick+ channel")
        if self.phase not in (Phase.OPEN, Phase.PESSIMISTIC_PENDING, Phase.CLOSED):
            raise ContractError('wrong-phase', self.phase.value)
        request = AccessRequest(channel=self.channel, auditor=auditor, tx_ref=tx_ref,
                                height=height, valid=auditor in self.params.auditors)
        self.access_requests.append(request)
        return request

    def valid_access_request(self) -> Optional[AccessRequest]:
        return next((request for request in self.access_requests if request.valid), None)

    # ------------------------------------------------------------------ accounting

    def total_deposits(self) -> int:
        return sum(self.deposits.values()) + sum(self.collateral.values())

    def outstanding(self) -> Dict[PublicKey, int]:
        """Amounts still claimable by their owners."""
        owed: Dict[PublicKey, int] = {}
        if self.phase == Phase.CANCELLED:
            for actor in set(self.deposits) | set(self.collateral):
                if actor not in self.withdrawn:
                    owed[actor] = self.deposits.get(actor, 0) + self.collateral.get(actor, 0)
        elif self.phase == Phase.CLOSED and self.closed_via == CLOSED_PESSIMISTIC:
            for warden, amount in self.collateral.items():
                if warden in self.slashed or warden in self.redeemed:
                    continue
                owed[warden] = amount + (self.fee_per_winner() if warden in self.fee_winners else 0)
        return owed

    def entitlements(self) -> Dict[PublicKey, int]:
        """Paid plus still claimable, per actor."""
        total = dict(self.payouts)
        for actor, amount in self.outstanding().items():
            total[actor] = total.get(actor, 0) + amount
        return total

    def is_terminal(self) -> bool:
        return self.phase in (Phase.CLOSED, Phase.CANCELLED)


def deploy(chain, params: ChannelParams) -> ChannelId:
    """
    Create the channel account on ``chain``.

    Raises ContractError('bad-committee-size') unless n = 3f+1 with n > 7 and
    distinct warden hashes, ContractError('bad-threshold') unless t = 2f+1.
    """
    n = params.n
    if n < MIN_COMMITTEE or (n - 1) % 3 != 0 or len(set(params.warden_hashes)) != n:
        raise ContractError('bad-committee-size', f"n={n}")
    if params.threshold != 2 * params.f + 1:
        raise ContractError('bad-threshold', f"t={params.threshold}, expected {2 * params.f + 1}")
    if min(params.closing_fee, params.initial_balance_a, params.initial_balance_b) < 0:
        raise ContractError('bad-params', "negative amount")
    if params.initial_balance_a + params.initial_balance_b <= 0:
        raise ContractError('bad-params', "channel holds no funds")
    if params.mode not in (MODE_BRICK, MODE_BRICK_PLUS):
        raise ContractError('bad-params', f"unknown mode {params.mode}")
    nonce = len(chain.contracts)
    channel = derive_channel_id(params.party_a, params.party_b, nonce)
    while channel in chain.contracts:
        nonce += 1
        channel = derive_channel_id(params.party_a, params.party_b, nonce)
    chain.contracts[channel] = BrickContract(channel=channel, params=params)
    logger.info(f"🚀 Deployed {params.mode} channel {channel.hex()[:8]} "
                f"(n={n}, t={params.threshold}, F={params.closing_fee})")
    return channel


def warden_hashes(wardens: Sequence[PublicKey]) -> Tuple[Digest, ...]:
    return tuple(hash_bytes(warden.raw) for warden in wardens)
