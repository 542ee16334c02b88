"""
Wires one seeded Brick run: keys, simulator, chain, contract, parties,
wardens and the optional auditor, then collects the outcome.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional

from brick.brick_plus import GENESIS_HEAD, Auditor, link_head
from brick.channel import ROLE_A, ROLE_B, initial_state, make_announcement, make_commitment
from brick.incentives import settlement_audit
from brick.ledger.chain import Chain
from brick.ledger.contract import (
    BRANCH_FRAUD_MAJORITY,
    CLOSED_OPTIMISTIC,
    CLOSED_PESSIMISTIC,
    MODE_BRICK_PLUS,
    BrickContract,
    ChannelParams,
    Phase,
    deploy,
    warden_hashes,
)
from brick.netsim import (
    AdversaryPolicy,
    CensorLedger,
    HonestDelays,
    Reorder,
    Simulator,
    TargetedDelay,
)
from brick.party import (
    CLOSE_AUDIT,
    TX_OPTIMISTIC_AGREE,
    TX_PESSIMISTIC_CLOSE,
    Party,
    parse_party_strategy,
)
from brick.primitives import KeyPair, PublicKey, derive_seed, keygen
from brick.warden import Warden, parse_strategy

if TYPE_CHECKING:
    from brick.scenarios import ScenarioConfig

logger = logging.getLogger(__name__)

ADVERSARY_NONE = 'none'
ADVERSARY_REORDER = 'reorder'
ADVERSARY_CENSOR = 'censor'
ADVERSARY_DELAY = 'delay'
ADVERSARY_TAGS = (ADVERSARY_NONE, ADVERSARY_REORDER, ADVERSARY_CENSOR, ADVERSARY_DELAY)

REORDER_MAX_HOLD_MS = 250
TARGETED_DELAY_MS = 5000

CLOSING_TX_KINDS = (TX_PESSIMISTIC_CLOSE, TX_OPTIMISTIC_AGREE, 'dispute')

AUDITOR_NAME = 'auditor'
LOCKED = 'locked-in-contract'


def build_policies(config: 'ScenarioConfig', seed: int) -> List[AdversaryPolicy]:
    """Adversary tags joined with '+', e.g. ``reorder+censor``."""
    policies: List[AdversaryPolicy] = []
    for tag in config.adversary.split('+'):
        tag = tag.strip()
        if tag == ADVERSARY_REORDER:
            policies.append(Reorder(seed, REORDER_MAX_HOLD_MS, max_hold_blocks=config.liveness_bound - 1))
        elif tag == ADVERSARY_CENSOR:
            policies.append(CensorLedger(lambda tx: tx.sender == 'B' and tx.kind in CLOSING_TX_KINDS,
                                         config.dispute_window + 1))
        elif tag == ADVERSARY_DELAY:
            policies.append(TargetedDelay(lambda envelope: envelope.sender == 'B', TARGETED_DELAY_MS))
    return policies


@dataclass
class RunResult:
    """Outcome of one run; ``to_dict`` is the JSON report body."""

    scenario: str
    seed: int
    mode: str
    phase: str
    closed_via: Optional[str]
    close_branch: Optional[str]
    closing_seq: Optional[int]
    freshest_committed_seq: int
    safety_ok: bool
    liveness_ok: bool
    liveness_ms: Optional[float]
    payouts: Dict[str, int]
    bribes: Dict[str, int]
    proofs_used: int
    slashed: List[str]
    fees: Dict[str, Any]
    warden_income: Dict[str, int]
    committed: Dict[str, int]
    event_counts: Dict[str, int]
    failed_transactions: Dict[str, int]
    trace_digest: str
    truncated: bool
    audit: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    external_punishment: List[str] = field(default_factory=list)
    sim: Optional[Simulator] = field(default=None, repr=False)
    chain: Optional[Chain] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario,
            'seed': self.seed,
            'mode': self.mode,
            'final_phase': self.phase,
            'closed_via': self.closed_via,
            'close_branch': self.close_branch,
            'closing_seq': self.closing_seq,
            'freshest_committed_seq': self.freshest_committed_seq,
            'safety_ok': self.safety_ok,
            'liveness_ok': self.liveness_ok,
            'liveness_ms': self.liveness_ms,
            'payouts': self.payouts,
            'bribes': self.bribes,
            'proofs_used': self.proofs_used,
            'slashed': self.slashed,
            'fee_reconciliation': self.fees,
            'warden_income': self.warden_income,
            'committed_seq_by_party': self.committed,
            'event_counts': self.event_counts,
            'failed_transactions': self.failed_transactions,
            'audit': self.audit,
            'external_punishment': self.external_punishment,
            'trace_digest': self.trace_digest,
            'truncated': self.truncated,
        }


class ChannelRun:
    """One channel, its committee and its environment for a single seed."""

    def __init__(self, config: 'ScenarioConfig'):
        self.config = config
        self.sim = Simulator(config.seed,
                             delays=HonestDelays(rtt_ms=config.rtt_ms, jitter_ms=config.jitter_ms),
                             stagger_us=config.stagger_us)
        policies = build_policies(config, int(self.sim.adversary_rng.integers(0, 2 ** 32)))
        self.sim.policies = policies
        self.chain = Chain(confirm_depth=config.confirm_depth, liveness_bound=config.liveness_bound,
                           block_time_ms=config.block_time_ms, policies=policies)
        self.chain.attach(self.sim)
        n = config.wardens
        self.keys: Dict[str, KeyPair] = {'A': keygen(derive_seed(config.seed, 0)),
                                         'B': keygen(derive_seed(config.seed, 1))}
        for index in range(n):
            self.keys[f"W{index + 1}"] = keygen(derive_seed(config.seed, index + 2))
        self.keys[AUDITOR_NAME] = keygen(derive_seed(config.seed, n + 2))
        self.names: Dict[PublicKey, str] = {keys.public: name for name, keys in self.keys.items()}
        self.wardens: List[Warden] = []
        self.parties: Dict[str, Party] = {}
        self.auditor: Optional[Auditor] = None
        self.contract: Optional[BrickContract] = None

    # ------------------------------------------------------------------ setup

    def setup(self) -> 'ChannelRun':
        config = self.config
        key_a, key_b = self.keys['A'], self.keys['B']
        warden_keys = [self.keys[f"W{index + 1}"] for index in range(config.wardens)]
        auditors = (self.keys[AUDITOR_NAME].public,) if config.mode == MODE_BRICK_PLUS else ()
        params = ChannelParams(party_a=key_a.public, party_b=key_b.public,
                               warden_hashes=warden_hashes([keys.public for keys in warden_keys]),
                               threshold=config.threshold, closing_fee=config.closing_fee,
                               initial_balance_a=config.split_a,
                               initial_balance_b=config.total - config.split_a,
                               mode=config.mode, auditors=auditors)
        channel = deploy(self.chain, params)
        self.contract = self.chain.contract(channel)

        state = initial_state(params.initial_balance_a, params.initial_balance_b, self.sim.salt_rng)
        commitment = make_commitment(channel, state, total=config.total, previous_seq=0,
                                     key_a=key_a, key_b=key_b)
        head = link_head(GENESIS_HEAD, state.digest(channel), 1) if config.mode == MODE_BRICK_PLUS else None
        announcement = make_announcement(commitment, party_a=key_a.public, party_b=key_b.public,
                                         key_a=key_a, key_b=key_b, head=head)

        warden_names = {keys.public: f"W{index + 1}" for index, keys in enumerate(warden_keys)}
        party_names = {key_a.public: 'A', key_b.public: 'B'}
        for index, keys in enumerate(warden_keys):
            warden = Warden(name=f"W{index + 1}", keys=keys,
                            strategy=parse_strategy(config.warden_strategies[index]),
                            update_fee=config.update_fee, epsilon=config.epsilon)
            warden.bind(channel, key_a.public, key_b.public, party_names, chain=self.chain, sim=self.sim)
            self.sim.register(warden)
            self.wardens.append(warden)

        closer_role, close_mode = config.closer, config.close
        for role, name, keys, tag, other in ((ROLE_A, 'A', key_a, config.party_a, 'B'),
                                             (ROLE_B, 'B', key_b, config.party_b, 'A')):
            party = Party(name=name, role=role, keys=keys, salt_rng=self.sim.salt_rng,
                          strategy=parse_party_strategy(tag), update_fee=config.update_fee,
                          epsilon=config.epsilon, stall_ms=config.stall_ms,
                          payments=list(config.payments), close_mode=close_mode,
                          closer=(role == closer_role))
            party.install_initial(state, commitment, announcement)
            party.bind(channel, params, other, warden_names, chain=self.chain, sim=self.sim)
            self.sim.register(party)
            self.parties[name] = party

        if config.mode == MODE_BRICK_PLUS:
            self.auditor = Auditor(name=AUDITOR_NAME, keys=self.keys[AUDITOR_NAME], chain=self.chain,
                                   channel=channel, party_names={ROLE_A: 'A', ROLE_B: 'B'})
            self.auditor.attach(self.sim)
            self.sim.register(self.auditor)
            if close_mode == CLOSE_AUDIT:
                self.parties[closer_role].on_settled = self.auditor.audit_request
        return self

    # ------------------------------------------------------------------ run

    def execute(self) -> RunResult:
        for party in self.parties.values():
            party.start()
        self.sim.run_until_quiescent(self.config.limit_ms)
        if self.auditor is not None and self.auditor.request_tx is not None:
            self.auditor.conclude()
        return self.collect()

    def freshest_committed_seq(self) -> int:
        """
        Highest seq acknowledged by at least t distinct wardens, or carried by
        an on-chain claim of a warden that was not slashed. Claims only carry
        both-signed announcements, so a claimed seq is one the close must reach.
        """
        holders: Dict[int, set] = {}
        for warden in self.wardens:
            for ack in warden.emitted_acks:
                holders.setdefault(ack.seq, set()).add(warden.public)
        committed = [seq for seq, who in holders.items() if len(who) >= self.config.threshold]
        contract = self.contract
        claimed = [claim.seq for warden, claim in contract.claims.items() if warden not in contract.slashed]
        return max(committed + claimed, default=0)

    def _closed_at_ms(self) -> Optional[float]:
        for kind in (TX_PESSIMISTIC_CLOSE, TX_OPTIMISTIC_AGREE):
            for tx in self.chain.transactions(kind):
                if tx.ok:
                    return self.chain.blocks[tx.included_height].time_ms
        return None

    def _close_requested_ms(self) -> Optional[float]:
        times = [party.close_requested_ms for party in self.parties.values()
                 if party.close_requested_ms is not None]
        if self.auditor is not None and self.auditor.request_tx is not None \
                and self.auditor.request_tx.included_height is not None:
            times.append(self.chain.blocks[self.auditor.request_tx.included_height].time_ms)
        return min(times, default=None)

    def _safety(self, freshest: int) -> bool:
        contract = self.contract
        if contract.phase != Phase.CLOSED:
            return True
        if contract.closed_via == CLOSED_PESSIMISTIC:
            if contract.close_outcome.branch == BRANCH_FRAUD_MAJORITY:
                return True
            return contract.closing_seq == freshest
        claimed = contract.optimistic_claim.claimed_balance_a
        for party in self.parties.values():
            for seq, state in party.states.items():
                commitment = party.commitments.get(seq)
                if (seq >= freshest and state.balance_a == claimed and commitment is not None
                        and commitment.is_fully_signed(contract.params.party_a, contract.params.party_b)):
                    return True
        return False

    def _fee_report(self) -> Dict[str, Any]:
        contract = self.contract
        deposits = {self.names[actor]: amount for actor, amount in contract.deposits.items()}
        for warden, amount in contract.collateral.items():
            deposits[self.names[warden]] = deposits.get(self.names[warden], 0) + amount
        entitlements = {self.names[actor]: amount for actor, amount in contract.entitlements().items()}
        if not contract.is_terminal():
            entitlements[LOCKED] = contract.total_deposits() - sum(contract.payouts.values())
        signed, collected = {}, {}
        for party in self.parties.values():
            for warden_key, fee_channel in party.fee_channels.items():
                signed[f"{party.name}->{self.names[warden_key]}"] = fee_channel.signed_total
        for warden in self.wardens:
            for payer, amount in warden.fee_ledger.items():
                collected[f"{self.names[payer]}->{warden.name}"] = amount
        closing_income = {}
        if contract.closed_via == CLOSED_PESSIMISTIC:
            closing_income = {self.names[warden]: contract.fee_per_winner() for warden in contract.fee_winners}
        return settlement_audit(deposits, entitlements, signed, collected, self.config.update_fee,
                                closing_income)

    def collect(self) -> RunResult:
        contract = self.contract
        freshest = self.freshest_committed_seq()
        closed_ms = self._closed_at_ms()
        requested_ms = self._close_requested_ms()
        closed = contract.phase == Phase.CLOSED
        liveness_ok = (requested_ms is None or closed) and not self.sim.truncated
        entitlements = contract.entitlements()
        warden_income = {}
        for warden in self.wardens:
            deposit = contract.collateral.get(warden.public, 0)
            warden_income[warden.name] = (entitlements.get(warden.public, 0) - deposit
                                          + warden.fee_income() + warden.bribes_received)
        outcome = contract.close_outcome
        counts = Counter(record.kind for record in self.sim.trace)
        failed = Counter(tx.error for tx in self.chain.transactions() if not tx.ok)
        result = RunResult(
            scenario=self.config.name,
            seed=self.config.seed,
            mode=self.config.mode,
            phase=contract.phase.value,
            closed_via=contract.closed_via,
            close_branch=outcome.branch if outcome is not None else None,
            closing_seq=contract.closing_seq if contract.closed_via != CLOSED_OPTIMISTIC else None,
            freshest_committed_seq=freshest,
            safety_ok=self._safety(freshest),
            liveness_ok=liveness_ok,
            liveness_ms=(closed_ms - requested_ms) if closed and requested_ms is not None else None,
            payouts={self.names[actor]: amount for actor, amount in sorted(entitlements.items())},
            bribes={party.name: -party.bribes_paid for party in self.parties.values() if party.bribes_paid}
            | {warden.name: warden.bribes_received for warden in self.wardens if warden.bribes_received},
            proofs_used=len(outcome.slashed) if outcome is not None else 0,
            slashed=sorted(self.names[warden] for warden in contract.slashed),
            fees=self._fee_report(),
            warden_income=warden_income,
            committed={name: party.committed_seq for name, party in self.parties.items()},
            event_counts=dict(sorted(counts.items())),
            failed_transactions=dict(sorted(failed.items())),
            trace_digest=self.sim.trace_digest(),
            truncated=self.sim.truncated,
            audit={role: verdict.to_dict() for role, verdict in sorted(self.auditor.verdicts.items())}
            if self.auditor is not None else {},
            external_punishment=self.auditor.external_punishment() if self.auditor is not None else [],
            sim=self.sim,
            chain=self.chain,
        )
        icon = '✅' if result.safety_ok else '🚨'
        logger.info(f"{icon} {self.config.name} seed {self.config.seed}: {result.phase}, "
                    f"closing seq {result.closing_seq}, freshest committed {freshest}")
        return result

