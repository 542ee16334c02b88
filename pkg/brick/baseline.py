"""
Dispute-window payment channel used as the synchronous baseline.

A unilateral close at S_j stands unless a newer state S_k (k > j) is disputed
on-chain within ``dispute_window`` blocks of the close. Only the dispute
skeleton is modelled, enough to show that an adversary able to keep the
dispute out of the chain for longer than the window steals funds.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from brick.errors import ContractError
from brick.ledger.chain import Block, Chain, Transaction
from brick.netsim import CensorLedger, HonestDelays, Simulator

logger = logging.getLogger(__name__)

DEFAULT_DISPUTE_WINDOW = 6

TX_CLOSE = 'timeout-close'
TX_DISPUTE = 'dispute'

LATE_DISPUTE = 'late-dispute'


@dataclass
class TimeoutChannel:
    """On-chain side of the baseline channel; states are (balance_a, balance_b) by seq."""

    states: Dict[int, Tuple[int, int]]
    dispute_window: int = DEFAULT_DISPUTE_WINDOW
    close_seq: Optional[int] = None
    close_height: Optional[int] = None
    closer: Optional[str] = None
    dispute_seq: Optional[int] = None
    dispute_height: Optional[int] = None
    settled_seq: Optional[int] = None
    payouts: Dict[str, int] = field(default_factory=dict)

    @property
    def latest_seq(self) -> int:
        return max(self.states)

    @property
    def settled(self) -> bool:
        return self.settled_seq is not None

    def close_at(self, closer: str, seq: int, height: int) -> int:
        if self.close_seq is not None:
            raise ContractError('already-closing', f"closed at {self.close_seq}")
        if seq not in self.states:
            raise ContractError('wrong-state', f"unknown seq {seq}")
        self.close_seq = seq
        self.close_height = height
        self.closer = closer
        logger.info(f"🔒 Baseline close at S_{seq} (height {height}, window {self.dispute_window})")
        return seq

    def dispute(self, disputer: str, seq: int, height: int) -> int:
        """Replace the pending close by newer state S_k; too late once the window has passed."""
        if self.close_seq is None:
            raise ContractError('wrong-phase', "nothing to dispute")
        if self.settled or height > self.close_height + self.dispute_window:
            raise ContractError(LATE_DISPUTE, f"included at {height}, window ended "
                                              f"{self.close_height + self.dispute_window}")
        if seq <= self.close_seq or seq not in self.states:
            raise ContractError('stale-dispute', f"S_{seq} is not newer than S_{self.close_seq}")
        self.dispute_seq = seq
        self.dispute_height = height
        self._settle(seq)
        return seq

    def expire(self, height: int) -> Optional[int]:
        """Settle at the closed state once the window is over."""
        if self.close_seq is None or self.settled:
            return None
        if height >= self.close_height + self.dispute_window:
            self._settle(self.close_seq)
            return self.close_seq
        return None

    def _settle(self, seq: int) -> None:
        balance_a, balance_b = self.states[seq]
        self.settled_seq = seq
        self.payouts = {'A': balance_a, 'B': balance_b}
        logger.info(f"💰 Baseline settled at S_{seq}: ({balance_a}, {balance_b})")


@dataclass
class TimeoutParticipant:
    """Party or watchtower on the baseline channel."""

    name: str
    chain: Chain
    channel_id: bytes
    disputes: bool = True
    dispute_tx: Optional[Transaction] = None

    def on_block(self, block: Block) -> None:
        channel = self.chain.contract(self.channel_id)
        if (not self.disputes or self.dispute_tx is not None or channel.close_seq is None
                or channel.settled or channel.closer == self.name or channel.close_seq >= channel.latest_seq):
            return
        newest = channel.latest_seq
        logger.info(f"⚖️  {self.name} disputes with S_{newest}")
        self.dispute_tx = self.chain.submit(Transaction(
            kind=TX_DISPUTE, sender=self.name, payload=newest.to_bytes(8, 'big'),
            call=lambda tx: channel.dispute(self.name, newest, tx.included_height)))

    def on_message(self, sim, envelope) -> None:
        pass


def run_timeout_channel(seed: int, balances: Sequence[Tuple[int, int]], *,
                        dispute_window: int = DEFAULT_DISPUTE_WINDOW, censor_blocks: int = 0,
                        watchtower: bool = False, block_time_ms: float = 1000,
                        confirm_depth: int = 6, liveness_bound: int = 2,
                        rtt_ms: float = 100, limit_ms: float = 600_000) -> Dict[str, object]:
    """
    Attacker A closes at the state where it held the most; victim B (and a
    watchtower if configured) disputes with the newest state. Disputes are
    held back ``censor_blocks`` blocks.
    """
    policies: List = []
    if censor_blocks:
        policies.append(CensorLedger(lambda tx: tx.kind == TX_DISPUTE, censor_blocks))
    sim = Simulator(seed, delays=HonestDelays(rtt_ms=rtt_ms))
    chain = Chain(confirm_depth=confirm_depth, liveness_bound=liveness_bound,
                  block_time_ms=block_time_ms, policies=policies)
    chain.attach(sim)
    states = {seq: tuple(pair) for seq, pair in enumerate(balances, start=1)}
    channel_id = b'timeout-channel'
    channel = TimeoutChannel(states=states, dispute_window=dispute_window)
    chain.contracts[channel_id] = channel
    victim = TimeoutParticipant(name='B', chain=chain, channel_id=channel_id)
    participants = [victim]
    if watchtower:
        participants.append(TimeoutParticipant(name='watchtower', chain=chain, channel_id=channel_id))
    for participant in participants:
        sim.register(participant)
        chain.subscribe(participant.on_block)
    chain.subscribe(lambda block: channel.expire(block.height))

    stale_seq = max(states, key=lambda seq: (states[seq][0], -seq))
    chain.submit(Transaction(kind=TX_CLOSE, sender='A', payload=stale_seq.to_bytes(8, 'big'),
                             call=lambda tx: channel.close_at('A', stale_seq, tx.included_height)))
    sim.run_until_quiescent(limit_ms)

    latest = channel.latest_seq
    settled = channel.settled_seq
    fresh_b = states[latest][1]
    dispute_errors = [tx.error for tx in chain.transactions(TX_DISPUTE) if not tx.ok]
    report = {
        'mode': 'baseline',
        'closing_seq': settled,
        'freshest_committed_seq': latest,
        'safety_ok': settled == latest,
        'payouts': dict(channel.payouts),
        'victim_loss': max(0, fresh_b - channel.payouts.get('B', 0)),
        'dispute_window': dispute_window,
        'censor_blocks': censor_blocks,
        'dispute_errors': dispute_errors,
        'watchtower': watchtower,
        'trace_digest': sim.trace_digest(),
        'chain': chain,
        'sim': sim,
    }
    if report['safety_ok']:
        logger.info("✅ Baseline settled at the newest state")
    else:
        logger.warning(f"🚨 Baseline settled at stale S_{settled}: victim lost {report['victim_loss']}")
    return report
