"""
Simulated blockchain with persistence and liveness.

Transactions wait in a pending pool and execute when a block includes them.
The adversary may hold a transaction back for some blocks (bounded in honest
runs, arbitrary in censorship scenarios). Nothing is ever reorganised, so a
transaction at depth >= k is final by construction.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from brick.errors import BrickError
from brick.netsim import KIND_BLOCK, US_PER_MS, AdversaryPolicy, Simulator

logger = logging.getLogger(__name__)

DEFAULT_CONFIRM_DEPTH = 6
DEFAULT_LIVENESS_BOUND = 2
DEFAULT_BLOCK_TIME_MS = 1000

TX_PENDING = 'pending'
TX_OK = 'ok'
TX_FAILED = 'failed'


@dataclass(eq=False)
class Transaction:
    """A contract call waiting for (or already given) a place in a block."""

    kind: str
    sender: str
    payload: bytes
    call: Callable[['Transaction'], Any] = field(repr=False)
    tx_id: int = -1
    submitted_height: int = 0
    earliest_height: int = 0
    included_height: Optional[int] = None
    status: str = TX_PENDING
    error: Optional[str] = None
    result: Any = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == TX_OK

    def summary(self) -> str:
        return f"{self.kind} #{self.tx_id} from {self.sender}"

    def to_dict(self) -> Dict[str, Any]:
        record = {
            'tx_id': self.tx_id,
            'kind': self.kind,
            'sender': self.sender,
            'status': self.status,
            'payload-hex': self.payload.hex(),
        }
        if self.error:
            record['error'] = self.error
        return record


@dataclass(frozen=True)
class Block:
    height: int
    time_ms: float
    transactions: Tuple[Transaction, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {'height': self.height, 'time_ms': self.time_ms,
                'txs': [tx.to_dict() for tx in self.transactions]}


BlockListener = Callable[[Block], None]


class Chain:
    """
    Single-writer ledger advanced by the simulator.

    When attached to a simulator the chain mines one block every
    ``block_time_ms`` while transactions are pending, plus ``confirm_depth``
    empty blocks afterwards so the last inclusions become final; then it
    idles until the next submission.
    """

    def __init__(self, confirm_depth: int = DEFAULT_CONFIRM_DEPTH,
                 liveness_bound: int = DEFAULT_LIVENESS_BOUND,
                 block_time_ms: float = DEFAULT_BLOCK_TIME_MS,
                 policies: Sequence[AdversaryPolicy] = ()):
        self.confirm_depth = confirm_depth
        self.liveness_bound = liveness_bound
        self.block_time_ms = block_time_ms
        self.policies = list(policies)
        self.blocks: List[Block] = [Block(height=0, time_ms=0.0, transactions=())]
        self.pending: List[Transaction] = []
        self.contracts: Dict[bytes, Any] = {}
        self._listeners: List[BlockListener] = []
        self._tx_ids = itertools.count(1)
        self._sim: Optional[Simulator] = None
        self._mining = False
        self._idle_blocks = 0

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def attach(self, sim: Simulator) -> None:
        self._sim = sim

    def subscribe(self, listener: BlockListener) -> None:
        self._listeners.append(listener)

    def contract(self, channel: bytes) -> Any:
        return self.contracts[channel]

    def submit(self, tx: Transaction) -> Transaction:
        """Queue ``tx``; policies decide how many blocks it is held back."""
        hold = max((self._hold(policy, tx) for policy in self.policies), default=0)
        tx.tx_id = next(self._tx_ids)
        tx.submitted_height = self.height
        tx.earliest_height = self.height + 1 + hold
        self.pending.append(tx)
        if hold:
            logger.debug(f"⏸️  {tx.summary()} held {hold} blocks")
        self._ensure_mining()
        return tx

    def _hold(self, policy: AdversaryPolicy, tx: Transaction) -> int:
        blocks = policy.hold_blocks(tx)
        if policy.bounded:
            # included within liveness_bound blocks of submission
            blocks = min(blocks, max(0, self.liveness_bound - 1))
        return blocks

    def advance_block(self, time_ms: float = 0.0) -> Block:
        """Include every pending transaction whose hold has expired, in submission order."""
        height = self.height + 1
        ready = sorted((tx for tx in self.pending if tx.earliest_height <= height),
                       key=lambda tx: (tx.earliest_height, tx.tx_id))
        self.pending = [tx for tx in self.pending if tx.earliest_height > height]
        for tx in ready:
            tx.included_height = height
            try:
                tx.result = tx.call(tx)
                tx.status = TX_OK
            except BrickError as exc:
                tx.status = TX_FAILED
                tx.error = exc.reason
                logger.debug(f"❌ {tx.summary()} failed at height {height}: {exc}")
        block = Block(height=height, time_ms=time_ms, transactions=tuple(ready))
        self.blocks.append(block)
        for listener in list(self._listeners):
            listener(block)
        return block

    def _ensure_mining(self) -> None:
        if self._sim is None or self._mining:
            return
        self._mining = True
        self._idle_blocks = 0
        self._schedule_block()

    def _schedule_block(self) -> None:
        self._sim.schedule(int(self.block_time_ms * US_PER_MS), self._on_block_timer,
                           kind=KIND_BLOCK, source='chain', summary=f"block {self.height + 1}")

    def _on_block_timer(self) -> None:
        self.advance_block(self._sim.now_ms())
        if self.pending:
            self._idle_blocks = 0
        else:
            self._idle_blocks += 1
        if self.pending or self._idle_blocks <= self.confirm_depth:
            self._schedule_block()
        else:
            self._mining = False

    def depth(self, tx: Transaction) -> int:
        if tx.included_height is None:
            return 0
        return self.height - tx.included_height + 1

    def is_final(self, tx: Transaction) -> bool:
        return self.depth(tx) >= self.confirm_depth

    def transactions(self, kind: Optional[str] = None) -> Iterator[Transaction]:
        for block in self.blocks:
            for tx in block.transactions:
                if kind is None or tx.kind == kind:
                    yield tx

    def final_blocks(self) -> List[Block]:
        """Blocks at depth >= k."""
        last_final = self.height - self.confirm_depth + 1
        return [block for block in self.blocks if block.height <= last_final]

    def to_json(self) -> List[Dict[str, Any]]:
        return [block.to_dict() for block in self.blocks]
