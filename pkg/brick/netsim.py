"""
Deterministic discrete-event network.

One priority queue of events ordered by simulated time, ties broken by
insertion order. Adversary policies may delay or reorder messages and hold
ledger transactions, but never drop, alter or duplicate anything.
Time is kept in integer microseconds internally; ``now()`` reports whole
milliseconds.
"""

import hashlib
import heapq
import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

US_PER_MS = 1000

DEFAULT_RTT_MS = 100
DEFAULT_STAGGER_US = 2000

KIND_DELIVER = 'deliver'
KIND_TIMER = 'timer'
KIND_BLOCK = 'block'


class Actor(Protocol):
    name: str

    def on_message(self, sim: 'Simulator', envelope: 'Envelope') -> None:
        ...


@dataclass(frozen=True)
class Envelope:
    sender: str
    recipient: str
    payload: Any
    sent_us: int
    msg_id: int

    @property
    def kind(self) -> str:
        return type(self.payload).__name__

    def summary(self) -> str:
        describe = getattr(self.payload, 'summary', None)
        return describe() if callable(describe) else self.kind


@dataclass(frozen=True)
class TraceRecord:
    time_ms: float
    kind: str
    source: str
    target: str
    summary: str

    def to_dict(self) -> Dict[str, Any]:
        return {'time_ms': self.time_ms, 'kind': self.kind, 'from': self.source,
                'to': self.target, 'summary': self.summary}


class AdversaryPolicy:
    """Base policy: no extra delay, no ledger hold."""

    name = 'honest'
    # Ledger holds from bounded policies are clamped to the chain's liveness bound.
    bounded = True

    def extra_delay_us(self, envelope: Envelope) -> int:
        return 0

    def hold_blocks(self, tx: Any) -> int:
        return 0


@dataclass(frozen=True)
class HonestDelays:
    """Symmetric links: one-way delay rtt/2, optional uniform jitter."""

    rtt_ms: float = DEFAULT_RTT_MS
    jitter_ms: float = 0

    def one_way_us(self, rng: np.random.Generator) -> int:
        base = int(self.rtt_ms * US_PER_MS) // 2
        jitter = int(self.jitter_ms * US_PER_MS)
        if jitter:
            base += int(rng.integers(-jitter, jitter + 1))
        return max(0, base)


class Reorder(AdversaryPolicy):
    """Random extra hold on every message (and on ledger inclusion up to L-1 blocks)."""

    name = 'reorder'

    def __init__(self, seed: int, max_hold_ms: float, max_hold_blocks: int = 0):
        self.seed = seed
        self.max_hold_us = int(max_hold_ms * US_PER_MS)
        self.max_hold_blocks = max_hold_blocks
        self._rng = np.random.default_rng(seed)

    def extra_delay_us(self, envelope: Envelope) -> int:
        if self.max_hold_us <= 0:
            return 0
        return int(self._rng.integers(0, self.max_hold_us + 1))

    def hold_blocks(self, tx: Any) -> int:
        if self.max_hold_blocks <= 0:
            return 0
        return int(self._rng.integers(0, self.max_hold_blocks + 1))


class TargetedDelay(AdversaryPolicy):
    """Hold matching messages for a finite duration."""

    name = 'targeted-delay'

    def __init__(self, predicate: Callable[[Envelope], bool], hold_ms: float):
        self.predicate = predicate
        self.hold_us = int(hold_ms * US_PER_MS)

    def extra_delay_us(self, envelope: Envelope) -> int:
        return self.hold_us if self.predicate(envelope) else 0


class CensorLedger(AdversaryPolicy):
    """Keep matching transactions out of blocks for ``hold_blocks`` blocks."""

    name = 'censor-ledger'
    bounded = False

    def __init__(self, predicate: Callable[[Any], bool], hold_blocks: int):
        self.predicate = predicate
        self.blocks = hold_blocks

    def hold_blocks(self, tx: Any) -> int:
        return self.blocks if self.predicate(tx) else 0


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Independent seeded streams for one run."""
    return [np.random.Generator(np.random.PCG64(stream))
            for stream in np.random.SeedSequence(seed).spawn(count)]


class Simulator:
    """Single-threaded event loop shared by every actor of a run."""

    def __init__(self, seed: int, delays: Optional[HonestDelays] = None,
                 stagger_us: int = DEFAULT_STAGGER_US,
                 policies: Sequence[AdversaryPolicy] = ()):
        self.seed = seed
        self.delays = delays or HonestDelays()
        self.stagger_us = stagger_us
        self.policies = list(policies)
        self.network_rng, self.salt_rng, self.adversary_rng = spawn_generators(seed, 3)
        self.actors: Dict[str, Actor] = {}
        self.trace: List[TraceRecord] = []
        self.truncated = False
        self._queue: List[Tuple[int, int, Callable[[], None], str, str, str, str]] = []
        self._order = itertools.count()
        self._msg_ids = itertools.count(1)
        self._now_us = 0
        self._link_free_us: Dict[str, int] = {}
        self._fifo_us: Dict[Tuple[str, str], int] = {}
        self.sent: Dict[str, int] = {}
        self.delivered: Dict[str, int] = {}

    def register(self, actor: Actor) -> None:
        self.actors[actor.name] = actor

    def now(self) -> int:
        """Simulated milliseconds (floor)."""
        return self._now_us // US_PER_MS

    def now_us(self) -> int:
        return self._now_us

    def now_ms(self) -> float:
        return self._now_us / US_PER_MS

    def schedule(self, delay_us: int, callback: Callable[[], None], kind: str = KIND_TIMER,
                 source: str = '', target: str = '', summary: str = '') -> int:
        at_us = self._now_us + max(0, int(delay_us))
        heapq.heappush(self._queue, (at_us, next(self._order), callback, kind, source, target, summary))
        return at_us

    def send(self, sender: str, recipient: str, payload: Any) -> int:
        """
        Schedule delivery of ``payload``.

        Consecutive sends from one actor leave ``stagger_us`` apart; the
        (sender, recipient) pair is FIFO whatever the adversary adds.
        """
        departure = max(self._now_us, self._link_free_us.get(sender, 0)) + self.stagger_us
        self._link_free_us[sender] = departure
        envelope = Envelope(sender=sender, recipient=recipient, payload=payload,
                            sent_us=self._now_us, msg_id=next(self._msg_ids))
        extra = sum(policy.extra_delay_us(envelope) for policy in self.policies)
        deliver_at = departure + self.delays.one_way_us(self.network_rng) + extra
        deliver_at = max(deliver_at, self._fifo_us.get((sender, recipient), 0))
        self._fifo_us[(sender, recipient)] = deliver_at
        self.sent[sender] = self.sent.get(sender, 0) + 1
        heapq.heappush(self._queue, (deliver_at, next(self._order),
                                     lambda: self._deliver(envelope), KIND_DELIVER,
                                     sender, recipient, envelope.summary()))
        return deliver_at

    def _deliver(self, envelope: Envelope) -> None:
        self.delivered[envelope.sender] = self.delivered.get(envelope.sender, 0) + 1
        actor = self.actors.get(envelope.recipient)
        if actor is None:
            logger.warning(f"⚠️  No actor named {envelope.recipient}; dropping {envelope.kind}")
            return
        actor.on_message(self, envelope)

    def run_until_quiescent(self, limit_ms: float) -> List[TraceRecord]:
        """Drain events up to ``limit_ms``; returns the full ordered trace."""
        limit_us = int(limit_ms * US_PER_MS)
        while self._queue and self._queue[0][0] <= limit_us:
            at_us, _, callback, kind, source, target, summary = heapq.heappop(self._queue)
            self._now_us = at_us
            self.trace.append(TraceRecord(time_ms=at_us / US_PER_MS, kind=kind, source=source,
                                          target=target, summary=summary))
            callback()
        self.truncated = bool(self._queue)
        if self.truncated:
            logger.warning(f"⚠️  Run limit {limit_ms} ms reached with {len(self._queue)} events pending")
        return list(self.trace)

    def undelivered(self) -> Dict[str, int]:
        return {name: count - self.delivered.get(name, 0)
                for name, count in self.sent.items() if count != self.delivered.get(name, 0)}

    def trace_lines(self) -> List[str]:
        return [json.dumps(record.to_dict(), sort_keys=True) for record in self.trace]

    def trace_digest(self) -> str:
        digest = hashlib.sha256()
        for line in self.trace_lines():
            digest.update(line.encode('utf-8'))
            digest.update(b'\n')
        return digest.hexdigest()

    def export_trace(self, path: Path) -> Path:
        """JSON lines: {time_ms, kind, from, to, summary}."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text('\n'.join(self.trace_lines()) + ('\n' if self.trace else ''), encoding='utf-8')
        logger.info(f"📝 Trace written to {path} ({len(self.trace)} events)")
        return path
