import json
from dataclasses import dataclass, field
from typing import List

from brick.netsim import (
    CensorLedger,
    HonestDelays,
    Reorder,
    Simulator,
    TargetedDelay,
    spawn_generators,
)


@dataclass
class Recorder:
    name: str
    received: List = field(default_factory=list)

    def on_message(self, sim, envelope):
        self.received.append((sim.now_ms(), envelope.payload))


def _pair(sim):
    a, b = Recorder('a'), Recorder('b')
    sim.register(a)
    sim.register(b)
    return a, b


def test_empty_schedule_gives_empty_trace():
    sim = Simulator(1)
    assert sim.run_until_quiescent(1000) == []
    assert sim.now() == 0


def test_one_way_delay_is_half_the_rtt():
    sim = Simulator(1, delays=HonestDelays(rtt_ms=100), stagger_us=0)
    _, b = _pair(sim)
    sim.send('a', 'b', 'hello')
    sim.run_until_quiescent(1000)
    assert b.received == [(50.0, 'hello')]
    assert sim.now() == 50


def test_sequential_sends_are_staggered():
    sim = Simulator(1, delays=HonestDelays(rtt_ms=100), stagger_us=2000)
    recipients = [Recorder(f"w{index}") for index in range(5)]
    for recipient in recipients:
        sim.register(recipient)
        sim.send('a', recipient.name, 'ann')
    sim.run_until_quiescent(1000)
    times = [recipient.received[0][0] for recipient in recipients]
    assert times == [52.0, 54.0, 56.0, 58.0, 60.0]


def test_pairwise_fifo_survives_reordering():
    sim = Simulator(3, policies=[Reorder(3, max_hold_ms=250)])
    _, b = _pair(sim)
    for index in range(20):
        sim.send('a', 'b', index)
    sim.run_until_quiescent(10_000)
    assert [payload for _, payload in b.received] == list(range(20))


def test_targeted_delay_holds_but_delivers():
    hold = TargetedDelay(lambda envelope: envelope.payload == 'dispute', hold_ms=600_000)
    sim = Simulator(1, stagger_us=0, policies=[hold])
    _, b = _pair(sim)
    sim.send('a', 'b', 'dispute')
    sim.run_until_quiescent(700_000)
    assert b.received == [(600_050.0, 'dispute')]
    assert sim.undelivered() == {}


def test_censor_policy_only_holds_transactions():
    censor = CensorLedger(lambda tx: tx == 'target', hold_blocks=4)
    assert censor.hold_blocks('target') == 4
    assert censor.hold_blocks('other') == 0
    assert censor.extra_delay_us(None) == 0


def test_same_seed_same_trace():
    def trace(seed):
        sim = Simulator(seed, delays=HonestDelays(rtt_ms=100, jitter_ms=20), policies=[Reorder(seed, 100)])
        _pair(sim)
        for index in range(30):
            sim.send('a' if index % 2 else 'b', 'b' if index % 2 else 'a', index)
        sim.run_until_quiescent(10_000)
        return sim.trace_digest()

    assert trace(11) == trace(11)
    assert trace(11) != trace(12)


def test_timers_fire_in_insertion_order_on_ties():
    sim = Simulator(1)
    fired = []
    sim.schedule(1000, lambda: fired.append('first'))
    sim.schedule(1000, lambda: fired.append('second'))
    sim.run_until_quiescent(10)
    assert fired == ['first', 'second']


def test_limit_truncates_run():
    sim = Simulator(1)
    fired = []
    sim.schedule(5_000_000, lambda: fired.append('late'))
    sim.run_until_quiescent(1000)
    assert fired == []
    assert sim.truncated


def test_export_trace_writes_json_lines(tmp_path):
    sim = Simulator(1)
    _pair(sim)
    sim.send('a', 'b', 'x')
    sim.send('b', 'a', 'y')
    sim.run_until_quiescent(1000)
    path = sim.export_trace(tmp_path / 'trace.jsonl')
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    record = json.loads(lines[0])
    assert set(record) == {'time_ms', 'kind', 'from', 'to', 'summary'}
    assert record['kind'] == 'deliver'


def test_spawned_streams_are_reproducible():
    first = [gen.integers(0, 1000) for gen in spawn_generators(5, 3)]
    again = [gen.integers(0, 1000) for gen in spawn_generators(5, 3)]
    assert first == again
    assert spawn_generators(6, 1)[0].integers(0, 2**32) != spawn_generators(5, 1)[0].integers(0, 2**32)
