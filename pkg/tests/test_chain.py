import pytest

from brick.errors import ContractError
from brick.ledger.chain import TX_FAILED, TX_OK, TX_PENDING, Chain, Transaction
from brick.netsim import AdversaryPolicy, CensorLedger, Simulator


def _tx(kind='noop', result=None, fail=None):
    def call(tx):
        if fail:
            raise ContractError(fail)
        return result
    return Transaction(kind=kind, sender='A', payload=b'\x01', call=call)


def test_pending_until_a_block_includes_it():
    chain = Chain()
    tx = chain.submit(_tx(result=5))
    assert tx.status == TX_PENDING
    assert chain.depth(tx) == 0
    chain.advance_block()
    assert tx.status == TX_OK
    assert tx.result == 5
    assert tx.included_height == 1


def test_failed_call_is_recorded_not_raised():
    chain = Chain()
    tx = chain.submit(_tx(fail='wrong-phase'))
    chain.advance_block()
    assert tx.status == TX_FAILED
    assert tx.error == 'wrong-phase'
    assert not tx.ok


def test_finality_after_k_blocks():
    chain = Chain(confirm_depth=3)
    tx = chain.submit(_tx())
    chain.advance_block()
    assert not chain.is_final(tx)
    chain.advance_block()
    chain.advance_block()
    assert chain.depth(tx) == 3
    assert chain.is_final(tx)
    assert [block.height for block in chain.final_blocks()] == [0, 1]


def test_inclusion_follows_submission_order():
    chain = Chain()
    first, second = chain.submit(_tx('first')), chain.submit(_tx('second'))
    block = chain.advance_block()
    assert block.transactions == (first, second)


def test_censored_transaction_waits_its_hold():
    censor = CensorLedger(lambda tx: tx.kind == 'dispute', hold_blocks=3)
    chain = Chain(policies=[censor])
    dispute = chain.submit(_tx('dispute'))
    other = chain.submit(_tx('other'))
    chain.advance_block()
    assert other.included_height == 1
    assert dispute.status == TX_PENDING
    for _ in range(3):
        chain.advance_block()
    assert dispute.included_height == 4


class _HoldEverything(AdversaryPolicy):
    def hold_blocks(self, tx):
        return 50


def test_reorder_holds_never_exceed_the_liveness_bound():
    chain = Chain(liveness_bound=3, policies=[_HoldEverything()])
    tx = chain.submit(_tx())
    assert tx.earliest_height == 3
    for _ in range(3):
        chain.advance_block()
    assert tx.included_height == 3


def test_censorship_is_not_clamped():
    censor = CensorLedger(lambda tx: True, hold_blocks=9)
    chain = Chain(liveness_bound=2, policies=[censor])
    assert chain.submit(_tx()).earliest_height == 10


def test_listeners_see_every_block():
    chain = Chain()
    heights = []
    chain.subscribe(lambda block: heights.append(block.height))
    chain.advance_block()
    chain.advance_block()
    assert heights == [1, 2]


@pytest.mark.parametrize('depth', [1, 6])
def test_attached_chain_mines_until_last_tx_is_final(depth):
    sim = Simulator(0)
    chain = Chain(confirm_depth=depth, block_time_ms=1000)
    chain.attach(sim)
    tx = chain.submit(_tx())
    sim.run_until_quiescent(60_000)
    assert chain.height == 1 + depth
    assert chain.is_final(tx)
    assert sim.now() == (1 + depth) * 1000


def test_chain_json_lists_blocks():
    chain = Chain()
    chain.submit(_tx('fund'))
    chain.advance_block()
    record = chain.to_json()
    assert record[0] == {'height': 0, 'time_ms': 0.0, 'txs': []}
    assert record[1]['txs'][0]['kind'] == 'fund'
    assert [tx.kind for tx in chain.transactions('fund')] == ['fund']
