import pytest

from brick.channel import derive_channel_id
from brick.errors import ConfigError, WardenRejection
from brick.warden import (
    ACK_WITHOUT_STORE,
    BRIBED_OLD_CLAIM,
    CRASH,
    HONEST,
    SIGN_AFTER_CLOSE,
    BribeOffer,
    Warden,
    issue_fee_ticket,
    parse_strategy,
)


@pytest.fixture
def channel(keys):
    return derive_channel_id(keys['A'].public, keys['B'].public, 0)


@pytest.fixture
def anns(channel, signed_states):
    records = signed_states(channel, [(6, 6), (5, 7), (4, 8), (3, 9)])
    return [record.announcement for record in records]


@pytest.fixture
def make_warden(channel, keys):
    def build(tag=HONEST):
        warden = Warden(name='W1', keys=keys['W1'], strategy=parse_strategy(tag))
        warden.bind(channel, keys['A'].public, keys['B'].public, {})
        return warden
    return build


def _ticket(channel, warden, payer, cumulative):
    return issue_fee_ticket(channel, warden.public, payer, cumulative)


def test_acks_in_order_and_collects_fees(make_warden, anns, channel, keys):
    warden = make_warden()
    first = warden.on_announcement(anns[0])
    assert first.verify() and first.seq == 1
    ack = warden.on_announcement(anns[1], _ticket(channel, warden, keys['A'], 1), keys['A'].public)
    assert ack.seq == 2
    assert warden.stored_seq == 2
    assert warden.fee_income() == 1


def test_gap_is_rejected(make_warden, anns):
    warden = make_warden()
    warden.on_announcement(anns[0])
    with pytest.raises(WardenRejection, match='stale-or-gap-seq') as info:
        warden.on_announcement(anns[2])
    assert info.value.stored_seq == 1


def test_unpaid_update_is_rejected(make_warden, anns, channel, keys):
    warden = make_warden()
    warden.on_announcement(anns[0])
    with pytest.raises(WardenRejection, match='insufficient-fee'):
        warden.on_announcement(anns[1], None, keys['A'].public)
    with pytest.raises(WardenRejection, match='insufficient-fee'):
        warden.on_announcement(anns[1], _ticket(channel, warden, keys['A'], 3), keys['A'].public)
    assert warden.stored_seq == 1


def test_relayed_repeat_is_acked_without_a_second_fee(make_warden, anns, channel, keys):
    warden = make_warden()
    warden.on_announcement(anns[0])
    ticket = _ticket(channel, warden, keys['A'], 1)
    warden.on_announcement(anns[1], ticket, keys['A'].public)
    again = warden.on_announcement(anns[1], ticket, keys['A'].public)
    assert again.seq == 2
    assert warden.fee_income() == 1


def test_close_stops_acks(make_warden, anns, channel, keys):
    warden = make_warden()
    warden.on_announcement(anns[0])
    claim = warden.on_close_request()
    assert claim.seq == 1
    assert warden.on_close_request() is None
    with pytest.raises(WardenRejection, match='ignored-after-close'):
        warden.on_announcement(anns[1], _ticket(channel, warden, keys['A'], 1), keys['A'].public)


def test_close_with_nothing_stored(make_warden):
    with pytest.raises(WardenRejection, match='nothing-stored'):
        make_warden().on_close_request()


def test_sign_after_close_keeps_acking(make_warden, anns, channel, keys):
    warden = make_warden(SIGN_AFTER_CLOSE)
    warden.on_announcement(anns[0])
    claim = warden.on_close_request()
    ack = warden.on_announcement(anns[1], _ticket(channel, warden, keys['A'], 1), keys['A'].public)
    assert ack.seq > claim.seq


def test_ack_without_store_claims_its_first_state(make_warden, anns, channel, keys):
    warden = make_warden(ACK_WITHOUT_STORE)
    warden.on_announcement(anns[0])
    warden.on_announcement(anns[1], _ticket(channel, warden, keys['A'], 1), keys['A'].public)
    warden.on_announcement(anns[3], _ticket(channel, warden, keys['A'], 2), keys['A'].public)
    claim = warden.on_close_request()
    assert claim.seq == 1
    assert max(ack.seq for ack in warden.emitted_acks) == 4


def test_forged_announcement_is_rejected(make_warden, anns, signed_states, keys):
    other = derive_channel_id(keys['A'].public, keys['B'].public, 9)
    foreign = signed_states(other, [(6, 6)])[0].announcement
    with pytest.raises(WardenRejection, match='bad-signatures'):
        make_warden().on_announcement(foreign)


@pytest.mark.parametrize('tag, offer, accepted', [
    ('bribed-old-claim', 4, False),
    ('bribed-old-claim', 5, True),
    ('bribed-old-claim:9', 5, False),
    ('bribed-old-claim:byz', 0, True),
])
def test_decide_bribe(make_warden, tag, offer, accepted):
    assert make_warden(tag).decide_bribe(offer, collateral=4) is accepted


def test_bribed_warden_claims_the_paid_announcement(make_warden, anns, channel, keys):
    warden = make_warden('bribed-old-claim:byz')
    warden.on_announcement(anns[0])
    warden.on_announcement(anns[1], _ticket(channel, warden, keys['A'], 1), keys['A'].public)
    offer = BribeOffer(channel=channel, briber=keys['A'].public, amount=5, announcement=anns[0])
    assert warden.on_bribe(offer, collateral=4)
    assert warden.on_close_request().seq == 1
    assert warden.bribes_received == 5


def test_honest_warden_refuses_bribes(make_warden, anns, channel, keys):
    warden = make_warden()
    offer = BribeOffer(channel=channel, briber=keys['A'].public, amount=100, announcement=anns[0])
    assert not warden.on_bribe(offer, collateral=4)


def test_parse_strategy():
    assert parse_strategy('crash:3').crash_after == 3
    assert parse_strategy('crash:3').kind == CRASH
    assert parse_strategy('bribed-old-claim:byz').tag == 'bribed-old-claim:byz'
    assert parse_strategy('Bribed-Old-Claim').kind == BRIBED_OLD_CLAIM
    assert not parse_strategy('honest').deviant
    for bad in ('crash', 'crash:x', 'lazy', 'unresponsive:2'):
        with pytest.raises(ConfigError, match='config-invalid'):
            parse_strategy(bad)
