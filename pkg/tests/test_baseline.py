import pytest

from brick.baseline import LATE_DISPUTE, TimeoutChannel, run_timeout_channel
from brick.errors import ContractError

HISTORY = [(6, 6), (7, 5), (6, 6), (5, 7), (4, 8)]


@pytest.fixture
def timeout_channel():
    channel = TimeoutChannel(states={1: (6, 6), 2: (7, 5), 3: (5, 7)}, dispute_window=6)
    channel.close_at('A', 2, height=1)
    return channel


def test_dispute_inside_window_settles_newest(timeout_channel):
    assert timeout_channel.dispute('B', 3, height=7) == 3
    assert timeout_channel.payouts == {'A': 5, 'B': 7}
    assert timeout_channel.expire(20) is None


def test_late_dispute_is_refused(timeout_channel):
    with pytest.raises(ContractError, match=LATE_DISPUTE):
        timeout_channel.dispute('B', 3, height=8)


def test_stale_dispute_is_refused(timeout_channel):
    with pytest.raises(ContractError, match='stale-dispute'):
        timeout_channel.dispute('B', 1, height=3)


def test_window_expiry_settles_closed_state(timeout_channel):
    assert timeout_channel.expire(6) is None
    assert timeout_channel.expire(7) == 2
    assert timeout_channel.payouts == {'A': 7, 'B': 5}


def test_only_one_close(timeout_channel):
    with pytest.raises(ContractError, match='already-closing'):
        timeout_channel.close_at('B', 3, height=2)


def test_prompt_dispute_keeps_funds_safe():
    report = run_timeout_channel(0, HISTORY)
    assert report['safety_ok']
    assert report['closing_seq'] == 5
    assert report['payouts'] == {'A': 4, 'B': 8}
    assert report['victim_loss'] == 0


@pytest.mark.parametrize('watchtower', [False, True])
def test_censoring_past_the_window_steals_funds(watchtower):
    report = run_timeout_channel(0, HISTORY, dispute_window=6, censor_blocks=7, watchtower=watchtower)
    assert not report['safety_ok']
    assert report['closing_seq'] == 2
    assert report['victim_loss'] == 3
    assert LATE_DISPUTE in report['dispute_errors']


def test_short_censorship_is_survivable():
    report = run_timeout_channel(0, HISTORY, dispute_window=6, censor_blocks=3)
    assert report['safety_ok']
    assert report['dispute_errors'] == []
