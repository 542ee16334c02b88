import numpy as np
import pytest

from brick.channel import (
    ROLE_A,
    ROLE_B,
    WardenAck,
    ack_plaintext,
    derive_channel_id,
    initial_state,
    make_announcement,
    make_commitment,
    next_state,
    sign_commitment,
    validate_announcement,
)
from brick.errors import ChannelError


@pytest.fixture
def channel(keys):
    return derive_channel_id(keys['A'].public, keys['B'].public, 0)


def test_channel_id_depends_on_nonce(keys, channel):
    assert derive_channel_id(keys['A'].public, keys['B'].public, 1) != channel


def test_same_balances_still_give_a_fresh_commitment(channel, rng):
    first = initial_state(6, 6, rng)
    second = next_state(first, 6, 6, rng)
    assert second.seq == 2
    assert first.digest(channel) != second.digest(channel)


def test_commitment_must_conserve_total(channel, rng, keys):
    state = initial_state(7, 6, rng)
    with pytest.raises(ChannelError, match='conservation-violation'):
        make_commitment(channel, state, total=12, previous_seq=0, key_a=keys['A'])


def test_commitment_rejects_negative_balance(channel, rng):
    state = initial_state(-1, 13, rng)
    with pytest.raises(ChannelError, match='conservation-violation'):
        make_commitment(channel, state, total=12, previous_seq=0)


def test_sequence_must_advance_by_one(channel, rng):
    state = next_state(initial_state(6, 6, rng), 5, 7, rng)
    with pytest.raises(ChannelError, match='non-monotone-seq'):
        make_commitment(channel, state, total=12, previous_seq=2)


def test_announcement_needs_both_commitment_signatures(channel, rng, keys):
    state = initial_state(6, 6, rng)
    half = make_commitment(channel, state, total=12, previous_seq=0, key_a=keys['A'])
    with pytest.raises(ChannelError, match='missing-counterparty-signature'):
        make_announcement(half, party_a=keys['A'].public, party_b=keys['B'].public,
                          key_a=keys['A'], key_b=keys['B'])
    full = sign_commitment(half, ROLE_B, keys['B'])
    assert full.is_fully_signed(keys['A'].public, keys['B'].public)
    assert full.matches(state)


def test_validate_announcement(channel, signed_states, keys):
    records = signed_states(channel, [(6, 6), (5, 7)])
    announcement = records[1].announcement
    assert validate_announcement(announcement, 2, keys['A'].public, keys['B'].public)
    assert not validate_announcement(announcement, 3, keys['A'].public, keys['B'].public)
    # swapped party keys must not verify
    assert not validate_announcement(announcement, 2, keys['B'].public, keys['A'].public)


def test_commitment_hides_balances(channel, signed_states):
    records = signed_states(channel, [(6, 6)])
    commitment = records[0].commitment
    assert commitment.commitment != records[0].state.encode(channel)
    assert len(commitment.commitment) == 32


def test_warden_ack_verifies_under_warden_key(channel, keys):
    member = keys['W1']
    ack = WardenAck(channel=channel, seq=4, warden=member.public, sig=member.sign(ack_plaintext(channel, 4)))
    assert ack.verify()
    forged = WardenAck(channel=channel, seq=5, warden=member.public, sig=ack.sig)
    assert not forged.verify()


def test_balance_of(rng):
    state = initial_state(4, 8, np.random.default_rng(0))
    assert state.balance_of(ROLE_A) == 4
    assert state.balance_of(ROLE_B) == 8
    assert state.total == 12
