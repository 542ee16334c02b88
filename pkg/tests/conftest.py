from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pytest

from brick.brick_plus import GENESIS_HEAD, link_head
from brick.channel import (
    Announcement,
    ChannelId,
    ChannelState,
    StateCommitment,
    close_plaintext,
    initial_state,
    make_announcement,
    make_commitment,
    next_state,
)
from brick.ledger.chain import Chain
from brick.ledger.contract import MODE_BRICK, BrickContract, ChannelParams, ClosingClaim, deploy, warden_hashes
from brick.primitives import KeyPair, derive_seed, keygen

N_WARDENS = 10
THRESHOLD = 7
CLOSING_FEE = 70
SPLIT = (6, 6)


class SignedState(NamedTuple):
    state: ChannelState
    commitment: StateCommitment
    announcement: Announcement


@pytest.fixture
def keys():
    names = ['A', 'B'] + [f"W{index}" for index in range(1, N_WARDENS + 1)] + ['auditor']
    return {name: keygen(derive_seed(0, index)) for index, name in enumerate(names)}


@pytest.fixture
def warden_keys(keys) -> List[KeyPair]:
    return [keys[f"W{index}"] for index in range(1, N_WARDENS + 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def make_params(keys, warden_keys):
    def build(mode: str = MODE_BRICK, wardens: Optional[Sequence[KeyPair]] = None,
              threshold: int = THRESHOLD, auditors: Tuple = ()) -> ChannelParams:
        committee = warden_keys if wardens is None else wardens
        return ChannelParams(party_a=keys['A'].public, party_b=keys['B'].public,
                             warden_hashes=warden_hashes([member.public for member in committee]),
                             threshold=threshold, closing_fee=CLOSING_FEE,
                             initial_balance_a=SPLIT[0], initial_balance_b=SPLIT[1],
                             mode=mode, auditors=auditors)
    return build


@pytest.fixture
def params(make_params):
    return make_params()


@pytest.fixture
def chain():
    return Chain()


@pytest.fixture
def deployed(chain, params) -> BrickContract:
    return chain.contract(deploy(chain, params))


def fund_and_open(contract: BrickContract, keys, warden_keys) -> BrickContract:
    contract.fund_party(keys['A'].public, SPLIT[0])
    contract.fund_party(keys['B'].public, SPLIT[1])
    for member in warden_keys:
        contract.fund_warden(member.public, contract.collateral_per_warden)
    contract.open(keys['A'].public)
    return contract


@pytest.fixture
def open_contract(deployed, keys, warden_keys) -> BrickContract:
    return fund_and_open(deployed, keys, warden_keys)


@pytest.fixture
def signed_states(keys, rng):
    """Both-signed states for ``channel``, one per (balance_a, balance_b); Brick+ heads when chained."""
    def build(channel: ChannelId, balances: Sequence[Tuple[int, int]], chained: bool = False) -> List[SignedState]:
        records = []
        state = None
        head = GENESIS_HEAD
        for balance_a, balance_b in balances:
            if state is None:
                state = initial_state(balance_a, balance_b, rng)
            else:
                state = next_state(state, balance_a, balance_b, rng)
            commitment = make_commitment(channel, state, total=balance_a + balance_b,
                                         previous_seq=state.seq - 1, key_a=keys['A'], key_b=keys['B'])
            ann_head = None
            if chained:
                head = link_head(head, state.digest(channel), state.seq)
                ann_head = head
            announcement = make_announcement(commitment, party_a=keys['A'].public, party_b=keys['B'].public,
                                             key_a=keys['A'], key_b=keys['B'], head=ann_head)
            records.append(SignedState(state, commitment, announcement))
        return records
    return build


def claim_for(member: KeyPair, announcement: Announcement) -> ClosingClaim:
    return ClosingClaim(channel=announcement.channel, warden=member.public, seq=announcement.seq,
                        warden_sig=member.sign(close_plaintext(announcement.channel, announcement.seq,
                                                               announcement.head)),
                        party_sig_a=announcement.sig_a, party_sig_b=announcement.sig_b,
                        head=announcement.head)
