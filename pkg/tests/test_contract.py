from dataclasses import replace

import pytest

from conftest import N_WARDENS, claim_for, fund_and_open
from brick.channel import WardenAck, ack_plaintext
from brick.errors import ContractError
from brick.ledger.chain import Chain
from brick.ledger.contract import (
    BRANCH_COMMITTEE,
    BRANCH_FRAUD_MAJORITY,
    CLOSED_OPTIMISTIC,
    MODE_BRICK_PLUS,
    Phase,
    ProofOfFraud,
    deploy,
)

DEPOSITS = 41 + 41 + N_WARDENS * 4


def _ack(member, channel, seq, head=None):
    return WardenAck(channel=channel, seq=seq, warden=member.public,
                     sig=member.sign(ack_plaintext(channel, seq, head)), head=head)


def _close_at(contract, keys, record):
    return contract.pessimistic_close(keys['A'].public, record.state,
                                      commit_sig_a=record.commitment.sig_a,
                                      commit_sig_b=record.commitment.sig_b)


@pytest.fixture
def history(open_contract, signed_states):
    return signed_states(open_contract.channel, [(6, 6), (7, 5)])


def test_funding_sets_collateral_and_order(deployed, keys):
    with pytest.raises(ContractError, match='out-of-order-funding'):
        deployed.fund_party(keys['B'].public, 6)
    with pytest.raises(ContractError, match='wrong-funding-amount'):
        deployed.fund_party(keys['A'].public, 5)
    assert deployed.fund_party(keys['A'].public, 6) == Phase.PARTY_A_FUNDED
    assert deployed.fund_party(keys['B'].public, 6) == Phase.BOTH_PARTIES_FUNDED
    assert deployed.total_funds == 12
    assert deployed.collateral_per_warden == 4
    assert deployed.deposits[keys['A'].public] == 41


def test_open_needs_every_warden(deployed, keys, warden_keys):
    deployed.fund_party(keys['A'].public, 6)
    deployed.fund_party(keys['B'].public, 6)
    for member in warden_keys[:-1]:
        deployed.fund_warden(member.public, 4)
    with pytest.raises(ContractError, match='not-fully-funded'):
        deployed.open(keys['A'].public)
    with pytest.raises(ContractError, match='unknown-warden'):
        deployed.fund_warden(keys['auditor'].public, 4)
    deployed.fund_warden(warden_keys[-1].public, 4)
    assert deployed.open(keys['B'].public) == Phase.OPEN
    with pytest.raises(ContractError, match='wrong-phase'):
        deployed.open(keys['A'].public)


def test_withdraw_before_open_cancels(deployed, keys):
    deployed.fund_party(keys['A'].public, 6)
    assert deployed.withdraw_before_open(keys['A'].public) == 41
    assert deployed.phase == Phase.CANCELLED
    with pytest.raises(ContractError, match='already-withdrawn'):
        deployed.withdraw_before_open(keys['A'].public)
    with pytest.raises(ContractError, match='wrong-phase'):
        deployed.fund_party(keys['B'].public, 6)


def test_optimistic_close_pays_everyone(open_contract, keys, warden_keys):
    open_contract.optimistic_close_request(keys['A'].public, 7)
    with pytest.raises(ContractError, match='wrong-caller'):
        open_contract.optimistic_close_agree(keys['A'].public)
    open_contract.optimistic_close_agree(keys['B'].public)
    assert open_contract.closed_via == CLOSED_OPTIMISTIC
    assert open_contract.payouts[keys['A'].public] == 42
    assert open_contract.payouts[keys['B'].public] == 40
    assert all(open_contract.payouts[member.public] == 4 for member in warden_keys)
    assert sum(open_contract.payouts.values()) == DEPOSITS


def test_over_claim_is_rejected(open_contract, keys):
    with pytest.raises(ContractError, match='over-claim'):
        open_contract.optimistic_close_request(keys['A'].public, 13)
    assert open_contract.phase == Phase.OPEN


def test_claim_disables_optimistic_close(open_contract, history, keys, warden_keys):
    open_contract.optimistic_close_request(keys['A'].public, 7)
    open_contract.record_closing_claim(claim_for(warden_keys[0], history[1].announcement))
    assert open_contract.phase == Phase.PESSIMISTIC_PENDING
    with pytest.raises(ContractError, match='wrong-phase'):
        open_contract.optimistic_close_agree(keys['B'].public)


def test_claim_errors(open_contract, history, keys, warden_keys):
    announcement = history[1].announcement
    open_contract.record_closing_claim(claim_for(warden_keys[0], announcement))
    with pytest.raises(ContractError, match='duplicate-claim'):
        open_contract.record_closing_claim(claim_for(warden_keys[0], announcement))
    with pytest.raises(ContractError, match='unknown-warden'):
        open_contract.record_closing_claim(claim_for(keys['auditor'], announcement))
    forged = claim_for(warden_keys[1], announcement)
    forged = replace(forged, seq=3)
    with pytest.raises(ContractError, match='bad-signature'):
        open_contract.record_closing_claim(forged)
    assert len(open_contract.claims) == 1


def test_committee_close_at_highest_claim(open_contract, history, keys, warden_keys):
    for member in warden_keys[:7]:
        open_contract.record_closing_claim(claim_for(member, history[1].announcement))
    outcome = _close_at(open_contract, keys, history[1])
    assert outcome.branch == BRANCH_COMMITTEE
    assert outcome.closing_seq == 2
    assert outcome.fee_winners == tuple(member.public for member in warden_keys[:7])
    assert open_contract.payouts[keys['A'].public] == 7
    assert open_contract.payouts[keys['B'].public] == 5
    assert open_contract.redeem_warden(warden_keys[0].public) == 14
    assert open_contract.redeem_warden(warden_keys[9].public) == 4
    with pytest.raises(ContractError, match='already-redeemed'):
        open_contract.redeem_warden(warden_keys[0].public)
    assert sum(open_contract.entitlements().values()) == DEPOSITS


def test_stale_claims_lose_to_fresh_ones(open_contract, history, keys, warden_keys):
    for member in warden_keys[:3]:
        open_contract.record_closing_claim(claim_for(member, history[0].announcement))
    for member in warden_keys[3:10]:
        open_contract.record_closing_claim(claim_for(member, history[1].announcement))
    with pytest.raises(ContractError, match='wrong-state'):
        _close_at(open_contract, keys, history[0])
    outcome = _close_at(open_contract, keys, history[1])
    assert outcome.closing_seq == 2
    assert outcome.fee_winners == tuple(member.public for member in warden_keys[:7])


def test_too_few_claims(open_contract, history, keys, warden_keys):
    for member in warden_keys[:6]:
        open_contract.record_closing_claim(claim_for(member, history[1].announcement))
    with pytest.raises(ContractError, match='insufficient-claims'):
        _close_at(open_contract, keys, history[1])
    assert open_contract.phase == Phase.PESSIMISTIC_PENDING
    assert not open_contract.payouts


def test_commit_signatures_are_checked(open_contract, history, keys, warden_keys):
    for member in warden_keys[:7]:
        open_contract.record_closing_claim(claim_for(member, history[1].announcement))
    with pytest.raises(ContractError, match='bad-commit-signature'):
        open_contract.pessimistic_close(keys['A'].public, history[1].state,
                                        commit_sig_a=history[0].commitment.sig_a,
                                        commit_sig_b=history[1].commitment.sig_b)


def test_single_proof_slashes_to_submitter(open_contract, history, keys, warden_keys):
    channel = open_contract.channel
    cheater = warden_keys[0]
    stale_claim = open_contract.record_closing_claim(claim_for(cheater, history[0].announcement))
    for member in warden_keys[1:8]:
        open_contract.record_closing_claim(claim_for(member, history[1].announcement))
    proof = ProofOfFraud(warden=cheater.public, ack=_ack(cheater, channel, 2), claim=stale_claim)
    outcome = open_contract.pessimistic_close(keys['A'].public, history[1].state,
                                              commit_sig_a=history[1].commitment.sig_a,
                                              commit_sig_b=history[1].commitment.sig_b,
                                              proofs=[proof])
    assert outcome.slashed == (cheater.public,)
    assert outcome.closing_seq == 2
    assert open_contract.payouts[keys['A'].public] == 7 + 4
    with pytest.raises(ContractError, match='slashed-warden'):
        open_contract.redeem_warden(cheater.public)
    for member in warden_keys[1:]:
        open_contract.redeem_warden(member.public)
    assert sum(open_contract.payouts.values()) == DEPOSITS


def test_fraud_majority_awards_counterparty(open_contract, history, keys, warden_keys):
    channel = open_contract.channel
    proofs = []
    for member in warden_keys[:4]:
        claim = open_contract.record_closing_claim(claim_for(member, history[0].announcement))
        proofs.append(ProofOfFraud(warden=member.public, ack=_ack(member, channel, 2), claim=claim))
    outcome = open_contract.pessimistic_close(keys['B'].public, None, proofs=proofs)
    assert outcome.branch == BRANCH_FRAUD_MAJORITY
    assert open_contract.payouts[keys['B'].public] == 16
    assert open_contract.payouts[keys['A'].public] == 82
    assert sum(open_contract.entitlements().values()) == DEPOSITS


def test_non_contradictory_proof_is_ignored(open_contract, history, keys, warden_keys):
    channel = open_contract.channel
    member = warden_keys[0]
    claim = open_contract.record_closing_claim(claim_for(member, history[1].announcement))
    for other in warden_keys[1:7]:
        open_contract.record_closing_claim(claim_for(other, history[1].announcement))
    proof = ProofOfFraud(warden=member.public, ack=_ack(member, channel, 2), claim=claim)
    outcome = open_contract.pessimistic_close(keys['A'].public, history[1].state,
                                              commit_sig_a=history[1].commitment.sig_a,
                                              commit_sig_b=history[1].commitment.sig_b,
                                              proofs=[proof])
    assert outcome.slashed == ()
    assert outcome.rejected_proofs == ((member.public, 'not-contradictory'),)


@pytest.mark.parametrize('size', [4, 7, 9])
def test_committee_size_must_be_3f_plus_1_above_7(chain, make_params, warden_keys, size):
    committee = warden_keys[:size]
    with pytest.raises(ContractError, match='bad-committee-size'):
        deploy(chain, make_params(wardens=committee, threshold=2 * ((size - 1) // 3) + 1))


def test_threshold_must_be_2f_plus_1(chain, make_params):
    with pytest.raises(ContractError, match='bad-threshold'):
        deploy(chain, make_params(threshold=6))


@pytest.fixture
def plus_contract(make_params, keys, warden_keys):
    chain = Chain()
    params = make_params(mode=MODE_BRICK_PLUS, auditors=(keys['auditor'].public,))
    return fund_and_open(chain.contract(deploy(chain, params)), keys, warden_keys)


def test_audit_needs_brick_plus(open_contract, keys):
    with pytest.raises(ContractError, match='wrong-mode'):
        open_contract.request_audit(keys['auditor'].public)


def test_only_registered_auditors_are_valid(plus_contract, keys):
    assert not plus_contract.request_audit(keys['A'].public).valid
    assert plus_contract.valid_access_request() is None
    assert plus_contract.request_audit(keys['auditor'].public).valid
    assert plus_contract.valid_access_request().auditor == keys['auditor'].public


def test_brick_plus_has_no_optimistic_close(plus_contract, keys):
    with pytest.raises(ContractError, match='wrong-mode'):
        plus_contract.optimistic_close_request(keys['A'].public, 6)


def test_brick_plus_close_follows_the_hash_chain(plus_contract, signed_states, keys, warden_keys):
    records = signed_states(plus_contract.channel, [(6, 6), (7, 5)], chained=True)
    plain = signed_states(plus_contract.channel, [(6, 6)])
    with pytest.raises(ContractError, match='wrong-mode'):
        plus_contract.record_closing_claim(claim_for(warden_keys[0], plain[0].announcement))
    for member in warden_keys[:7]:
        plus_contract.record_closing_claim(claim_for(member, records[1].announcement))
    with pytest.raises(ContractError, match='wrong-state'):
        plus_contract.pessimistic_close(keys['B'].public, records[1].state,
                                        prev_head=records[1].announcement.head)
    outcome = plus_contract.pessimistic_close(keys['B'].public, records[1].state,
                                              prev_head=records[0].announcement.head)
    assert outcome.closing_seq == 2
    assert plus_contract.payouts[keys['A'].public] == 7
