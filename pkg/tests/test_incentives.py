import pytest

from brick.errors import ReconciliationError
from brick.incentives import (
    STRATEGY_BYZANTINE_PROOFS,
    GameParams,
    best_response,
    fraudulent_close_payoff,
    grid_scan,
    hostage_feasible,
    payoff,
    security_cost,
    settlement_audit,
    strategy_two_payoff,
)


@pytest.fixture
def game():
    return GameParams(v=12, f=3, c_a=6)


def test_collateral_is_ceiling_of_v_over_f(game):
    assert game.collateral == 4
    assert GameParams(v=13, f=3, c_a=0).collateral == 5
    assert (game.n, game.t) == (10, 7)


def test_payoff_formula(game):
    assert payoff(game, x=2, b=1) == 6 + 8 - 5
    assert fraudulent_close_payoff(game, m=0, y=0) == 12 - 5
    with pytest.raises(ValueError):
        payoff(game, x=11, b=0)


@pytest.mark.parametrize('c_a', [0, 6, 12])
def test_best_response_is_fresh_close_with_free_proofs(c_a):
    params = GameParams(v=12, f=3, c_a=c_a)
    best = best_response(params)
    assert best.strategy == STRATEGY_BYZANTINE_PROOFS
    assert best.payoff == strategy_two_payoff(params) == c_a + 12
    assert best.b == 0


def test_stale_close_never_beats_its_bound(game):
    bound = game.v - game.collateral - game.epsilon
    assert all(fraudulent_close_payoff(game, m, y) <= bound
               for m in range(game.f + 1) for y in range(game.n + 1))


def test_grid_scan_agrees_with_closed_form():
    frame = grid_scan([12, 30], [3, 5], [1, 2])
    assert len(frame) == 2 * 2 * 2 * 3
    assert (frame['payoff'] == frame['expected']).all()
    assert frame['stale_bound_ok'].all()


def test_grid_scan_reports_the_collateral_rounding():
    frame = grid_scan([12, 13], [3, 5], [1])
    divides = frame['v'] % frame['f'] == 0
    assert (frame['expected_unrounded'] == frame['c_a'] + frame['v']).all()
    assert (frame.loc[divides, 'rounding_gap'] == 0).all()
    assert (frame.loc[~divides, 'rounding_gap'] > 0).all()
    assert (frame['expected'] == frame['expected_unrounded'] + frame['rounding_gap']).all()
    row = frame[(frame['v'] == 13) & (frame['f'] == 5) & (frame['c_a'] == 0)].iloc[0]
    assert (row['expected'], row['expected_unrounded']) == (15, 13)


@pytest.mark.parametrize('n, feasible', [(4, True), (7, True), (10, False), (13, False)])
def test_hostage_feasibility(n, feasible):
    assert hostage_feasible(n) is feasible


def test_security_cost():
    assert security_cost(12, 10, 5, 1) == {
        'collateral_per_warden': 4,
        'total_collateral': 40,
        'update_spend_per_party': 50,
        'update_spend_total': 100,
    }


def test_settlement_audit_balances():
    report = settlement_audit({'A': 41, 'B': 41}, {'A': 50, 'B': 32},
                              fees_signed={'A->W1': 3}, fees_collected={'A->W1': 2}, update_fee=1)
    assert report['balanced']
    assert report['update_fees'] == 2


@pytest.mark.parametrize('entitled, signed, collected', [
    ({'A': 80}, 3, 3),
    ({'A': 82}, 3, 1),
    ({'A': 82}, 2, 3),
])
def test_settlement_audit_mismatch(entitled, signed, collected):
    with pytest.raises(ReconciliationError, match='reconciliation-mismatch'):
        settlement_audit({'A': 41, 'B': 41}, entitled, fees_signed={'A->W1': signed},
                         fees_collected={'A->W1': collected}, update_fee=1)


def test_invalid_game_params():
    with pytest.raises(ValueError):
        GameParams(v=12, f=3, c_a=13)
    with pytest.raises(ValueError):
        GameParams(v=12, f=0, c_a=6)
