"""
Payoff model for rational parties and wardens.

The closed forms price the ways a party can try to profit from closing;
``best_response`` checks them independently by walking every discrete
combination of colluding Byzantine wardens, bribed rational wardens and
closing target under the contract's own payout rules.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional

import pandas as pd

from brick.errors import ReconciliationError
from brick.ledger.contract import byzantine_bound, collateral_for

logger = logging.getLogger(__name__)

STRATEGY_HONEST_CLOSE = 1
STRATEGY_BYZANTINE_PROOFS = 2
STRATEGY_FRAUD_MAJORITY = 3
STRATEGY_STALE_CLOSE = 4


@dataclass(frozen=True)
class GameParams:
    v: int
    f: int
    c_a: int
    epsilon: int = 1

    def __post_init__(self):
        if min(self.v, self.f, self.c_a, self.epsilon) < 0 or self.c_a > self.v:
            raise ValueError(f"❌ Invalid game parameters: {self}")
        if self.f < 1:
            raise ValueError("❌ f must be at least 1")

    @property
    def n(self) -> int:
        return 3 * self.f + 1

    @property
    def t(self) -> int:
        return 2 * self.f + 1

    @property
    def collateral(self) -> int:
        return collateral_for(self.v, self.f)


@dataclass(frozen=True)
class StrategyOutcome:
    strategy: int
    x: int
    b: int
    y: int
    m: int
    payoff: int


def payoff(params: GameParams, x: int, b: int) -> int:
    """p_A = c_A + x·coll − b·(coll + ε)."""
    if not 0 <= x <= params.n or b < 0:
        raise ValueError(f"❌ Out of range: x={x}, b={b}")
    return params.c_a + x * params.collateral - b * (params.collateral + params.epsilon)


def fraudulent_close_payoff(params: GameParams, m: int, y: int) -> int:
    """v + (m+y)·coll − (y+m+1)·(coll + ε)."""
    if not 0 <= m <= params.f or y < 0:
        raise ValueError(f"❌ Out of range: m={m}, y={y}")
    return params.v + (m + y) * params.collateral - (y + m + 1) * (params.collateral + params.epsilon)


def strategy_two_payoff(params: GameParams) -> int:
    """Fresh close plus f free proofs from colluding Byzantine wardens."""
    return params.c_a + params.f * params.collateral


def _evaluate(params: GameParams, m: int, y: int, s: int, stale: bool) -> Optional[StrategyOutcome]:
    """
    Payout to A under the contract rules for one combination.

    m Byzantine wardens hand over proofs for free, y rational wardens are
    bribed into proofs, s more rational wardens are bribed to claim the stale
    state. A stale close needs f+1 stale claimants among the non-excluded.
    """
    coll = params.collateral
    rational = params.n - params.f
    if y + s > rational:
        return None
    x = m + y
    bribes = (y + s) * (coll + params.epsilon)
    if x >= params.f + 1:
        # counterparty takes the channel; A keeps only slashed collateral
        return StrategyOutcome(STRATEGY_FRAUD_MAJORITY, x=x, b=y + s, y=y, m=m, payoff=x * coll - bribes)
    stale_claimants = (params.f - m) + s
    if stale:
        if stale_claimants < params.f + 1:
            return None
        return StrategyOutcome(STRATEGY_STALE_CLOSE, x=x, b=y + s, y=y, m=m,
                               payoff=params.v + x * coll - bribes)
    if s:
        return None
    strategy = STRATEGY_HONEST_CLOSE if x == 0 else STRATEGY_BYZANTINE_PROOFS
    return StrategyOutcome(strategy, x=x, b=y, y=y, m=m, payoff=params.c_a + x * coll - bribes)


def enumerate_outcomes(params: GameParams) -> Iterable[StrategyOutcome]:
    rational = params.n - params.f
    for m in range(params.f + 1):
        for y in range(rational + 1):
            for s in range(rational - y + 1):
                for stale in (False, True):
                    outcome = _evaluate(params, m, y, s, stale)
                    if outcome is not None:
                        yield outcome


def best_response(params: GameParams) -> StrategyOutcome:
    """Highest payoff over the whole strategy space; ties go to the lower strategy index."""
    return max(enumerate_outcomes(params), key=lambda outcome: (outcome.payoff, -outcome.strategy))


def hostage_feasible(n: int) -> bool:
    """
    True when the richest party's stake v/2 is not strictly above the
    per-warden collateral v/f, i.e. colluders can credibly hold it hostage.
    """
    f = byzantine_bound(n)
    if f < 1:
        return True
    return not Fraction(1, 2) > Fraction(1, f)


def grid_scan(v_values: Iterable[int], f_values: Iterable[int],
              eps_values: Iterable[int] = (1, 2)) -> pd.DataFrame:
    """
    Brute-force best response over a parameter grid, c_A in {0, v/2, v}.

    ``expected`` is c_A + f·ceil(v/f), what the contract pays with integer
    collateral; ``expected_unrounded`` is c_A + v and ``rounding_gap`` the
    difference, zero exactly when f divides v.
    """
    rows = []
    for v in v_values:
        for f in f_values:
            for epsilon in eps_values:
                for c_a in (0, v // 2, v):
                    params = GameParams(v=v, f=f, c_a=c_a, epsilon=epsilon)
                    best = best_response(params)
                    bound = params.v - params.collateral - params.epsilon
                    worst_stale = max(fraudulent_close_payoff(params, m, y)
                                      for m in range(f + 1) for y in range(params.n + 1))
                    rows.append({
                        'v': v, 'f': f, 'c_a': c_a, 'epsilon': epsilon,
                        'collateral': params.collateral,
                        'best_strategy': best.strategy,
                        'payoff': best.payoff,
                        'expected': strategy_two_payoff(params),
                        'expected_unrounded': c_a + v,
                        'rounding_gap': strategy_two_payoff(params) - (c_a + v),
                        'stale_bound_ok': worst_stale <= bound,
                    })
    frame = pd.DataFrame(rows)
    logger.info(f"📊 Scanned {len(frame)} incentive grid points")
    return frame


def security_cost(v: int, n: int, updates: int, r: int) -> Dict[str, int]:
    """Collateral and update spend for a channel of value v with n wardens."""
    f = byzantine_bound(n)
    collateral = collateral_for(v, f)
    return {
        'collateral_per_warden': collateral,
        'total_collateral': n * collateral,
        'update_spend_per_party': updates * r * n,
        'update_spend_total': 2 * updates * r * n,
    }


def settlement_audit(deposits: Mapping[str, int], entitlements: Mapping[str, int],
                     fees_signed: Mapping[str, int], fees_collected: Mapping[str, int],
                     update_fee: int, closing_fee_income: Optional[Mapping[str, int]] = None
                     ) -> Dict[str, object]:
    """
    Reconcile one terminal run.

    On-chain: every deposit is paid out or still claimable. Off-chain, per
    fee channel (keyed ``payer->warden``): a warden never holds more than the
    payer signed over, and at most one ticket of r is left unprocessed.
    Raises ReconciliationError('reconciliation-mismatch') otherwise.
    """
    total_in = sum(deposits.values())
    total_out = sum(entitlements.values())
    if total_in != total_out:
        raise ReconciliationError('reconciliation-mismatch', f"deposits {total_in} != payouts {total_out}")
    for key in set(fees_signed) | set(fees_collected):
        signed = fees_signed.get(key, 0)
        collected = fees_collected.get(key, 0)
        if collected > signed or signed - collected > update_fee:
            raise ReconciliationError('reconciliation-mismatch',
                                      f"fee channel {key}: signed {signed}, collected {collected}")
    collected_total = sum(fees_collected.values())
    report = {
        'deposits': total_in,
        'payouts': total_out,
        'update_fees': collected_total,
        'update_fees_signed': sum(fees_signed.values()),
        'closing_fee_income': dict(closing_fee_income or {}),
        'balanced': True,
    }
    logger.info(f"📊 Settlement reconciled: {total_in} on-chain, {collected_total} in update fees")
    return report
