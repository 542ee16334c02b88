"""
Named scenarios, configuration loading, reports, the broadcast latency
benchmark and the seeded property batteries.

Configuration resolves in this order: scenario preset, flat KEY=VALUE file
(python-dotenv), BRICK_* environment variables, explicit overrides.
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from brick.baseline import run_timeout_channel
from brick.brick_plus import VERDICT_CONSISTENT, VERDICT_TAMPERED, history_from, tamper, verify_history
from brick.channel import ChannelId, ChannelState, derive_channel_id, initial_state, make_announcement, make_commitment
from brick.errors import BrickError, ConfigError
from brick.incentives import hostage_feasible
from brick.ledger.chain import Chain
from brick.ledger.contract import (
    CLOSED_OPTIMISTIC,
    MIN_COMMITTEE,
    MODE_BRICK,
    MODE_BRICK_PLUS,
    ChannelParams,
    byzantine_bound,
    collateral_for,
    warden_hashes,
)
from brick.netsim import HonestDelays, Simulator
from brick.party import CLOSE_AUDIT, CLOSE_MODES, CLOSE_PESSIMISTIC, HONEST, Party, parse_party_strategy
from brick.primitives import derive_seed, keygen
from brick.runner import ADVERSARY_CENSOR, ADVERSARY_TAGS, ChannelRun
from brick.warden import Warden, parse_strategy

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

MODE_BASELINE = 'baseline'
MODES = (MODE_BRICK, MODE_BRICK_PLUS, MODE_BASELINE)

ENV_PREFIX = 'BRICK_'

HONEST_FLOW = 'honest-flow'
UNILATERAL_CLOSE = 'unilateral-close'
BYZANTINE_F = 'byzantine-f'
BRIBING_ATTACK = 'bribing-attack'
HOSTAGE_ATTEMPT = 'hostage-attempt'
CENSORSHIP_ATTACK = 'censorship-attack'
BASELINE_CENSORSHIP = 'baseline-censorship'
CRASH_PARTY = 'crash-party'
AUDIT_FLOW = 'audit-flow'
FEE_RECONCILIATION = 'fee-reconciliation'
LATE_ANNOUNCEMENT = 'late-announcement'

SUITE_SAFETY = 'safety'
SUITE_LIVENESS = 'liveness'
SUITE_CONSERVATION = 'conservation'
SUITE_AUDIT_FUZZ = 'audit-fuzz'
SUITES = (SUITE_SAFETY, SUITE_LIVENESS, SUITE_CONSERVATION, SUITE_AUDIT_FUZZ)

# Reference testbed latencies for a full broadcast, in ms
PUBLISHED_LATENCY_MS = {7: 113.8, 34: 118.0, 151: 133.8}
LATENCY_TOLERANCE = 0.20
DEFAULT_BENCH_WARDENS = (7, 34, 151)
DEFAULT_BENCH_STAGGER_US = 220

SAFETY_ATTACKS = (BYZANTINE_F, BRIBING_ATTACK, CENSORSHIP_ATTACK, LATE_ANNOUNCEMENT)

DEVIANT_WARDEN_TAGS = ('bribed-old-claim:byz', 'bribed-old-claim', 'ack-without-store',
                       'sign-after-close', 'unresponsive', 'crash:3')


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One run. ``t`` defaults to 2f+1 and ``warden_tags`` is padded with
    honest wardens up to n.
    """

    name: str = 'custom'
    seed: int = 0
    wardens: int = 10
    t: Optional[int] = None
    total: int = 12
    split_a: int = 6
    closing_fee: int = 70
    update_fee: int = 1
    epsilon: int = 1
    rtt_ms: float = 100
    jitter_ms: float = 0
    stagger_us: int = 2000
    block_time_ms: float = 1000
    confirm_depth: int = 6
    liveness_bound: int = 2
    mode: str = MODE_BRICK
    party_a: str = HONEST
    party_b: str = HONEST
    warden_tags: Tuple[str, ...] = ()
    payments: Tuple[int, ...] = (1, -1, -1)
    close: str = 'optimistic'
    closer: str = 'A'
    adversary: str = 'none'
    limit_ms: float = 600_000
    dispute_window: int = 6
    stall_ms: float = 10_000

    @property
    def f(self) -> int:
        return byzantine_bound(self.wardens)

    @property
    def threshold(self) -> int:
        return self.t if self.t is not None else 2 * self.f + 1

    @property
    def warden_strategies(self) -> Tuple[str, ...]:
        return tuple(self.warden_tags) + (HONEST,) * (self.wardens - len(self.warden_tags))

    @property
    def adversary_tags(self) -> List[str]:
        return [tag.strip() for tag in self.adversary.split('+') if tag.strip()]

    def balances(self) -> List[Tuple[int, int]]:
        """(balance_a, balance_b) of every state the payment script produces, s_1 first."""
        balance_a, balance_b = self.split_a, self.total - self.split_a
        states = [(balance_a, balance_b)]
        for amount in self.payments:
            balance_a, balance_b = balance_a - amount, balance_b + amount
            states.append((balance_a, balance_b))
        return states

    def validate(self) -> 'ScenarioConfig':
        """Raise ConfigError('config-invalid') naming the first bad key."""
        def invalid(key: str, detail: str) -> ConfigError:
            return ConfigError('config-invalid', f"{key}: {detail}")

        if self.mode not in MODES:
            raise invalid('MODE', f"unknown mode {self.mode!r}")
        if self.mode != MODE_BASELINE:
            if self.wardens < MIN_COMMITTEE or (self.wardens - 1) % 3 != 0:
                raise invalid('WARDENS', f"n={self.wardens} must be 3f+1 and greater than 7")
            if self.threshold != 2 * self.f + 1:
                raise invalid('T', f"t={self.threshold} must be 2f+1={2 * self.f + 1}")
        if len(self.warden_tags) > self.wardens:
            raise invalid('WARDEN_STRATEGIES', f"{len(self.warden_tags)} strategies for {self.wardens} wardens")
        for tag in self.warden_tags:
            parse_strategy(tag)
        parse_party_strategy(self.party_a)
        parse_party_strategy(self.party_b)
        if self.total <= 0 or not 0 <= self.split_a <= self.total:
            raise invalid('SPLIT_A', f"split {self.split_a} of v={self.total}")
        if any(min(pair) < 0 for pair in self.balances()):
            raise invalid('PAYMENTS', "a payment overdraws a party")
        for key, value in (('CLOSING_FEE', self.closing_fee), ('UPDATE_FEE', self.update_fee),
                           ('EPSILON', self.epsilon), ('JITTER_MS', self.jitter_ms),
                           ('STAGGER_US', self.stagger_us)):
            if value < 0:
                raise invalid(key, f"{value} is negative")
        for key, value in (('RTT_MS', self.rtt_ms), ('BLOCK_TIME_MS', self.block_time_ms),
                           ('CONFIRM_DEPTH', self.confirm_depth), ('LIVENESS_BOUND', self.liveness_bound),
                           ('LIMIT_MS', self.limit_ms), ('DISPUTE_WINDOW', self.dispute_window),
                           ('STALL_MS', self.stall_ms)):
            if value <= 0:
                raise invalid(key, f"{value} must be positive")
        if self.close not in CLOSE_MODES:
            raise invalid('CLOSE', f"unknown close mode {self.close!r}")
        if self.close == CLOSE_AUDIT and self.mode != MODE_BRICK_PLUS:
            raise invalid('CLOSE', "audit close needs MODE=brick+")
        if self.closer not in ('A', 'B'):
            raise invalid('CLOSE', f"closer must be A or B, got {self.closer!r}")
        for tag in self.adversary_tags:
            if tag not in ADVERSARY_TAGS:
                raise invalid('ADVERSARY', f"unknown adversary {tag!r}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record['t'] = self.threshold
        record['f'] = self.f
        record['warden_tags'] = list(self.warden_strategies)
        record['payments'] = list(self.payments)
        return record


PRESETS: Dict[str, Dict[str, Any]] = {
    HONEST_FLOW: {},
    UNILATERAL_CLOSE: {'close': CLOSE_PESSIMISTIC},
    BYZANTINE_F: {'warden_tags': ('bribed-old-claim:byz',) * 3, 'party_a': 'stale-close-briber',
                  'payments': (1, 1, 1), 'close': CLOSE_PESSIMISTIC, 'adversary': 'reorder'},
    BRIBING_ATTACK: {'warden_tags': ('bribed-old-claim',) * 3, 'party_a': 'stale-close-briber',
                     'payments': (1, 1, 1), 'close': CLOSE_PESSIMISTIC},
    HOSTAGE_ATTEMPT: {'party_b': 'silent', 'warden_tags': ('unresponsive',) * 3},
    CENSORSHIP_ATTACK: {'party_a': 'stale-close-briber', 'payments': (1, 1, 1),
                        'close': CLOSE_PESSIMISTIC, 'adversary': 'censor+delay'},
    BASELINE_CENSORSHIP: {'mode': MODE_BASELINE, 'party_a': 'stale-close-briber', 'payments': (1, 1, 1),
                          'close': CLOSE_PESSIMISTIC, 'adversary': 'censor+delay'},
    CRASH_PARTY: {'party_a': 'crash-after-commit:2', 'close': CLOSE_PESSIMISTIC, 'closer': 'B'},
    AUDIT_FLOW: {'mode': MODE_BRICK_PLUS, 'close': CLOSE_AUDIT},
    FEE_RECONCILIATION: {'close': CLOSE_PESSIMISTIC, 'payments': (2, -1, 1, -3, 1, 1)},
    LATE_ANNOUNCEMENT: {'warden_tags': ('sign-after-close',) * 3, 'party_a': 'announce-after-close',
                        'close': CLOSE_PESSIMISTIC},
}

SCENARIOS = tuple(PRESETS)


def preset(name: str, seed: int = 0) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError('config-invalid', f"unknown scenario {name!r}")
    return replace(ScenarioConfig(name=name, seed=seed), **PRESETS[name])


# ---------------------------------------------------------------------- loading

def _int_list(raw: str) -> Tuple[int, ...]:
    return tuple(int(item) for item in raw.replace(' ', '').split(',') if item)


def _tag_list(raw: str) -> Tuple[str, ...]:
    """Comma list; ``3*bribed-old-claim`` repeats a tag."""
    tags: List[str] = []
    for item in raw.split(','):
        item = item.strip()
        if not item:
            continue
        count, star, tag = item.partition('*')
        if star:
            tags.extend([tag.strip()] * int(count))
        else:
            tags.append(item)
    return tuple(tags)


def _close_spec(raw: str) -> Dict[str, Any]:
    mode, _, closer = raw.strip().partition(':')
    values: Dict[str, Any] = {'close': mode.lower()}
    if closer:
        values['closer'] = closer.upper()
    return values


_PARSERS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    'SEED': ('seed', int),
    'WARDENS': ('wardens', int),
    'T': ('t', int),
    'V': ('total', int),
    'SPLIT_A': ('split_a', int),
    'CLOSING_FEE': ('closing_fee', int),
    'UPDATE_FEE': ('update_fee', int),
    'EPSILON': ('epsilon', int),
    'RTT_MS': ('rtt_ms', float),
    'JITTER_MS': ('jitter_ms', float),
    'STAGGER_US': ('stagger_us', int),
    'BLOCK_TIME_MS': ('block_time_ms', float),
    'CONFIRM_DEPTH': ('confirm_depth', int),
    'LIVENESS_BOUND': ('liveness_bound', int),
    'MODE': ('mode', str.lower),
    'PARTY_A': ('party_a', str.strip),
    'PARTY_B': ('party_b', str.strip),
    'WARDEN_STRATEGIES': ('warden_tags', _tag_list),
    'PAYMENTS': ('payments', _int_list),
    'ADVERSARY': ('adversary', str.lower),
    'LIMIT_MS': ('limit_ms', float),
    'DISPUTE_WINDOW': ('dispute_window', int),
    'STALL_MS': ('stall_ms', float),
}
CONFIG_KEYS = tuple(_PARSERS) + ('CLOSE',)


def _parse_values(raw: Mapping[str, Optional[str]], source: str, strict: bool = True) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for key, text in raw.items():
        key = key.strip().upper()
        if text is None:
            continue
        if key == 'CLOSE':
            values.update(_close_spec(text))
            continue
        if key not in _PARSERS:
            if strict:
                raise ConfigError('config-invalid', f"{key}: unknown key in {source}")
            continue
        name, parse = _PARSERS[key]
        try:
            values[name] = parse(text)
        except ValueError as exc:
            raise ConfigError('config-invalid', f"{key}: {text!r} in {source} ({exc})") from exc
    return values


def load_config(name: Optional[str] = None, path: Optional[Path] = None,
                overrides: Optional[Mapping[str, str]] = None,
                environ: Optional[Mapping[str, str]] = None) -> ScenarioConfig:
    """Resolve a scenario config from preset, file, environment and overrides."""
    config = preset(name) if name else ScenarioConfig()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError('config-invalid', f"config file {path} not found")
        config = replace(config, **_parse_values(dotenv_values(path), str(path)))
        logger.info(f"📝 Loaded config file {path}")
    environ = os.environ if environ is None else environ
    env_values = {key[len(ENV_PREFIX):]: value for key, value in environ.items() if key.startswith(ENV_PREFIX)}
    config = replace(config, **_parse_values(env_values, 'environment', strict=False))
    if overrides:
        config = replace(config, **_parse_values(overrides, 'overrides'))
    return config.validate()


# ---------------------------------------------------------------------- runs

@dataclass
class RunReport:
    """JSON body of one run plus the simulator and chain it came from."""

    body: Dict[str, Any]
    sim: Simulator
    chain: Chain
    brick_safety_ok: bool

    @property
    def exit_code(self) -> int:
        return 0 if self.brick_safety_ok else 1

    def to_json(self) -> str:
        return json.dumps(self.body, indent=2, sort_keys=True)


def _incentive_check(config: ScenarioConfig, channel_run: ChannelRun, payouts: Mapping[str, int],
                     freshest: int) -> Dict[str, Any]:
    """Compare what each party walked away with against c + f·collateral."""
    contract = channel_run.contract
    collateral = contract.collateral_per_warden or collateral_for(config.total, config.f)
    fresh = next((party.states[freshest] for party in channel_run.parties.values()
                  if freshest in party.states), None)
    fresh_balance = ({'A': fresh.balance_a, 'B': fresh.balance_b} if fresh is not None
                     else {'A': config.split_a, 'B': config.total - config.split_a})
    refunds = {'A': 0, 'B': 0}
    if contract.closed_via == CLOSED_OPTIMISTIC:
        refunds = {'A': contract.params.fee_share_a, 'B': contract.params.fee_share_b}
    payoffs, bounds, deviant = {}, {}, []
    for name, party in channel_run.parties.items():
        payoffs[name] = payouts.get(name, 0) - refunds[name] - party.bribes_paid
        bounds[name] = fresh_balance[name] + config.f * collateral
        if party.strategy.kind != HONEST:
            deviant.append(name)
    return {
        'hostage_feasible': hostage_feasible(config.wardens),
        'collateral': collateral,
        'fresh_balance': fresh_balance,
        'payoffs': payoffs,
        'bounds': bounds,
        'deviant_parties': deviant,
        'deviants_within_bound': all(payoffs[name] <= bounds[name] for name in deviant),
    }


def _run_brick(config: ScenarioConfig) -> RunReport:
    channel_run = ChannelRun(config).setup()
    result = channel_run.execute()
    body: Dict[str, Any] = {'schema_version': REPORT_SCHEMA_VERSION, 'config': config.to_dict()}
    body.update(result.to_dict())
    body['incentives'] = _incentive_check(config, channel_run, result.payouts, result.freshest_committed_seq)
    return RunReport(body=body, sim=result.sim, chain=result.chain, brick_safety_ok=result.safety_ok)


def _run_baseline(config: ScenarioConfig) -> RunReport:
    """Timeout channel under the adversary, paired with a Brick run under the same one."""
    censor_blocks = config.dispute_window + 1 if ADVERSARY_CENSOR in config.adversary_tags else 0
    baseline = run_timeout_channel(config.seed, config.balances(), dispute_window=config.dispute_window,
                                   censor_blocks=censor_blocks, block_time_ms=config.block_time_ms,
                                   confirm_depth=config.confirm_depth, liveness_bound=config.liveness_bound,
                                   rtt_ms=config.rtt_ms, limit_ms=config.limit_ms)
    chain = baseline.pop('chain')
    sim = baseline.pop('sim')
    paired = _run_brick(replace(config, name=f"{config.name}/brick", mode=MODE_BRICK).validate())
    body = {
        'schema_version': REPORT_SCHEMA_VERSION,
        'scenario': config.name,
        'seed': config.seed,
        'mode': MODE_BASELINE,
        'config': config.to_dict(),
        'safety_ok': baseline['safety_ok'],
        'baseline': baseline,
        'paired_brick': paired.body,
        'trace_digest': baseline['trace_digest'],
    }
    logger.info(f"📊 Baseline safety {baseline['safety_ok']}, paired Brick safety {paired.brick_safety_ok}")
    return RunReport(body=body, sim=sim, chain=chain, brick_safety_ok=paired.brick_safety_ok)


def run(config: ScenarioConfig) -> RunReport:
    """Execute one validated config; the report is a pure function of it."""
    config.validate()
    logger.info(f"🚀 Running {config.name} ({config.mode}, seed {config.seed}, n={config.wardens})")
    if config.mode == MODE_BASELINE:
        return _run_baseline(config)
    return _run_brick(config)


def export(report: RunReport, out_dir: Path) -> Dict[str, Path]:
    """trace.jsonl, chain.json and report.json under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {'trace': report.sim.export_trace(out_dir / 'trace.jsonl'),
             'chain': out_dir / 'chain.json',
             'report': out_dir / 'report.json'}
    paths['chain'].write_text(json.dumps(report.chain.to_json(), indent=2), encoding='utf-8')
    paths['report'].write_text(report.to_json() + '\n', encoding='utf-8')
    logger.info(f"📝 Report written to {paths['report']}")
    return paths


# ---------------------------------------------------------------------- benchmark

def _broadcast_latency(wardens: int, rtt_ms: float, stagger_us: int, seed: int) -> Dict[str, float]:
    """One opening broadcast from A to ``wardens`` honest wardens, no chain."""
    sim = Simulator(seed, delays=HonestDelays(rtt_ms=rtt_ms), stagger_us=stagger_us)
    key_a, key_b = keygen(derive_seed(seed, 0)), keygen(derive_seed(seed, 1))
    warden_keys = [keygen(derive_seed(seed, index + 2)) for index in range(wardens)]
    f = byzantine_bound(wardens)
    params = ChannelParams(party_a=key_a.public, party_b=key_b.public,
                           warden_hashes=warden_hashes([keys.public for keys in warden_keys]),
                           threshold=2 * f + 1, closing_fee=0, initial_balance_a=1, initial_balance_b=1)
    channel = derive_channel_id(key_a.public, key_b.public, 0)
    state = initial_state(1, 1, sim.salt_rng)
    commitment = make_commitment(channel, state, total=2, previous_seq=0, key_a=key_a, key_b=key_b)
    announcement = make_announcement(commitment, party_a=key_a.public, party_b=key_b.public,
                                     key_a=key_a, key_b=key_b)
    party_names = {key_a.public: 'A', key_b.public: 'B'}
    warden_names = {}
    for index, keys in enumerate(warden_keys):
        warden = Warden(name=f"W{index + 1}", keys=keys)
        warden.bind(channel, key_a.public, key_b.public, party_names, sim=sim)
        sim.register(warden)
        warden_names[keys.public] = warden.name
    party = Party(name='A', role='A', keys=key_a, salt_rng=sim.salt_rng)
    party.install_initial(state, commitment, announcement)
    party.bind(channel, params, 'B', warden_names, sim=sim)
    sim.register(party)
    party.broadcast_update(announcement)
    sim.run_until_quiescent(60_000)
    started = party.broadcast_started_ms[1]
    return {'commit_ms': party.commit_times_ms[1] - started, 'all_acks_ms': party.all_acks_ms[1] - started}


def bench_broadcast(wardens: Sequence[int] = DEFAULT_BENCH_WARDENS, rtt_ms: float = 100,
                    stagger_us: int = DEFAULT_BENCH_STAGGER_US, seed: int = 0) -> pd.DataFrame:
    """
    Simulated broadcast latency per committee size.

    ``commit_ms`` is the time to t = 2f+1 acks, ``all_acks_ms`` the time to
    all n; the latter is compared with the published testbed figures.
    """
    rows = []
    for n in wardens:
        if n < 4:
            raise ConfigError('config-invalid', f"WARDENS: cannot benchmark n={n}")
        measured = _broadcast_latency(n, rtt_ms, stagger_us, seed)
        expected = rtt_ms + n * stagger_us / 1000
        published = PUBLISHED_LATENCY_MS.get(n)
        rows.append({
            'wardens': n,
            'f': byzantine_bound(n),
            't': 2 * byzantine_bound(n) + 1,
            'stagger_us': stagger_us,
            'commit_ms': measured['commit_ms'],
            'all_acks_ms': measured['all_acks_ms'],
            'expected_ms': expected,
            'published_ms': published,
            'within_tolerance': (None if published is None
                                 else abs(measured['all_acks_ms'] - published) <= LATENCY_TOLERANCE * published),
        })
    frame = pd.DataFrame(rows)
    for row in frame.itertuples():
        logger.info(f"📊 n={row.wardens}: t acks after {row.commit_ms:.2f} ms, all after {row.all_acks_ms:.2f} ms")
    return frame


# ---------------------------------------------------------------------- batteries

def battery_cases(suite: str) -> List[Tuple[str, Optional[ScenarioConfig]]]:
    """(label, config) pairs a suite runs for every seed."""
    if suite == SUITE_SAFETY:
        cases = [(name, preset(name)) for name in SAFETY_ATTACKS]
        base = preset(BYZANTINE_F)
        for tag in DEVIANT_WARDEN_TAGS:
            cases.append((f"f-{tag}", replace(base, warden_tags=(tag,) * base.f)))
        return cases
    if suite == SUITE_LIVENESS:
        return [(name, replace(preset(name), adversary='reorder'))
                for name in (HONEST_FLOW, UNILATERAL_CLOSE, HOSTAGE_ATTEMPT, CRASH_PARTY, AUDIT_FLOW)]
    if suite == SUITE_CONSERVATION:
        return [(name, preset(name)) for name in SCENARIOS if PRESETS[name].get('mode') != MODE_BASELINE]
    if suite == SUITE_AUDIT_FUZZ:
        return [('history-mutation', None)]
    raise ConfigError('config-invalid', f"unknown suite {suite!r}")


def _audit_fuzz_case(seed: int) -> Dict[str, Any]:
    """Random honest history must verify; one mutated copy must not."""
    rng = np.random.default_rng(seed)
    channel = ChannelId(rng.bytes(32))
    total = int(rng.integers(1, 1000))
    states = []
    for seq in range(1, int(rng.integers(2, 16)) + 1):
        balance_a = int(rng.integers(0, total + 1))
        states.append(ChannelState(seq=seq, balance_a=balance_a, balance_b=total - balance_a,
                                   salt=rng.bytes(32)))
    history = history_from(states)
    head = history.final_head(channel)
    closing_seq = len(states)
    mutation = ('balance', 'salt', 'drop')[int(rng.integers(0, 3))]
    index = int(rng.integers(0, len(states)))
    if mutation == 'balance':
        delta = 1 if states[index].balance_b >= 1 else -1
        mutated = tamper(history, index, delta)
    elif mutation == 'salt':
        changed = list(states)
        original = changed[index]
        changed[index] = ChannelState(seq=original.seq, balance_a=original.balance_a,
                                      balance_b=original.balance_b, salt=bytes(b ^ 0xFF for b in original.salt))
        mutated = history_from(changed)
    else:
        mutated = history_from(states[:index] + states[index + 1:])
    honest = verify_history(channel, history, closing_seq, head)
    caught = verify_history(channel, mutated, closing_seq, head)
    ok = honest == VERDICT_CONSISTENT and caught == VERDICT_TAMPERED
    return {'suite': SUITE_AUDIT_FUZZ, 'scenario': 'history-mutation', 'seed': seed, 'ok': ok,
            'detail': None if ok else f"{mutation}@{index}: honest {honest}, mutated {caught}"}


def _battery_case(task: Tuple[str, str, Optional[ScenarioConfig], int]) -> Dict[str, Any]:
    """One seeded case; module level so worker processes can import it."""
    suite, label, config, seed = task
    if suite == SUITE_AUDIT_FUZZ:
        return _audit_fuzz_case(seed)
    row: Dict[str, Any] = {'suite': suite, 'scenario': label, 'seed': seed, 'ok': False, 'detail': None}
    try:
        body = run(replace(config, name=label, seed=seed)).body
    except BrickError as exc:
        row['detail'] = f"{type(exc).__name__}: {exc}"
        return row
    if suite == SUITE_SAFETY:
        row['ok'] = body['safety_ok']
        detail = f"closing seq {body['closing_seq']}, freshest committed {body['freshest_committed_seq']}"
    elif suite == SUITE_LIVENESS:
        row['ok'] = body['liveness_ok'] and body['final_phase'] == 'Closed'
        detail = f"phase {body['final_phase']}, truncated {body['truncated']}"
    else:
        row['ok'] = body['fee_reconciliation']['balanced']
        detail = f"deposits {body['fee_reconciliation']['deposits']}"
    if not row['ok']:
        row['detail'] = detail
    return row


def property_battery(suite: str, seeds: int, workers: int = 1, first_seed: int = 0) -> Dict[str, Any]:
    """
    Run a suite across ``seeds`` consecutive seeds; failures come back with
    the seed that replays them.
    """
    cases = battery_cases(suite)
    tasks = [(suite, label, config, seed) for label, config in cases
             for seed in range(first_seed, first_seed + seeds)]
    logger.info(f"🚀 Battery {suite}: {len(cases)} case(s) x {seeds} seed(s) on {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_battery_case, tasks, chunksize=max(1, len(tasks) // (workers * 4))))
    else:
        rows = [_battery_case(task) for task in tasks]
    frame = pd.DataFrame(rows)
    grouped = frame.groupby('scenario')['ok'].agg(['count', 'sum'])
    by_scenario = {str(name): {'runs': int(row['count']), 'passed': int(row['sum'])}
                   for name, row in grouped.iterrows()}
    failures = [{'scenario': row['scenario'], 'seed': row['seed'], 'detail': row['detail']}
                for row in rows if not row['ok']]
    if failures:
        logger.error(f"❌ Battery {suite}: {len(failures)} of {len(rows)} runs failed")
    else:
        logger.info(f"✅ Battery {suite}: {len(rows)} runs, no failures")
    return {'suite': suite, 'seeds': seeds, 'first_seed': first_seed, 'runs': len(rows),
            'passed': not failures, 'failures': failures, 'by_scenario': by_scenario}
