import pytest

from brick.errors import ConfigError
from brick.scenarios import (
    DEVIANT_WARDEN_TAGS,
    SUITE_AUDIT_FUZZ,
    SUITE_CONSERVATION,
    SUITE_LIVENESS,
    SUITE_SAFETY,
    battery_cases,
    property_battery,
)


def test_audit_fuzz_catches_every_mutation():
    summary = property_battery(SUITE_AUDIT_FUZZ, seeds=200)
    assert summary['runs'] == 200
    assert summary['passed'], summary['failures'][:3]
    assert summary['by_scenario'] == {'history-mutation': {'runs': 200, 'passed': 200}}


def test_worker_pool_gives_the_same_answer():
    serial = property_battery(SUITE_AUDIT_FUZZ, seeds=20, first_seed=1000)
    pooled = property_battery(SUITE_AUDIT_FUZZ, seeds=20, first_seed=1000, workers=2)
    assert pooled == serial


def test_safety_cases_cover_each_deviant_strategy():
    labels = [label for label, _ in battery_cases(SUITE_SAFETY)]
    assert [f"f-{tag}" for tag in DEVIANT_WARDEN_TAGS] == labels[4:]
    for label, config in battery_cases(SUITE_SAFETY)[4:]:
        assert len(config.warden_tags) == config.f


@pytest.mark.parametrize('suite', [SUITE_SAFETY, SUITE_LIVENESS, SUITE_CONSERVATION])
def test_single_seed_suites_pass(suite):
    summary = property_battery(suite, seeds=1, first_seed=3)
    assert summary['passed'], summary['failures']
    assert summary['runs'] == len(battery_cases(suite))


def test_unknown_suite():
    with pytest.raises(ConfigError, match='unknown suite'):
        battery_cases('speed')
