import os

import pytest

from qinq_access_sim.config import (
    dump_config,
    legacy_reference,
    load_config,
    parse_config,
    parse_rate,
    parse_size,
    parse_time,
)
from qinq_access_sim.errors import ConfigError
from qinq_access_sim.models import InnerScheduler, PlanKind, SourceKind

SCENARIOS = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")

BASE = (
    "subscribers.11.plan = shared\n"
    "subscribers.11.rate = 10Mbps\n"
    "subscribers.11.bucket = 50kB\n"
    "subscribers.12.plan = shared\n"
    "subscribers.12.rate = 30Mbps\n"
    "subscribers.12.bucket = 50kB\n"
    "subscribers.101.plan = legacy\n"
    "subscribers.101.rate = 20Mbps\n"
    "subscribers.101.bucket = 100kB\n"
    "group.svid = 200\n"
    "run.duration = 2s\n"
)


def config_error(text):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)
    return excinfo.value


def test_units():
    assert parse_rate("10Mbps", "k") == 10_000_000
    assert parse_rate("2.5 Gbps", "k") == 2_500_000_000
    assert parse_rate("10mbps", "k") == 10_000_000
    assert parse_rate("1500", "k") == 1500
    assert parse_time("100ms", "k") == 100_000_000
    assert parse_time("1.5", "k") == 1_500_000_000
    assert parse_time("250us", "k") == 250_000
    assert parse_time("0.1s", "k") == 100_000_000
    assert parse_size("100kB", "k") == 800_000
    assert parse_size("1Mb", "k") == 1_000_000
    assert parse_size("1522B", "k") == 12_176


def test_bad_values_name_the_key():
    assert config_error(BASE + "topology.uplink_rate = 10 furlongs\n").key == "topology.uplink_rate"
    assert config_error(BASE + "topology.access_delay = -1ms\n").key == "topology.access_delay"
    assert config_error(BASE.replace("rate = 10Mbps", "rate = 0")).key == "subscribers.11.rate"
    assert config_error(BASE + "topology.colour = blue\n").key == "topology.colour"
    assert config_error(BASE + "weather.today = rain\n").key == "weather.today"


def test_parse_defaults():
    config = parse_config(BASE)
    assert config.group.members == (11, 12)
    assert config.group.scheduler is InnerScheduler.DRR
    assert config.group_tbf() == (40_000_000, 800_000)
    assert config.subscribers[11].onu == "onu11"
    assert config.subscribers[101].plan.kind is PlanKind.LEGACY
    assert config.run.warmup == 0.1
    assert config.topology.inner_rate is None


def test_duplicate_cvid():
    error = config_error(BASE + "subscribers.011.plan = legacy\nsubscribers.011.rate = 1Mbps\n"
                                "subscribers.011.bucket = 10kB\n")
    assert error.key == "subscribers.011"
    assert "duplicate C-VID 11" in str(error)


def test_duplicate_key():
    assert config_error(BASE + "run.seed = 1\nrun.seed = 2\n").key == "run.seed"


def test_cross_field_checks():
    assert config_error(BASE.replace("group.svid = 200", "group.svid = 101")).key == "group.svid"
    assert config_error(BASE + "group.members = 11\n").key == "group.members"
    assert config_error(BASE + "group.members = 11,12,101\n").key == "group.members"
    assert config_error(BASE + "topology.uplink_rate = 50Mbps\n").key == "topology.uplink_rate"
    assert config_error(BASE + "topology.access_rate = 15Mbps\n").key == "subscribers.12.rate"
    assert config_error(BASE + "subscribers.101.onu = onu11\n").key == "subscribers.101.onu"
    assert config_error(BASE.replace("group.svid = 200\n", "")).key == "group.svid"
    assert config_error(BASE.replace("subscribers.11.bucket = 50kB", "subscribers.11.bucket = 1kB")).key == \
        "subscribers.11.bucket"
    assert config_error(BASE + "subscribers.5000.plan = legacy\n").key == "subscribers.5000"
    assert config_error(BASE + "run.warmup = 1\n").key == "run.warmup"


def test_source_checks():
    source = "sources.1.kind = onoff\nsources.1.subscriber = 11\nsources.1.rate = 5Mbps\n"
    assert config_error(BASE + source).key == "sources.1.on"
    ok = parse_config(BASE + source + "sources.1.on = 10ms\nsources.1.off = 5ms\nsources.1.frame_size = 64-1500\n")
    (spec,) = ok.sources
    assert spec.kind is SourceKind.ONOFF
    assert (spec.mean_on_ns, spec.mean_off_ns, spec.frame_size) == (10_000_000, 5_000_000, (64, 1500))

    unknown = "sources.1.kind = cbr\nsources.1.subscriber = 99\nsources.1.rate = 5Mbps\n"
    assert config_error(BASE + unknown).key == "sources.1.subscriber"
    host = "sources.1.kind = cbr\nsources.1.subscriber = 11\nsources.1.rate = 5Mbps\nsources.1.host = 1\n"
    assert config_error(BASE + host).key == "sources.1.host"
    size = "sources.1.kind = cbr\nsources.1.subscriber = 11\nsources.1.rate = 5Mbps\nsources.1.frame_size = 40\n"
    assert config_error(BASE + size).key == "sources.1.frame_size"


def test_dump_round_trip():
    for name in ("hybrid.conf", "csfq.conf"):
        config = load_config(os.path.join(SCENARIOS, name))
        text = dump_config(config)
        assert parse_config(text) == config
        assert dump_config(parse_config(text)) == text


def test_legacy_reference_keeps_plans():
    config = parse_config(BASE)
    reference = legacy_reference(config)
    assert reference.group is None
    assert all(s.plan.kind is PlanKind.LEGACY for s in reference.subscribers.values())
    assert reference.subscribers[12].plan.token_rate == 30_000_000
    assert reference.subscribers[12].onu == "onu12"


def test_fully_shared_network():
    config = parse_config(BASE.replace("subscribers.101.plan = legacy", "subscribers.101.plan = shared"))
    assert config.group.members == (11, 12, 101)


def test_buckets_hold_the_largest_frame_at_their_stage():
    legacy = BASE.replace("subscribers.101.bucket = 100kB", "subscribers.101.bucket = {}")
    error = config_error(legacy.format("1522B"))
    assert error.key == "subscribers.101.bucket"
    assert "C-tagged" in str(error)
    assert parse_config(legacy.format("1526B")).subscribers[101].plan.bucket_size == 1526 * 8

    assert config_error(BASE + "group.tbf_bucket = 1526B\n").key == "group.tbf_bucket"
    assert parse_config(BASE + "group.tbf_bucket = 1530B\n").group_tbf() == (40_000_000, 1530 * 8)


@pytest.mark.parametrize("name", ["olt", "olt_c", "server", "host101-0", "onu a", "onu/1"])
def test_onu_names_must_not_clash_with_nodes(name):
    error = config_error(BASE + f"subscribers.101.onu = {name}\n")
    assert error.key == "subscribers.101.onu"
    assert "invalid ONU name" in str(error)


def test_onu_name_characters():
    config = parse_config(BASE + "subscribers.101.onu = building-7.floor_2\n")
    assert config.subscribers[101].onu == "building-7.floor_2"
