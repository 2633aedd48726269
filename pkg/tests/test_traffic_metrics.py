import numpy as np
import pytest

from qinq_access_sim.config import parse_config
from qinq_access_sim.engine import RngStreams
from qinq_access_sim.errors import AccountingError
from qinq_access_sim.frames import MacAddress
from qinq_access_sim.metrics import FlowStats, MetricsCollector, percentile, record_delivery, record_drop, summarize
from qinq_access_sim.models import SourceKind, SourceSpec
from qinq_access_sim.network import build
from qinq_access_sim.traffic import TrafficSource

MBPS = 1_000_000
SECOND = 1_000_000_000
SRC = MacAddress.from_int(0x020000000B01)
DST = MacAddress.from_int(0x02FF00000001)


def source(kind, rate, size=1250, seed=1, **kwargs):
    spec = SourceSpec(name="src", kind=kind, subscriber=11, mean_rate=rate, frame_size=(size, size), **kwargs)
    return TrafficSource(spec, RngStreams(seed).stream("src"), SRC, DST, stop_ns=10**6 * SECOND)


def arrivals(src, count):
    times = []
    now = 0
    for _ in range(count):
        now, frame = src.next_arrival(now)
        times.append(now)
    return np.array(times)


def test_cbr_spacing_is_exact():
    times = arrivals(source(SourceKind.CBR, 10 * MBPS), 5)
    assert times.tolist() == [0, 1_000_000, 2_000_000, 3_000_000, 4_000_000]


def test_cbr_does_not_drift():
    # 1500-byte frames at 7 Mb/s do not divide evenly into nanoseconds
    times = arrivals(source(SourceKind.CBR, 7 * MBPS, size=1500), 7001)
    assert times[-1] == 7000 * 12_000 * SECOND // (7 * MBPS)


def test_poisson_mean_gap():
    times = arrivals(source(SourceKind.POISSON, 10 * MBPS, seed=3), 100_000)
    assert np.diff(times).mean() == pytest.approx(1_000_000, rel=0.01)


def test_onoff_without_off_time_is_cbr():
    times = arrivals(source(SourceKind.ONOFF, 10 * MBPS, mean_on_ns=50_000_000, mean_off_ns=0), 1000)
    assert set(np.diff(times).tolist()) == {1_000_000}


@pytest.mark.parametrize("kind, extra", [
    (SourceKind.CBR, {}),
    (SourceKind.POISSON, {}),
    (SourceKind.ONOFF, {"mean_on_ns": 20_000_000, "mean_off_ns": 20_000_000}),
])
def test_long_run_rate_fidelity(kind, extra):
    src = source(kind, 10 * MBPS, size=1000, seed=9, **extra)
    times = arrivals(src, 100_000)
    offered = (100_000 - 1) * 8000 * SECOND / (times[-1] - times[0])
    assert offered == pytest.approx(10 * MBPS, rel=0.01 if kind is not SourceKind.ONOFF else 0.05)


def test_uniform_frame_sizes_stay_in_range():
    spec = SourceSpec(name="src", kind=SourceKind.CBR, subscriber=11, mean_rate=MBPS, frame_size=(64, 1522))
    src = TrafficSource(spec, RngStreams(1).stream("src"), SRC, DST, stop_ns=100 * SECOND)
    sizes = {frame.wire_length for _, frame in (src.next_arrival(0) for _ in range(500))}
    assert min(sizes) >= 64 and max(sizes) <= 1522
    assert len(sizes) > 100


def test_source_stops():
    spec = SourceSpec(name="src", kind=SourceKind.CBR, subscriber=11, mean_rate=10 * MBPS,
                      frame_size=(1250, 1250), start_ns=SECOND, stop_ns=SECOND + 2_500_000)
    src = TrafficSource(spec, RngStreams(1).stream("src"), SRC, DST, stop_ns=10 * SECOND)
    times = []
    while (nxt := src.next_arrival(0)) is not None:
        times.append(nxt[0])
    assert times == [SECOND, SECOND + 1_000_000, SECOND + 2_000_000]


def test_delivery_without_timestamp_is_an_accounting_error(make_packet):
    packet = make_packet(100, subscriber=11)
    packet.created_ns = None
    with pytest.raises(AccountingError):
        record_delivery(FlowStats(11, "legacy"), packet, now=10)


def test_drops_never_produce_delay_samples(make_packet):
    stats = FlowStats(11, "legacy")
    record_drop(stats, make_packet(100, subscriber=11))
    assert stats.dropped_bytes == 100
    assert stats.delays == []
    record_delivery(stats, make_packet(200, subscriber=11, created_ns=5), now=25)
    assert stats.delays == [20]
    assert stats.delivered_bytes == 200


def test_window_throughput(make_packet):
    collector = MetricsCollector({11: "shared"}, duration_ns=2 * SECOND, warmup=0.0, window_ns=SECOND)
    for t in (0, SECOND // 2, SECOND + 1):
        packet = make_packet(1250, subscriber=11, created_ns=t)
        collector.offer(packet)
        collector.deliver(packet, t)
    assert collector.series(11).tolist() == [20_000.0, 10_000.0]


def test_percentile_is_nearest_rank():
    samples = list(range(1, 101))
    assert percentile(samples, 95) == 95
    assert percentile(samples, 99) == 99
    assert percentile([5, 1, 3], 50) == 3
    assert percentile([], 99) == 0

    rng = np.random.default_rng(4)
    values = rng.integers(0, 10**6, size=1000)
    ordered = sorted(values.tolist())
    for p in (50, 95, 99):
        assert percentile(values, p) == ordered[-(-p * len(ordered) // 100) - 1]


def test_summary_without_traffic():
    collector = MetricsCollector({11: "shared", 101: "legacy"}, duration_ns=SECOND)
    summary = summarize(collector.stats.values(), collector.measure_ns)
    assert [r.subscriber for r in summary.rows] == [11, 101]
    for row in summary.rows:
        assert (row.offered_bytes, row.delivered_bytes, row.goodput_bps, row.p99_delay_ns, row.drop_ratio) == \
            (0, 0, 0, 0, 0.0)
    assert summary.all_conformant


def test_zero_load_delay_is_serialization_plus_propagation():
    config = parse_config(
        "topology.access_rate = 100Mbps\n"
        "topology.access_delay = 1ms\n"
        "topology.feeder_delay = 2ms\n"
        "topology.uplink_delay = 500us\n"
        "subscribers.101.plan = legacy\n"
        "subscribers.101.rate = 10Mbps\n"
        "subscribers.101.bucket = 100kB\n"
        "sources.1.kind = cbr\n"
        "sources.1.subscriber = 101\n"
        "sources.1.rate = 10Mbps\n"
        "sources.1.stop = 1ns\n"
        "run.duration = 1s\n"
        "run.warmup = 0\n"
    )
    report = build(config).run()
    (row,) = report.summary.rows
    # 1500 B on the 100 Mb/s access link, 1504 B on the feeder and the uplink at 1 Gb/s
    expected = 120_000 + 12_032 + 12_032 + 3_500_000
    assert row.delivered_bytes == 1500
    assert row.mean_delay_ns == expected
    assert row.p99_delay_ns == expected
