from fractions import Fraction

import pytest

from qinq_access_sim.engine import RngStreams, Simulator
from qinq_access_sim.errors import SimulationOrderError
from qinq_access_sim.frames import MacAddress
from qinq_access_sim.metrics import check_conformance, conformance_verdict
from qinq_access_sim.models import Packet, SourceKind, SourceSpec
from qinq_access_sim.network import Transmitter
from qinq_access_sim.queues import frames_to_bytes
from qinq_access_sim.token_bucket import (
    MAX_FRAME_BITS,
    TbfShaper,
    TokenBucketParams,
    TokenBucketState,
    tbf_refill,
)
from qinq_access_sim.traffic import TrafficSource

MBPS = 1_000_000
HOST_MAC = MacAddress.from_int(0x020000000B01)
SERVER_MAC = MacAddress.from_int(0x02FF00000001)


def test_params_validation():
    with pytest.raises(ValueError):
        TokenBucketParams(rate=0, bucket_size=MAX_FRAME_BITS)
    with pytest.raises(ValueError):
        TokenBucketParams(rate=MBPS, bucket_size=MAX_FRAME_BITS - 1)


def test_refill_is_exact_and_capped():
    params = TokenBucketParams(rate=10 * MBPS, bucket_size=1_000_000)
    state = TokenBucketState.with_tokens(0, now=0)
    state = tbf_refill(state, params, 1_000_000)
    assert state.tokens == Fraction(10_000)
    state = tbf_refill(state, TokenBucketParams(rate=3, bucket_size=MAX_FRAME_BITS), 1_000_001)
    assert state.tokens == Fraction(10_000) + Fraction(3, 1_000_000_000)
    full = tbf_refill(state, params, 10 * 1_000_000_000)
    assert full.tokens == params.bucket_size


def test_refill_rejects_time_regression():
    params = TokenBucketParams(rate=MBPS, bucket_size=MAX_FRAME_BITS)
    with pytest.raises(SimulationOrderError):
        tbf_refill(TokenBucketState.with_tokens(0, now=10), params, 5)


def test_next_departure_waits_for_tokens(make_packet):
    shaper = TbfShaper("tbf", TokenBucketParams(rate=10 * MBPS, bucket_size=MAX_FRAME_BITS),
                       capacity_bytes=frames_to_bytes(10))
    assert shaper.next_departure(0) is None
    first, second = make_packet(1500), make_packet(1500)
    shaper.offer(first, 0)
    shaper.offer(second, 0)
    assert shaper.next_departure(0) == (first, 0)
    # 176 bits left; 11824 more at 10 Mb/s
    assert shaper.next_departure(0) == (None, 1_182_400)
    assert shaper.next_departure(1_182_400) == (second, 1_182_400)
    assert shaper.departures == [(0, 12_000), (1_182_400, 12_000)]


def test_offer_tail_drops_and_rejects_oversize(make_packet):
    dropped = []
    shaper = TbfShaper("tbf", TokenBucketParams(rate=MBPS, bucket_size=MAX_FRAME_BITS),
                       capacity_bytes=3000, on_drop=lambda p, where: dropped.append(where))
    assert shaper.offer(make_packet(1500), 0)
    assert shaper.offer(make_packet(1500), 0)
    assert not shaper.offer(make_packet(1500), 0)
    assert not shaper.offer(make_packet(1522, vids=(200, 11)), 0)
    assert shaper.oversize == 1
    assert shaper.drops == 2
    assert dropped == ["tbf", "tbf"]
    assert shaper.counters.offered_frames == 4


def test_check_conformance_detects_bursts():
    params = TokenBucketParams(rate=10 * MBPS, bucket_size=MAX_FRAME_BITS)
    assert check_conformance([(0, 12_000), (0, 12_000)], params)[0]
    passed, worst = check_conformance([(0, 12_000)] * 3, params)
    assert not passed
    assert worst == 36_000 - MAX_FRAME_BITS
    assert check_conformance([], params) == (True, -MAX_FRAME_BITS)


def test_poisson_overload_stays_within_envelope():
    """10 Mb/s, 1 Mb bucket, Poisson 20 Mb/s for 60 simulated seconds."""
    sim = Simulator()
    params = TokenBucketParams(rate=10 * MBPS, bucket_size=1_000_000)
    shaper = TbfShaper("tbf", params, capacity_bytes=frames_to_bytes(500))
    link = Transmitter(sim, "node", 0, shaper, rate=1_000_000_000, delay_ns=0, deliver=lambda p: None)
    spec = SourceSpec(name="poisson", kind=SourceKind.POISSON, subscriber=1, mean_rate=20 * MBPS)
    source = TrafficSource(spec, RngStreams(5).stream(spec.name), HOST_MAC, SERVER_MAC, stop_ns=60 * 10**9)
    source.attach(sim, lambda frame, when: link.send(Packet(frame, 1, when, frame.wire_length)))
    sim.run(until=60 * 10**9)

    verdict = conformance_verdict(shaper)
    assert verdict.passed
    assert shaper.drops > 0
    sent_bits = sum(bits for _, bits in shaper.departures)
    assert sent_bits <= params.bucket_size + params.rate * 60
    assert sent_bits >= 0.99 * params.rate * 60


def test_refill_adds_rate_times_elapsed():
    params = TokenBucketParams(rate=10 * MBPS, bucket_size=1_000_000)
    state = tbf_refill(TokenBucketState.with_tokens(200_000, now=0), params, 50_000_000)
    assert state.tokens == 700_000
    assert tbf_refill(state, params, 50_000_000).tokens == 700_000
