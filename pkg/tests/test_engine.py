import pytest

from qinq_access_sim.engine import EventKind, RngStreams, Simulator, transmission_ns
from qinq_access_sim.errors import SimulationOrderError


def test_equal_time_events_run_arrival_departure_timer():
    sim = Simulator()
    order = []
    sim.schedule(100, lambda: order.append("timer"), EventKind.TIMER)
    sim.schedule(100, lambda: order.append("departure"), EventKind.DEPARTURE)
    sim.schedule(100, lambda: order.append("arrival-1"), EventKind.ARRIVAL)
    sim.schedule(100, lambda: order.append("arrival-2"), EventKind.ARRIVAL)
    sim.schedule(50, lambda: order.append("early"), EventKind.TIMER)
    sim.run()
    assert order == ["early", "arrival-1", "arrival-2", "departure", "timer"]
    assert sim.now == 100


def test_run_until_stops_at_horizon():
    sim = Simulator(record=True)
    fired = []
    for t in (5, 10, 15):
        sim.schedule(t, lambda t=t: fired.append(t), target=f"t{t}")
    sim.run(until=10)
    assert fired == [5, 10]
    assert sim.pending() == 1
    assert [e.target for e in sim.journal] == ["t5", "t10"]


def test_schedule_in_the_past_is_rejected():
    sim = Simulator()
    sim.schedule(10, lambda: None)
    sim.run()
    with pytest.raises(SimulationOrderError):
        sim.schedule(5, lambda: None)


def test_actions_can_schedule_follow_ups():
    sim = Simulator()
    seen = []

    def tick():
        seen.append(sim.now)
        if sim.now < 30:
            sim.schedule(sim.now + 10, tick)

    sim.schedule(0, tick)
    sim.run()
    assert seen == [0, 10, 20, 30]


def test_rng_streams_are_reproducible_and_independent():
    a = RngStreams(7).stream("sources.1").random(5)
    b = RngStreams(7).stream("sources.1").random(5)
    c = RngStreams(7).stream("sources.2").random(5)
    d = RngStreams(8).stream("sources.1").random(5)
    assert (a == b).all()
    assert not (a == c).all()
    assert not (a == d).all()
    assert RngStreams.stream_id("sources.1") == RngStreams.stream_id("sources.1")


def test_transmission_time_rounds_up():
    assert transmission_ns(12_000, 10_000_000) == 1_200_000
    assert transmission_ns(1, 3) == 333_333_334


def test_pending_and_journal_track_executed_events():
    sim = Simulator(record=True)
    assert sim.run() == 0
    assert sim.pending() == 0

    def spawn():
        sim.schedule(sim.now + 7, lambda: None, EventKind.DEPARTURE, "child")

    sim.schedule(3, spawn, EventKind.ARRIVAL, "parent")
    assert sim.pending() == 1
    sim.run(until=3)
    assert sim.pending() == 1
    sim.run()
    assert sim.pending() == 0
    assert [(e.time, e.target, e.kind) for e in sim.journal] == [
        (3, "parent", EventKind.ARRIVAL), (10, "child", EventKind.DEPARTURE),
    ]
