"""Core-stateless fair queueing: per-flow rate estimation, fair share and probabilistic dropping."""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import NS_PER_SECOND
from .errors import ClassificationError
from .frames import EthernetFrame
from .models import Packet
from .queues import IDLE, Dequeue, DropHook, ElementCounters, FrameQueue

logger = logging.getLogger(__name__)

BISECTION_STEPS = 64


@dataclass
class CsfqFlowState:
    rate: float = 0.0  # bit/s
    last_arrival: int | None = None  # ns


@dataclass
class CsfqState:
    link_rate: float  # bit/s
    window_ns: int = 100_000_000  # averaging constant K
    fair_share: float = math.inf  # alpha; no drops before the first window closes
    congested: bool = False
    flows: dict[int, CsfqFlowState] = field(default_factory=dict)
    window_start: int = 0
    window_bits: int = 0  # arrivals since window_start

    @property
    def window_s(self) -> float:
        return self.window_ns / NS_PER_SECOND


def csfq_estimate_rate(state: CsfqState, flow_id: int, frame_bits: int, now: int) -> float:
    """Exponential averaging: r' = (1 - e^(-T/K)) L/T + e^(-T/K) r."""
    flow = state.flows.setdefault(flow_id, CsfqFlowState())
    k = state.window_s
    if flow.last_arrival is None:
        flow.rate = frame_bits / k
    else:
        t = (now - flow.last_arrival) / NS_PER_SECOND
        if t <= 0:
            # limit T -> 0 of the averaging formula
            flow.rate = flow.rate + frame_bits / k
        else:
            decay = math.exp(-t / k)
            flow.rate = (1.0 - decay) * frame_bits / t + decay * flow.rate
    flow.last_arrival = now
    return flow.rate


def csfq_drop_decision(state: CsfqState, flow_id: int, rng: np.random.Generator) -> bool:
    """True to drop, with probability max(0, 1 - alpha / r_i)."""
    flow = state.flows.get(flow_id)
    if flow is None or flow.rate <= state.fair_share or flow.rate <= 0:
        return False
    p = 1.0 - state.fair_share / flow.rate
    return bool(rng.random() < p)


def solve_fair_share(rates: list[float], capacity: float) -> float:
    """alpha with sum(min(r_i, alpha)) == capacity; max(r_i) when the link is not overbooked."""
    if not rates:
        return math.inf
    top = max(rates)
    if sum(rates) <= capacity:
        return top
    lo, hi = 0.0, top
    for _ in range(BISECTION_STEPS):
        mid = (lo + hi) / 2
        if sum(min(r, mid) for r in rates) > capacity:
            hi = mid
        else:
            lo = mid
    return lo


def current_rates(state: CsfqState, now: int) -> dict[int, float]:
    """Rate estimates aged to `now`: a silent flow decays as e^(-T/K)."""
    k = state.window_s
    rates = {}
    for flow_id, flow in state.flows.items():
        if flow.last_arrival is None:
            continue
        t = (now - flow.last_arrival) / NS_PER_SECOND
        rates[flow_id] = flow.rate * math.exp(-t / k) if t > 0 else flow.rate
    return rates


def csfq_update_fair_share(state: CsfqState, now: int) -> float:
    """Close the K window if it has elapsed and recompute alpha."""
    elapsed = now - state.window_start
    if elapsed < state.window_ns:
        return state.fair_share
    aggregate = state.window_bits * NS_PER_SECOND / elapsed
    state.congested = aggregate > state.link_rate
    rates = list(current_rates(state, now).values())
    if state.congested:
        state.fair_share = solve_fair_share(rates, state.link_rate)
    else:
        state.fair_share = max(rates) if rates else math.inf
    state.window_start = now
    state.window_bits = 0
    return state.fair_share


class CsfqQueue:
    """CSFQ dropper in front of a FIFO that the link drains at `link_rate`."""

    def __init__(self, name: str, classify: Callable[[EthernetFrame], int], link_rate: int,
                 capacity_bytes: int, rng: np.random.Generator, window_ns: int = 100_000_000,
                 on_drop: DropHook | None = None):
        self.name = name
        self.classify = classify
        self.state = CsfqState(link_rate=float(link_rate), window_ns=window_ns)
        self.fifo = FrameQueue(capacity_bytes)
        self.rng = rng
        self.on_drop = on_drop
        self.counters = ElementCounters()
        self.flow_counters: dict[int, ElementCounters] = {}
        self._queued_flows: deque[int] = deque()  # flow id per FIFO entry
        self.classification_errors = 0
        self.early_drops = 0
        self.overflow_drops = 0

    def _drop(self, packet: Packet, flow: ElementCounters | None):
        self.counters.drop(packet.size)
        if flow is not None:
            flow.drop(packet.size)
        if self.on_drop is not None:
            self.on_drop(packet, self.name)

    def offer(self, packet: Packet, now: int) -> bool:
        size = packet.size
        self.counters.offer(size)
        try:
            flow_id = self.classify(packet.frame)
        except ClassificationError:
            if self.classification_errors == 0:
                logger.warning("%s: unclassifiable frame dropped", self.name)
            self.classification_errors += 1
            self._drop(packet, None)
            return False
        flow = self.flow_counters.setdefault(flow_id, ElementCounters())
        flow.offer(size)

        csfq_update_fair_share(self.state, now)
        self.state.window_bits += size * 8
        csfq_estimate_rate(self.state, flow_id, size * 8, now)
        if csfq_drop_decision(self.state, flow_id, self.rng):
            self.early_drops += 1
            self._drop(packet, flow)
            return False
        if not self.fifo.push(packet):
            self.overflow_drops += 1
            self._drop(packet, flow)
            return False
        self._queued_flows.append(flow_id)
        self.counters.accept(size)
        flow.accept(size)
        return True

    def dequeue(self, now: int) -> Dequeue:
        if not self.fifo:
            return IDLE
        packet = self.fifo.pop()
        size = packet.size
        self.counters.depart(size)
        self.flow_counters[self._queued_flows.popleft()].depart(size)
        return Dequeue(packet=packet)

    def queued_bytes(self) -> int:
        return self.fifo.bytes

    def counter_rows(self) -> list[tuple[str, ElementCounters]]:
        rows = [("", self.counters)]
        rows += [(str(fid), self.flow_counters[fid]) for fid in sorted(self.flow_counters)]
        return rows
