"""Open-loop traffic sources: constant bit rate, Poisson and exponential on-off."""

import logging
from typing import Callable

import numpy as np

from .engine import NS_PER_SECOND, EventKind, Simulator
from .frames import ETHERTYPE_IPV4, FCS_BYTES, HEADER_BYTES, EthernetFrame, MacAddress
from .models import SourceKind, SourceSpec

logger = logging.getLogger(__name__)

MIN_SOURCE_FRAME = 64
MAX_SOURCE_FRAME = 1522


class TrafficSource:
    def __init__(self, spec: SourceSpec, rng: np.random.Generator, src: MacAddress,
                 dst: MacAddress, stop_ns: int):
        self.spec = spec
        self.rng = rng
        self.src = src
        self.dst = dst
        self.stop_ns = stop_ns if spec.stop_ns is None else min(spec.stop_ns, stop_ns)
        self.emitted = 0
        self._payloads: dict[int, bytes] = {}
        self._cursor = spec.start_ns
        # CBR spacing accumulates exactly as sum(bits) * 1e9 / rate
        self._origin = spec.start_ns
        self._acc = 0
        self._on_until = None
        if spec.kind is SourceKind.ONOFF:
            self._on_until = spec.start_ns + self._exp_ns(spec.mean_on_ns)

    def _exp_ns(self, mean_ns: int) -> int:
        if mean_ns <= 0:
            return 0
        return int(round(self.rng.exponential(mean_ns)))

    def _draw_size(self) -> int:
        lo, hi = self.spec.frame_size
        if lo == hi:
            return lo
        return int(self.rng.integers(lo, hi + 1))

    def _frame(self, size: int) -> EthernetFrame:
        payload = self._payloads.get(size)
        if payload is None:
            payload = self._payloads[size] = bytes(size - HEADER_BYTES - FCS_BYTES)
        return EthernetFrame(dst=self.dst, src=self.src, ethertype=ETHERTYPE_IPV4, payload=payload)

    def next_arrival(self, now: int) -> tuple[int, EthernetFrame] | None:
        """The next (time, frame) of this source, or None once it has stopped."""
        spec = self.spec
        size = self._draw_size()
        bits = size * 8
        when = max(self._cursor, now)

        if spec.kind is SourceKind.CBR:
            self._acc += bits * NS_PER_SECOND
            self._cursor = self._origin + self._acc // spec.mean_rate
        elif spec.kind is SourceKind.POISSON:
            self._cursor = when + self._exp_ns(bits * NS_PER_SECOND / spec.mean_rate)
        else:
            while when >= self._on_until:
                resume = self._on_until + self._exp_ns(spec.mean_off_ns)
                when = max(when, resume)
                self._on_until = resume + self._exp_ns(spec.mean_on_ns)
            # peak rate = mean * (on + off) / on
            on, off = spec.mean_on_ns, spec.mean_off_ns
            self._cursor = when + bits * NS_PER_SECOND * on // (spec.mean_rate * (on + off))

        if when >= self.stop_ns:
            return None
        self.emitted += 1
        return when, self._frame(size)

    def attach(self, sim: Simulator, emit: Callable[[EthernetFrame, int], None]):
        """Drive this source from the simulator clock, calling emit(frame, time) per arrival."""

        def schedule_next():
            nxt = self.next_arrival(sim.now)
            if nxt is None:
                return
            when, frame = nxt

            def fire():
                emit(frame, when)
                schedule_next()

            sim.schedule(when, fire, EventKind.ARRIVAL, self.spec.name)

        schedule_next()
