"""Deterministic discrete-event core on top of simpy, with integer-nanosecond time."""

import logging
import math
import zlib
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np
import simpy
from simpy.events import Event as SimpyEvent

from .errors import SimulationOrderError

logger = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000


class EventKind(IntEnum):
    # Value is the simpy priority: at equal timestamps arrivals run first.
    ARRIVAL = 0
    DEPARTURE = 1
    TIMER = 2


@dataclass(frozen=True)
class Event:
    time: int
    seq: int
    target: str
    kind: EventKind


class _Scheduled(SimpyEvent):
    """A pre-triggered simpy event, scheduled like simpy's own Timeout but with a chosen priority."""

    def __init__(self, env: simpy.Environment, delay: int, priority: int, fire: Callable[[SimpyEvent], None]):
        super().__init__(env)
        self._ok = True
        self._value = None
        self.callbacks.append(fire)
        env.schedule(self, priority, delay)


class Simulator:
    def __init__(self, record: bool = False):
        self.env = simpy.Environment(initial_time=0)
        self._seq = 0
        self._pending = 0
        self.journal: list[Event] | None = [] if record else None

    @property
    def now(self) -> int:
        return int(self.env.now)

    def schedule(self, time: int, action: Callable[[], None],
                 kind: EventKind = EventKind.TIMER, target: str = "") -> Event:
        if time < self.now:
            raise SimulationOrderError(
                f"Event for {target or 'anonymous'} at {time} ns is before the clock ({self.now} ns)"
            )
        record = Event(time=time, seq=self._seq, target=target, kind=kind)
        self._seq += 1
        self._pending += 1

        def fire(_event):
            self._pending -= 1
            if self.journal is not None:
                self.journal.append(record)
            action()

        _Scheduled(self.env, time - self.now, int(kind), fire)
        return record

    def pending(self) -> int:
        return self._pending

    def run(self, until: int | None = None) -> int:
        """Execute events in (time, kind, seq) order while their time is <= `until`."""
        limit = math.inf if until is None else until
        while (upcoming := self.env.peek()) != math.inf and upcoming <= limit:
            self.env.step()
        return self.now


class RngStreams:
    """Independent random streams split from one master seed.

    Each stream is a Philox generator keyed by (seed, stream id), so adding a
    stream never changes the draws of another one.
    """

    def __init__(self, seed: int):
        self.seed = seed

    @staticmethod
    def stream_id(name: str) -> int:
        return zlib.crc32(name.encode("utf-8"))

    def stream(self, key: int | str) -> np.random.Generator:
        stream_id = self.stream_id(key) if isinstance(key, str) else key
        seq = np.random.SeedSequence(self.seed, spawn_key=(stream_id,))
        return np.random.Generator(np.random.Philox(seq))


def seconds_to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_SECOND)


def transmission_ns(bits: int, rate: int) -> int:
    """Serialization time of `bits` at `rate` bit/s, rounded up to the next nanosecond."""
    return -(-bits * NS_PER_SECOND // rate)
