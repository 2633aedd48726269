"""Frame queues, per-element counters and the pass-through egress element."""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Protocol

from .frames import MAX_FRAME_BYTES
from .models import Packet

logger = logging.getLogger(__name__)

DropHook = Callable[[Packet, str], None]


@dataclass
class ElementCounters:
    offered_frames: int = 0
    offered_bytes: int = 0
    accepted_frames: int = 0
    accepted_bytes: int = 0
    departed_frames: int = 0
    departed_bytes: int = 0
    dropped_frames: int = 0
    dropped_bytes: int = 0

    def offer(self, size: int):
        self.offered_frames += 1
        self.offered_bytes += size

    def accept(self, size: int):
        self.accepted_frames += 1
        self.accepted_bytes += size

    def depart(self, size: int):
        self.departed_frames += 1
        self.departed_bytes += size

    def drop(self, size: int):
        self.dropped_frames += 1
        self.dropped_bytes += size

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Dequeue:
    """Outcome of asking an element for its next frame.

    Exactly one of: `packet` to transmit now, `wake_at` when the element will
    have a conformant frame, or neither (idle).
    """
    packet: Packet | None = None
    wake_at: int | None = None


IDLE = Dequeue()


class TrafficControl(Protocol):
    name: str

    def offer(self, packet: Packet, now: int) -> bool: ...

    def dequeue(self, now: int) -> Dequeue: ...

    def queued_bytes(self) -> int: ...

    def counter_rows(self) -> list[tuple[str, ElementCounters]]: ...


def frames_to_bytes(frames: int) -> int:
    return frames * MAX_FRAME_BYTES


class FrameQueue:
    """FIFO bounded by total bytes, tail drop."""

    def __init__(self, capacity_bytes: int):
        self.capacity_bytes = capacity_bytes
        self.bytes = 0
        self._items: deque[Packet] = deque()

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def fits(self, size: int) -> bool:
        return self.bytes + size <= self.capacity_bytes

    def push(self, packet: Packet) -> bool:
        size = packet.size
        if not self.fits(size):
            return False
        self._items.append(packet)
        self.bytes += size
        return True

    def head(self) -> Packet | None:
        return self._items[0] if self._items else None

    def pop(self) -> Packet:
        packet = self._items.popleft()
        self.bytes -= packet.size
        return packet


class FifoQueue:
    """Pass-through traffic control: a plain tail-drop FIFO in front of the link."""

    def __init__(self, name: str, capacity_bytes: int, on_drop: DropHook | None = None):
        self.name = name
        self.fifo = FrameQueue(capacity_bytes)
        self.counters = ElementCounters()
        self.on_drop = on_drop

    def offer(self, packet: Packet, now: int) -> bool:
        size = packet.size
        self.counters.offer(size)
        if not self.fifo.push(packet):
            self.counters.drop(size)
            if self.on_drop is not None:
                self.on_drop(packet, self.name)
            return False
        self.counters.accept(size)
        return True

    def dequeue(self, now: int) -> Dequeue:
        if not self.fifo:
            return IDLE
        packet = self.fifo.pop()
        self.counters.depart(packet.size)
        return Dequeue(packet=packet)

    def queued_bytes(self) -> int:
        return self.fifo.bytes

    def counter_rows(self) -> list[tuple[str, ElementCounters]]:
        return [("", self.counters)]
