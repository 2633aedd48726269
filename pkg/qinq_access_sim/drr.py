"""Deficit round-robin over per-C-VID queues, quanta proportional to token rates."""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import ClassificationError, ConfigError
from .frames import MAX_FRAME_BYTES, EthernetFrame
from .models import Packet
from .queues import IDLE, Dequeue, DropHook, ElementCounters, FrameQueue

logger = logging.getLogger(__name__)


@dataclass
class DrrFlow:
    flow_id: int
    token_rate: int  # bit/s
    queue: FrameQueue
    quantum: int = 0  # bytes per round
    deficit: int = 0
    counters: ElementCounters = field(default_factory=ElementCounters)


def drr_set_quanta(flows: Iterable[DrrFlow], max_frame: int = MAX_FRAME_BYTES) -> list[DrrFlow]:
    """quantum_i = max_frame * rate_i / min(rate), rounded up to whole bytes."""
    flows = list(flows)
    for flow in flows:
        if flow.token_rate <= 0:
            raise ConfigError(f"subscribers.{flow.flow_id}.rate", "token rate must be positive")
    if not flows:
        return flows
    min_rate = min(f.token_rate for f in flows)
    for flow in flows:
        flow.quantum = -(-max_frame * flow.token_rate // min_rate)
    return flows


class DrrScheduler:
    def __init__(self, name: str, classify: Callable[[EthernetFrame], int],
                 on_drop: DropHook | None = None, max_frame: int = MAX_FRAME_BYTES):
        self.name = name
        self.classify = classify
        self.on_drop = on_drop
        self.max_frame = max_frame
        self.flows: dict[int, DrrFlow] = {}
        self.counters = ElementCounters()
        self.classification_errors = 0
        self._active: deque[int] = deque()
        # whether the flow at the head of the round already got its quantum this visit
        self._granted = False

    def register(self, flow_id: int, token_rate: int, capacity_bytes: int) -> DrrFlow:
        flow = DrrFlow(flow_id=flow_id, token_rate=token_rate, queue=FrameQueue(capacity_bytes))
        self.flows[flow_id] = flow
        drr_set_quanta(self.flows.values(), self.max_frame)
        return flow

    def _drop(self, packet: Packet, flow: DrrFlow | None):
        size = packet.size
        self.counters.drop(size)
        if flow is not None:
            flow.counters.drop(size)
        if self.on_drop is not None:
            self.on_drop(packet, self.name)

    def enqueue(self, flow_id: int, packet: Packet) -> bool:
        flow = self.flows.get(flow_id)
        size = packet.size
        if flow is None:
            self.counters.offer(size)
            if self.classification_errors == 0:
                logger.warning("%s: frame for unregistered flow %s", self.name, flow_id)
            self.classification_errors += 1
            self._drop(packet, None)
            return False
        self.counters.offer(size)
        flow.counters.offer(size)
        was_idle = not flow.queue
        if not flow.queue.push(packet):
            self._drop(packet, flow)
            return False
        self.counters.accept(size)
        flow.counters.accept(size)
        if was_idle:
            self._active.append(flow_id)
        return True

    def offer(self, packet: Packet, now: int) -> bool:
        try:
            flow_id = self.classify(packet.frame)
        except ClassificationError:
            flow_id = None
        return self.enqueue(flow_id, packet)

    def next_frame(self) -> Packet | None:
        """drr_dequeue: the next frame in deficit round-robin order, or None when all queues are empty."""
        while self._active:
            flow = self.flows[self._active[0]]
            if not self._granted:
                flow.deficit += flow.quantum
                self._granted = True
            size = flow.queue.head().size
            if size <= flow.deficit:
                packet = flow.queue.pop()
                flow.deficit -= size
                if not flow.queue:
                    flow.deficit = 0
                    self._active.popleft()
                    self._granted = False
                flow.counters.depart(size)
                self.counters.depart(size)
                return packet
            self._active.rotate(-1)
            self._granted = False
        return None

    def dequeue(self, now: int) -> Dequeue:
        packet = self.next_frame()
        return IDLE if packet is None else Dequeue(packet=packet)

    def queued_bytes(self) -> int:
        return sum(f.queue.bytes for f in self.flows.values())

    def counter_rows(self) -> list[tuple[str, ElementCounters]]:
        rows = [("", self.counters)]
        rows += [(str(fid), self.flows[fid].counters) for fid in sorted(self.flows)]
        return rows
