"""Token bucket filter (TBF) shaping with exact integer token arithmetic.

Tokens are held in nano-bits (bits x 1e9) so that refilling with
rate [bit/s] x elapsed [ns] never rounds.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

from .engine import NS_PER_SECOND
from .errors import SimulationOrderError
from .frames import MAX_CTAGGED_BYTES, MAX_FRAME_BYTES, MAX_STACKED_BYTES
from .models import Packet
from .queues import IDLE, Dequeue, DropHook, ElementCounters, FrameQueue

logger = logging.getLogger(__name__)

MAX_FRAME_BITS = MAX_FRAME_BYTES * 8
MAX_CTAGGED_BITS = MAX_CTAGGED_BYTES * 8
MAX_STACKED_BITS = MAX_STACKED_BYTES * 8


@dataclass(frozen=True)
class TokenBucketParams:
    rate: int  # bit/s
    bucket_size: int  # bits

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"Token rate must be positive, got {self.rate}")
        if self.bucket_size < MAX_FRAME_BITS:
            raise ValueError(
                f"Bucket size {self.bucket_size} bits is smaller than one maximum frame ({MAX_FRAME_BITS} bits)"
            )


@dataclass(frozen=True)
class TokenBucketState:
    scaled_tokens: int  # nano-bits
    last_update: int  # ns

    @classmethod
    def with_tokens(cls, bits: int | Fraction, now: int = 0) -> "TokenBucketState":
        return cls(scaled_tokens=int(Fraction(bits) * NS_PER_SECOND), last_update=now)

    @property
    def tokens(self) -> Fraction:
        return Fraction(self.scaled_tokens, NS_PER_SECOND)


def tbf_refill(state: TokenBucketState, params: TokenBucketParams, now: int) -> TokenBucketState:
    if now < state.last_update:
        raise SimulationOrderError(f"Token bucket refilled at {now} ns, before {state.last_update} ns")
    if now == state.last_update:
        return state
    cap = params.bucket_size * NS_PER_SECOND
    tokens = min(cap, state.scaled_tokens + params.rate * (now - state.last_update))
    return TokenBucketState(scaled_tokens=tokens, last_update=now)


class TbfShaper:
    """FIFO in front of a token bucket; frames leave in arrival order once they conform."""

    def __init__(self, name: str, params: TokenBucketParams, capacity_bytes: int,
                 now: int = 0, on_drop: DropHook | None = None):
        self.name = name
        self.params = params
        # start with a full bucket
        self.state = TokenBucketState.with_tokens(params.bucket_size, now)
        self.fifo = FrameQueue(capacity_bytes)
        self.counters = ElementCounters()
        self.on_drop = on_drop
        self.departures: list[tuple[int, int]] = []  # (time ns, bits)
        self.oversize = 0

    @property
    def drops(self) -> int:
        return self.counters.dropped_frames

    def _drop(self, packet: Packet):
        self.counters.drop(packet.size)
        if self.on_drop is not None:
            self.on_drop(packet, self.name)

    def offer(self, packet: Packet, now: int) -> bool:
        """tbf_offer: tail-drop admission into the shaper FIFO."""
        size = packet.size
        self.counters.offer(size)
        if size * 8 > self.params.bucket_size:
            # could never conform
            if self.oversize == 0:
                logger.warning("%s: dropping frame of %d bytes larger than the bucket", self.name, size)
            self.oversize += 1
            self._drop(packet)
            return False
        if not self.fifo.push(packet):
            self._drop(packet)
            return False
        self.counters.accept(size)
        return True

    def ready_at(self, now: int) -> int | None:
        """Time at which the head frame conforms (now or later), or None when empty."""
        head = self.fifo.head()
        if head is None:
            return None
        self.state = tbf_refill(self.state, self.params, now)
        needed = head.size * 8 * NS_PER_SECOND - self.state.scaled_tokens
        if needed <= 0:
            return now
        return now - (-needed // self.params.rate)

    def release(self, now: int) -> Packet:
        """Remove the conformant head frame and pay for it in tokens."""
        self.state = tbf_refill(self.state, self.params, now)
        packet = self.fifo.pop()
        bits = packet.size * 8
        scaled = bits * NS_PER_SECOND
        if scaled > self.state.scaled_tokens:
            raise SimulationOrderError(f"{self.name}: released a nonconformant frame at {now} ns")
        self.state = TokenBucketState(self.state.scaled_tokens - scaled, now)
        self.counters.depart(packet.size)
        self.departures.append((now, bits))
        return packet

    def next_departure(self, now: int) -> tuple[Packet | None, int] | None:
        """tbf_next_departure: (frame, now) when the head conforms, (None, departTime) otherwise, None when idle."""
        when = self.ready_at(now)
        if when is None:
            return None
        if when > now:
            return None, when
        return self.release(now), now

    def dequeue(self, now: int) -> Dequeue:
        result = self.next_departure(now)
        if result is None:
            return IDLE
        packet, when = result
        if packet is None:
            return Dequeue(wake_at=when)
        return Dequeue(packet=packet)

    def queued_bytes(self) -> int:
        return self.fifo.bytes

    def counter_rows(self) -> list[tuple[str, ElementCounters]]:
        return [("", self.counters)]
