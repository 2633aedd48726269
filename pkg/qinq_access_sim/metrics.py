"""Per-subscriber measurement: offered/delivered/dropped accounting, delays, throughput series,
summary rows and TBF conformance verdicts."""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .engine import NS_PER_SECOND
from .errors import AccountingError
from .models import Packet
from .token_bucket import MAX_FRAME_BITS, TbfShaper, TokenBucketParams

logger = logging.getLogger(__name__)

CSV_FIELDS = [
    "subscriber", "plan", "offered_bytes", "delivered_bytes", "dropped_bytes",
    "goodput_bps", "mean_delay_ns", "p95_delay_ns", "p99_delay_ns", "drop_ratio",
]


@dataclass
class FlowStats:
    subscriber: int
    plan: str
    offered_frames: int = 0
    offered_bytes: int = 0
    delivered_frames: int = 0
    delivered_bytes: int = 0
    dropped_frames: int = 0
    dropped_bytes: int = 0
    measured_bytes: int = 0  # delivered after warm-up
    delays: list[int] = field(default_factory=list)  # ns, deliveries after warm-up
    windows: Counter = field(default_factory=Counter)  # window index -> delivered bits


def record_delivery(stats: FlowStats, packet: Packet, now: int,
                    warmup_ns: int = 0, window_ns: int | None = None) -> FlowStats:
    if packet.created_ns is None:
        raise AccountingError(f"Delivered frame of subscriber {stats.subscriber} has no injection timestamp")
    size = packet.offered_bytes
    stats.delivered_frames += 1
    stats.delivered_bytes += size
    if window_ns:
        stats.windows[now // window_ns] += size * 8
    if now >= warmup_ns:
        stats.measured_bytes += size
        stats.delays.append(now - packet.created_ns)
    return stats


def record_drop(stats: FlowStats, packet: Packet) -> FlowStats:
    stats.dropped_frames += 1
    stats.dropped_bytes += packet.offered_bytes
    return stats


class MetricsCollector:
    def __init__(self, plans: dict[int, str], duration_ns: int, warmup: float = 0.1,
                 window_ns: int = NS_PER_SECOND):
        self.duration_ns = duration_ns
        self.warmup_ns = int(duration_ns * warmup)
        self.window_ns = window_ns
        self.stats = {sub: FlowStats(subscriber=sub, plan=plan) for sub, plan in sorted(plans.items())}
        self.drop_sites: Counter = Counter()

    @property
    def measure_ns(self) -> int:
        return self.duration_ns - self.warmup_ns

    def offer(self, packet: Packet):
        stats = self.stats.get(packet.subscriber)
        if stats is not None:
            stats.offered_frames += 1
            stats.offered_bytes += packet.offered_bytes

    def deliver(self, packet: Packet, now: int):
        stats = self.stats.get(packet.subscriber)
        if stats is not None:
            record_delivery(stats, packet, now, self.warmup_ns, self.window_ns)

    def drop(self, packet: Packet, where: str):
        self.drop_sites[where] += 1
        stats = self.stats.get(packet.subscriber)
        if stats is not None:
            record_drop(stats, packet)

    def series(self, subscriber: int) -> np.ndarray:
        """Delivered bit/s per window over the whole run."""
        count = -(-self.duration_ns // self.window_ns)
        out = np.zeros(count, dtype=float)
        for idx, bits in self.stats[subscriber].windows.items():
            if idx < count:
                out[idx] = bits
        return out * NS_PER_SECOND / self.window_ns


def percentile(samples, p: float) -> int:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest sample."""
    if len(samples) == 0:
        return 0
    return int(np.percentile(np.asarray(samples), p, method="inverted_cdf"))


@dataclass(frozen=True)
class ReportRow:
    subscriber: int
    plan: str
    offered_bytes: int
    delivered_bytes: int
    dropped_bytes: int
    goodput_bps: int
    mean_delay_ns: int
    p95_delay_ns: int
    p99_delay_ns: int
    drop_ratio: float

    def as_csv(self) -> list[str]:
        return [
            str(self.subscriber), self.plan, str(self.offered_bytes), str(self.delivered_bytes),
            str(self.dropped_bytes), str(self.goodput_bps), str(self.mean_delay_ns),
            str(self.p95_delay_ns), str(self.p99_delay_ns), f"{self.drop_ratio:.6f}",
        ]

    @classmethod
    def from_csv(cls, record: dict) -> "ReportRow":
        return cls(
            subscriber=int(record["subscriber"]),
            plan=record["plan"],
            offered_bytes=int(record["offered_bytes"]),
            delivered_bytes=int(record["delivered_bytes"]),
            dropped_bytes=int(record["dropped_bytes"]),
            goodput_bps=int(record["goodput_bps"]),
            mean_delay_ns=int(record["mean_delay_ns"]),
            p95_delay_ns=int(record["p95_delay_ns"]),
            p99_delay_ns=int(record["p99_delay_ns"]),
            drop_ratio=float(record["drop_ratio"]),
        )


@dataclass(frozen=True)
class ConformanceVerdict:
    element: str
    rate: int
    bucket_size: int
    departures: int
    worst_excess_bits: float  # max over intervals of departed - (b + r*dt); <= slack passes
    passed: bool


def check_conformance(departures: list[tuple[int, int]], params: TokenBucketParams,
                      slack_bits: int = MAX_FRAME_BITS) -> tuple[bool, float]:
    """Exact check of departed bits <= b + r*dt + slack over every interval [t_i, t_j].

    With prefix sums P, the bound reads (P_j - r t_j) - (P_{i-1} - r t_i) <= b + slack,
    so one pass tracking the running minimum of the second term covers all pairs.
    """
    if not departures:
        return True, float(-params.bucket_size)
    rate = params.rate
    prefix = 0  # nano-bits departed before the current event
    low = None
    worst = None
    for time_ns, bits in departures:
        start_term = prefix - rate * time_ns
        low = start_term if low is None else min(low, start_term)
        prefix += bits * NS_PER_SECOND
        excess = (prefix - rate * time_ns) - low
        worst = excess if worst is None else max(worst, excess)
    limit = (params.bucket_size + slack_bits) * NS_PER_SECOND
    return worst <= limit, worst / NS_PER_SECOND - params.bucket_size


def conformance_verdict(shaper: TbfShaper, slack_bits: int = MAX_FRAME_BITS) -> ConformanceVerdict:
    passed, worst = check_conformance(shaper.departures, shaper.params, slack_bits)
    return ConformanceVerdict(
        element=shaper.name,
        rate=shaper.params.rate,
        bucket_size=shaper.params.bucket_size,
        departures=len(shaper.departures),
        worst_excess_bits=worst,
        passed=passed,
    )


@dataclass
class Summary:
    rows: list[ReportRow]
    conformance: list[ConformanceVerdict]

    @property
    def all_conformant(self) -> bool:
        return all(v.passed for v in self.conformance)


def summarize(stats: Iterable[FlowStats], measure_ns: int,
              shapers: Iterable[TbfShaper] = ()) -> Summary:
    rows = []
    for s in sorted(stats, key=lambda s: s.subscriber):
        delays = np.asarray(s.delays, dtype=np.int64)
        goodput = s.measured_bytes * 8 * NS_PER_SECOND / measure_ns if measure_ns > 0 else 0.0
        rows.append(ReportRow(
            subscriber=s.subscriber,
            plan=s.plan,
            offered_bytes=s.offered_bytes,
            delivered_bytes=s.delivered_bytes,
            dropped_bytes=s.dropped_bytes,
            goodput_bps=round(goodput),
            mean_delay_ns=round(float(delays.mean())) if delays.size else 0,
            p95_delay_ns=percentile(delays, 95),
            p99_delay_ns=percentile(delays, 99),
            drop_ratio=s.dropped_bytes / s.offered_bytes if s.offered_bytes else 0.0,
        ))
    return Summary(rows=rows, conformance=[conformance_verdict(sh) for sh in shapers])
