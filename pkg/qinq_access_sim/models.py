from dataclasses import dataclass, field
from enum import Enum

from .frames import EthernetFrame

# Core node names; ONU names must not take them.
OLT = "olt"
OLT_C = "olt_c"
SERVER = "server"
CORE_NODES = frozenset((OLT, OLT_C, SERVER))


class PlanKind(str, Enum):
    LEGACY = "legacy"
    SHARED = "shared"


class InnerScheduler(str, Enum):
    DRR = "drr"
    CSFQ = "csfq"


class SourceKind(str, Enum):
    CBR = "cbr"
    POISSON = "poisson"
    ONOFF = "onoff"


@dataclass(frozen=True)
class ServicePlan:
    kind: PlanKind
    token_rate: int  # bit/s
    bucket_size: int  # bits


@dataclass(frozen=True)
class SubscriberProfile:
    id: int  # C-VID
    plan: ServicePlan
    onu: str  # name of the ONU the subscriber's hosts attach to
    hosts: int = 1


@dataclass(frozen=True)
class HybridGroup:
    svid: int
    members: tuple[int, ...]
    scheduler: InnerScheduler = InnerScheduler.DRR
    tbf_rate: int | None = None  # None: sum of member token rates
    tbf_bucket: int | None = None  # None: sum of member bucket sizes
    csfq_window_ns: int = 100_000_000
    queue_frames: int = 100  # per-flow DRR queue / CSFQ FIFO depth in max frames


@dataclass(frozen=True)
class TopologySpec:
    access_rate: int = 1_000_000_000
    access_delay_ns: int = 0
    feeder_rate: int = 1_000_000_000
    feeder_delay_ns: int = 0
    inner_rate: int | None = None  # None: the group TBF rate
    inner_delay_ns: int = 0
    uplink_rate: int = 1_000_000_000
    uplink_delay_ns: int = 0
    aging_time_ns: int = 300 * 1_000_000_000
    tbf_queue_frames: int = 500
    port_queue_frames: int = 500


@dataclass(frozen=True)
class SourceSpec:
    name: str
    kind: SourceKind
    subscriber: int
    mean_rate: int  # bit/s
    frame_size: tuple[int, int] = (1500, 1500)  # untagged on-wire bytes, inclusive range
    mean_on_ns: int = 0
    mean_off_ns: int = 0
    start_ns: int = 0
    stop_ns: int | None = None  # None: end of run
    host: int = 0


@dataclass(frozen=True)
class RunSpec:
    duration_ns: int
    seed: int = 1
    warmup: float = 0.1
    sample_interval_ns: int = 1_000_000_000
    strict_ethernet: bool = False


@dataclass(frozen=True)
class OutputSpec:
    csv: str = "results.csv"
    trace: str | None = None  # "hex" | "pcap"


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologySpec
    subscribers: dict[int, SubscriberProfile]
    sources: tuple[SourceSpec, ...]
    run: RunSpec
    group: HybridGroup | None = None
    outputs: OutputSpec = field(default_factory=OutputSpec)

    def group_tbf(self) -> tuple[int, int] | None:
        """(rate, bucket) of the virtual subscriber's shaper after applying the sum policy."""
        if self.group is None:
            return None
        members = [self.subscribers[m].plan for m in self.group.members]
        rate = self.group.tbf_rate
        if rate is None:
            rate = sum(p.token_rate for p in members)
        bucket = self.group.tbf_bucket
        if bucket is None:
            bucket = sum(p.bucket_size for p in members)
        return rate, bucket


@dataclass(eq=False)
class Packet:
    """A frame in flight plus the bookkeeping the measurement pipeline needs."""
    frame: EthernetFrame
    subscriber: int | None
    created_ns: int | None
    offered_bytes: int = 0
    stamps: dict = field(default_factory=dict)  # node name -> transmit start (ns)

    @property
    def size(self) -> int:
        return self.frame.wire_length

    def copy(self) -> "Packet":
        return Packet(self.frame, self.subscriber, self.created_ns, self.offered_bytes, dict(self.stamps))
