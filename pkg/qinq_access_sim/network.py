"""The access network: hosts and ONUs, the per-C-VID stage `olt_c`, the grouping and
shaping stage `olt`, and the service-network server behind the shared uplink.

Controlled direction is subscriber hosts -> server. Every egress port is a
Transmitter: one traffic-control element drained onto a link of fixed rate
and propagation delay.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import validate_config
from .csfq import CsfqQueue
from .drr import DrrScheduler
from .engine import EventKind, RngStreams, Simulator, transmission_ns
from .errors import ClassificationError
from .frames import MAX_STACKED_BYTES, TPID_CTAG, TPID_STAG, EthernetFrame, MacAddress, outer_vid
from .metrics import MetricsCollector, Summary, summarize
from .models import OLT, OLT_C, SERVER, InnerScheduler, Packet, PlanKind, ScenarioConfig
from .queues import IDLE, Dequeue, DropHook, ElementCounters, FifoQueue, TrafficControl, frames_to_bytes
from .switch import NodeCounters, PortRole, SwitchNode
from .token_bucket import TbfShaper, TokenBucketParams
from .traffic import TrafficSource

logger = logging.getLogger(__name__)

SERVER_MAC = MacAddress.from_int(0x02FF00000001)
UPLINK_QUANTUM = MAX_STACKED_BYTES

# (time_ns, node, port, "TX" | "RX", packet)
Observer = Callable[[int, str, int, str, Packet], None]


def host_mac(subscriber: int, index: int) -> MacAddress:
    return MacAddress.from_int(0x020000000000 | subscriber << 8 | (index + 1))


def host_name(subscriber: int, index: int) -> str:
    return f"host{subscriber}-{index}"


class Transmitter:
    """Egress side of a port: element -> serialization -> propagation -> peer."""

    def __init__(self, sim: Simulator, node: str, port: int, element: TrafficControl, rate: int,
                 delay_ns: int, deliver: Callable[[Packet], None], observe: Observer | None = None):
        self.sim = sim
        self.node = node
        self.port = port
        self.element = element
        self.rate = rate
        self.delay_ns = delay_ns
        self.deliver = deliver
        self.observe = observe
        self.busy = False
        self.transmitted_bytes = 0
        self._wake_at: int | None = None
        self._target = f"{node}:{port}"

    def send(self, packet: Packet):
        self.element.offer(packet, self.sim.now)
        self._kick()

    def _kick(self):
        if self.busy:
            return
        now = self.sim.now
        result = self.element.dequeue(now)
        if result.packet is not None:
            packet = result.packet
            self.busy = True
            packet.stamps[self.node] = now
            if self.observe is not None:
                self.observe(now, self.node, self.port, "TX", packet)
            done = now + transmission_ns(packet.size * 8, self.rate)
            self.transmitted_bytes += packet.size
            self.sim.schedule(done, self._done, EventKind.DEPARTURE, self._target)
            self.sim.schedule(done + self.delay_ns, lambda: self.deliver(packet), EventKind.ARRIVAL, self._target)
        elif result.wake_at is not None and (self._wake_at is None or result.wake_at < self._wake_at):
            self._wake_at = result.wake_at
            self.sim.schedule(result.wake_at, self._wake, EventKind.TIMER, self._target)

    def _done(self):
        self.busy = False
        self._kick()

    def _wake(self):
        if self._wake_at is not None and self.sim.now >= self._wake_at:
            self._wake_at = None
        self._kick()


class Endpoint:
    """A host or the server: sends through one uplink, accepts frames for its own MAC."""

    def __init__(self, name: str, mac: MacAddress, keep: bool = True):
        self.name = name
        self.mac = mac
        self.keep = keep
        self.uplink: Transmitter | None = None
        self.on_receive: Callable[[Packet, int], None] | None = None
        self.received: list[Packet] = []
        self.frames = 0
        self.unsolicited = 0

    def send(self, packet: Packet):
        self.uplink.send(packet)

    def receive(self, packet: Packet, now: int):
        dst = packet.frame.dst
        if dst != self.mac and not dst.is_multicast:
            self.unsolicited += 1
            return
        self.frames += 1
        if self.keep:
            self.received.append(packet)
        if self.on_receive is not None:
            self.on_receive(packet, now)


class CvidClassifier:
    """Flow id at olt_c: the C-VID of a single-tagged frame from a group member."""

    def __init__(self, members):
        self.members = frozenset(members)
        self.anomalies = 0

    def __call__(self, frame: EthernetFrame) -> int:
        if not frame.tags:
            raise ClassificationError("untagged frame at olt_c")
        if len(frame.tags) > 1:
            # not expected before grouping; fall back to the outermost tag
            self.anomalies += 1
        vid = frame.tags[0].vid
        if vid not in self.members:
            raise ClassificationError(f"unknown C-VID {vid}")
        return vid


class ShapedUplink:
    """One TBF per outer VID on the uplink; byte-weighted round robin among the
    shapers whose head frame conforms now."""

    def __init__(self, name: str, on_drop: DropHook | None = None, quantum: int = UPLINK_QUANTUM):
        self.name = name
        self.on_drop = on_drop
        self.quantum = quantum
        self.shapers: dict[int, TbfShaper] = {}
        self.counters = ElementCounters()
        self.classification_errors = 0
        self._order: list[int] = []
        self._deficit: dict[int, int] = {}
        self._turn = 0

    def add_shaper(self, vid: int, params: TokenBucketParams, capacity_bytes: int, label: str) -> TbfShaper:
        shaper = TbfShaper(f"{self.name}:{label}", params, capacity_bytes, on_drop=self.on_drop)
        self.shapers[vid] = shaper
        self._order.append(vid)
        self._deficit[vid] = 0
        return shaper

    def offer(self, packet: Packet, now: int) -> bool:
        size = packet.size
        self.counters.offer(size)
        shaper = self.shapers.get(outer_vid(packet.frame))
        if shaper is None:
            if self.classification_errors == 0:
                logger.warning("%s: frame without a shaper (outer VID %s)", self.name, outer_vid(packet.frame))
            self.classification_errors += 1
            self.counters.drop(size)
            if self.on_drop is not None:
                self.on_drop(packet, self.name)
            return False
        if not shaper.offer(packet, now):
            self.counters.drop(size)
            return False
        self.counters.accept(size)
        return True

    def _advance(self):
        self._turn = (self._turn + 1) % len(self._order)

    def dequeue(self, now: int) -> Dequeue:
        earliest = None
        for _ in range(len(self._order)):
            vid = self._order[self._turn]
            shaper = self.shapers[vid]
            when = shaper.ready_at(now)
            if when is None or when > now:
                self._deficit[vid] = 0
                if when is not None:
                    earliest = when if earliest is None else min(earliest, when)
                self._advance()
                continue
            size = shaper.fifo.head().size
            if self._deficit[vid] < size:
                self._deficit[vid] += self.quantum
            packet = shaper.release(now)
            self._deficit[vid] -= size
            following = shaper.fifo.head()
            if following is None:
                self._deficit[vid] = 0
                self._advance()
            elif following.size > self._deficit[vid]:
                self._advance()
            self.counters.depart(size)
            return Dequeue(packet=packet)
        return IDLE if earliest is None else Dequeue(wake_at=earliest)

    def queued_bytes(self) -> int:
        return sum(s.queued_bytes() for s in self.shapers.values())

    def counter_rows(self) -> list[tuple[str, ElementCounters]]:
        rows = [("", self.counters)]
        rows += [(str(vid), self.shapers[vid].counters) for vid in sorted(self.shapers)]
        return rows


@dataclass
class StageAudit:
    """Checks every subscriber frame leaving the olt uplink against its expected tag stack and stage order."""
    svid: int | None
    members: frozenset
    shared_frames: int = 0
    legacy_frames: int = 0
    violations: int = 0

    def __call__(self, packet: Packet, now: int):
        if packet.subscriber is None:
            return
        tags = packet.frame.tags
        if packet.subscriber in self.members:
            self.shared_frames += 1
            inner_stamp = packet.stamps.get(OLT_C)
            ok = (
                len(tags) == 2
                and tags[0].tpid == TPID_STAG and tags[0].vid == self.svid
                and tags[1].tpid == TPID_CTAG and tags[1].vid == packet.subscriber
                and inner_stamp is not None and inner_stamp <= packet.stamps.get(OLT, now)
            )
        else:
            self.legacy_frames += 1
            ok = (len(tags) == 1 and tags[0].tpid == TPID_CTAG and tags[0].vid == packet.subscriber
                  and OLT_C not in packet.stamps)
        if not ok:
            if self.violations == 0:
                logger.warning("Stage audit: subscriber %s frame left the uplink with tags %s",
                               packet.subscriber, [(hex(t.tpid), t.vid) for t in tags])
            self.violations += 1

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass(frozen=True)
class CounterSample:
    time_ns: int
    element: str
    flow: str
    counters: dict
    queued_bytes: int | None = None


@dataclass
class RunReport:
    summary: Summary
    audit: StageAudit
    samples: list[CounterSample]
    fdb: dict[str, list[tuple[int, str, int, int]]]
    series: dict[int, np.ndarray]
    node_counters: dict[str, NodeCounters]
    drop_sites: dict[str, int]
    end_ns: int
    residual_bytes: int
    classifier_anomalies: int = 0
    unsolicited_frames: int = 0


class AccessNetwork:
    def __init__(self, config: ScenarioConfig, observers: list[Observer] | tuple = ()):
        self.config = config
        self.observers = list(observers)
        self.sim = Simulator()
        self.rng = RngStreams(config.run.seed)
        run = config.run
        plans = {vid: sub.plan.kind.value for vid, sub in config.subscribers.items()}
        self.metrics = MetricsCollector(plans, run.duration_ns, run.warmup, run.sample_interval_ns)
        self.nodes: dict[str, SwitchNode] = {}
        self.transmitters: dict[tuple[str, int], Transmitter] = {}
        self.hosts: dict[tuple[int, int], Endpoint] = {}
        self.server = Endpoint(SERVER, SERVER_MAC, keep=False)
        self.server.on_receive = self.metrics.deliver
        self.sources: list[TrafficSource] = []
        self.classifier: CvidClassifier | None = None
        self.inner: TrafficControl | None = None
        self.uplink: ShapedUplink | None = None
        self.uplink_port = 0
        self.samples: list[CounterSample] = []
        group = config.group
        self.audit = StageAudit(svid=group.svid if group else None,
                                members=frozenset(group.members if group else ()))
        self._build()

    def _drop(self, packet: Packet, where: str):
        self.metrics.drop(packet, where)

    def _observe(self, time_ns: int, node: str, port: int, direction: str, packet: Packet):
        if node == OLT and port == self.uplink_port and direction == "TX":
            self.audit(packet, time_ns)
        for observer in self.observers:
            observer(time_ns, node, port, direction, packet)

    def _node(self, name: str) -> SwitchNode:
        node = SwitchNode(name, self.config.topology.aging_time_ns)
        node.on_drop = self._drop
        self.nodes[name] = node
        return node

    def _fifo(self, name: str) -> FifoQueue:
        return FifoQueue(name, frames_to_bytes(self.config.topology.port_queue_frames), on_drop=self._drop)

    def _into_node(self, node: str, port: int) -> Callable[[Packet], None]:
        def deliver(packet: Packet):
            now = self.sim.now
            self._observe(now, node, port, "RX", packet)
            self.nodes[node].receive(packet, port, now)
        return deliver

    def _into_endpoint(self, endpoint: Endpoint) -> Callable[[Packet], None]:
        def deliver(packet: Packet):
            now = self.sim.now
            self._observe(now, endpoint.name, 0, "RX", packet)
            endpoint.receive(packet, now)
        return deliver

    def _transmitter(self, node: str, port: int, element: TrafficControl, rate: int, delay_ns: int,
                     deliver: Callable[[Packet], None]) -> Transmitter:
        tx = Transmitter(self.sim, node, port, element, rate, delay_ns, deliver, self._observe)
        self.transmitters[(node, port)] = tx
        return tx

    def _port(self, node: str, role: PortRole, element: TrafficControl, rate: int, delay_ns: int,
              deliver: Callable[[Packet], None]) -> int:
        switch = self.nodes[node]
        index = switch.add_port(role, element)
        tx = self._transmitter(node, index, element, rate, delay_ns, deliver)
        switch.ports[index].send = tx.send
        return index

    def _trunk_pair(self, lower: str, upper: str, vids, rate: int, delay_ns: int,
                    upper_role: PortRole, upper_element: TrafficControl | None = None,
                    lower_element: TrafficControl | None = None) -> tuple[int, int]:
        """Link `lower`'s upstream trunk port to a new port on `upper`; returns (lower port, upper port)."""
        lower_port = len(self.nodes[lower].ports)
        upper_port = len(self.nodes[upper].ports)
        self._port(upper, upper_role, upper_element or self._fifo(f"{upper}:{upper_port}"),
                   rate, delay_ns, self._into_node(lower, lower_port))
        self._port(lower, PortRole.trunk(vids), lower_element or self._fifo(f"{lower}:{lower_port}"),
                   rate, delay_ns, self._into_node(upper, upper_port))
        return lower_port, upper_port

    def _build(self):
        config = self.config
        topo = config.topology
        group = config.group
        subs = config.subscribers
        legacy = sorted(v for v, s in subs.items() if s.plan.kind is PlanKind.LEGACY)
        tbf_bytes = frames_to_bytes(topo.tbf_queue_frames)

        olt = self._node(OLT)
        self.uplink = ShapedUplink(f"{OLT}:uplink", on_drop=self._drop)
        for vid in legacy:
            plan = subs[vid].plan
            self.uplink.add_shaper(vid, TokenBucketParams(plan.token_rate, plan.bucket_size), tbf_bytes, f"tbf{vid}")
        uplink_vids = list(legacy)
        if group is not None:
            rate, bucket = config.group_tbf()
            self.uplink.add_shaper(group.svid, TokenBucketParams(rate, bucket), tbf_bytes, f"group{group.svid}")
            uplink_vids.append(group.svid)
        self.uplink_port = self._port(OLT, PortRole.trunk(uplink_vids), self.uplink, topo.uplink_rate,
                                      topo.uplink_delay_ns, self._into_endpoint(self.server))
        self.server.uplink = self._transmitter(SERVER, 0, self._fifo(f"{SERVER}:0"), topo.uplink_rate,
                                               topo.uplink_delay_ns, self._into_node(OLT, self.uplink_port))
        for vid in uplink_vids:
            olt.fdb.add_static(vid, SERVER_MAC, self.uplink_port)

        if group is not None:
            inner_c = self._node(OLT_C)
            self.classifier = CvidClassifier(group.members)
            inner_rate = topo.inner_rate or config.group_tbf()[0]
            self.inner = self._inner_scheduler(inner_rate)
            up_port, _ = self._trunk_pair(
                OLT_C, OLT, group.members, inner_rate, topo.inner_delay_ns,
                upper_role=PortRole.strunk(group.svid, group.members), lower_element=self.inner,
            )
            for vid in group.members:
                inner_c.fdb.add_static(vid, SERVER_MAC, up_port)

        onus: dict[str, list[int]] = defaultdict(list)
        for vid in sorted(subs):
            onus[subs[vid].onu].append(vid)
        for onu_name in sorted(onus, key=lambda n: onus[n][0]):
            vids = onus[onu_name]
            parent = OLT_C if subs[vids[0]].plan.kind is PlanKind.SHARED else OLT
            onu = self._node(onu_name)
            up_port, _ = self._trunk_pair(onu_name, parent, vids, topo.feeder_rate, topo.feeder_delay_ns,
                                          upper_role=PortRole.trunk(vids))
            for vid in vids:
                onu.fdb.add_static(vid, SERVER_MAC, up_port)
                for k in range(subs[vid].hosts):
                    self._attach_host(onu_name, vid, k)

        run = config.run
        for spec in config.sources:
            host = self.hosts[(spec.subscriber, spec.host)]
            source = TrafficSource(spec, self.rng.stream(spec.name), host.mac, SERVER_MAC, run.duration_ns)
            source.attach(self.sim, self._emitter(host, spec.subscriber))
            self.sources.append(source)
        logger.debug("Built %d nodes, %d transmitters, %d sources",
                     len(self.nodes), len(self.transmitters), len(self.sources))

    def _inner_scheduler(self, link_rate: int) -> TrafficControl:
        group = self.config.group
        name = f"{OLT_C}:inner"
        if group.scheduler is InnerScheduler.CSFQ:
            return CsfqQueue(
                name, self.classifier, link_rate,
                capacity_bytes=frames_to_bytes(group.queue_frames * len(group.members)),
                rng=self.rng.stream(f"{name}:csfq"), window_ns=group.csfq_window_ns, on_drop=self._drop,
            )
        drr = DrrScheduler(name, self.classifier, on_drop=self._drop)
        for vid in group.members:
            drr.register(vid, self.config.subscribers[vid].plan.token_rate, frames_to_bytes(group.queue_frames))
        return drr

    def _attach_host(self, onu_name: str, vid: int, index: int):
        topo = self.config.topology
        host = Endpoint(host_name(vid, index), host_mac(vid, index))
        self.hosts[(vid, index)] = host
        port = self._port(onu_name, PortRole.access(vid), self._fifo(f"{onu_name}:{len(self.nodes[onu_name].ports)}"),
                          topo.access_rate, topo.access_delay_ns, self._into_endpoint(host))
        host.uplink = self._transmitter(host.name, 0, self._fifo(f"{host.name}:0"), topo.access_rate,
                                        topo.access_delay_ns, self._into_node(onu_name, port))

    def _emitter(self, host: Endpoint, subscriber: int) -> Callable[[EthernetFrame, int], None]:
        def emit(frame: EthernetFrame, when: int):
            self.inject(host, frame, subscriber, when)
        return emit

    def inject(self, host: Endpoint, frame: EthernetFrame, subscriber: int | None, now: int | None = None) -> Packet:
        now = self.sim.now if now is None else now
        packet = Packet(frame=frame, subscriber=subscriber, created_ns=now, offered_bytes=frame.wire_length)
        self.metrics.offer(packet)
        host.send(packet)
        return packet

    def elements(self) -> list[tuple[str, TrafficControl]]:
        return [(f"{node}:{port}", tx.element) for (node, port), tx in self.transmitters.items()]

    def _sample(self):
        now = self.sim.now
        for label, element in self.elements():
            for flow, counters in element.counter_rows():
                queued = element.queued_bytes() if flow == "" else None
                self.samples.append(CounterSample(now, label, flow, counters.as_dict(), queued))

    def _schedule_samples(self):
        run = self.config.run
        times = list(range(run.sample_interval_ns, run.duration_ns + 1, run.sample_interval_ns))
        if not times or times[-1] != run.duration_ns:
            times.append(run.duration_ns)
        for t in times:
            self.sim.schedule(t, self._sample, EventKind.TIMER, "sampler")

    def residual_bytes(self) -> int:
        """Bytes still queued in any element."""
        return sum(element.queued_bytes() for _, element in self.elements())

    def run(self) -> RunReport:
        duration = self.config.run.duration_ns
        self._schedule_samples()
        end = self.sim.run(until=duration)
        shapers = [self.uplink.shapers[vid] for vid in sorted(self.uplink.shapers)]
        summary = summarize(self.metrics.stats.values(), self.metrics.measure_ns, shapers)
        report = RunReport(
            summary=summary,
            audit=self.audit,
            samples=self.samples,
            fdb={name: node.fdb.dump(duration) for name, node in sorted(self.nodes.items())},
            series={sub: self.metrics.series(sub) for sub in self.metrics.stats},
            node_counters={name: node.counters for name, node in sorted(self.nodes.items())},
            drop_sites=dict(sorted(self.metrics.drop_sites.items())),
            end_ns=end,
            residual_bytes=self.residual_bytes(),
            classifier_anomalies=self.classifier.anomalies if self.classifier else 0,
            unsolicited_frames=self.server.unsolicited + sum(h.unsolicited for h in self.hosts.values()),
        )
        logger.info("Simulated %.3f s: %d subscribers, audit %s", duration / 1e9, len(summary.rows),
                    "clean" if self.audit.passed else f"{self.audit.violations} violations")
        return report


def build(config: ScenarioConfig, observers: list[Observer] | tuple = ()) -> AccessNetwork:
    validate_config(config)
    return AccessNetwork(config, observers)
