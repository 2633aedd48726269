"""VLAN-aware learning bridge with access / S-trunk / trunk port roles.

The forwarding database is keyed on the outermost VID only, so frames of
different stacking levels never share a flooding domain.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .errors import FrameError, FrameFormatError
from .frames import EthernetFrame, MacAddress, outer_vid, pop_tag, push_tag
from .models import Packet
from .queues import TrafficControl

logger = logging.getLogger(__name__)

DEFAULT_AGING_NS = 300 * 1_000_000_000


class PortKind(str, Enum):
    ACCESS = "access"
    STRUNK = "strunk"
    TRUNK = "trunk"


@dataclass(frozen=True)
class PortRole:
    kind: PortKind
    vid: int | None = None  # assigned C-VID (access) or S-VID (strunk)
    members: frozenset[int] = frozenset()  # trunk: carried VIDs; strunk: admitted C-VIDs

    @classmethod
    def access(cls, vid: int) -> "PortRole":
        return cls(PortKind.ACCESS, vid=vid)

    @classmethod
    def strunk(cls, svid: int, member_vids) -> "PortRole":
        return cls(PortKind.STRUNK, vid=svid, members=frozenset(member_vids))

    @classmethod
    def trunk(cls, vids) -> "PortRole":
        return cls(PortKind.TRUNK, members=frozenset(vids))

    @property
    def membership(self) -> frozenset[int]:
        """Outermost VIDs this port belongs to inside the switch."""
        if self.kind is PortKind.TRUNK:
            return self.members
        return frozenset((self.vid,))


@dataclass
class FdbEntry:
    port: int
    last_seen: int
    static: bool = False


class ForwardingDatabase:
    def __init__(self, aging_ns: int = DEFAULT_AGING_NS):
        self.aging_ns = aging_ns
        self.entries: dict[tuple[int, MacAddress], FdbEntry] = {}

    def learn(self, vid: int, mac: MacAddress, port: int, now: int):
        entry = self.entries.get((vid, mac))
        if entry is not None and entry.static:
            return
        self.entries[(vid, mac)] = FdbEntry(port=port, last_seen=now)

    def add_static(self, vid: int, mac: MacAddress, port: int):
        self.entries[(vid, mac)] = FdbEntry(port=port, last_seen=0, static=True)

    def purge(self, now: int) -> int:
        expired = [k for k, e in self.entries.items()
                   if not e.static and now - e.last_seen > self.aging_ns]
        for key in expired:
            del self.entries[key]
        return len(expired)

    def lookup(self, vid: int, mac: MacAddress, now: int) -> int | None:
        entry = self.entries.get((vid, mac))
        if entry is None:
            return None
        if not entry.static and now - entry.last_seen > self.aging_ns:
            del self.entries[(vid, mac)]
            return None
        return entry.port

    def dump(self, now: int) -> list[tuple[int, str, int, int]]:
        """Rows of (vid, mac, port, age_ns), sorted by vid then mac."""
        self.purge(now)
        rows = [(vid, str(mac), e.port, 0 if e.static else now - e.last_seen)
                for (vid, mac), e in self.entries.items()]
        return sorted(rows)


@dataclass
class SwitchPort:
    index: int
    role: PortRole
    element: TrafficControl | None = None
    send: Callable[[Packet], None] | None = None  # hands the packet to the egress transmitter


@dataclass
class NodeCounters:
    received: int = 0
    format_errors: int = 0
    filtered: int = 0
    flooded: int = 0
    unicast_hits: int = 0


class SwitchNode:
    def __init__(self, name: str, aging_ns: int = DEFAULT_AGING_NS):
        self.name = name
        self.ports: list[SwitchPort] = []
        self.fdb = ForwardingDatabase(aging_ns)
        self.counters = NodeCounters()
        self.on_drop: Callable[[Packet, str], None] | None = None

    def add_port(self, role: PortRole, element: TrafficControl | None = None) -> int:
        index = len(self.ports)
        self.ports.append(SwitchPort(index=index, role=role, element=element))
        return index

    def ingress(self, port: int, frame: EthernetFrame) -> EthernetFrame:
        role = self.ports[port].role
        if role.kind is PortKind.ACCESS:
            return push_tag(frame, role.vid)
        if role.kind is PortKind.STRUNK:
            if not frame.tags:
                raise FrameFormatError(f"{self.name}[{port}]: untagged frame on S-trunk ingress")
            return push_tag(frame, role.vid)
        return frame

    def learn(self, frame: EthernetFrame, in_port: int, now: int):
        vid = outer_vid(frame)
        if vid is not None:
            self.fdb.learn(vid, frame.src, in_port, now)

    def forward(self, frame: EthernetFrame, in_port: int, now: int) -> list[int]:
        vid = outer_vid(frame)
        if vid is None:
            return []
        if not (frame.dst.is_broadcast or frame.dst.is_multicast):
            port = self.fdb.lookup(vid, frame.dst, now)
            if port is not None:
                self.counters.unicast_hits += 1
                return [] if port == in_port else [port]
        self.counters.flooded += 1
        return [p.index for p in self.ports
                if p.index != in_port and vid in p.role.membership]

    def egress(self, port: int, frame: EthernetFrame) -> EthernetFrame:
        role = self.ports[port].role
        if role.kind is PortKind.ACCESS:
            if not frame.tags:
                raise FrameFormatError(f"{self.name}[{port}]: no C-TAG to pop on access egress")
            return pop_tag(frame)[0]
        if role.kind is PortKind.STRUNK:
            if len(frame.tags) < 2:
                raise FrameFormatError(f"{self.name}[{port}]: S-trunk egress needs a stacked frame")
            return pop_tag(frame)[0]
        return frame

    def _drop(self, packet: Packet, reason: str):
        if self.on_drop is not None:
            self.on_drop(packet, f"{self.name}:{reason}")

    def receive(self, packet: Packet, in_port: int, now: int):
        """Full relay path: ingress tagging, learning, forwarding and egress un-tagging."""
        self.counters.received += 1
        role = self.ports[in_port].role
        try:
            frame = self.ingress(in_port, packet.frame)
        except FrameError:
            self.counters.format_errors += 1
            self._drop(packet, "format")
            return
        if role.kind is PortKind.STRUNK and outer_vid(packet.frame) not in role.members:
            self.counters.filtered += 1
            self._drop(packet, "filtered")
            return
        if role.kind is PortKind.TRUNK and outer_vid(frame) not in role.members:
            self.counters.filtered += 1
            self._drop(packet, "filtered")
            return

        self.learn(frame, in_port, now)
        out_ports = self.forward(frame, in_port, now)
        if not out_ports:
            self._drop(packet, "no-route")
            return
        for n, out in enumerate(out_ports):
            copy = packet if n == len(out_ports) - 1 else packet.copy()
            try:
                copy.frame = self.egress(out, frame)
            except FrameError:
                self.counters.format_errors += 1
                self._drop(copy, "format")
                continue
            self.ports[out].send(copy)
