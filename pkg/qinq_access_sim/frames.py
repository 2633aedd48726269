"""Ethernet II frames with an unbounded stack of 802.1Q / 802.1ad VLAN tags.

Tags are kept outermost first. A single tag is always a C-TAG (0x8100); in a
deeper stack every tag except the innermost is an S-TAG (0x88A8).
"""

import struct
import zlib
from dataclasses import dataclass, field, replace

from .errors import (
    ChecksumError,
    FrameFormatError,
    TagUnderflowError,
    TruncatedFrameError,
    VlanRangeError,
)

TPID_CTAG = 0x8100
TPID_STAG = 0x88A8
TAG_TPIDS = (TPID_CTAG, TPID_STAG)

ETHERTYPE_IPV4 = 0x0800

VID_MAX = 4094

HEADER_BYTES = 14
TAG_BYTES = 4
FCS_BYTES = 4
MIN_FRAME_BYTES = 64
# Largest frame a host emits, before any tag; DRR quanta are based on it.
MAX_FRAME_BYTES = 1522
# Largest frame at a per-C-VID shaper (one C-TAG) and at the group shaper (S-TAG + C-TAG)
MAX_CTAGGED_BYTES = MAX_FRAME_BYTES + TAG_BYTES
MAX_STACKED_BYTES = MAX_FRAME_BYTES + 2 * TAG_BYTES


@dataclass(frozen=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.replace("-", ":").split(":")
        if len(parts) != 6:
            raise ValueError(f"Invalid MAC address: {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @classmethod
    def from_int(cls, value: int) -> "MacAddress":
        return cls(value.to_bytes(6, "big"))

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    @property
    def is_multicast(self) -> bool:
        return bool(self.octets[0] & 0x01)

    def __str__(self) -> str:
        return ":".join(f"{b:02X}" for b in self.octets)


BROADCAST_MAC = MacAddress(b"\xff" * 6)


@dataclass(frozen=True)
class VlanTag:
    tpid: int
    vid: int
    pcp: int = 0
    dei: int = 0

    def __post_init__(self):
        if self.tpid not in TAG_TPIDS:
            raise FrameFormatError(f"Unsupported TPID 0x{self.tpid:04X}")
        if not 0 <= self.vid <= VID_MAX:
            raise VlanRangeError(f"VID {self.vid} outside [0, {VID_MAX}]")
        if not 0 <= self.pcp <= 7:
            raise VlanRangeError(f"PCP {self.pcp} outside [0, 7]")
        if self.dei not in (0, 1):
            raise VlanRangeError(f"DEI {self.dei} is not a bit")

    @property
    def tci(self) -> int:
        return self.pcp << 13 | self.dei << 12 | self.vid

    @classmethod
    def from_tci(cls, tpid: int, tci: int) -> "VlanTag":
        return cls(tpid=tpid, vid=tci & 0x0FFF, pcp=tci >> 13, dei=(tci >> 12) & 0x1)


@dataclass(frozen=True)
class EthernetFrame:
    dst: MacAddress
    src: MacAddress
    tags: tuple[VlanTag, ...] = ()
    ethertype: int = ETHERTYPE_IPV4
    payload: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if not isinstance(self.tags, tuple):
            object.__setattr__(self, "tags", tuple(self.tags))
        if self.tags:
            if self.tags[-1].tpid != TPID_CTAG:
                raise FrameFormatError("Innermost tag must be a C-TAG (0x8100)")
            if any(t.tpid != TPID_STAG for t in self.tags[:-1]):
                raise FrameFormatError("Outer tags of a stack must be S-TAGs (0x88A8)")
        if self.ethertype in TAG_TPIDS:
            raise FrameFormatError(f"Ethertype 0x{self.ethertype:04X} is a tag TPID")

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def wire_length(self) -> int:
        return HEADER_BYTES + TAG_BYTES * len(self.tags) + len(self.payload) + FCS_BYTES

    @property
    def bits(self) -> int:
        return self.wire_length * 8


def push_tag(frame: EthernetFrame, vid: int, pcp: int = 0, dei: int = 0) -> EthernetFrame:
    """Prepend a new outermost tag: a C-TAG on an untagged frame, an S-TAG otherwise."""
    if not 0 <= vid <= VID_MAX:
        raise VlanRangeError(f"VID {vid} outside [0, {VID_MAX}]")
    tpid = TPID_STAG if frame.tags else TPID_CTAG
    return replace(frame, tags=(VlanTag(tpid, vid, pcp, dei),) + frame.tags)


def pop_tag(frame: EthernetFrame) -> tuple[EthernetFrame, VlanTag]:
    if not frame.tags:
        raise TagUnderflowError("Cannot pop a tag from an untagged frame")
    return replace(frame, tags=frame.tags[1:]), frame.tags[0]


def outer_vid(frame: EthernetFrame) -> int | None:
    return frame.tags[0].vid if frame.tags else None


def fcs(data: bytes) -> bytes:
    # CRC-32 goes on the wire least-significant byte first
    return struct.pack("<I", zlib.crc32(data) & 0xFFFFFFFF)


def serialize(frame: EthernetFrame, strict: bool = False) -> bytes:
    """Encode a frame in network byte order, FCS included.

    With `strict`, the payload is zero-padded up to the 64-byte minimum frame.
    """
    out = bytearray(frame.dst.octets)
    out += frame.src.octets
    for tag in frame.tags:
        out += struct.pack("!HH", tag.tpid, tag.tci)
    out += struct.pack("!H", frame.ethertype)
    out += frame.payload
    if strict:
        short = MIN_FRAME_BYTES - (len(out) + FCS_BYTES)
        if short > 0:
            out += bytes(short)
    out += fcs(bytes(out))
    return bytes(out)


def parse(data: bytes) -> EthernetFrame:
    min_len = HEADER_BYTES + FCS_BYTES
    if len(data) < min_len:
        raise TruncatedFrameError(f"Frame of {len(data)} bytes is shorter than {min_len}")

    body, trailer = data[:-FCS_BYTES], data[-FCS_BYTES:]
    if fcs(body) != trailer:
        raise ChecksumError("FCS mismatch")

    dst = MacAddress(body[0:6])
    src = MacAddress(body[6:12])
    offset = 12
    tags = []
    while True:
        if offset + 2 > len(body):
            raise TruncatedFrameError("Frame ends inside the tag stack")
        (code,) = struct.unpack_from("!H", body, offset)
        if code not in TAG_TPIDS:
            break
        if offset + TAG_BYTES + 2 > len(body):
            raise TruncatedFrameError("Frame ends inside a VLAN tag")
        (tci,) = struct.unpack_from("!H", body, offset + 2)
        if (tci & 0x0FFF) > VID_MAX:
            raise FrameFormatError(f"Reserved VID {tci & 0x0FFF} on the wire")
        tags.append(VlanTag.from_tci(code, tci))
        offset += TAG_BYTES

    return EthernetFrame(
        dst=dst,
        src=src,
        tags=tuple(tags),
        ethertype=code,
        payload=bytes(body[offset + 2:]),
    )
