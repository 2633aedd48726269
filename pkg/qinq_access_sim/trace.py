"""Frame traces: one-line-per-frame hex dumps and classic pcap files."""

import logging
import os
import struct
from typing import BinaryIO, TextIO

from .frames import serialize
from .models import Packet

logger = logging.getLogger(__name__)

PCAP_MAGIC_NUMBER = 0xA1B2C3D4
PCAP_VERSION_MAJOR = 2
PCAP_VERSION_MINOR = 4
DLT_EN10MB = 1
PCAP_SNAPLEN = 65535


def hex_line(time_ns: int, node: str, port: int, direction: str, data: bytes) -> str:
    return f"{time_ns} {node} {port} {direction} {data.hex().upper()}"


class HexTraceWriter:
    def __init__(self, path: str, strict: bool = False):
        self.path = path
        self.strict = strict
        self._file: TextIO = open(path, "w", encoding="utf-8", newline="\n")
        self.lines = 0

    def __call__(self, time_ns: int, node: str, port: int, direction: str, packet: Packet):
        self._file.write(hex_line(time_ns, node, port, direction, serialize(packet.frame, self.strict)) + "\n")
        self.lines += 1

    def close(self):
        self._file.close()
        logger.info("Saved: %s (%d frames)", self.path, self.lines)


class PcapCodec:
    @classmethod
    def encode_header(cls) -> bytes:
        return struct.pack("<LHHlLLL", PCAP_MAGIC_NUMBER, PCAP_VERSION_MAJOR, PCAP_VERSION_MINOR,
                           0, 0, PCAP_SNAPLEN, DLT_EN10MB)

    @classmethod
    def encode_frame(cls, time_ns: int, data: bytes) -> bytes:
        # simulated time, microsecond resolution
        usec_total = time_ns // 1000
        sec, usec = divmod(usec_total, 1_000_000)
        return struct.pack("<LLLL", sec, usec, len(data), len(data)) + data


class PcapWriter:
    """One pcap file per transmitting (node, port), opened on first use."""

    def __init__(self, directory: str, strict: bool = False):
        self.directory = directory
        self.strict = strict
        self._files: dict[tuple[str, int], BinaryIO] = {}
        self.frames = 0

    def path_for(self, node: str, port: int) -> str:
        return os.path.join(self.directory, f"trace-{node}-{port}.pcap")

    def __call__(self, time_ns: int, node: str, port: int, direction: str, packet: Packet):
        if direction != "TX":
            return
        key = (node, port)
        handle = self._files.get(key)
        if handle is None:
            handle = self._files[key] = open(self.path_for(node, port), "wb")
            handle.write(PcapCodec.encode_header())
        handle.write(PcapCodec.encode_frame(time_ns, serialize(packet.frame, self.strict)))
        self.frames += 1

    def close(self):
        for (node, port), handle in sorted(self._files.items()):
            handle.close()
            logger.info("Saved: %s", self.path_for(node, port))


def read_pcap(path: str) -> list[tuple[int, bytes]]:
    """(time in microseconds, frame bytes) for every record of a pcap file."""
    records = []
    with open(path, "rb") as f:
        header = f.read(24)
        magic, _, _, _, _, _, linktype = struct.unpack("<LHHlLLL", header)
        if magic != PCAP_MAGIC_NUMBER or linktype != DLT_EN10MB:
            raise ValueError(f"{path} is not an Ethernet pcap file")
        while True:
            rec = f.read(16)
            if len(rec) < 16:
                break
            sec, usec, caplen, _ = struct.unpack("<LLLL", rec)
            records.append((sec * 1_000_000 + usec, f.read(caplen)))
    return records
