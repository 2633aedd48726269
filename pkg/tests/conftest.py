import pytest

from qinq_access_sim.frames import HEADER_BYTES, FCS_BYTES, EthernetFrame, MacAddress, push_tag
from qinq_access_sim.models import Packet

HOST_MAC = MacAddress.from_int(0x020000000B01)
SERVER_MAC = MacAddress.from_int(0x02FF00000001)


def _make_frame(size=1500, vids=(), dst=SERVER_MAC, src=HOST_MAC):
    """Frame of `size` untagged bytes carrying `vids`, outermost first."""
    frame = EthernetFrame(dst=dst, src=src, payload=bytes(size - HEADER_BYTES - FCS_BYTES))
    for vid in reversed(vids):
        frame = push_tag(frame, vid)
    return frame


def _make_packet(size=1500, vids=(), subscriber=None, created_ns=0):
    frame = _make_frame(size, vids)
    return Packet(frame=frame, subscriber=subscriber, created_ns=created_ns, offered_bytes=size)


def _group_scenario(rates_mbps, offered_mbps, *, scheduler="drr", tbf_rate=None, inner_rate=None,
                    duration="4s", warmup="0.25", legacy=(), seed=3, kind="cbr"):
    """Scenario text: shared members C-VID 11, 12, ... with the given token rates and source rates
    (0 = silent), plus `legacy` tuples of (vid, rate Mb/s, offered Mb/s)."""
    lines = []
    for i, (rate, offered) in enumerate(zip(rates_mbps, offered_mbps)):
        vid = 11 + i
        lines += [
            f"subscribers.{vid}.plan = shared",
            f"subscribers.{vid}.rate = {rate}Mbps",
            f"subscribers.{vid}.bucket = 50kB",
            f"subscribers.{vid}.onu = onu-shared",
        ]
        if offered:
            lines += [
                f"sources.s{vid}.kind = {kind}",
                f"sources.s{vid}.subscriber = {vid}",
                f"sources.s{vid}.rate = {offered}Mbps",
            ]
    for vid, rate, offered in legacy:
        lines += [
            f"subscribers.{vid}.plan = legacy",
            f"subscribers.{vid}.rate = {rate}Mbps",
            f"subscribers.{vid}.bucket = 50kB",
            f"sources.l{vid}.kind = poisson",
            f"sources.l{vid}.subscriber = {vid}",
            f"sources.l{vid}.rate = {offered}Mbps",
        ]
    if rates_mbps:
        lines += ["group.svid = 200", f"group.scheduler = {scheduler}"]
        if tbf_rate is not None:
            lines.append(f"group.tbf_rate = {tbf_rate}Mbps")
    if inner_rate is not None:
        lines.append(f"topology.inner_rate = {inner_rate}Mbps")
    lines += [f"run.duration = {duration}", f"run.warmup = {warmup}", f"run.seed = {seed}"]
    return "\n".join(lines) + "\n"


@pytest.fixture
def make_frame():
    return _make_frame


@pytest.fixture
def make_packet():
    return _make_packet


@pytest.fixture
def group_scenario():
    return _group_scenario
