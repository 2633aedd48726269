"""Scenario files: flat `section.key = value` lines with unit suffixes.

Sections: topology, subscribers.<id>, group, sources.<name>, run, outputs.
"""

import logging
import re
from dataclasses import replace
from fractions import Fraction

from .errors import ConfigError
from .frames import VID_MAX
from .models import (
    CORE_NODES,
    HybridGroup,
    InnerScheduler,
    OutputSpec,
    PlanKind,
    RunSpec,
    ScenarioConfig,
    ServicePlan,
    SourceKind,
    SourceSpec,
    SubscriberProfile,
    TopologySpec,
)
from .token_bucket import MAX_CTAGGED_BITS, MAX_STACKED_BITS
from .traffic import MAX_SOURCE_FRAME, MIN_SOURCE_FRAME

logger = logging.getLogger(__name__)

LINE_RE = re.compile(r'^([A-Za-z0-9_\-]+(?:\.[A-Za-z0-9_\-]+)*)\s*=\s*(.*)$')
QUANTITY_RE = re.compile(r'^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z]*)$')
ONU_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
HOST_NAME_RE = re.compile(r"^host\d+-\d+$")

RATE_UNITS = {"": 1, "bps": 1, "kbps": 10**3, "mbps": 10**6, "gbps": 10**9}
TIME_UNITS = {"": 10**9, "s": 10**9, "ms": 10**6, "us": 10**3, "ns": 1}
SIZE_UNITS = {"": 1, "b": 1, "kb": 10**3, "Mb": 10**6, "Gb": 10**9, "B": 8, "kB": 8 * 10**3, "MB": 8 * 10**6}

TOPOLOGY_KEYS = {
    "access_rate": ("rate", "access_rate"),
    "access_delay": ("time", "access_delay_ns"),
    "feeder_rate": ("rate", "feeder_rate"),
    "feeder_delay": ("time", "feeder_delay_ns"),
    "inner_rate": ("rate", "inner_rate"),
    "inner_delay": ("time", "inner_delay_ns"),
    "uplink_rate": ("rate", "uplink_rate"),
    "uplink_delay": ("time", "uplink_delay_ns"),
    "aging_time": ("time", "aging_time_ns"),
    "tbf_queue_frames": ("int", "tbf_queue_frames"),
    "port_queue_frames": ("int", "port_queue_frames"),
}


def _quantity(value: str, units: dict, key: str, what: str) -> Fraction:
    m = QUANTITY_RE.match(value.strip())
    if not m:
        raise ConfigError(key, f"expected a {what}, got {value!r}")
    number, unit = m.group(1), m.group(2)
    scale = units.get(unit, units.get(unit.lower()) if units is RATE_UNITS else None)
    if scale is None:
        raise ConfigError(key, f"unknown {what} unit {unit!r}")
    return Fraction(number) * scale


def parse_rate(value: str, key: str) -> int:
    rate = round(_quantity(value, RATE_UNITS, key, "rate"))
    if rate <= 0:
        raise ConfigError(key, "rate must be positive")
    return rate


def parse_time(value: str, key: str) -> int:
    ns = round(_quantity(value, TIME_UNITS, key, "time"))
    if ns < 0:
        raise ConfigError(key, "time must not be negative")
    return ns


def parse_size(value: str, key: str) -> int:
    bits = round(_quantity(value, SIZE_UNITS, key, "size"))
    if bits <= 0:
        raise ConfigError(key, "size must be positive")
    return bits


def parse_int(value: str, key: str, minimum: int | None = None) -> int:
    try:
        number = int(value.strip())
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if minimum is not None and number < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return number


def parse_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {value!r}")


def parse_vid(value: str, key: str) -> int:
    vid = parse_int(value, key)
    if not 1 <= vid <= VID_MAX:
        raise ConfigError(key, f"VID {vid} outside [1, {VID_MAX}]")
    return vid


def parse_enum(enum_cls, value: str, key: str):
    try:
        return enum_cls(value.strip().lower())
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigError(key, f"expected one of {choices}, got {value!r}") from None


def parse_frame_size(value: str, key: str) -> tuple[int, int]:
    parts = [p.strip() for p in value.split("-")]
    if len(parts) not in (1, 2):
        raise ConfigError(key, f"expected <bytes> or <min>-<max>, got {value!r}")
    lo = parse_int(parts[0], key)
    hi = parse_int(parts[-1], key)
    if not MIN_SOURCE_FRAME <= lo <= hi <= MAX_SOURCE_FRAME:
        raise ConfigError(key, f"frame size must lie within [{MIN_SOURCE_FRAME}, {MAX_SOURCE_FRAME}] bytes")
    return lo, hi


def _name_order(name: str):
    return (0, int(name), "") if name.isdigit() else (1, 0, name)


class ScenarioParser:
    def __init__(self, text: str, source: str = "<string>"):
        self.text = text
        self.source = source
        self.entries: dict[str, str] = {}

    @classmethod
    def from_file(cls, path: str) -> "ScenarioParser":
        with open(path, "r", encoding="utf-8") as f:
            return cls(f.read(), source=path)

    def parse(self) -> ScenarioConfig:
        self._read_entries()
        sections: dict[str, dict[str, tuple[str, str]]] = {}
        for key, value in self.entries.items():
            head, _, rest = key.partition(".")
            if head in ("subscribers", "sources"):
                name, _, field = rest.partition(".")
                if not name or not field:
                    raise ConfigError(key, f"expected {head}.<id>.<key>")
                sections.setdefault(f"{head}.{name}", {})[field] = (key, value)
            elif head in ("topology", "group", "run", "outputs"):
                if not rest or "." in rest:
                    raise ConfigError(key, f"expected {head}.<key>")
                sections.setdefault(head, {})[rest] = (key, value)
            else:
                raise ConfigError(key, f"unknown section {head!r}")

        topology = self._topology(sections.get("topology", {}))
        subscribers = self._subscribers(sections)
        run = self._run(sections.get("run", {}))
        sources = self._sources(sections)
        group = self._group(sections.get("group"), subscribers)
        outputs = self._outputs(sections.get("outputs", {}))
        config = ScenarioConfig(topology=topology, subscribers=subscribers, sources=sources,
                                run=run, group=group, outputs=outputs)
        validate_config(config)
        return config

    def _read_entries(self):
        for lineno, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = LINE_RE.match(line)
            if not m:
                raise ConfigError(f"line {lineno}", f"cannot parse {raw.strip()!r} in {self.source}")
            key, value = m.group(1), m.group(2).strip()
            if key in self.entries:
                raise ConfigError(key, "duplicate key")
            self.entries[key] = value

    @staticmethod
    def _reject_unknown(section: dict, allowed, prefix: str):
        for name, (key, _) in section.items():
            if name not in allowed:
                raise ConfigError(key, f"unknown key in {prefix}")

    def _topology(self, section: dict) -> TopologySpec:
        self._reject_unknown(section, TOPOLOGY_KEYS, "topology")
        values = {}
        for name, (key, value) in section.items():
            kind, attr = TOPOLOGY_KEYS[name]
            if kind == "rate":
                values[attr] = parse_rate(value, key)
            elif kind == "time":
                values[attr] = parse_time(value, key)
            else:
                values[attr] = parse_int(value, key, minimum=1)
        return TopologySpec(**values)

    def _subscribers(self, sections: dict) -> dict[int, SubscriberProfile]:
        subscribers: dict[int, SubscriberProfile] = {}
        names = sorted((s.split(".", 1)[1] for s in sections if s.startswith("subscribers.")), key=_name_order)
        for name in names:
            section = sections[f"subscribers.{name}"]
            prefix = f"subscribers.{name}"
            self._reject_unknown(section, {"plan", "rate", "bucket", "onu", "hosts"}, prefix)
            vid = parse_vid(name, prefix)
            if vid in subscribers:
                raise ConfigError(prefix, f"duplicate C-VID {vid}")
            for required in ("plan", "rate", "bucket"):
                if required not in section:
                    raise ConfigError(f"{prefix}.{required}", "missing")
            plan = ServicePlan(
                kind=parse_enum(PlanKind, section["plan"][1], section["plan"][0]),
                token_rate=parse_rate(section["rate"][1], section["rate"][0]),
                bucket_size=parse_size(section["bucket"][1], section["bucket"][0]),
            )
            onu = section["onu"][1] if "onu" in section else f"onu{vid}"
            hosts = parse_int(section["hosts"][1], section["hosts"][0], minimum=1) if "hosts" in section else 1
            subscribers[vid] = SubscriberProfile(id=vid, plan=plan, onu=onu, hosts=hosts)
        return subscribers

    def _group(self, section: dict | None, subscribers: dict[int, SubscriberProfile]) -> HybridGroup | None:
        shared = sorted(s.id for s in subscribers.values() if s.plan.kind is PlanKind.SHARED)
        if section is None:
            if shared:
                raise ConfigError("group.svid", f"shared-plan subscribers {shared} need a group")
            return None
        self._reject_unknown(
            section,
            {"svid", "members", "scheduler", "tbf_rate", "tbf_bucket", "csfq_window", "queue_frames"},
            "group",
        )
        if "svid" not in section:
            raise ConfigError("group.svid", "missing")
        svid = parse_vid(section["svid"][1], section["svid"][0])
        if "members" in section:
            key, value = section["members"]
            members = tuple(sorted({parse_vid(v, key) for v in value.split(",") if v.strip()}))
        else:
            members = tuple(shared)
        values = {}
        if "scheduler" in section:
            values["scheduler"] = parse_enum(InnerScheduler, section["scheduler"][1], section["scheduler"][0])
        for name, parser in (("tbf_rate", parse_rate), ("tbf_bucket", parse_size)):
            if name in section:
                key, value = section[name]
                values[name] = None if value.strip().lower() == "sum" else parser(value, key)
        if "csfq_window" in section:
            values["csfq_window_ns"] = parse_time(section["csfq_window"][1], section["csfq_window"][0])
        if "queue_frames" in section:
            values["queue_frames"] = parse_int(section["queue_frames"][1], section["queue_frames"][0], minimum=1)
        return HybridGroup(svid=svid, members=members, **values)

    def _sources(self, sections: dict) -> tuple[SourceSpec, ...]:
        sources = []
        names = sorted((s.split(".", 1)[1] for s in sections if s.startswith("sources.")), key=_name_order)
        for name in names:
            section = sections[f"sources.{name}"]
            prefix = f"sources.{name}"
            self._reject_unknown(
                section, {"kind", "subscriber", "rate", "frame_size", "on", "off", "start", "stop", "host"}, prefix
            )
            for required in ("kind", "subscriber", "rate"):
                if required not in section:
                    raise ConfigError(f"{prefix}.{required}", "missing")
            values = dict(
                name=prefix,
                kind=parse_enum(SourceKind, section["kind"][1], section["kind"][0]),
                subscriber=parse_vid(section["subscriber"][1], section["subscriber"][0]),
                mean_rate=parse_rate(section["rate"][1], section["rate"][0]),
            )
            if "frame_size" in section:
                values["frame_size"] = parse_frame_size(section["frame_size"][1], section["frame_size"][0])
            for field, attr in (("on", "mean_on_ns"), ("off", "mean_off_ns"), ("start", "start_ns"),
                                ("stop", "stop_ns")):
                if field in section:
                    values[attr] = parse_time(section[field][1], section[field][0])
            if "host" in section:
                values["host"] = parse_int(section["host"][1], section["host"][0], minimum=0)
            if values["kind"] is SourceKind.ONOFF and values.get("mean_on_ns", 0) <= 0:
                raise ConfigError(f"{prefix}.on", "on-off sources need a positive mean on time")
            sources.append(SourceSpec(**values))
        return tuple(sources)

    def _run(self, section: dict) -> RunSpec:
        self._reject_unknown(section, {"duration", "seed", "warmup", "sample_interval", "strict_ethernet"}, "run")
        if "duration" not in section:
            raise ConfigError("run.duration", "missing")
        values = {"duration_ns": parse_time(section["duration"][1], section["duration"][0])}
        if "seed" in section:
            values["seed"] = parse_int(section["seed"][1], section["seed"][0], minimum=0)
        if "warmup" in section:
            key, value = section["warmup"]
            try:
                values["warmup"] = float(Fraction(value.strip()))
            except ValueError:
                raise ConfigError(key, f"expected a fraction, got {value!r}") from None
        if "sample_interval" in section:
            values["sample_interval_ns"] = parse_time(section["sample_interval"][1], section["sample_interval"][0])
        if "strict_ethernet" in section:
            values["strict_ethernet"] = parse_bool(section["strict_ethernet"][1], section["strict_ethernet"][0])
        return RunSpec(**values)

    def _outputs(self, section: dict) -> OutputSpec:
        self._reject_unknown(section, {"csv", "trace"}, "outputs")
        values = {}
        if "csv" in section:
            values["csv"] = section["csv"][1]
        if "trace" in section:
            key, value = section["trace"]
            trace = value.strip().lower()
            if trace not in ("none", "hex", "pcap"):
                raise ConfigError(key, "expected none, hex or pcap")
            values["trace"] = None if trace == "none" else trace
        return OutputSpec(**values)


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    return ScenarioParser(text, source).parse()


def load_config(path: str) -> ScenarioConfig:
    return ScenarioParser.from_file(path).parse()


def validate_config(config: ScenarioConfig):
    """Cross-field checks; raises ConfigError naming the offending key."""
    run = config.run
    if run.duration_ns <= 0:
        raise ConfigError("run.duration", "must be positive")
    if not 0.0 <= run.warmup < 1.0:
        raise ConfigError("run.warmup", "must lie within [0, 1)")
    if run.sample_interval_ns <= 0:
        raise ConfigError("run.sample_interval", "must be positive")

    topo = config.topology
    for sub in config.subscribers.values():
        key = f"subscribers.{sub.id}"
        if sub.plan.bucket_size < MAX_CTAGGED_BITS:
            raise ConfigError(f"{key}.bucket", f"smaller than one maximum C-tagged frame ({MAX_CTAGGED_BITS} bits)")
        if sub.plan.token_rate > topo.access_rate:
            raise ConfigError(f"{key}.rate", "exceeds the access link rate")

    onu_plans: dict[str, PlanKind] = {}
    for sub in config.subscribers.values():
        if not ONU_NAME_RE.match(sub.onu) or sub.onu in CORE_NODES or HOST_NAME_RE.match(sub.onu):
            raise ConfigError(f"subscribers.{sub.id}.onu", f"invalid ONU name {sub.onu!r}")
        seen = onu_plans.setdefault(sub.onu, sub.plan.kind)
        if seen is not sub.plan.kind:
            raise ConfigError(f"subscribers.{sub.id}.onu", f"ONU {sub.onu!r} mixes legacy and shared subscribers")

    shared = sorted(s.id for s in config.subscribers.values() if s.plan.kind is PlanKind.SHARED)
    legacy_rate = sum(s.plan.token_rate for s in config.subscribers.values() if s.plan.kind is PlanKind.LEGACY)
    group = config.group
    total = legacy_rate
    if group is not None:
        if group.svid in config.subscribers:
            raise ConfigError("group.svid", f"S-VID {group.svid} duplicates a subscriber C-VID")
        if not group.members:
            raise ConfigError("group.members", "a group needs at least one member")
        for member in group.members:
            if member not in config.subscribers:
                raise ConfigError("group.members", f"unknown subscriber {member}")
            if config.subscribers[member].plan.kind is not PlanKind.SHARED:
                raise ConfigError("group.members", f"subscriber {member} is not on the shared plan")
        if sorted(group.members) != shared:
            raise ConfigError("group.members", f"must list every shared-plan subscriber {shared}")
        rate, bucket = config.group_tbf()
        if bucket < MAX_STACKED_BITS:
            raise ConfigError("group.tbf_bucket", f"smaller than one maximum stacked frame ({MAX_STACKED_BITS} bits)")
        total += rate
        if group.csfq_window_ns <= 0:
            raise ConfigError("group.csfq_window", "must be positive")
    elif shared:
        raise ConfigError("group.svid", f"shared-plan subscribers {shared} need a group")
    if total > topo.uplink_rate:
        raise ConfigError("topology.uplink_rate", f"token rates sum to {total} bit/s, above the uplink capacity")

    for src in config.sources:
        if src.subscriber not in config.subscribers:
            raise ConfigError(f"{src.name}.subscriber", f"unknown subscriber {src.subscriber}")
        if src.host >= config.subscribers[src.subscriber].hosts:
            raise ConfigError(f"{src.name}.host", "host index beyond the subscriber's hosts")
        if src.stop_ns is not None and src.stop_ns < src.start_ns:
            raise ConfigError(f"{src.name}.stop", "stop before start")


def legacy_reference(config: ScenarioConfig) -> ScenarioConfig:
    """The same scenario with every shared-plan member moved back to a flat-rate plan."""
    subscribers = {
        vid: replace(sub, plan=replace(sub.plan, kind=PlanKind.LEGACY))
        for vid, sub in config.subscribers.items()
    }
    return replace(config, subscribers=subscribers, group=None)


def _fmt_time(ns: int) -> str:
    return f"{ns}ns"


def dump_config(config: ScenarioConfig) -> str:
    """Normalized document in base units; parsing it yields an equal ScenarioConfig."""
    lines = []
    topo = config.topology
    for name, (kind, attr) in sorted(TOPOLOGY_KEYS.items()):
        value = getattr(topo, attr)
        if value is None:
            continue
        text = f"{value}bps" if kind == "rate" else _fmt_time(value) if kind == "time" else str(value)
        lines.append(f"topology.{name} = {text}")

    for vid in sorted(config.subscribers):
        sub = config.subscribers[vid]
        prefix = f"subscribers.{vid}"
        lines += [
            f"{prefix}.bucket = {sub.plan.bucket_size}b",
            f"{prefix}.hosts = {sub.hosts}",
            f"{prefix}.onu = {sub.onu}",
            f"{prefix}.plan = {sub.plan.kind.value}",
            f"{prefix}.rate = {sub.plan.token_rate}bps",
        ]

    group = config.group
    if group is not None:
        lines += [
            f"group.csfq_window = {_fmt_time(group.csfq_window_ns)}",
            f"group.members = {','.join(str(m) for m in group.members)}",
            f"group.queue_frames = {group.queue_frames}",
            f"group.scheduler = {group.scheduler.value}",
            f"group.svid = {group.svid}",
            f"group.tbf_bucket = {'sum' if group.tbf_bucket is None else f'{group.tbf_bucket}b'}",
            f"group.tbf_rate = {'sum' if group.tbf_rate is None else f'{group.tbf_rate}bps'}",
        ]

    for src in config.sources:
        prefix = src.name
        lo, hi = src.frame_size
        lines += [
            f"{prefix}.frame_size = {lo}" if lo == hi else f"{prefix}.frame_size = {lo}-{hi}",
            f"{prefix}.host = {src.host}",
            f"{prefix}.kind = {src.kind.value}",
            f"{prefix}.off = {_fmt_time(src.mean_off_ns)}",
            f"{prefix}.on = {_fmt_time(src.mean_on_ns)}",
            f"{prefix}.rate = {src.mean_rate}bps",
            f"{prefix}.start = {_fmt_time(src.start_ns)}",
        ]
        if src.stop_ns is not None:
            lines.append(f"{prefix}.stop = {_fmt_time(src.stop_ns)}")
        lines.append(f"{prefix}.subscriber = {src.subscriber}")

    run = config.run
    lines += [
        f"run.duration = {_fmt_time(run.duration_ns)}",
        f"run.sample_interval = {_fmt_time(run.sample_interval_ns)}",
        f"run.seed = {run.seed}",
        f"run.strict_ethernet = {'true' if run.strict_ethernet else 'false'}",
        f"run.warmup = {Fraction(run.warmup).limit_denominator(10**9)}",
    ]
    lines += [
        f"outputs.csv = {config.outputs.csv}",
        f"outputs.trace = {config.outputs.trace or 'none'}",
    ]
    return "\n".join(lines) + "\n"
