"""Network flow ingestion: CSV parsing, service identification, time binning.

The front end of dependency discovery.  Flow records are plain 5-tuple
observations with byte/packet counts; the service side of each flow is
inferred from the registered-port heuristic, and per-channel activity is
binned into fixed-width count series for correlation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FLOW_HEADER = "ts_us,src_ip,src_port,dst_ip,dst_port,proto,bytes,packets"
REGISTERED_PORT_LIMIT = 49151


class MalformedLine(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyWindow(Exception):
    pass


@dataclass(frozen=True)
class FlowRecord:
    ts_us: int
    src_host: str
    src_port: int
    dst_host: str
    dst_port: int
    proto: str
    bytes: int
    packets: int


@dataclass(frozen=True)
class ServiceKey:
    host: str
    port: int
    proto: str

    def label(self) -> str:
        return f"{self.host}:{self.port}/{self.proto}"


def parse_service(label: str) -> ServiceKey:
    """Inverse of :meth:`ServiceKey.label` ("host:port/proto")."""
    hostport, _, proto = label.partition("/")
    host, _, port = hostport.rpartition(":")
    if not host or not port or proto not in ("tcp", "udp"):
        raise ValueError(f"bad service label {label!r}")
    return ServiceKey(host, int(port), proto)


@dataclass(frozen=True)
class Channel:
    """One observed client-to-service communication relationship."""

    client: str
    service: ServiceKey

    def label(self) -> str:
        return f"{self.client}->{self.service.label()}"


@dataclass
class ChannelSeries:
    channel: Channel
    bin_width: float
    start_us: int
    counts: np.ndarray


def _check_fields(fields: Sequence[str], line_no: int) -> FlowRecord:
    if len(fields) != 8:
        raise MalformedLine(line_no, f"expected 8 fields, got {len(fields)}")
    try:
        ts_us = int(fields[0])
        src_port = int(fields[2])
        dst_port = int(fields[4])
        nbytes = int(fields[6])
        packets = int(fields[7])
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from None
    proto = fields[5]
    if proto not in ("tcp", "udp"):
        raise MalformedLine(line_no, f"proto must be tcp or udp, got {proto!r}")
    for name, port in (("src_port", src_port), ("dst_port", dst_port)):
        if not (0 <= port <= 65535):
            raise MalformedLine(line_no, f"{name} {port} out of range")
    if nbytes < 0:
        raise MalformedLine(line_no, f"bytes {nbytes} negative")
    if packets < 1:
        raise MalformedLine(line_no, f"packets {packets} must be >= 1")
    return FlowRecord(ts_us, fields[1], src_port, fields[3], dst_port, proto, nbytes, packets)


def parse_flows(
    source,
    strict: bool = True,
    malformed: list | None = None,
) -> list[FlowRecord]:
    """Parse flow CSV from a path, file object, or string content.

    Strict mode raises :class:`MalformedLine` on the first bad line; lenient
    mode skips bad lines, tallying (line_no, reason) into ``malformed`` when
    a list is supplied.
    """
    if isinstance(source, str) and "\n" not in source:
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_flows(fh, strict=strict, malformed=malformed)
    if isinstance(source, str):
        source = io.StringIO(source)

    reader = csv.reader(source)
    records: list[FlowRecord] = []
    header = next(reader, None)
    if header is None or ",".join(header) != FLOW_HEADER:
        raise MalformedLine(1, f"header must be exactly {FLOW_HEADER!r}")
    for line_no, fields in enumerate(reader, start=2):
        if not fields:
            continue
        try:
            records.append(_check_fields(fields, line_no))
        except MalformedLine as exc:
            if strict:
                raise
            if malformed is not None:
                malformed.append((exc.line_no, exc.reason))
    return records


def serialize_flows(records: Iterable[FlowRecord]) -> str:
    lines = [FLOW_HEADER]
    for r in records:
        lines.append(
            f"{r.ts_us},{r.src_host},{r.src_port},{r.dst_host},{r.dst_port},"
            f"{r.proto},{r.bytes},{r.packets}"
        )
    return "\n".join(lines) + "\n"


def service_side(
    record: FlowRecord, registered_port_limit: int = REGISTERED_PORT_LIMIT
) -> tuple[str, ServiceKey, bool]:
    """Pick the service endpoint of a flow: (client_host, service, ambiguous).

    The endpoint whose port is inside the registered range and not above the
    peer's port is the service side.  When both ports are ephemeral the lower
    port is taken and the flow is flagged ambiguous.  Destination wins ties.
    """
    src_ok = record.src_port <= registered_port_limit
    dst_ok = record.dst_port <= registered_port_limit
    ambiguous = not (src_ok or dst_ok)
    if src_ok and dst_ok:
        dst_side = record.dst_port <= record.src_port
    elif dst_ok or src_ok:
        dst_side = dst_ok
    else:
        dst_side = record.dst_port <= record.src_port
    if dst_side:
        return record.src_host, ServiceKey(record.dst_host, record.dst_port, record.proto), ambiguous
    return record.dst_host, ServiceKey(record.src_host, record.src_port, record.proto), ambiguous


def identify_services(
    records: Iterable[FlowRecord], registered_port_limit: int = REGISTERED_PORT_LIMIT
) -> set[ServiceKey]:
    """Distinct service endpoints observed across ``records``."""
    return {service_side(r, registered_port_limit)[1] for r in records}


def channel_of(
    record: FlowRecord, registered_port_limit: int = REGISTERED_PORT_LIMIT
) -> Channel:
    client, service, _ = service_side(record, registered_port_limit)
    return Channel(client, service)


def bin_activity(
    records: Iterable[FlowRecord],
    channel: Channel,
    bin_width: float,
    window: tuple[int, int],
) -> ChannelSeries:
    """Per-bin flow counts for ``channel`` over ``window`` = [t0_us, t1_us)."""
    t0, t1 = window
    if t0 >= t1:
        raise EmptyWindow(f"window [{t0}, {t1}) is empty")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    width_us = int(round(bin_width * 1e6))
    n_bins = -(-(t1 - t0) // width_us)  # ceil division
    counts = np.zeros(n_bins, dtype=np.int64)
    for r in records:
        if not (t0 <= r.ts_us < t1):
            continue
        if channel_of(r) != channel:
            continue
        counts[(r.ts_us - t0) // width_us] += 1
    return ChannelSeries(channel, bin_width, t0, counts)
