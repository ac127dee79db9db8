"""Packet captures to traces: TCP reassembly and TLS record extraction."""
from __future__ import annotations

import bisect
import datetime as _dt
import ipaddress
import socket
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import dpkt

from .errors import MalformedTls, NoMatchingTraffic, UnreadableCapture
from .trace import C2R, R2C, Dataset, DnsEvent, Direction, Protocol, Trace, read_dataset, write_dataset

__all__ = ["ResolverSpec", "filter_capture", "ingest_many", "iter_packets", "read_dataset", "write_dataset"]

TLS_APPLICATION_DATA = 23
TLS_CONTENT_TYPES = frozenset((20, 21, 22, 23, 24))
MAX_RECORD_LEN = 64 * 1024
TLS_HEADER_LEN = 5

_RAW_LINKTYPES = frozenset((12, 14, 101))  # DLT_RAW variants and LINKTYPE_RAW
_ETHERNET = 1
_LINUX_SLL = 113


@dataclass(frozen=True)
class ResolverSpec:
    resolver_id: str
    ips: frozenset[str]
    port: int
    protocol: Protocol

    def __post_init__(self):
        ips = frozenset(str(ipaddress.ip_address(ip.strip())) for ip in self.ips)
        if not ips:
            raise ValueError("ResolverSpec needs at least one IP address")
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        object.__setattr__(self, "ips", ips)
        if not isinstance(self.protocol, Protocol):
            object.__setattr__(self, "protocol", Protocol(str(self.protocol).lower()))

    @classmethod
    def make(cls, resolver_id: str, ips, port: int | None = None, protocol="dot") -> "ResolverSpec":
        if isinstance(ips, str):
            ips = [s for s in ips.split(",") if s.strip()]
        proto = protocol if isinstance(protocol, Protocol) else Protocol(protocol.lower())
        if port is None:
            port = 853 if proto is Protocol.DOT else 443
        return cls(resolver_id, frozenset(ips), port, proto)


def _ts_ns(ts, divisor) -> int:
    if isinstance(ts, Decimal):
        return int(ts * 1_000_000_000)
    # float timestamps: snap to the capture's own tick before scaling
    div = float(divisor) if divisor else 1e6
    ticks = round(ts * div)
    return ticks * 1_000_000_000 // int(div) if div <= 1e9 else int(ts * 1e9)


def _open_reader(fh):
    head = fh.read(4)
    fh.seek(0)
    try:
        if head == b"\x0a\x0d\x0d\x0a":
            return dpkt.pcapng.Reader(fh)
        return dpkt.pcap.Reader(fh)
    except (ValueError, dpkt.dpkt.NeedData, dpkt.dpkt.UnpackError) as e:
        raise UnreadableCapture(f"not a pcap/pcapng file: {e}") from None


def _ip_layer(linktype: int, buf: bytes):
    if linktype == _ETHERNET:
        eth = dpkt.ethernet.Ethernet(buf)
        return eth.data
    if linktype == _LINUX_SLL:
        return dpkt.sll.SLL(buf).data
    if linktype in _RAW_LINKTYPES:
        if not buf:
            return None
        v = buf[0] >> 4
        if v == 4:
            return dpkt.ip.IP(buf)
        if v == 6:
            return dpkt.ip6.IP6(buf)
        return None
    raise UnreadableCapture(f"unsupported link type {linktype}")


def iter_packets(path: str | Path):
    """Yield (ts_ns, src_ip, sport, dst_ip, dport, tcp) for every TCP segment."""
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise UnreadableCapture(str(e)) from None
    with fh:
        reader = _open_reader(fh)
        linktype = reader.datalink()
        divisor = getattr(reader, "_divisor", 1e6)
        try:
            for ts, buf in reader:
                try:
                    ip = _ip_layer(linktype, buf)
                except (dpkt.dpkt.UnpackError, dpkt.dpkt.NeedData):
                    continue
                if isinstance(ip, dpkt.ip.IP):
                    fam = socket.AF_INET
                elif isinstance(ip, dpkt.ip6.IP6):
                    fam = socket.AF_INET6
                else:
                    continue
                tcp = ip.data
                if not isinstance(tcp, dpkt.tcp.TCP):
                    continue
                yield (_ts_ns(ts, divisor), socket.inet_ntop(fam, ip.src), tcp.sport,
                       socket.inet_ntop(fam, ip.dst), tcp.dport, tcp)
        except (dpkt.dpkt.NeedData, dpkt.dpkt.UnpackError, ValueError) as e:
            raise UnreadableCapture(f"corrupt capture: {e}") from None


@dataclass
class _Stream:
    """One direction of a TCP connection, reassembled in order."""

    direction: Direction
    next_seq: int | None = None
    buf: bytearray = field(default_factory=bytearray)
    base: int = 0  # stream offset of buf[0]
    seg_offsets: list[int] = field(default_factory=list)
    seg_ts: list[int] = field(default_factory=list)
    records: list[tuple[int, int]] = field(default_factory=list)  # (ts_ns, length)

    def feed(self, ts_ns: int, tcp, label: str) -> None:
        flags = tcp.flags
        payload = bytes(tcp.data)
        if flags & dpkt.tcp.TH_SYN:
            self.next_seq = (tcp.seq + 1) & 0xFFFFFFFF
            if payload:
                raise MalformedTls(f"{label}: data on SYN segment")
            return
        if not payload:
            return
        if self.next_seq is None:
            # capture began mid-connection; trust the first data segment
            self.next_seq = tcp.seq
        delta = (tcp.seq - self.next_seq) & 0xFFFFFFFF
        if delta >= 0x80000000:  # segment starts before what we already have
            behind = 0x100000000 - delta
            if behind >= len(payload):
                return  # pure retransmission
            raise MalformedTls(f"{label}: partially overlapping segment")
        if delta:
            raise MalformedTls(f"{label}: missing {delta} bytes (gap or reordering)")
        self.seg_offsets.append(self.base + len(self.buf))
        self.seg_ts.append(ts_ns)
        self.buf += payload
        self.next_seq = (self.next_seq + len(payload)) & 0xFFFFFFFF
        self._drain(label)

    def _drain(self, label: str) -> None:
        buf = self.buf
        pos = 0
        while len(buf) - pos >= TLS_HEADER_LEN:
            ctype = buf[pos]
            major = buf[pos + 1]
            length = (buf[pos + 3] << 8) | buf[pos + 4]
            if ctype not in TLS_CONTENT_TYPES or major != 3:
                raise MalformedTls(f"{label}: stream desynchronized at offset {self.base + pos}")
            if length > MAX_RECORD_LEN:
                raise MalformedTls(f"{label}: record length {length} exceeds bound")
            if len(buf) - pos < TLS_HEADER_LEN + length:
                break
            if ctype == TLS_APPLICATION_DATA:
                off = self.base + pos
                k = bisect.bisect_right(self.seg_offsets, off) - 1
                self.records.append((self.seg_ts[k], length))
            pos += TLS_HEADER_LEN + length
        if pos:
            del buf[:pos]
            self.base += pos
            # drop segment bookkeeping no longer needed
            k = bisect.bisect_right(self.seg_offsets, self.base) - 1
            if k > 0:
                del self.seg_offsets[:k]
                del self.seg_ts[:k]


def filter_capture(capture_path: str | Path, spec: ResolverSpec, label: str, trace_id: str) -> Trace:
    """Application-data TLS records exchanged with the resolver, as a Trace."""
    streams: dict[tuple, _Stream] = {}
    order: list[tuple] = []
    for ts_ns, src, sport, dst, dport, tcp in iter_packets(capture_path):
        if dst in spec.ips and dport == spec.port:
            direction = C2R
        elif src in spec.ips and sport == spec.port:
            direction = R2C
        else:
            continue
        key = (src, sport, dst, dport)
        st = streams.get(key)
        if st is None:
            st = streams[key] = _Stream(direction)
            order.append(key)
        st.feed(ts_ns, tcp, f"{src}:{sport}->{dst}:{dport}")

    found = []
    for n, key in enumerate(order):
        st = streams[key]
        for i, (ts, length) in enumerate(st.records):
            found.append((ts, n, i, st.direction, length))
    if not found:
        raise NoMatchingTraffic(
            f"no TLS application data to {sorted(spec.ips)} port {spec.port} in {capture_path}")
    found.sort(key=lambda r: (r[0], r[1], r[2]))
    t0 = found[0][0]
    events = tuple(DnsEvent((ts - t0) // 1_000_000, d, length) for ts, _, _, d, length in found)
    stamp = _dt.datetime.fromtimestamp(t0 // 1_000_000_000, tz=_dt.timezone.utc)
    return Trace(trace_id, label, spec.resolver_id, spec.protocol,
                 stamp.strftime("%Y-%m-%dT%H:%M:%SZ"), events)


def ingest_many(paths, spec: ResolverSpec, label: str, id_prefix: str | None = None) -> Dataset:
    """One trace per capture file; trace ids default to the file stems."""
    traces = []
    for p in paths:
        p = Path(p)
        tid = f"{id_prefix}{p.stem}" if id_prefix else p.stem
        traces.append(filter_capture(p, spec, label, tid))
    return Dataset(traces)
