"""Build small pcap/pcapng captures of TLS-over-TCP conversations."""
from __future__ import annotations

import socket
from decimal import Decimal

import dpkt


def tls_record(ctype: int, length: int) -> bytes:
    return bytes([ctype, 3, 3]) + length.to_bytes(2, "big") + b"\x17" * length


class Capture:
    def __init__(self, linktype: int = dpkt.pcap.DLT_EN10MB):
        self.linktype = linktype
        self.packets: list[tuple[Decimal, bytes]] = []

    def _frame(self, src, dst, sport, dport, seq, flags, payload) -> bytes:
        v6 = ":" in src
        tcp = dpkt.tcp.TCP(sport=sport, dport=dport, seq=seq, ack=1, flags=flags, win=65535, data=payload)
        if v6:
            ip = dpkt.ip6.IP6(src=socket.inet_pton(socket.AF_INET6, src), dst=socket.inet_pton(socket.AF_INET6, dst),
                              nxt=dpkt.ip.IP_PROTO_TCP, hlim=64, data=tcp, plen=len(bytes(tcp)))
        else:
            ip = dpkt.ip.IP(src=socket.inet_aton(src), dst=socket.inet_aton(dst), p=dpkt.ip.IP_PROTO_TCP,
                            ttl=64, data=tcp)
            ip.len = len(bytes(ip))
        if self.linktype == dpkt.pcap.DLT_EN10MB:
            eth = dpkt.ethernet.Ethernet(src=b"\x02" * 6, dst=b"\x04" * 6,
                                         type=dpkt.ethernet.ETH_TYPE_IP6 if v6 else dpkt.ethernet.ETH_TYPE_IP,
                                         data=ip)
            return bytes(eth)
        return bytes(ip)

    def add(self, ts_ms, src, dst, sport, dport, seq, flags, payload=b""):
        self.packets.append((Decimal(ts_ms) / 1000, self._frame(src, dst, sport, dport, seq, flags, payload)))

    def write_pcap(self, path, nano=True):
        with open(path, "wb") as fh:
            w = dpkt.pcap.Writer(fh, linktype=self.linktype, nano=nano)
            for ts, buf in self.packets:
                w.writepkt(buf, ts=ts)

    def write_pcapng(self, path):
        with open(path, "wb") as fh:
            w = dpkt.pcapng.Writer(fh, linktype=self.linktype)
            for ts, buf in self.packets:
                w.writepkt(buf, ts=float(ts))


class Conversation:
    """One TCP connection; tracks sequence numbers per side."""

    def __init__(self, cap: Capture, client, cport, server, sport, isn=(1000, 5000)):
        self.cap = cap
        self.ends = {"c": (client, cport), "s": (server, sport)}
        self.seq = {"c": isn[0], "s": isn[1]}

    def handshake(self, ts_ms):
        (c, cp), (s, sp) = self.ends["c"], self.ends["s"]
        self.cap.add(ts_ms, c, s, cp, sp, self.seq["c"], dpkt.tcp.TH_SYN)
        self.cap.add(ts_ms, s, c, sp, cp, self.seq["s"], dpkt.tcp.TH_SYN | dpkt.tcp.TH_ACK)
        self.seq["c"] += 1
        self.seq["s"] += 1

    def send(self, ts_ms, side: str, payload: bytes, seq=None, advance=True):
        src, sport = self.ends[side]
        dst, dport = self.ends["s" if side == "c" else "c"]
        s = self.seq[side] if seq is None else seq
        self.cap.add(ts_ms, src, dst, sport, dport, s, dpkt.tcp.TH_ACK | dpkt.tcp.TH_PUSH, payload)
        if advance:
            self.seq[side] += len(payload)
