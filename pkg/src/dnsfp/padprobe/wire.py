"""Minimal DNS wire format: padded queries (EDNS0 option 12) and a parser."""
from __future__ import annotations

import base64
import struct
from dataclasses import dataclass, field

from ..errors import NameTooLong, UnencodableBlock, WireFormatError

OPT_TYPE = 41
PADDING_OPTION = 12
HEADER_LEN = 12
OPT_FIXED_LEN = 11  # root name, type, class, ttl, rdlength
OPTION_HEADER_LEN = 4

QTYPES = {"A": 1, "NS": 2, "CNAME": 5, "SOA": 6, "PTR": 12, "MX": 15, "TXT": 16, "AAAA": 28,
          "SRV": 33, "DS": 43, "DNSKEY": 48, "HTTPS": 65, "ANY": 255}
RCODES = {0: "NOERROR", 1: "FORMERR", 2: "SERVFAIL", 3: "NXDOMAIN", 4: "NOTIMP", 5: "REFUSED"}


@dataclass(frozen=True)
class DnsQuerySpec:
    qname: str
    qtype: str = "A"
    pad_block: int = 128
    edns_udp_size: int = 4096
    want_dnssec: bool = False

    def __post_init__(self):
        if self.pad_block < 1:
            raise ValueError("pad_block must be >= 1")
        if self.qtype.upper() not in QTYPES:
            raise ValueError(f"unknown qtype {self.qtype!r}")
        encode_name(self.qname)  # validates


def encode_name(name: str) -> bytes:
    name = name.rstrip(".")
    out = bytearray()
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not raw:
                raise ValueError(f"empty label in {name!r}")
            if len(raw) > 63:
                raise NameTooLong(f"label {label[:20]!r}... exceeds 63 bytes")
            out.append(len(raw))
            out += raw
    out.append(0)
    if len(out) > 255:
        raise NameTooLong(f"name {name[:30]!r}... exceeds 255 bytes")
    return bytes(out)


def padding_length(unpadded_len: int, block: int) -> int:
    """Padding-data bytes so that unpadded_len + 4 + result is a multiple of block.

    ``unpadded_len`` excludes the padding option header.
    """
    if block < 1:
        raise UnencodableBlock("block must be >= 1")
    base = unpadded_len + OPTION_HEADER_LEN
    total = -(-base // block) * block
    pad = total - base
    if pad > 0xFFFF:
        raise UnencodableBlock("padding exceeds the option length field")
    return pad


def build_query(spec: DnsQuerySpec, txn_id: int) -> bytes:
    """A recursive query with one OPT record whose padding option aligns the
    whole message to ``spec.pad_block`` bytes."""
    if not 0 <= txn_id <= 0xFFFF:
        raise ValueError("txn_id must fit 16 bits")
    header = struct.pack("!HHHHHH", txn_id, 0x0100, 1, 0, 0, 1)
    question = encode_name(spec.qname) + struct.pack("!HH", QTYPES[spec.qtype.upper()], 1)
    unpadded = len(header) + len(question) + OPT_FIXED_LEN
    pad = padding_length(unpadded, spec.pad_block)
    option = struct.pack("!HH", PADDING_OPTION, pad) + bytes(pad)
    ttl = 0x8000 if spec.want_dnssec else 0
    opt = b"\x00" + struct.pack("!HHIH", OPT_TYPE, spec.edns_udp_size, ttl, len(option)) + option
    return header + question + opt


# -- parsing --------------------------------------------------------------------

@dataclass
class ResourceRecord:
    name: str
    rtype: int
    rclass: int
    ttl: int
    rdata: bytes


@dataclass
class OptRecord:
    udp_size: int
    ext_rcode: int
    version: int
    do_bit: bool
    options: list[tuple[int, bytes]] = field(default_factory=list)

    def option(self, code: int) -> bytes | None:
        for c, data in self.options:
            if c == code:
                return data
        return None


@dataclass
class DnsMessage:
    txn_id: int
    flags: int
    questions: list[tuple[str, int, int]]
    answers: list[ResourceRecord]
    authority: list[ResourceRecord]
    additional: list[ResourceRecord]
    opt: OptRecord | None
    wire_length: int

    @property
    def is_response(self) -> bool:
        return bool(self.flags & 0x8000)

    @property
    def rcode(self) -> int:
        ext = self.opt.ext_rcode if self.opt else 0
        return (ext << 4) | (self.flags & 0xF)

    @property
    def padding(self) -> bytes | None:
        return self.opt.option(PADDING_OPTION) if self.opt else None


def _read_name(buf: bytes, off: int) -> tuple[str, int]:
    labels = []
    jumps = 0
    end = None
    while True:
        if off >= len(buf):
            raise WireFormatError("name runs past end of message")
        n = buf[off]
        if n & 0xC0 == 0xC0:
            if off + 1 >= len(buf):
                raise WireFormatError("truncated compression pointer")
            if end is None:
                end = off + 2
            off = ((n & 0x3F) << 8) | buf[off + 1]
            jumps += 1
            if jumps > 64:
                raise WireFormatError("compression loop")
            continue
        if n & 0xC0:
            raise WireFormatError("unsupported label type")
        off += 1
        if n == 0:
            break
        if off + n > len(buf):
            raise WireFormatError("label runs past end of message")
        labels.append(buf[off:off + n].decode("ascii", errors="replace"))
        off += n
    return ".".join(labels) + ".", (end if end is not None else off)


def _read_rr(buf: bytes, off: int) -> tuple[ResourceRecord, int]:
    name, off = _read_name(buf, off)
    if off + 10 > len(buf):
        raise WireFormatError("truncated resource record")
    rtype, rclass, ttl, rdlen = struct.unpack_from("!HHIH", buf, off)
    off += 10
    if off + rdlen > len(buf):
        raise WireFormatError("rdata runs past end of message")
    return ResourceRecord(name, rtype, rclass, ttl, bytes(buf[off:off + rdlen])), off + rdlen


def _parse_options(rdata: bytes) -> list[tuple[int, bytes]]:
    out = []
    off = 0
    while off < len(rdata):
        if off + 4 > len(rdata):
            raise WireFormatError("truncated EDNS option")
        code, ln = struct.unpack_from("!HH", rdata, off)
        off += 4
        if off + ln > len(rdata):
            raise WireFormatError("EDNS option runs past rdata")
        out.append((code, rdata[off:off + ln]))
        off += ln
    return out


def parse_message(buf: bytes) -> DnsMessage:
    if len(buf) < HEADER_LEN:
        raise WireFormatError("message shorter than header")
    txn, flags, qd, an, ns, ar = struct.unpack_from("!HHHHHH", buf, 0)
    off = HEADER_LEN
    questions = []
    for _ in range(qd):
        name, off = _read_name(buf, off)
        if off + 4 > len(buf):
            raise WireFormatError("truncated question")
        qtype, qclass = struct.unpack_from("!HH", buf, off)
        off += 4
        questions.append((name, qtype, qclass))
    sections = []
    for count in (an, ns, ar):
        rrs = []
        for _ in range(count):
            rr, off = _read_rr(buf, off)
            rrs.append(rr)
        sections.append(rrs)
    opt = None
    for rr in sections[2]:
        if rr.rtype == OPT_TYPE:
            opt = OptRecord(rr.rclass, rr.ttl >> 24, (rr.ttl >> 16) & 0xFF, bool(rr.ttl & 0x8000),
                            _parse_options(rr.rdata))
    return DnsMessage(txn, flags, questions, *sections, opt, len(buf))


def build_response(query: bytes, answers: list[tuple[int, bytes]] = (), pad_block: int | None = None,
                   rcode: int = 0, ttl: int = 300) -> bytes:
    """Answer ``query`` with the given (rtype, rdata) records.

    With ``pad_block`` the response carries a padding option aligning it to
    that block; without it, no OPT record is added. Used by test fixtures and
    local mock resolvers.
    """
    q = parse_message(query)
    flags = 0x8000 | 0x0100 | 0x0080 | (rcode & 0xF)
    out = bytearray(struct.pack("!HHHHHH", q.txn_id, flags, len(q.questions), len(answers), 0,
                                1 if pad_block else 0))
    for name, qtype, qclass in q.questions:
        out += encode_name(name) + struct.pack("!HH", qtype, qclass)
    for rtype, rdata in answers:
        out += b"\xc0\x0c" + struct.pack("!HHIH", rtype, 1, ttl, len(rdata)) + rdata
    if pad_block:
        pad = padding_length(len(out) + OPT_FIXED_LEN, pad_block)
        option = struct.pack("!HH", PADDING_OPTION, pad) + bytes(pad)
        out += b"\x00" + struct.pack("!HHIH", OPT_TYPE, 4096, 0, len(option)) + option
    return bytes(out)


def b64url(data: bytes) -> str:
    """base64url without trailing '=' characters, as used by DoH GET."""
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")
