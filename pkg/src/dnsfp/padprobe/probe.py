"""Probing DoT/DoH resolvers and classifying their response padding."""
from __future__ import annotations

import csv
import enum
import io
import json
import socket
import ssl
import struct
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DnsfpError, ParseError, WireFormatError
from .wire import PADDING_OPTION, DnsQuerySpec, b64url, build_query, parse_message

EDNS_RESPONSE_BLOCK = 468
MEDIA_TYPE = "application/dns-message"
# NOERROR and NXDOMAIN are answers; anything else is the resolver refusing or failing.
VALID_RCODES = (0, 3)

DEFAULT_PROBES = (
    DnsQuerySpec("example.com", "A"),
    DnsQuerySpec("google.com", "TXT"),
    DnsQuerySpec("nxdomain-probe.invalid", "A"),
    DnsQuerySpec("example.com", "AAAA"),
)


class Verdict(str, enum.Enum):
    NO_PADDING = "NoPadding"
    CUSTOM = "Custom"
    EDNS468 = "Edns468"
    INVALID = "Invalid"


@dataclass(frozen=True)
class ProbeTarget:
    resolver_id: str
    protocol: str  # "dot" | "doh"
    host: str
    port: int | None = None
    url_template: str | None = None
    method: str = "POST"
    tls_server_name: str | None = None
    timeout_ms: int = 5000
    insecure: bool = False

    def __post_init__(self):
        proto = self.protocol.lower()
        object.__setattr__(self, "protocol", proto)
        object.__setattr__(self, "method", self.method.upper())
        if proto not in ("dot", "doh"):
            raise ValueError(f"protocol must be dot or doh, got {self.protocol!r}")
        if self.port is None:
            object.__setattr__(self, "port", 853 if proto == "dot" else 443)
        if proto == "doh":
            if not self.url_template or ("{?dns}" not in self.url_template and "{dns}" not in self.url_template):
                raise ValueError(f"{self.resolver_id}: DoH url_template must contain {{?dns}} or {{dns}}")
            if self.method not in ("GET", "POST"):
                raise ValueError(f"{self.resolver_id}: method must be GET or POST")

    def server_name(self) -> str:
        return self.tls_server_name or self.host


@dataclass
class ProbeRecord:
    qname: str
    qtype: str
    query_len: int
    response_len: int | None = None
    rcode: int | None = None
    padding_present: bool = False
    padding_len: int | None = None
    error: str | None = None

    @property
    def valid(self) -> bool:
        return self.error is None and self.response_len is not None and self.rcode in VALID_RCODES


@dataclass
class ProbeResult:
    target: ProbeTarget
    records: list[ProbeRecord] = field(default_factory=list)
    verdict: Verdict = Verdict.INVALID
    diagnostic: str | None = None

    def to_json(self) -> dict:
        return {
            "resolver_id": self.target.resolver_id,
            "protocol": self.target.protocol,
            "host": self.target.host,
            "port": self.target.port,
            "verdict": self.verdict.value,
            "diagnostic": self.diagnostic,
            "records": [asdict(r) for r in self.records],
        }


def classify_padding(records: Iterable[ProbeRecord]) -> Verdict:
    valid = [r for r in records if r.valid]
    if not valid:
        return Verdict.INVALID
    aligned = all(r.response_len % EDNS_RESPONSE_BLOCK == 0 for r in valid)
    any_opt = any(r.padding_present for r in valid)
    if aligned and all(r.padding_present for r in valid):
        return Verdict.EDNS468
    if not any_opt and not aligned:
        return Verdict.NO_PADDING
    return Verdict.CUSTOM


def _record_from_response(spec: DnsQuerySpec, query: bytes, resp: bytes, txn_id: int) -> ProbeRecord:
    rec = ProbeRecord(spec.qname, spec.qtype, len(query))
    try:
        msg = parse_message(resp)
    except WireFormatError as e:
        rec.error = f"malformed response: {e}"
        return rec
    if not msg.is_response:
        rec.error = "QR bit not set"
        return rec
    if msg.txn_id != txn_id:
        rec.error = f"transaction id mismatch ({msg.txn_id} != {txn_id})"
        return rec
    rec.response_len = len(resp)
    rec.rcode = msg.rcode
    pad = msg.padding
    rec.padding_present = pad is not None
    rec.padding_len = len(pad) if pad is not None else None
    return rec


def _ssl_context(target: ProbeTarget) -> ssl.SSLContext:
    ctx = ssl.create_default_context()
    if target.insecure:
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
    return ctx


def _recv_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-message")
        buf += chunk
    return bytes(buf)


def _txn_id(i: int) -> int:
    return (0x5A00 + i) & 0xFFFF


def probe_dot(target: ProbeTarget, specs: Sequence[DnsQuerySpec] = DEFAULT_PROBES) -> ProbeResult:
    """Send each query over one TLS connection (reconnecting after a failure)."""
    if target.protocol != "dot":
        raise ValueError("probe_dot needs a DoT target")
    result = ProbeResult(target)
    timeout = target.timeout_ms / 1000.0
    ctx = _ssl_context(target)
    conn = None
    last_err = None
    for i, spec in enumerate(specs):
        txn = _txn_id(i)
        query = build_query(spec, txn)
        try:
            if conn is None:
                raw = socket.create_connection((target.host, target.port), timeout=timeout)
                try:
                    conn = ctx.wrap_socket(raw, server_hostname=target.server_name())
                except Exception:
                    raw.close()
                    raise
            conn.sendall(struct.pack("!H", len(query)) + query)
            (n,) = struct.unpack("!H", _recv_exact(conn, 2))
            resp = _recv_exact(conn, n)
            rec = _record_from_response(spec, query, resp, txn)
        except (OSError, ssl.SSLError, ConnectionError) as e:
            last_err = f"{type(e).__name__}: {e}"
            rec = ProbeRecord(spec.qname, spec.qtype, len(query), error=last_err)
            if conn is not None:
                conn.close()
            conn = None
        result.records.append(rec)
    if conn is not None:
        conn.close()
    _finish(result, last_err)
    return result


def _doh_url(template: str, query: bytes | None) -> str:
    if query is None:
        return template.replace("{?dns}", "").replace("{dns}", "")
    if "{?dns}" in template:
        return template.replace("{?dns}", "?dns=" + b64url(query))
    return template.replace("{dns}", b64url(query))


def probe_doh(target: ProbeTarget, specs: Sequence[DnsQuerySpec] = DEFAULT_PROBES) -> ProbeResult:
    if target.protocol != "doh":
        raise ValueError("probe_doh needs a DoH target")
    result = ProbeResult(target)
    timeout = target.timeout_ms / 1000.0
    ctx = _ssl_context(target)
    last_err = None
    for i, spec in enumerate(specs):
        txn = 0 if target.method == "GET" else _txn_id(i)
        query = build_query(spec, txn)
        headers = {"Accept": MEDIA_TYPE}
        if target.method == "GET":
            req = urllib.request.Request(_doh_url(target.url_template, query), headers=headers)
        else:
            headers["Content-Type"] = MEDIA_TYPE
            req = urllib.request.Request(_doh_url(target.url_template, None), data=query,
                                         headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout, context=ctx) as resp:
                body = resp.read()
            rec = _record_from_response(spec, query, body, txn)
        except urllib.error.HTTPError as e:
            last_err = f"HTTP {e.code}"
            rec = ProbeRecord(spec.qname, spec.qtype, len(query), error=last_err)
        except (OSError, ValueError) as e:
            last_err = f"{type(e).__name__}: {e}"
            rec = ProbeRecord(spec.qname, spec.qtype, len(query), error=last_err)
        result.records.append(rec)
    _finish(result, last_err)
    return result


def _finish(result: ProbeResult, last_err: str | None) -> None:
    result.verdict = classify_padding(result.records)
    if result.verdict is Verdict.INVALID:
        errs = [r.error for r in result.records if r.error]
        result.diagnostic = last_err or (errs[-1] if errs else "no valid DNS response (error rcodes)")


def probe(target: ProbeTarget, specs: Sequence[DnsQuerySpec] = DEFAULT_PROBES) -> ProbeResult:
    try:
        if target.protocol == "dot":
            return probe_dot(target, specs)
        return probe_doh(target, specs)
    except DnsfpError as e:  # e.g. an unencodable probe spec
        return ProbeResult(target, verdict=Verdict.INVALID, diagnostic=str(e))


def probe_many(targets: Sequence[ProbeTarget], specs: Sequence[DnsQuerySpec] = DEFAULT_PROBES,
               max_concurrency: int = 8) -> list[ProbeResult]:
    """Probe targets concurrently; results come back in input order."""
    if not targets:
        return []
    with ThreadPoolExecutor(max_workers=max(1, min(max_concurrency, len(targets)))) as ex:
        return list(ex.map(lambda t: probe(t, specs), targets))


# -- target files and reports ---------------------------------------------------

def read_targets(path: str | Path, insecure: bool = False, timeout_ms: int = 5000) -> list[ProbeTarget]:
    """CSV with columns resolver_id, protocol, host, port, doh_url, method.

    Optional columns tls_server_name and timeout_ms are honoured when present.
    """
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"resolver_id", "protocol", "host"} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(1, f"targets file missing columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                port = row.get("port") or None
                out.append(ProbeTarget(
                    resolver_id=row["resolver_id"],
                    protocol=row["protocol"],
                    host=row["host"],
                    port=int(port) if port else None,
                    url_template=row.get("doh_url") or None,
                    method=row.get("method") or "POST",
                    tls_server_name=row.get("tls_server_name") or None,
                    timeout_ms=int(row.get("timeout_ms") or timeout_ms),
                    insecure=insecure,
                ))
            except (ValueError, TypeError) as e:
                raise ParseError(lineno, str(e)) from None
    return out


def summarize(results: Sequence[ProbeResult]) -> dict:
    """Per-protocol counts and fractions of each verdict among reachable resolvers."""
    summary = {}
    for proto in sorted({r.target.protocol for r in results}):
        rs = [r for r in results if r.target.protocol == proto]
        ok = [r for r in rs if r.verdict is not Verdict.INVALID]
        entry = {"total": len(rs), "valid": len(ok),
                 "valid_fraction": len(ok) / len(rs) if rs else 0.0}
        for v in (Verdict.NO_PADDING, Verdict.CUSTOM, Verdict.EDNS468):
            n = sum(r.verdict is v for r in ok)
            entry[v.value] = {"count": n, "fraction": n / len(ok) if ok else 0.0}
        summary[proto] = entry
    return summary


CSV_FIELDS = ("resolver_id", "protocol", "host", "port", "verdict", "n_queries", "n_valid",
              "response_lengths", "padding_present", "diagnostic")


def report_csv(results: Sequence[ProbeResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in results:
        valid = [x for x in r.records if x.valid]
        w.writerow([r.target.resolver_id, r.target.protocol, r.target.host, r.target.port,
                    r.verdict.value, len(r.records), len(valid),
                    ";".join(str(x.response_len) for x in valid),
                    ";".join("1" if x.padding_present else "0" for x in valid),
                    r.diagnostic or ""])
    return buf.getvalue()


def report_json(results: Sequence[ProbeResult]) -> str:
    doc = {"targets": [r.to_json() for r in results], "summary": summarize(results)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(results: Sequence[ProbeResult], path: str | Path) -> None:
    """JSON when the path ends in .json, CSV otherwise."""
    path = Path(path)
    text = report_json(results) if path.suffix.lower() == ".json" else report_csv(results)
    path.write_text(text)
