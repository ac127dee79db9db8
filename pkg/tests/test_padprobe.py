import csv
import io
import itertools
import json
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnsfp.errors import NameTooLong, ParseError, UnencodableBlock, WireFormatError
from dnsfp.padprobe import (
    PADDING_OPTION,
    DnsQuerySpec,
    ProbeRecord,
    ProbeTarget,
    Verdict,
    b64url,
    build_query,
    classify_padding,
    padding_length,
    parse_message,
    probe_doh,
    probe_dot,
    probe_many,
    read_targets,
    report_csv,
    report_json,
    summarize,
    write_report,
)

from mockdns import DohServer, DotServer, answer, self_signed
from oracles import base64url_nopad, query_wire_length

label_st = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-", min_size=1, max_size=63)
name_st = st.lists(label_st, min_size=1, max_size=4).map(".".join).filter(lambda n: len(n) <= 253)


# -- wire format -------------------------------------------------------------------------

def test_example_com_matches_wire_oracle():
    wire = build_query(DnsQuerySpec("example.com", "A", pad_block=128), 0x1234)
    total, pad = query_wire_length("example.com", 128)
    msg = parse_message(wire)
    assert len(wire) == total == 128
    assert len(msg.padding) == pad == 84
    assert msg.padding == bytes(84)
    assert msg.opt.options[0][0] == PADDING_OPTION == 12


def test_block_of_one_needs_no_padding():
    wire = build_query(DnsQuerySpec("example.com", pad_block=1), 1)
    assert len(parse_message(wire).padding) == 0


def test_deterministic():
    spec = DnsQuerySpec("a.example.org", "AAAA", pad_block=64)
    assert build_query(spec, 7) == build_query(spec, 7)
    assert build_query(spec, 7) != build_query(spec, 8)


def test_overshoot_moves_to_next_block():
    # 12 + question + 11 + 4 = 129 bytes before padding data
    qname = "a" * 48 + "." + "b" * 47  # 98 bytes on the wire
    spec = DnsQuerySpec(qname, pad_block=128)
    wire = build_query(spec, 0)
    assert len(wire) == 256
    assert padding_length(129 - 4, 128) == 127


def test_name_limits():
    with pytest.raises(NameTooLong):
        DnsQuerySpec("a" * 64 + ".com")
    with pytest.raises(NameTooLong):
        DnsQuerySpec(".".join(["a" * 60] * 5))
    with pytest.raises(ValueError):
        DnsQuerySpec("bad..name")
    with pytest.raises(ValueError):
        DnsQuerySpec("example.com", pad_block=0)
    with pytest.raises(ValueError):
        DnsQuerySpec("example.com", qtype="NOPE")
    with pytest.raises(UnencodableBlock):
        padding_length(10, 0)
    with pytest.raises(ValueError):
        build_query(DnsQuerySpec("example.com"), 70000)


@settings(max_examples=200, deadline=None)
@given(name_st, st.integers(1, 512), st.sampled_from(["A", "AAAA", "TXT", "MX"]), st.booleans(),
       st.integers(0, 0xFFFF))
def test_alignment_and_round_trip(name, block, qtype, dnssec, txn):
    spec = DnsQuerySpec(name, qtype, pad_block=block, want_dnssec=dnssec)
    wire = build_query(spec, txn)
    assert len(wire) % block == 0
    total, pad = query_wire_length(name, block)
    assert len(wire) == total
    msg = parse_message(wire)
    assert msg.txn_id == txn and msg.flags & 0x0100 and not msg.is_response
    assert msg.questions == [(name + ".", {"A": 1, "AAAA": 28, "TXT": 16, "MX": 15}[qtype], 1)]
    assert len(msg.padding) == pad
    assert msg.opt.do_bit == dnssec and msg.opt.udp_size == 4096


def test_parser_rejects_garbage():
    with pytest.raises(WireFormatError):
        parse_message(b"\x00\x01")
    wire = build_query(DnsQuerySpec("example.com"), 3)
    with pytest.raises(WireFormatError):
        parse_message(wire[:40])
    loop = bytes(12)[:4] + b"\x00\x01" + bytes(6) + b"\xc0\x0c"
    with pytest.raises(WireFormatError):
        parse_message(loop)


def test_response_with_compression_pointer():
    q = build_query(DnsQuerySpec("example.com"), 99)
    r = parse_message(answer(q, 468))
    assert r.is_response and r.txn_id == 99 and r.wire_length == 468
    assert r.answers[0].name == "example.com." and r.answers[0].rdata == bytes([93, 184, 216, 34])
    assert r.rcode == 0 and r.padding is not None


def test_base64url():
    assert b64url(bytes([0, 1, 2])) == "AAEC" == base64url_nopad(bytes([0, 1, 2]))
    for n in range(0, 40):
        data = bytes(range(200, 200 + n % 50)) + bytes([255, 254])
        assert b64url(data) == base64url_nopad(data)
        assert "=" not in b64url(data)


# -- classification --------------------------------------------------------------------------

def rec(length, present, rcode=0):
    return ProbeRecord("x", "A", 128, length, rcode, present, 10 if present else None)


TABLE = [
    ([rec(64, False), rec(97, False)], Verdict.NO_PADDING),
    ([rec(468, True), rec(936, True)], Verdict.EDNS468),
    ([rec(128, True), rec(256, True)], Verdict.CUSTOM),
]


@pytest.mark.parametrize("records, verdict", TABLE)
def test_verdict_table_and_permutations(records, verdict):
    for perm in itertools.permutations(records):
        assert classify_padding(list(perm)) is verdict


def test_verdict_edge_cases():
    assert classify_padding([]) is Verdict.INVALID
    assert classify_padding([ProbeRecord("x", "A", 128, error="timeout")]) is Verdict.INVALID
    assert classify_padding([rec(468, True, rcode=2)]) is Verdict.INVALID  # SERVFAIL is not an answer
    assert classify_padding([rec(468, True), rec(300, True, rcode=5)]) is Verdict.EDNS468
    assert classify_padding([rec(468, True, rcode=3)]) is Verdict.EDNS468  # NXDOMAIN is an answer
    # aligned but without the option: coincidence or other scheme, not the recommendation
    assert classify_padding([rec(468, False), rec(936, False)]) is Verdict.CUSTOM
    assert classify_padding([rec(468, True), rec(500, False)]) is Verdict.CUSTOM


# -- live probing against local mocks ---------------------------------------------------------

@pytest.fixture(scope="module")
def certs(tmp_path_factory):
    return self_signed(tmp_path_factory.mktemp("tls"))


def dot_target(port, **kw):
    kw.setdefault("insecure", True)
    return ProbeTarget("mock", "dot", "127.0.0.1", port, timeout_ms=3000, **kw)


def test_dot_edns468(certs):
    sizes = {0: 0, 1: 0, 2: 600}
    srv = DotServer(*certs, lambda i, q: answer(q, 468, big=sizes.get(i, 0)))
    try:
        specs = [DnsQuerySpec("example.com"), DnsQuerySpec("example.org"), DnsQuerySpec("example.net", "TXT")]
        res = probe_dot(dot_target(srv.port), specs)
    finally:
        srv.close()
    assert [r.response_len for r in res.records] == [468, 468, 936]
    assert all(r.padding_present and r.rcode == 0 for r in res.records)
    assert [r.query_len for r in res.records] == [128] * 3
    assert res.verdict is Verdict.EDNS468 and res.diagnostic is None


def test_dot_unpadded(certs):
    srv = DotServer(*certs, lambda i, q: answer(q, None, big=i * 7))
    try:
        res = probe_dot(dot_target(srv.port))
    finally:
        srv.close()
    assert len(res.records) == 4
    assert res.verdict is Verdict.NO_PADDING


def test_dot_connection_closed(certs):
    srv = DotServer(*certs, lambda i, q: None)
    try:
        res = probe_dot(dot_target(srv.port))
    finally:
        srv.close()
    assert res.verdict is Verdict.INVALID and res.diagnostic
    assert all(r.error for r in res.records)


def test_dot_validates_certificates_by_default(certs):
    srv = DotServer(*certs, lambda i, q: answer(q, 468))
    try:
        res = probe_dot(dot_target(srv.port, insecure=False))
    finally:
        srv.close()
    assert res.verdict is Verdict.INVALID
    assert "CERTIFICATE" in res.diagnostic.upper() or "SSL" in res.diagnostic.upper()


def test_dot_refused_and_wrong_id(certs):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        free = s.getsockname()[1]
    assert probe_dot(dot_target(free)).verdict is Verdict.INVALID

    def wrong_id(i, q):
        r = bytearray(answer(q, 468))
        r[0] ^= 0xFF
        return bytes(r)

    srv = DotServer(*certs, wrong_id)
    try:
        res = probe_dot(dot_target(srv.port), [DnsQuerySpec("example.com")])
    finally:
        srv.close()
    assert res.verdict is Verdict.INVALID and "mismatch" in res.records[0].error


def test_doh_post():
    srv = DohServer(lambda i, q: (200, answer(q, 468)))
    try:
        res = probe_doh(ProbeTarget("m", "doh", "127.0.0.1", srv.port, srv.url(), "POST"))
    finally:
        srv.close()
    assert res.verdict is Verdict.EDNS468
    method, path, headers, body = srv.seen[0]
    assert method == "POST" and path == "/dns-query"
    assert headers["Content-Type"] == "application/dns-message"
    assert len(body) == 128


def test_doh_get_uses_txn_zero_and_unpadded_base64():
    srv = DohServer(lambda i, q: (200, answer(q, 128)))
    try:
        res = probe_doh(ProbeTarget("m", "doh", "127.0.0.1", srv.port, srv.url(), "GET"))
    finally:
        srv.close()
    assert res.verdict is Verdict.CUSTOM
    for method, path, _, query in srv.seen:
        assert method == "GET" and "=" not in path.split("dns=")[1]
        assert parse_message(query).txn_id == 0


def test_doh_errors():
    srv = DohServer(lambda i, q: (500, b"") if i % 2 == 0 else (200, b"junk"))
    try:
        res = probe_doh(ProbeTarget("m", "doh", "127.0.0.1", srv.port, srv.url("{?dns}"), "POST"))
    finally:
        srv.close()
    assert res.verdict is Verdict.INVALID
    assert res.records[0].error == "HTTP 500"
    assert "malformed" in res.records[1].error


def test_target_validation():
    assert ProbeTarget("x", "DoT", "h").port == 853
    assert ProbeTarget("x", "doh", "h", url_template="https://h/q{?dns}").port == 443
    with pytest.raises(ValueError):
        ProbeTarget("x", "doh", "h", url_template="https://h/q")
    with pytest.raises(ValueError):
        ProbeTarget("x", "doq", "h")
    with pytest.raises(ValueError):
        ProbeTarget("x", "doh", "h", url_template="https://h/{?dns}", method="PUT")


def test_targets_file_and_reports(tmp_path, certs):
    dot = DotServer(*certs, lambda i, q: answer(q, 468))
    doh = DohServer(lambda i, q: (200, answer(q, None)))
    try:
        path = tmp_path / "targets.csv"
        path.write_text(
            "resolver_id,protocol,host,port,doh_url,method\n"
            f"d1,dot,127.0.0.1,{dot.port},,\n"
            f"h1,doh,127.0.0.1,{doh.port},{doh.url()},GET\n"
        )
        targets = read_targets(path, insecure=True, timeout_ms=3000)
        results = probe_many(targets, max_concurrency=2)
    finally:
        dot.close()
        doh.close()
    assert [r.target.resolver_id for r in results] == ["d1", "h1"]
    assert [r.verdict for r in results] == [Verdict.EDNS468, Verdict.NO_PADDING]
    rows = list(csv.DictReader(io.StringIO(report_csv(results))))
    assert rows[0]["verdict"] == "Edns468" and rows[1]["verdict"] == "NoPadding"
    doc = json.loads(report_json(results))
    assert doc["summary"]["dot"]["Edns468"]["fraction"] == 1.0
    assert doc["summary"]["doh"]["valid_fraction"] == 1.0
    write_report(results, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["targets"][0]["verdict"] == "Edns468"


def test_summary_fractions():
    t = ProbeTarget("a", "dot", "h")
    from dnsfp.padprobe import ProbeResult
    rs = [ProbeResult(t, verdict=v) for v in
          (Verdict.EDNS468, Verdict.CUSTOM, Verdict.NO_PADDING, Verdict.NO_PADDING, Verdict.INVALID)]
    s = summarize(rs)["dot"]
    assert s["total"] == 5 and s["valid"] == 4 and s["valid_fraction"] == 0.8
    assert s["NoPadding"] == {"count": 2, "fraction": 0.5}


def test_bad_targets_file(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("resolver_id,host\nx,y\n")
    with pytest.raises(ParseError):
        read_targets(p)
    p.write_text("resolver_id,protocol,host,port\nx,dot,h,notaport\n")
    with pytest.raises(ParseError) as ei:
        read_targets(p)
    assert ei.value.line == 2
