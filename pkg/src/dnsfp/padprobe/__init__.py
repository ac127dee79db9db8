"""EDNS0 padding: query construction, resolver probing and verdicts."""
from .probe import (
    DEFAULT_PROBES,
    EDNS_RESPONSE_BLOCK,
    ProbeRecord,
    ProbeResult,
    ProbeTarget,
    Verdict,
    classify_padding,
    probe,
    probe_doh,
    probe_dot,
    probe_many,
    read_targets,
    report_csv,
    report_json,
    summarize,
    write_report,
)
from .wire import (
    PADDING_OPTION,
    DnsMessage,
    DnsQuerySpec,
    OptRecord,
    b64url,
    build_query,
    build_response,
    encode_name,
    padding_length,
    parse_message,
)

__all__ = [
    "DEFAULT_PROBES", "EDNS_RESPONSE_BLOCK", "PADDING_OPTION", "DnsMessage", "DnsQuerySpec",
    "OptRecord", "ProbeRecord", "ProbeResult", "ProbeTarget", "Verdict", "b64url", "build_query",
    "build_response", "classify_padding", "encode_name", "padding_length", "parse_message", "probe",
    "probe_doh", "probe_dot", "probe_many", "read_targets", "report_csv", "report_json",
    "summarize", "write_report",
]
