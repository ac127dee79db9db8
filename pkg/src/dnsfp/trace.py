"""Trace data model and the canonical JSON Lines trace format."""
from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DuplicateTraceId, ParseError


class Direction(enum.Enum):
    CLIENT_TO_RESOLVER = "c2r"
    RESOLVER_TO_CLIENT = "r2c"


class Protocol(enum.Enum):
    DOT = "dot"
    DOH = "doh"


C2R = Direction.CLIENT_TO_RESOLVER
R2C = Direction.RESOLVER_TO_CLIENT


@dataclass(frozen=True, slots=True)
class DnsEvent:
    """One TLS application-data record observed on the wire."""

    t_ms: int
    direction: Direction
    size_bytes: int

    @property
    def signed_size(self) -> int:
        # requests carry the negative sign
        return -self.size_bytes if self.direction is C2R else self.size_bytes


@dataclass(frozen=True)
class Trace:
    trace_id: str
    app_label: str
    resolver_id: str
    protocol: Protocol
    collected_at: str
    events: tuple[DnsEvent, ...]

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def signed_sizes(self) -> list[int]:
        return signed_sizes(self)

    def times(self) -> list[int]:
        return [e.t_ms for e in self.events]

    def relabel(self, app_label: str) -> "Trace":
        return Trace(self.trace_id, app_label, self.resolver_id, self.protocol,
                     self.collected_at, self.events)


def signed_sizes(t: Trace) -> list[int]:
    """Per-event signed record sizes: requests negative, responses positive."""
    return [-e.size_bytes if e.direction is C2R else e.size_bytes for e in t.events]


def validate_trace(t: Trace) -> list[str]:
    """Return a list of invariant violations; an empty list means valid."""
    problems: list[str] = []
    if not t.events:
        return ["empty trace"]
    if t.events[0].t_ms != 0:
        problems.append("first event must have t_ms 0")
    prev = None
    for i, e in enumerate(t.events):
        if not isinstance(e.t_ms, int) or e.t_ms < 0:
            problems.append(f"event {i}: negative or non-integer t_ms")
        if not isinstance(e.size_bytes, int) or e.size_bytes < 1:
            problems.append(f"event {i}: size_bytes must be >= 1")
        if not isinstance(e.direction, Direction):
            problems.append(f"event {i}: bad direction")
        if prev is not None and e.t_ms < prev:
            if "non-monotone timestamps" not in problems:
                problems.append("non-monotone timestamps")
        prev = e.t_ms
    return problems


class Dataset(Sequence[Trace]):
    """An immutable list of traces with an app-label index."""

    def __init__(self, traces: Iterable[Trace]):
        self.traces: tuple[Trace, ...] = tuple(traces)
        seen: set[str] = set()
        index: dict[str, list[int]] = defaultdict(list)
        for i, t in enumerate(self.traces):
            if t.trace_id in seen:
                raise DuplicateTraceId(f"duplicate trace_id {t.trace_id!r}")
            seen.add(t.trace_id)
            index[t.app_label].append(i)
        self.label_index: Mapping[str, tuple[int, ...]] = {k: tuple(v) for k, v in index.items()}

    def __len__(self) -> int:
        return len(self.traces)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.traces[i])
        return self.traces[i]

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)

    def __eq__(self, other) -> bool:
        return isinstance(other, Dataset) and self.traces == other.traces

    def __repr__(self) -> str:
        return f"Dataset({len(self.traces)} traces, {len(self.label_index)} labels)"

    @property
    def labels(self) -> list[str]:
        return [t.app_label for t in self.traces]

    def classes(self) -> list[str]:
        return sorted(self.label_index)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.traces[i] for i in indices)

    def filter(self, pred) -> "Dataset":
        return Dataset(t for t in self.traces if pred(t))


# -- JSON Lines -------------------------------------------------------------

def trace_to_json(t: Trace) -> dict:
    return {
        "trace_id": t.trace_id,
        "app": t.app_label,
        "resolver": t.resolver_id,
        "protocol": t.protocol.value,
        "collected_at": t.collected_at,
        "events": [{"t_ms": e.t_ms, "dir": e.direction.value, "size": e.size_bytes}
                   for e in t.events],
    }


def _req(obj: dict, key: str, typ, line: int):
    if key not in obj:
        raise ParseError(line, f"missing field {key!r}")
    val = obj[key]
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ParseError(line, f"field {key!r} must be an integer")
    elif not isinstance(val, typ):
        raise ParseError(line, f"field {key!r} must be {typ.__name__}")
    return val


def trace_from_json(obj: dict, line: int = 0) -> Trace:
    if not isinstance(obj, dict):
        raise ParseError(line, "expected a JSON object")
    try:
        protocol = Protocol(_req(obj, "protocol", str, line))
    except ValueError:
        raise ParseError(line, f"invalid protocol {obj['protocol']!r}") from None
    raw_events = _req(obj, "events", list, line)
    events = []
    for ev in raw_events:
        if not isinstance(ev, dict):
            raise ParseError(line, "event must be an object")
        try:
            direction = Direction(_req(ev, "dir", str, line))
        except ValueError:
            raise ParseError(line, f"invalid dir {ev['dir']!r}") from None
        events.append(DnsEvent(_req(ev, "t_ms", int, line), direction, _req(ev, "size", int, line)))
    t = Trace(
        trace_id=_req(obj, "trace_id", str, line),
        app_label=_req(obj, "app", str, line),
        resolver_id=_req(obj, "resolver", str, line),
        protocol=protocol,
        collected_at=_req(obj, "collected_at", str, line),
        events=tuple(events),
    )
    problems = validate_trace(t)
    if problems:
        raise ParseError(line, "; ".join(problems))
    return t


def iter_jsonl(path: str | Path) -> Iterator[Trace]:
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(n, f"invalid JSON: {exc.msg}") from None
            yield trace_from_json(obj, n)


def read_dataset(path: str | Path) -> Dataset:
    """Load a JSONL trace file. Duplicate trace ids raise DuplicateTraceId."""
    return Dataset(iter_jsonl(path))


def write_dataset(ds: Iterable[Trace], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in ds:
            fh.write(json.dumps(trace_to_json(t), separators=(",", ":")))
            fh.write("\n")
