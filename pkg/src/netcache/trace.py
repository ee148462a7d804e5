"""Canonical access-record schema with bit-exact JSONL/CSV serialization.

A record is one file request seen by the cache federation. Records produced
by the workload generator carry ``Outcome.UNKNOWN`` and no transfer timing;
the simulator fills those in.

Timestamps are UTC with millisecond resolution and always serialize as
``YYYY-MM-DDTHH:MM:SS.mmmZ``. Floats serialize with Python's shortest
round-trip ``repr``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Iterator, Union

from .errors import InvariantViolation, MalformedLine, NonMonotonicTimestamp

SCHEMA_VERSION = 1
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)

CSV_HEADER = ("ts", "file_id", "file_class", "size_bytes", "outcome", "transfer_seconds", "node_id")

_TS_RE = re.compile(r"^(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2})(\.\d{1,6})?(Z|\+00:00)$")
_CONTROL_RE = re.compile(r"[\x00-\x1f\x7f]")


class Outcome(enum.Enum):
    HIT = "hit"
    MISS = "miss"
    UNKNOWN = "unknown"


class TraceFormat(enum.Enum):
    JSONL = "jsonl"
    CSV = "csv"

    @classmethod
    def coerce(cls, value: "TraceFormat | str") -> "TraceFormat":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        if v in ("jsonl", "jsonlines", "json"):
            return cls.JSONL
        if v == "csv":
            return cls.CSV
        raise ValueError(f"unknown trace format {value!r}")

    @classmethod
    def from_path(cls, path) -> "TraceFormat":
        return cls.CSV if str(path).lower().endswith(".csv") else cls.JSONL


@dataclass(frozen=True, slots=True)
class AccessRecord:
    ts: datetime
    file_id: str
    file_class: str
    size_bytes: int
    outcome: Outcome = Outcome.UNKNOWN
    transfer_seconds: float | None = None
    node_id: str | None = None


@dataclass(frozen=True)
class Trace:
    """Ordered, immutable sequence of access records.

    ``source`` is descriptive metadata; it is not serialized with the records,
    so round-trips must pass it back to :func:`parse_trace`.
    """

    records: tuple[AccessRecord, ...] = ()
    source: str = ""
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[AccessRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


@dataclass(frozen=True)
class Violation:
    index: int
    field: str
    rule: str


# --- timestamps ----------------------------------------------------------


def format_ts(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_ts(text: str) -> datetime:
    m = _TS_RE.match(text)
    if m is None:
        raise ValueError(f"not an RFC 3339 UTC timestamp: {text!r}")
    base, frac, _ = m.groups()
    frac = (frac or ".0")[1:].ljust(6, "0")
    return datetime.fromisoformat(f"{base}.{frac}+00:00")


def to_millis(ts: datetime) -> int:
    return (ts - EPOCH) // _MS


def from_millis(ms: int) -> datetime:
    return EPOCH + timedelta(milliseconds=int(ms))


# --- validation ----------------------------------------------------------


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def record_violations(rec: AccessRecord) -> list[tuple[str, str]]:
    """(field, rule) pairs for every AccessRecord invariant ``rec`` breaks."""
    out = []
    ts = rec.ts
    if not isinstance(ts, datetime) or ts.tzinfo is None:
        out.append(("ts", "must be a timezone-aware datetime"))
    else:
        if ts.utcoffset() != timedelta(0):
            out.append(("ts", "must be UTC"))
        if ts.microsecond % 1000:
            out.append(("ts", "millisecond resolution"))
    for name in ("file_id", "file_class"):
        v = getattr(rec, name)
        if not isinstance(v, str) or not v:
            out.append((name, "non-empty string"))
        elif _CONTROL_RE.search(v):
            out.append((name, "no control characters"))
    if not _is_int(rec.size_bytes):
        out.append(("size_bytes", "integer"))
    elif rec.size_bytes < 1:
        out.append(("size_bytes", "size_bytes >= 1"))
    if not isinstance(rec.outcome, Outcome):
        out.append(("outcome", "one of hit/miss/unknown"))
        return out
    unknown = rec.outcome is Outcome.UNKNOWN
    t = rec.transfer_seconds
    if unknown:
        if t is not None:
            out.append(("transfer_seconds", "absent iff outcome is unknown"))
        if rec.node_id is not None:
            out.append(("node_id", "absent iff outcome is unknown"))
    else:
        if t is None:
            out.append(("transfer_seconds", "absent iff outcome is unknown"))
        elif isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t <= 0:
            out.append(("transfer_seconds", "finite and > 0"))
        if rec.node_id is None:
            out.append(("node_id", "absent iff outcome is unknown"))
        elif not isinstance(rec.node_id, str) or not rec.node_id or _CONTROL_RE.search(rec.node_id):
            out.append(("node_id", "non-empty string without control characters"))
    return out


def validate_trace(trace: Trace | Iterable[AccessRecord]) -> list[Violation]:
    """Return every invariant violation in ``trace``; empty iff valid."""
    violations: list[Violation] = []
    if isinstance(trace, Trace) and trace.schema_version != SCHEMA_VERSION:
        violations.append(Violation(-1, "schema_version", f"must be {SCHEMA_VERSION}"))
    prev = None
    for i, rec in enumerate(trace):
        for fld, rule in record_violations(rec):
            violations.append(Violation(i, fld, rule))
        ts = rec.ts
        if isinstance(ts, datetime) and ts.tzinfo is not None:
            if prev is not None and ts < prev:
                violations.append(Violation(i, "ts", "NonMonotonicTimestamp"))
            prev = ts
    return violations


# --- serialization -------------------------------------------------------


def _record_json(rec: AccessRecord) -> str:
    d = {
        "ts": format_ts(rec.ts),
        "file_id": rec.file_id,
        "file_class": rec.file_class,
        "size_bytes": rec.size_bytes,
        "outcome": rec.outcome.value,
    }
    if rec.outcome is not Outcome.UNKNOWN:
        d["transfer_seconds"] = float(rec.transfer_seconds)
        d["node_id"] = rec.node_id
    return json.dumps(d, separators=(",", ":"), ensure_ascii=False)


def _record_row(rec: AccessRecord) -> list[str]:
    known = rec.outcome is not Outcome.UNKNOWN
    return [
        format_ts(rec.ts),
        rec.file_id,
        rec.file_class,
        str(rec.size_bytes),
        rec.outcome.value,
        repr(float(rec.transfer_seconds)) if known else "",
        rec.node_id if known else "",
    ]


def iter_lines(trace: Iterable[AccessRecord], fmt: TraceFormat | str) -> Iterator[str]:
    """Yield the canonical text form of ``trace`` line by line."""
    fmt = TraceFormat.coerce(fmt)
    if fmt is TraceFormat.JSONL:
        for rec in trace:
            yield _record_json(rec) + "\n"
        return
    # a zero-record trace serializes to empty output, header included
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    first = True
    for rec in trace:
        if first:
            w.writerow(CSV_HEADER)
            first = False
        w.writerow(_record_row(rec))
        yield buf.getvalue()
        buf.seek(0)
        buf.truncate()


def write_trace(trace: Iterable[AccessRecord], fmt: TraceFormat | str, out: IO[bytes] | None = None) -> bytes | None:
    """Serialize ``trace`` canonically.

    Returns the UTF-8 bytes when ``out`` is None, otherwise streams into
    ``out`` (a binary file object) and returns None.
    """
    if out is None:
        return "".join(iter_lines(trace, fmt)).encode("utf-8")
    for line in iter_lines(trace, fmt):
        out.write(line.encode("utf-8"))
    return None


def _split_newlines(text: str) -> Iterator[str]:
    # only "\n" ends a record; str.splitlines would also split on U+0085/U+2028
    start = 0
    while start < len(text):
        end = text.find("\n", start)
        if end < 0:
            yield text[start:]
            return
        yield text[start : end + 1]
        start = end + 1


def _text_lines(data) -> Iterator[str]:
    if isinstance(data, (bytes, bytearray, memoryview)):
        yield from _split_newlines(bytes(data).decode("utf-8"))
    elif isinstance(data, str):
        yield from _split_newlines(data)
    else:
        for line in data:
            yield line.decode("utf-8") if isinstance(line, (bytes, bytearray)) else line


def _parse_outcome(v, line):
    try:
        return Outcome(v)
    except ValueError:
        raise MalformedLine(line, f"unknown outcome {v!r}") from None


def _json_record(text: str, line: int) -> AccessRecord:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedLine(line, f"invalid JSON: {e.msg}") from None
    if not isinstance(d, dict):
        raise MalformedLine(line, "record is not a JSON object")
    allowed = set(CSV_HEADER)
    extra = set(d) - allowed
    if extra:
        raise MalformedLine(line, f"unexpected fields {sorted(extra)}")
    for key in ("ts", "file_id", "file_class", "size_bytes", "outcome"):
        if key not in d:
            raise MalformedLine(line, f"missing field {key!r}")
    for key in ("ts", "file_id", "file_class", "outcome"):
        if not isinstance(d[key], str):
            raise MalformedLine(line, f"{key} must be a string")
    if not _is_int(d["size_bytes"]):
        raise MalformedLine(line, "size_bytes must be an integer")
    t = d.get("transfer_seconds")
    if t is not None and (isinstance(t, bool) or not isinstance(t, (int, float))):
        raise MalformedLine(line, "transfer_seconds must be a number")
    node = d.get("node_id")
    if node is not None and not isinstance(node, str):
        raise MalformedLine(line, "node_id must be a string")
    try:
        ts = parse_ts(d["ts"])
    except ValueError as e:
        raise MalformedLine(line, str(e)) from None
    return AccessRecord(
        ts=ts,
        file_id=d["file_id"],
        file_class=d["file_class"],
        size_bytes=d["size_bytes"],
        outcome=_parse_outcome(d["outcome"], line),
        transfer_seconds=None if t is None else float(t),
        node_id=node,
    )


def _csv_record(row: list[str], line: int) -> AccessRecord:
    if len(row) != len(CSV_HEADER):
        raise MalformedLine(line, f"expected {len(CSV_HEADER)} columns, got {len(row)}")
    ts_s, fid, fcls, size_s, out_s, t_s, node = row
    try:
        ts = parse_ts(ts_s)
    except ValueError as e:
        raise MalformedLine(line, str(e)) from None
    try:
        size = int(size_s)
    except ValueError:
        raise MalformedLine(line, f"size_bytes not an integer: {size_s!r}") from None
    try:
        t = float(t_s) if t_s != "" else None
    except ValueError:
        raise MalformedLine(line, f"transfer_seconds not a number: {t_s!r}") from None
    return AccessRecord(
        ts=ts,
        file_id=fid,
        file_class=fcls,
        size_bytes=size,
        outcome=_parse_outcome(out_s, line),
        transfer_seconds=t,
        node_id=node if node != "" else None,
    )


def iter_records(data, fmt: TraceFormat | str) -> Iterator[AccessRecord]:
    """Stream-parse records, validating each one as it is read.

    ``data`` may be bytes, str, or an iterable of lines (e.g. an open file).
    Only the previous timestamp is retained between records.
    """
    fmt = TraceFormat.coerce(fmt)
    prev = None
    lines = _text_lines(data)
    if fmt is TraceFormat.JSONL:
        parsed = ((n, _json_record(s, n)) for n, s in enumerate(lines, 1) if s.strip())
    else:
        parsed = _csv_parsed(lines)
    for lineno, rec in parsed:
        bad = record_violations(rec)
        if bad:
            raise InvariantViolation(lineno, bad[0][0], bad[0][1])
        if prev is not None and rec.ts < prev:
            raise NonMonotonicTimestamp(lineno)
        prev = rec.ts
        yield rec


def _csv_parsed(lines: Iterator[str]) -> Iterator[tuple[int, AccessRecord]]:
    numbered = ((n, s) for n, s in enumerate(lines, 1) if s.strip())
    header_seen = False
    for lineno, text in numbered:
        try:
            row = next(csv.reader([text]))
        except csv.Error as e:
            raise MalformedLine(lineno, f"CSV error: {e}") from None
        if not header_seen:
            if tuple(row) != CSV_HEADER:
                raise MalformedLine(lineno, f"expected header {','.join(CSV_HEADER)}")
            header_seen = True
            continue
        yield lineno, _csv_record(row, lineno)


def parse_trace(data, fmt: TraceFormat | str, source: str = "") -> Trace:
    """Parse a whole serialized trace. See :func:`iter_records` for errors."""
    return Trace(tuple(iter_records(data, fmt)), source=source)


def read_trace(path, fmt: TraceFormat | str | None = None) -> Trace:
    fmt = TraceFormat.from_path(path) if fmt is None else fmt
    with open(path, "rb") as fh:
        return parse_trace(fh, fmt, source=str(path))


def save_trace(trace: Iterable[AccessRecord], path, fmt: TraceFormat | str | None = None) -> None:
    fmt = TraceFormat.from_path(path) if fmt is None else fmt
    with open(path, "wb") as fh:
        write_trace(trace, fmt, fh)
