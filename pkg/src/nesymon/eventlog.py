"""Event-log ingestion: XES and CSV parsing, prefixes, labeling, splits.

A log is a collection of traces; a trace is the time-ordered event sequence
of one case.  Prediction operates on prefixes (the first k events of a
trace) which inherit the binary outcome label of their full trace.  Splits
are drawn at trace level so no trace contributes prefixes to more than one
partition.

Missing payload values are represented by the ABSENT sentinel rather than
imputed; downstream feature encoding decides how to handle absence.
"""

from __future__ import annotations

import csv
import io
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np


class _Absent:
    """Singleton marker for a missing payload value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        return False


ABSENT = _Absent()


class ParseError(ValueError):
    """Input file could not be parsed; message carries the location."""


# --------------------------------------------------------------------------
# timestamps

_OFFSET_NO_COLON = re.compile(r"([+-]\d{2})(\d{2})$")
_FRACTION = re.compile(r"\.(\d+)")

_FALLBACK_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y/%m/%d %H:%M:%S",
    "%d-%m-%Y %H:%M:%S",
    "%d/%m/%Y %H:%M:%S",
    "%d.%m.%Y %H:%M:%S",
)


def parse_timestamp(text: str, fmt: str | None = None) -> datetime:
    """Parse a timestamp string; ISO-8601 by default, strptime if fmt given.

    Accepts the common ISO variants that ``datetime.fromisoformat`` rejects
    on older interpreters: trailing ``Z``, offsets without a colon, and
    fractional seconds of any width.
    """
    s = text.strip()
    if fmt is not None:
        return datetime.strptime(s, fmt)
    iso = s
    if iso.endswith(("Z", "z")):
        iso = iso[:-1] + "+00:00"
    iso = _OFFSET_NO_COLON.sub(r"\1:\2", iso)
    iso = _FRACTION.sub(lambda m: "." + (m.group(1) + "000000")[:6], iso, count=1)
    try:
        return datetime.fromisoformat(iso)
    except ValueError:
        pass
    for candidate in _FALLBACK_FORMATS:
        try:
            return datetime.strptime(s, candidate)
        except ValueError:
            continue
    raise ValueError(f"unrecognized timestamp {text!r}")


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Event:
    activity: str
    case_id: str
    timestamp: datetime
    payload: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]
    case_payload: Mapping[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)


@dataclass
class EventLog:
    traces: list[Trace]
    warnings: Counter = field(default_factory=Counter)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)


@dataclass(frozen=True)
class Prefix:
    """First k events of a trace, carrying the full trace's outcome label."""

    trace: Trace
    k: int
    label: int  # 1 positive, 0 negative

    def __post_init__(self):
        if not 1 <= self.k <= len(self.trace.events):
            raise ValueError(
                f"prefix length {self.k} out of range for trace "
                f"{self.trace.case_id!r} of length {len(self.trace.events)}")

    @property
    def events(self) -> tuple[Event, ...]:
        return self.trace.events[: self.k]

    @property
    def case_id(self) -> str:
        return self.trace.case_id

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)


@dataclass
class PrefixSet:
    prefixes: list[Prefix]
    warnings: Counter = field(default_factory=Counter)

    def __len__(self) -> int:
        return len(self.prefixes)

    def __iter__(self) -> Iterator[Prefix]:
        return iter(self.prefixes)

    @property
    def positives(self) -> list[Prefix]:
        return [p for p in self.prefixes if p.label == 1]

    @property
    def negatives(self) -> list[Prefix]:
        return [p for p in self.prefixes if p.label == 0]

    def trace_ids(self) -> list[str]:
        """Distinct case ids in first-appearance order."""
        seen: dict[str, None] = {}
        for p in self.prefixes:
            seen.setdefault(p.case_id, None)
        return list(seen)


_COMPARATORS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


@dataclass(frozen=True)
class LabelingSpec:
    """How a full trace maps to its binary outcome.

    kind "activity-presence": label 1 iff `activity` occurs in the trace.
    kind "attribute-predicate": label 1 iff `attribute <comparator>
    threshold` holds on the case payload; a missing attribute labels the
    trace 0 and counts a warning.
    """

    kind: str
    activity: str | None = None
    attribute: str | None = None
    comparator: str | None = None
    threshold: object = None

    def __post_init__(self):
        if self.kind == "activity-presence":
            if not self.activity:
                raise ValueError("activity-presence labeling needs an activity")
        elif self.kind == "attribute-predicate":
            if not self.attribute or self.comparator not in _COMPARATORS:
                raise ValueError(
                    "attribute-predicate labeling needs attribute and one of "
                    f"{sorted(_COMPARATORS)}")
        else:
            raise ValueError(f"unknown labeling kind {self.kind!r}")

    def label(self, trace: Trace) -> tuple[int, bool]:
        """Returns (label, missing_attribute_flag)."""
        if self.kind == "activity-presence":
            hit = any(e.activity == self.activity for e in trace.events)
            return int(hit), False
        value = trace.case_payload.get(self.attribute, ABSENT)
        if value is ABSENT:
            return 0, True
        try:
            ok = _COMPARATORS[self.comparator](value, self.threshold)
        except TypeError:
            return 0, True
        return int(bool(ok)), False


# --------------------------------------------------------------------------
# XES parsing

_XES_KINDS = {
    "string": lambda v: v,
    "int": int,
    "float": float,
    "boolean": lambda v: v.strip().lower() == "true",
    "date": parse_timestamp,
}


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _collect_attrs(element, warnings: Counter) -> dict[str, object]:
    out: dict[str, object] = {}
    for child in element:
        kind = _strip_ns(child.tag)
        if kind in ("event",):
            continue
        key = child.get("key")
        if key is None:
            continue
        cast = _XES_KINDS.get(kind)
        if cast is None:
            warnings["unknown-attribute-kind"] += 1
            continue
        try:
            out[key] = cast(child.get("value", ""))
        except (ValueError, TypeError):
            warnings["unparseable-attribute"] += 1
    return out


def parse_xes(source) -> EventLog:
    """Parse an XES event log (log/trace/event subset).

    `source` may be a path, bytes, or a binary file object.  Events missing
    an activity name or timestamp are skipped and counted in
    ``EventLog.warnings``; malformed XML raises :class:`ParseError` with the
    offending line.
    """
    stream = _as_binary_stream(source)
    traces: list[Trace] = []
    warnings: Counter = Counter()
    anon = 0
    try:
        tree = ET.parse(stream)
    except ET.ParseError as err:
        line, col = err.position
        raise ParseError(f"malformed XML at line {line}, column {col}: "
                         f"{err.msg.split(':')[0]}") from err
    root = tree.getroot()
    if _strip_ns(root.tag) != "log":
        raise ParseError(f"expected <log> root element, got <{_strip_ns(root.tag)}>")
    for trace_el in root:
        if _strip_ns(trace_el.tag) != "trace":
            continue
        case_payload = _collect_attrs(trace_el, warnings)
        case_id = case_payload.pop("concept:name", None)
        if case_id is None:
            anon += 1
            case_id = f"case-{anon}"
            warnings["trace-missing-name"] += 1
        case_id = str(case_id)
        events: list[Event] = []
        for ev_el in trace_el:
            if _strip_ns(ev_el.tag) != "event":
                continue
            attrs = _collect_attrs(ev_el, warnings)
            activity = attrs.pop("concept:name", None)
            timestamp = attrs.pop("time:timestamp", None)
            if activity is None or str(activity) == "":
                warnings["event-missing-activity"] += 1
                continue
            if not isinstance(timestamp, datetime):
                warnings["event-missing-timestamp"] += 1
                continue
            events.append(Event(str(activity), case_id, timestamp, attrs))
        events.sort(key=lambda e: e.timestamp)  # stable: ties keep file order
        traces.append(Trace(case_id, tuple(events), case_payload))
    return EventLog(traces, warnings)


def _as_binary_stream(source):
    if isinstance(source, (str, Path)):
        return open(source, "rb")
    if isinstance(source, bytes):
        return io.BytesIO(source)
    return source


# --------------------------------------------------------------------------
# CSV parsing

_INT_RE = re.compile(r"[+-]?\d+$")
_FLOAT_RE = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")


def _coerce(text: str):
    """Best-effort typing of a CSV cell: bool, int, float, else string."""
    s = text.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    if _INT_RE.match(s):
        return int(s)
    if _FLOAT_RE.match(s):
        return float(s)
    return s


def parse_csv(source, mapping: Mapping[str, object],
              timestamp_format: str | None = None) -> EventLog:
    """Parse a CSV event table into a log.

    `mapping` assigns roles to column names: "case", "activity", and
    "timestamp" are required; "payload" may list event-payload columns
    (default: every remaining column).  Rows are grouped by case and
    stable-sorted by timestamp; rows with unparseable timestamps are
    skipped and counted.
    """
    for role in ("case", "activity", "timestamp"):
        if role not in mapping:
            raise ValueError(f"column mapping is missing the {role!r} role")
    stream = _as_binary_stream(source)
    text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.DictReader(text)
    if reader.fieldnames is None:
        raise ParseError("CSV input has no header row")
    case_col = mapping["case"]
    act_col = mapping["activity"]
    ts_col = mapping["timestamp"]
    for col in (case_col, act_col, ts_col):
        if col not in reader.fieldnames:
            raise ParseError(f"CSV is missing mapped column {col!r}")
    payload_cols = mapping.get("payload")
    if payload_cols is None:
        payload_cols = [c for c in reader.fieldnames
                        if c not in (case_col, act_col, ts_col)]
    warnings: Counter = Counter()
    by_case: dict[str, list[Event]] = {}
    for row in reader:
        case_id = (row.get(case_col) or "").strip()
        activity = (row.get(act_col) or "").strip()
        raw_ts = (row.get(ts_col) or "").strip()
        if not case_id or not activity:
            warnings["row-missing-case-or-activity"] += 1
            continue
        try:
            ts = parse_timestamp(raw_ts, timestamp_format)
        except ValueError:
            warnings["row-bad-timestamp"] += 1
            continue
        payload = {}
        for col in payload_cols:
            cell = row.get(col)
            if cell is None or cell.strip() == "":
                continue
            payload[col] = _coerce(cell)
        by_case.setdefault(case_id, []).append(
            Event(activity, case_id, ts, payload))
    traces = []
    for case_id, events in by_case.items():
        events.sort(key=lambda e: e.timestamp)  # stable within equal stamps
        traces.append(Trace(case_id, tuple(events), {}))
    return EventLog(traces, warnings)


def serialize_csv(log: EventLog, timestamp_format: str | None = None) -> str:
    """Render a log as a CSV event table (inverse of :func:`parse_csv`).

    Case payload is repeated on each of the case's rows with a ``case:``
    column prefix so :func:`parse_csv` round-trips it as event payload;
    logs parsed from CSV have no case payload, so the round trip is exact.
    """
    payload_cols: dict[str, None] = {}
    case_cols: dict[str, None] = {}
    for trace in log:
        for key in trace.case_payload:
            case_cols.setdefault(f"case:{key}", None)
        for event in trace.events:
            for key in event.payload:
                payload_cols.setdefault(key, None)
    header = ["case", "activity", "timestamp"] + sorted(payload_cols) + sorted(
        case_cols)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for trace in log:
        case_cells = {f"case:{k}": _render_cell(v, timestamp_format)
                      for k, v in trace.case_payload.items()}
        for event in trace.events:
            row = [event.case_id, event.activity,
                   _render_cell(event.timestamp, timestamp_format)]
            row += [_render_cell(event.payload.get(c, ""), timestamp_format)
                    for c in sorted(payload_cols)]
            row += [case_cells.get(c, "") for c in sorted(case_cols)]
            writer.writerow(row)
    return buf.getvalue()


def _render_cell(value, timestamp_format: str | None) -> str:
    if isinstance(value, datetime):
        if timestamp_format:
            return value.strftime(timestamp_format)
        return value.isoformat()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# --------------------------------------------------------------------------
# internal tab-separated log format
#
# One event per line: case <TAB> activity <TAB> ISO timestamp <TAB> k=v ...
# Case payload rides on a "!case" line per trace.  Values carry a one-letter
# type tag (s/i/f/b/d) so parsing restores the exact payload types.

_TAG_ENCODERS = {
    str: ("s", str),
    int: ("i", str),
    float: ("f", repr),
    bool: ("b", lambda v: "true" if v else "false"),
    datetime: ("d", lambda v: v.isoformat()),
}

_TAG_DECODERS = {
    "s": lambda v: v,
    "i": int,
    "f": float,
    "b": lambda v: v == "true",
    "d": datetime.fromisoformat,
}


def _encode_pair(key: str, value) -> str:
    enc = _TAG_ENCODERS.get(bool if isinstance(value, bool) else type(value))
    if enc is None:
        enc = ("s", str)
    tag, render = enc
    return f"{key}={tag}:{render(value)}"


def _decode_pairs(cells: Sequence[str], where: str) -> dict[str, object]:
    out: dict[str, object] = {}
    for cell in cells:
        if "=" not in cell:
            raise ParseError(f"{where}: malformed payload cell {cell!r}")
        key, tagged = cell.split("=", 1)
        if len(tagged) < 2 or tagged[1] != ":" or tagged[0] not in _TAG_DECODERS:
            raise ParseError(f"{where}: malformed payload cell {cell!r}")
        out[key] = _TAG_DECODERS[tagged[0]](tagged[2:])
    return out


def serialize_log(log: EventLog) -> str:
    lines = []
    for trace in log:
        if trace.case_payload:
            cells = [_encode_pair(k, v) for k, v in sorted(
                trace.case_payload.items())]
            lines.append("\t".join(["!case", trace.case_id] + cells))
        for event in trace.events:
            cells = [_encode_pair(k, v) for k, v in sorted(event.payload.items())]
            lines.append("\t".join(
                [event.case_id, event.activity, event.timestamp.isoformat()]
                + cells))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_log(text: str) -> EventLog:
    """Parse the internal tab-separated format written by serialize_log."""
    by_case: dict[str, list[Event]] = {}
    case_payloads: dict[str, dict[str, object]] = {}
    order: dict[str, None] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        where = f"line {lineno}"
        if cells[0] == "!case":
            if len(cells) < 2:
                raise ParseError(f"{where}: !case line without a case id")
            case_payloads[cells[1]] = _decode_pairs(cells[2:], where)
            order.setdefault(cells[1], None)
            continue
        if len(cells) < 3:
            raise ParseError(f"{where}: expected case, activity, timestamp")
        case_id, activity, raw_ts = cells[0], cells[1], cells[2]
        try:
            ts = datetime.fromisoformat(raw_ts)
        except ValueError:
            raise ParseError(f"{where}: bad timestamp {raw_ts!r}") from None
        payload = _decode_pairs(cells[3:], where)
        order.setdefault(case_id, None)
        by_case.setdefault(case_id, []).append(Event(activity, case_id, ts, payload))
    traces = []
    for case_id in order:
        events = by_case.get(case_id, [])
        events.sort(key=lambda e: e.timestamp)
        traces.append(Trace(case_id, tuple(events),
                            case_payloads.get(case_id, {})))
    return EventLog(traces)


# --------------------------------------------------------------------------
# prefixes and splits


def extract_prefixes(log: EventLog, labeling: LabelingSpec,
                     min_len: int = 2, max_len: int = 40) -> PrefixSet:
    """All prefixes of length min_len..min(max_len, n) per trace, labeled.

    Traces shorter than min_len contribute nothing.  Prefix labels are
    inherited from the full trace's outcome under `labeling`.
    """
    if not 1 <= min_len <= max_len:
        raise ValueError(f"need 1 <= min_len <= max_len, got "
                         f"{min_len}..{max_len}")
    warnings: Counter = Counter()
    prefixes: list[Prefix] = []
    for trace in log:
        n = len(trace.events)
        if n < min_len:
            continue
        label, missing = labeling.label(trace)
        if missing:
            warnings["labeling-missing-attribute"] += 1
        for k in range(min_len, min(max_len, n) + 1):
            prefixes.append(Prefix(trace, k, label))
    return PrefixSet(prefixes, warnings)


@dataclass
class Split:
    train: PrefixSet
    validation: PrefixSet
    test_raw: PrefixSet


def split(prefixes: PrefixSet, seed: int) -> Split:
    """Deterministic 64/16/20 train/validation/test split, by trace."""
    ids = prefixes.trace_ids()
    n = len(ids)
    if n < 5:
        raise ValueError(f"cannot split {n} traces; need at least 5")
    order = list(np.random.default_rng(seed).permutation(n))
    shuffled = [ids[i] for i in order]
    n_test = round(0.20 * n)
    n_val = round(0.16 * n)
    test_ids = set(shuffled[:n_test])
    val_ids = set(shuffled[n_test:n_test + n_val])
    parts = {"train": [], "validation": [], "test_raw": []}
    for p in prefixes:
        if p.case_id in test_ids:
            parts["test_raw"].append(p)
        elif p.case_id in val_ids:
            parts["validation"].append(p)
        else:
            parts["train"].append(p)
    return Split(train=PrefixSet(parts["train"]),
                 validation=PrefixSet(parts["validation"]),
                 test_raw=PrefixSet(parts["test_raw"]))
