"""Shared builders for event-log objects used across test modules."""

from datetime import datetime, timedelta

from nesymon.eventlog import Event, EventLog, Prefix, Trace

T0 = datetime(2024, 3, 1, 8, 0, 0)


def mk_trace(case_id, activities, hours=None, payloads=None, case_payload=None):
    """Build a trace; `hours` gives per-event offsets from T0 (default 0,1,2…)."""
    if hours is None:
        hours = list(range(len(activities)))
    events = tuple(
        Event(act, case_id, T0 + timedelta(hours=h),
              payloads[i] if payloads else {})
        for i, (act, h) in enumerate(zip(activities, hours)))
    return Trace(case_id, events, case_payload or {})


def mk_prefix(activities, hours=None, payloads=None, case_payload=None,
              k=None, label=0, case_id="c"):
    trace = mk_trace(case_id, activities, hours, payloads, case_payload)
    return Prefix(trace, k if k is not None else len(activities), label)


def mk_log(specs):
    """EventLog from [(case_id, activities), ...] or [(case_id, activities,
    case_payload), ...] entries."""
    traces = []
    for entry in specs:
        case_id, activities = entry[0], entry[1]
        case_payload = entry[2] if len(entry) > 2 else None
        traces.append(mk_trace(case_id, activities, case_payload=case_payload))
    return EventLog(traces)
