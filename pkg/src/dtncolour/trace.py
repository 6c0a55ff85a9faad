"""Contact traces: pairwise contact intervals between mobile nodes.

A trace is the superposition of every pairwise contact process. Each
contact is a closed interval ``[start, end]``; two nodes are in contact at
``t`` iff ``start <= t <= end``. Overlapping contacts of the same pair are
merged when the trace is built.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np


class TraceFormatError(ValueError):
    """Raised for malformed trace input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContactEvent(NamedTuple):
    a: int
    b: int
    start: float
    end: float


@dataclass(frozen=True)
class PairwiseSeries:
    pair: tuple[int, int]
    starts: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.starts)


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _merge_pair(start: np.ndarray, end: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((end, start))
    start, end = start[order], end[order]
    reach = np.maximum.accumulate(end)
    new = np.ones(len(start), dtype=bool)
    new[1:] = start[1:] > reach[:-1]
    first = np.flatnonzero(new)
    last = np.append(first[1:], len(start)) - 1
    return start[first], reach[last]


@dataclass(frozen=True, eq=False)
class ContactTrace:
    """Immutable, start-sorted set of contacts among ``n`` nodes.

    Build with :meth:`from_events`, which validates, canonicalises pairs
    to ``a < b``, merges overlaps and sorts.
    """

    a: np.ndarray
    b: np.ndarray
    start: np.ndarray
    end: np.ndarray
    n: int
    t_min: float
    t_max: float
    labels: tuple[str, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for col in (self.a, self.b, self.start, self.end):
            col.flags.writeable = False

    @classmethod
    def from_events(
        cls,
        events: Iterable[Sequence],
        n: int | None = None,
        horizon: tuple[float, float] | None = None,
        labels: Sequence[str] | None = None,
    ) -> "ContactTrace":
        rows = [tuple(ev) for ev in events]
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        return cls.from_arrays(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], n=n, horizon=horizon, labels=labels)

    @classmethod
    def from_arrays(cls, a, b, start, end, n=None, horizon=None, labels=None) -> "ContactTrace":
        a = np.asarray(a)
        b = np.asarray(b)
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        if a.size and (np.any(a != np.round(a)) or np.any(b != np.round(b))):
            raise ValueError("node ids must be integers")
        a = a.astype(np.int64)
        b = b.astype(np.int64)
        if np.any(a == b):
            raise ValueError(f"self-contact for node {int(a[a == b][0])}")
        if a.size and min(a.min(), b.min()) < 0:
            raise ValueError("node ids must be non-negative")
        if np.any(start > end):
            raise ValueError("contact starts after it ends")
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        max_id = int(hi.max()) if hi.size else -1
        if n is None:
            n = max_id + 1
        if n < 2:
            raise ValueError("a trace needs at least 2 nodes")
        if max_id >= n:
            raise ValueError(f"node id {max_id} out of range for n={n}")
        cols = ([], [], [], [])
        keys = lo * n + hi
        order = np.argsort(keys, kind="stable")
        uniq, first = np.unique(keys[order], return_index=True)
        for key, idx in zip(uniq.tolist(), np.split(order, first[1:])):
            s, e = _merge_pair(start[idx], end[idx])
            cols[0].append(np.full(len(s), key // n))
            cols[1].append(np.full(len(s), key % n))
            cols[2].append(s)
            cols[3].append(e)
        if uniq.size:
            a, b, start, end = (np.concatenate(c) for c in cols)
        else:
            a = b = np.empty(0, dtype=np.int64)
            start = end = np.empty(0)
        if horizon is None:
            horizon = (float(start.min()), float(end.max())) if start.size else (0.0, 0.0)
        t_min, t_max = float(horizon[0]), float(horizon[1])
        if t_min > t_max:
            raise ValueError("horizon start after horizon end")
        if start.size and (start.min() < t_min or end.max() > t_max):
            raise ValueError(f"contact outside horizon [{t_min}, {t_max}]")
        order = np.lexsort((end, b, a, start))
        return cls(
            a=a[order].astype(np.int64),
            b=b[order].astype(np.int64),
            start=start[order],
            end=end[order],
            n=int(n),
            t_min=t_min,
            t_max=t_max,
            labels=tuple(labels) if labels is not None else None,
        )

    def __len__(self) -> int:
        return len(self.start)

    def __iter__(self):
        for a, b, s, e in zip(self.a.tolist(), self.b.tolist(), self.start.tolist(), self.end.tolist()):
            yield ContactEvent(a, b, s, e)

    @property
    def events(self) -> list[ContactEvent]:
        return list(self)

    @property
    def duration(self) -> float:
        return self.t_max - self.t_min

    def columns(self) -> tuple[list, list, list, list]:
        """Plain-list view of the event columns, cached for the sweep loops."""
        if "cols" not in self._cache:
            self._cache["cols"] = (self.a.tolist(), self.b.tolist(), self.start.tolist(), self.end.tolist())
        return self._cache["cols"]

    def max_duration(self) -> float:
        if "maxdur" not in self._cache:
            self._cache["maxdur"] = float(np.max(self.end - self.start)) if len(self) else 0.0
        return self._cache["maxdur"]

    def pairs(self) -> dict[tuple[int, int], np.ndarray]:
        """Event indices per pair, in start order."""
        if "pairs" not in self._cache:
            keys = self.a * self.n + self.b
            order = np.argsort(keys, kind="stable")
            uniq, first = np.unique(keys[order], return_index=True)
            groups = np.split(order, first[1:])
            self._cache["pairs"] = {
                (int(k // self.n), int(k % self.n)): g for k, g in zip(uniq, groups)
            }
        return self._cache["pairs"]

    def shifted(self, offset: float) -> "ContactTrace":
        return ContactTrace(
            a=self.a.copy(), b=self.b.copy(), start=self.start + offset, end=self.end + offset,
            n=self.n, t_min=self.t_min + offset, t_max=self.t_max + offset, labels=self.labels,
        )


def pairwise_series(trace: ContactTrace, pair: tuple[int, int]) -> PairwiseSeries:
    a, b = _pair(int(pair[0]), int(pair[1]))
    if not (0 <= a < trace.n and 0 <= b < trace.n):
        raise ValueError(f"pair {pair} not in trace with n={trace.n}")
    idx = trace.pairs().get((a, b))
    starts = trace.start[idx] if idx is not None else np.empty(0)
    return PairwiseSeries((a, b), np.asarray(starts, dtype=float))


def pooled_gaps(trace: ContactTrace) -> np.ndarray:
    """All pairwise inter-contact times (start to start), pooled over pairs."""
    parts = [np.diff(trace.start[idx]) for idx in trace.pairs().values() if len(idx) > 1]
    return np.concatenate(parts) if parts else np.empty(0)


def _dense_ids(tokens: list[str]) -> tuple[dict[str, int], tuple[str, ...]]:
    uniq = set(tokens)
    try:
        ordered = sorted(uniq, key=lambda s: (0, int(s), s))
    except ValueError:
        ordered = sorted(uniq)
    return {tok: i for i, tok in enumerate(ordered)}, tuple(ordered)


def _text(stream: IO | str | bytes) -> str:
    if isinstance(stream, bytes):
        return stream.decode("utf-8")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_csv(stream: IO | str | bytes) -> ContactTrace:
    """Read ``a,b,start,end`` records; a non-numeric first line is a header."""
    rows = []
    for lineno, rec in enumerate(csv.reader(io.StringIO(_text(stream))), start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != 4:
            raise TraceFormatError(f"expected 4 fields, got {len(rec)}", lineno)
        a, b = rec[0].strip(), rec[1].strip()
        try:
            s, e = float(rec[2]), float(rec[3])
        except ValueError:
            if not rows and lineno == 1:
                continue
            raise TraceFormatError("start/end must be numeric", lineno) from None
        if a == b:
            raise TraceFormatError(f"self-contact for node {a}", lineno)
        if s > e:
            raise TraceFormatError("start after end", lineno)
        rows.append((a, b, s, e))
    if not rows:
        raise TraceFormatError("no contact records")
    ids, labels = _dense_ids([r[0] for r in rows] + [r[1] for r in rows])
    return ContactTrace.from_events(
        ((ids[a], ids[b], s, e) for a, b, s, e in rows), n=len(labels), labels=labels
    )


def parse_one_report(stream: IO | str | bytes, horizon_end: float | None = None) -> ContactTrace:
    """Read a connectivity report with lines ``<time> CONN <a> <b> up|down``.

    Links still up at the end of the file are closed at ``horizon_end``
    (default: the last timestamp in the report).
    """
    open_at: dict[tuple[str, str], float] = {}
    rows = []
    first_t = last_t = None
    for lineno, line in enumerate(_text(stream).splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5 or parts[1] != "CONN" or parts[4] not in ("up", "down"):
            raise TraceFormatError(f"unrecognised record {line!r}", lineno)
        try:
            t = float(parts[0])
        except ValueError:
            raise TraceFormatError("timestamp must be numeric", lineno) from None
        if last_t is not None and t < last_t:
            raise TraceFormatError("timestamps not monotone", lineno)
        if first_t is None:
            first_t = t
        last_t = t
        a, b = parts[2], parts[3]
        if a == b:
            raise TraceFormatError(f"self-contact for node {a}", lineno)
        key = (a, b) if a < b else (b, a)
        if parts[4] == "up":
            open_at.setdefault(key, t)
        else:
            if key not in open_at:
                raise TraceFormatError(f"link down without up for {key}", lineno)
            rows.append((key[0], key[1], open_at.pop(key), t))
    if first_t is None:
        raise TraceFormatError("no connectivity records")
    end = last_t if horizon_end is None else float(horizon_end)
    if end < last_t:
        raise ValueError("horizon_end precedes last report timestamp")
    for (a, b), t in open_at.items():
        rows.append((a, b, t, end))
    ids, labels = _dense_ids([r[0] for r in rows] + [r[1] for r in rows])
    return ContactTrace.from_events(
        ((ids[a], ids[b], s, e) for a, b, s, e in rows),
        n=len(labels), horizon=(first_t, end), labels=labels,
    )


def to_csv(trace: ContactTrace, header: bool = True) -> str:
    out = io.StringIO()
    if header:
        out.write("a,b,start,end\n")
    names = trace.labels
    for ev in trace:
        a = names[ev.a] if names else ev.a
        b = names[ev.b] if names else ev.b
        out.write(f"{a},{b},{ev.start!r},{ev.end!r}\n")
    return out.getvalue()
