"""Colouring processes over a contact trace.

A colouring run starts at ``t0`` with only ``origin`` coloured. Whenever a
coloured node is in contact with an uncoloured one, the latter becomes
coloured. Colouring spreads instantly and transitively through contacts
that are ongoing at the moment a node is coloured, so a run can colour
several nodes at the same instant.
"""
from __future__ import annotations

import io
import json
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .trace import ContactTrace

WINDOW_FRACTION = 0.8


@dataclass(frozen=True)
class ColouringRun:
    t0: float
    origin: int
    colour_times: tuple[float, ...]
    coloured_order: tuple[int, ...]
    censored: bool

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(np.asarray(self.colour_times))

    def time_of(self, node: int) -> float | None:
        """Colouring time of ``node`` relative to ``t0``, ``None`` if never coloured."""
        try:
            return self.colour_times[self.coloured_order.index(node)]
        except ValueError:
            return None


@dataclass
class DeltaSamples:
    """Observed inter-colouring times, pooled per number of coloured nodes ``i``.

    ``censored[i]`` counts runs in which ``i`` nodes were coloured but the
    horizon ended before the next one.
    """

    n: int
    samples: dict[int, list[float]] = field(default_factory=dict)
    censored: dict[int, int] = field(default_factory=dict)
    runs: int = 0

    def __post_init__(self):
        for i in range(1, self.n):
            self.samples.setdefault(i, [])
            self.censored.setdefault(i, 0)

    def add(self, run: ColouringRun) -> None:
        self.runs += 1
        for i, d in enumerate(run.deltas.tolist(), start=1):
            self.samples[i].append(d)
        m = len(run.colour_times)
        if run.censored and m < self.n:
            self.censored[m] += 1

    def array(self, i: int) -> np.ndarray:
        return np.asarray(self.samples[i], dtype=float)

    def means(self) -> np.ndarray:
        """Mean Δ_i for i = 1..n-1 (NaN where unobserved)."""
        return np.array([np.mean(v) if v else np.nan for _, v in sorted(self.samples.items())])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("i,delta_seconds\n")
        for i in range(1, self.n):
            for d in self.samples[i]:
                out.write(f"{i},{d!r}\n")
        return out.getvalue()

    def censoring_json(self) -> str:
        doc = {
            "n": self.n,
            "runs": self.runs,
            "censored": {str(i): self.censored[i] for i in range(1, self.n)},
            "observed": {str(i): len(self.samples[i]) for i in range(1, self.n)},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def sweep(trace: ContactTrace, t0: float, origin: int, target: int | None = None,
          until: float | None = None) -> dict[int, float]:
    """Absolute colouring time of every node reached from ``(t0, origin)``.

    Stops early once ``target`` is coloured or contacts start after ``until``.
    """
    n = trace.n
    ca, cb, cs, ce = trace.columns()
    end_time = trace.t_max if until is None else min(until, trace.t_max)
    coloured = {origin: t0}
    # partner -> latest contact end, for contacts already started
    links: dict[int, dict[int, float]] = {}

    def link(u: int, v: int, e: float) -> None:
        lu = links.setdefault(u, {})
        if lu.get(v, -np.inf) < e:
            lu[v] = e
        lv = links.setdefault(v, {})
        if lv.get(u, -np.inf) < e:
            lv[u] = e

    def spread(u: int, t: float) -> None:
        stack = [u]
        while stack:
            x = stack.pop()
            for y, e in links.get(x, {}).items():
                if e >= t and y not in coloured:
                    coloured[y] = t
                    stack.append(y)

    lo = bisect_left(cs, t0 - trace.max_duration())
    first = bisect_left(cs, t0)
    for k in range(lo, first):
        if ce[k] >= t0:
            link(ca[k], cb[k], ce[k])
    spread(origin, t0)
    if target is not None and target in coloured:
        return coloured
    for k in range(first, len(cs)):
        if len(coloured) == n:
            break
        t = cs[k]
        if t > end_time:
            break
        u, v = ca[k], cb[k]
        link(u, v, ce[k])
        cu, cv = u in coloured, v in coloured
        if cu == cv:
            continue
        new = v if cu else u
        coloured[new] = t
        spread(new, t)
        if target is not None and target in coloured:
            break
    return coloured


def run_colouring(trace: ContactTrace, t0: float, origin: int) -> ColouringRun:
    if not 0 <= origin < trace.n:
        raise ValueError(f"origin {origin} not in trace")
    if not trace.t_min <= t0 <= trace.t_max:
        raise ValueError(f"t0={t0} outside horizon")
    coloured = sweep(trace, t0, origin)
    # dict insertion order is colouring order; ties keep sweep order
    order = tuple(coloured)
    times = tuple(coloured[x] - t0 for x in order)
    return ColouringRun(t0, origin, times, order, censored=len(order) < trace.n)


def draw_starts(trace: ContactTrace, runs: int, seed: int,
                window: float = WINDOW_FRACTION) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    t0 = trace.t_min + rng.random(runs) * window * trace.duration
    origins = rng.integers(0, trace.n, size=runs)
    return t0, origins


def sample_runs(trace: ContactTrace, runs: int, seed: int) -> list[ColouringRun]:
    if runs < 1:
        raise ValueError("need at least one run")
    t0, origins = draw_starts(trace, runs, seed)
    return [run_colouring(trace, float(t), int(o)) for t, o in zip(t0, origins)]


def sample_deltas(trace: ContactTrace, runs: int, seed: int) -> DeltaSamples:
    """Pool Δ_i over ``runs`` colouring runs with uniform starts and origins.

    Start times are drawn from the first 80% of the horizon; increments cut
    off by the horizon are counted as censored, never as samples.
    """
    out = DeltaSamples(trace.n)
    for run in sample_runs(trace, runs, seed):
        out.add(run)
    return out
