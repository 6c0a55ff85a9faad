"""Trace-driven message delivery simulation.

Transmission is instantaneous and buffers are unbounded, so a message's
fate depends only on the contact trace. Epidemic routing copies the message
at every contact; Spray-and-Wait hands out a fixed budget of copy tokens.
"""
from __future__ import annotations

import io
import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .colouring import sweep
from .trace import ContactTrace

INF = math.inf


@dataclass(frozen=True)
class MessageSpec:
    id: int
    source: int
    dest: int
    created_at: float
    ttl: float = INF

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError(f"message {self.id}: source equals destination")


@dataclass(frozen=True)
class DeliveryRecord:
    msg: int
    delivered: bool
    latency: float | None = None


def _check(trace: ContactTrace, m: MessageSpec) -> None:
    if not (0 <= m.source < trace.n and 0 <= m.dest < trace.n):
        raise ValueError(f"message {m.id}: node out of range")
    if not trace.t_min <= m.created_at <= trace.t_max:
        raise ValueError(f"message {m.id}: created outside horizon")


def _record(m: MessageSpec, t: float | None) -> DeliveryRecord:
    if t is None or t - m.created_at > m.ttl:
        return DeliveryRecord(m.id, False)
    return DeliveryRecord(m.id, True, t - m.created_at)


def sim_epidemic(trace: ContactTrace, messages) -> list[DeliveryRecord]:
    out = []
    for m in messages:
        _check(trace, m)
        until = m.created_at + m.ttl if m.ttl < INF else None
        reached = sweep(trace, m.created_at, m.source, target=m.dest, until=until)
        out.append(_record(m, reached.get(m.dest)))
    return out


def spray_and_wait_one(trace: ContactTrace, m: MessageSpec, copies: int,
                       variant: str = "binary", audit: list | None = None) -> float | None:
    """Absolute delivery time of one message, ``None`` if never delivered.

    ``binary``: a holder of ``c > 1`` tokens gives ``c // 2`` to a met node
    without tokens. ``source``: only the source sprays, one token per node.
    Holders of a single token wait for the destination. If ``audit`` is a
    list, the total token count is appended after every transfer.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if variant not in ("binary", "source"):
        raise ValueError(f"unknown spray variant {variant!r}")
    ca, cb, cs, ce = trace.columns()
    t0 = m.created_at
    end_time = trace.t_max if m.ttl == INF else min(trace.t_max, t0 + m.ttl)
    tokens = {m.source: copies}
    links: dict[int, dict[int, float]] = {}

    def link(u, v, e):
        for x, y in ((u, v), (v, u)):
            lx = links.setdefault(x, {})
            if lx.get(y, -INF) < e:
                lx[y] = e

    def give(x, y) -> bool:
        """Hand tokens from holder x to non-holder y; True if a transfer happened."""
        c = tokens[x]
        if y in tokens or c <= 1 or (variant == "source" and x != m.source):
            return False
        share = c // 2 if variant == "binary" else 1
        tokens[x] = c - share
        tokens[y] = share
        if audit is not None:
            audit.append(sum(tokens.values()))
        return True

    def settle(x, t) -> bool:
        """Spread from new holder x over contacts ongoing at t; True on delivery."""
        stack = [x]
        while stack:
            x = stack.pop()
            for y, e in links.get(x, {}).items():
                if e < t:
                    continue
                if y == m.dest:
                    return True
                if give(x, y):
                    stack.append(y)
        return False

    lo = bisect_left(cs, t0 - trace.max_duration())
    first = bisect_left(cs, t0)
    for k in range(lo, first):
        if ce[k] >= t0:
            link(ca[k], cb[k], ce[k])
    if settle(m.source, t0):
        return t0
    for k in range(first, len(cs)):
        t = cs[k]
        if t > end_time:
            break
        u, v = ca[k], cb[k]
        link(u, v, ce[k])
        hu, hv = u in tokens, v in tokens
        if hu == hv:
            continue
        x, y = (u, v) if hu else (v, u)
        if y == m.dest:
            return t
        if give(x, y) and settle(y, t):
            return t
    return None


def sim_spray_and_wait(trace: ContactTrace, messages, copies: int,
                       variant: str = "binary") -> list[DeliveryRecord]:
    out = []
    for m in messages:
        _check(trace, m)
        out.append(_record(m, spray_and_wait_one(trace, m, copies, variant)))
    return out


def message_schedule(trace: ContactTrace, rng: np.random.Generator, gap_low: float = 50.0,
                     gap_high: float = 100.0, window: float = 40000.0, ttl: float = INF,
                     first_id: int = 0) -> list[MessageSpec]:
    """One message every uniform(gap_low, gap_high) seconds over the first ``window`` seconds."""
    stop = trace.t_min + min(window, trace.duration)
    out = []
    t = trace.t_min + rng.uniform(gap_low, gap_high)
    while t < stop:
        src = int(rng.integers(trace.n))
        dst = int(rng.integers(trace.n - 1))
        if dst >= src:
            dst += 1
        out.append(MessageSpec(first_id + len(out), src, dst, float(t), ttl))
        t += rng.uniform(gap_low, gap_high)
    return out


def batch_experiment(trace: ContactTrace, runs: int, seed: int, protocol: str = "epidemic",
                     copies: int = 10, variant: str = "binary", **schedule) -> list[DeliveryRecord]:
    """Pool delivery records over ``runs`` independently seeded message schedules."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(runs)
    out: list[DeliveryRecord] = []
    for ss in seeds:
        msgs = message_schedule(trace, np.random.default_rng(ss), first_id=len(out), **schedule)
        if protocol == "epidemic":
            out.extend(sim_epidemic(trace, msgs))
        elif protocol in ("spray", "spray-and-wait"):
            out.extend(sim_spray_and_wait(trace, msgs, copies, variant))
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
    return out


def latencies(records) -> tuple[np.ndarray, int]:
    """Delivered latencies and the count of undelivered messages."""
    lat = np.array([r.latency for r in records if r.delivered], dtype=float)
    return lat, sum(1 for r in records if not r.delivered)


def records_csv(records) -> str:
    out = io.StringIO()
    out.write("msg,delivered,latency\n")
    for r in records:
        lat = "" if r.latency is None else repr(r.latency)
        out.write(f"{r.msg},{int(r.delivered)},{lat}\n")
    return out.getvalue()
