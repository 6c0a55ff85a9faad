"""Diagnostics on traces and colouring samples.

Includes per-node contact correlation, expected colouring curves, the
distribution of the time to colour the second node, and correlation checks
between elapsed colouring time and the next increment.
"""
from __future__ import annotations

import io
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import dist as D
from .colouring import ColouringRun, DeltaSamples
from .estimate import DeltaModel, render
from .trace import ContactTrace


@dataclass(frozen=True)
class CorrelationProfile:
    window: tuple[float, float]
    points: int
    nodes: np.ndarray
    average: np.ndarray
    excluded: int
    method: str = "pearson"

    def ccdf(self, thresholds) -> np.ndarray:
        """Fraction of analysed nodes whose average correlation exceeds each threshold."""
        thr = np.asarray(thresholds, dtype=float)
        if self.average.size == 0:
            return np.zeros_like(thr)
        return (self.average[None, :] > thr[:, None]).mean(axis=1)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("threshold,fraction_above\n")
        thr = np.round(np.linspace(-1.0, 1.0, 41), 10)
        for x, f in zip(thr.tolist(), self.ccdf(thr).tolist()):
            out.write(f"{x!r},{f!r}\n")
        return out.getvalue()

    def nodes_csv(self) -> str:
        out = io.StringIO()
        out.write("node,avg_correlation\n")
        for v, c in zip(self.nodes.tolist(), self.average.tolist()):
            out.write(f"{v},{c!r}\n")
        return out.getvalue()

    def metadata(self) -> dict:
        return {"window": list(self.window), "points": self.points, "method": self.method,
                "analysed_nodes": int(self.nodes.size), "excluded_nodes": self.excluded}


def residual_series(trace: ContactTrace, pair: tuple[int, int], times: np.ndarray) -> np.ndarray:
    """Time from each instant to the pair's next contact (0 while in contact, inf if none)."""
    idx = trace.pairs().get((min(pair), max(pair)))
    out = np.full(times.size, np.inf)
    if idx is None:
        return out
    starts, ends = trace.start[idx], trace.end[idx]
    j = np.searchsorted(ends, times, side="left")
    ok = j < ends.size
    out[ok] = np.maximum(starts[j[ok]] - times[ok], 0.0)
    return out


def contact_correlation(trace: ContactTrace, window: float = 20000.0, points: int = 200,
                        start: float | None = None, method: str = "pearson") -> CorrelationProfile:
    """Average correlation between the residual inter-contact series of each node's pairs.

    The series are sampled at ``points`` uniform instants in
    ``[start, start + window)``. A pair is used if it has a contact after
    every sample instant and its series is not constant; nodes with fewer
    than two such pairs are excluded and counted.
    """
    t_lo = trace.t_min if start is None else float(start)
    if window <= 0 or t_lo + window > trace.t_max + 1e-9:
        raise ValueError("window must be positive and fit inside the horizon")
    if method not in ("pearson", "spearman"):
        raise ValueError(f"unknown correlation method {method!r}")
    times = t_lo + window * np.arange(points) / points
    series: dict[tuple[int, int], np.ndarray] = {}
    for pair in trace.pairs():
        r = residual_series(trace, pair, times)
        if np.all(np.isfinite(r)) and np.ptp(r) > 0:
            series[pair] = stats.rankdata(r) if method == "spearman" else r
    nodes, avgs = [], []
    excluded = 0
    for v in range(trace.n):
        mine = [s for p, s in series.items() if v in p]
        if len(mine) < 2:
            excluded += 1
            continue
        c = np.corrcoef(np.vstack(mine))
        iu = np.triu_indices(len(mine), k=1)
        nodes.append(v)
        avgs.append(float(np.mean(c[iu])))
    return CorrelationProfile((t_lo, t_lo + window), points, np.array(nodes, dtype=int),
                              np.clip(np.array(avgs), -1.0, 1.0), excluded, method)


def window_count_correlation(trace: ContactTrace, p: tuple[int, int], q: tuple[int, int],
                             window: float) -> float:
    """Pearson correlation of two pairs' contact counts in consecutive windows."""
    edges = np.arange(trace.t_min, trace.t_max + window, window)
    counts = []
    for pair in (p, q):
        idx = trace.pairs().get((min(pair), max(pair)), np.empty(0, dtype=int))
        counts.append(np.histogram(trace.start[idx], bins=edges)[0])
    if np.std(counts[0]) == 0 or np.std(counts[1]) == 0:
        return 0.0
    return float(np.corrcoef(counts[0], counts[1])[0, 1])


def pair_transition_determinism(trace: ContactTrace) -> float:
    """Share of consecutive contacts whose pair is the most common successor of the previous pair.

    1.0 means the next pair is fully determined by the current one.
    """
    seq = list(zip(trace.a.tolist(), trace.b.tolist()))
    if len(seq) < 2:
        raise ValueError("need at least two contacts")
    follow: dict[tuple, Counter] = {}
    for x, y in zip(seq[:-1], seq[1:]):
        follow.setdefault(x, Counter())[y] += 1
    top = sum(c.most_common(1)[0][1] for c in follow.values())
    return top / (len(seq) - 1)


def expected_colouring_curve(source: DeltaSamples | DeltaModel) -> np.ndarray:
    """Mean Δ_i for i = 1..n-1, from samples or from a model."""
    if isinstance(source, DeltaSamples):
        return source.means()
    return np.array([source.mean(i) for i in range(1, source.n)])


def t2_cdf(source: DeltaSamples | DeltaModel, dt: float, length: int) -> D.DiscreteDist:
    """Distribution of T_2 = Δ_1; ``atom`` is the chance the second node is coloured at once."""
    if isinstance(source, DeltaSamples):
        return D.from_samples(source.array(1), dt, length)
    return render(source, 1, dt, length)


@dataclass(frozen=True)
class IndependenceResult:
    rho: float
    n_samples: int
    degenerate: bool = False


def independence_test(runs: list[ColouringRun], i: int, min_samples: int = 100,
                      method: str = "pearson") -> IndependenceResult:
    """Correlation between T_i and Δ_i over runs that observed both.

    Zero correlation is necessary, not sufficient, for independence.
    A constant series gives ``rho = 0`` with ``degenerate=True``.
    """
    if i < 1:
        raise ValueError("i must be >= 1")
    pairs = [(r.colour_times[i - 1], r.colour_times[i] - r.colour_times[i - 1])
             for r in runs if len(r.colour_times) > i]
    if len(pairs) < min_samples:
        raise ValueError(f"only {len(pairs)} runs observed T_{i} and Δ_{i}; need {min_samples}")
    t, d = np.array(pairs).T
    if np.ptp(t) == 0 or np.ptp(d) == 0:
        return IndependenceResult(0.0, len(pairs), True)
    if method == "spearman":
        rho = stats.spearmanr(t, d).statistic
    else:
        rho = np.corrcoef(t, d)[0, 1]
    return IndependenceResult(float(rho), len(pairs))


def delta_ccdf_rows(samples: DeltaSamples, points: int = 50) -> list[tuple[int, float, float]]:
    """``(i, x, P(Δ_i > x))`` rows: one at ``x = 0``, then a log-spaced grid over the positive samples."""
    rows = []
    for i in range(1, samples.n):
        x = np.sort(samples.array(i))
        if x.size == 0:
            continue
        rows.append((i, 0.0, float(np.mean(x > 0))))
        pos = x[x > 0]
        if pos.size == 0:
            continue
        grid = np.unique(np.geomspace(pos[0], pos[-1], points)) if pos[-1] > pos[0] else pos[:1]
        above = 1.0 - np.searchsorted(x, grid, side="right") / x.size
        rows.extend((i, float(g), float(p)) for g, p in zip(grid, above))
    return rows


def delta_ccdf_export(samples: DeltaSamples, points: int = 50) -> str:
    if samples.runs == 0 and not any(samples.samples.values()):
        raise ValueError("no samples")
    out = io.StringIO()
    out.write("i,delta_seconds,ccdf\n")
    for i, x, p in delta_ccdf_rows(samples, points):
        out.write(f"{i},{x!r},{p!r}\n")
    return out.getvalue()


def sidecar(meta: dict) -> str:
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"
