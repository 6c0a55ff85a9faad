"""Routing latency distributions from per-step colouring models.

Epidemic routing: T_2 = Δ_1, T_{i+1} = T_i + Δ_i (independent increments),
and a random destination is reached by time t with probability
``F_R(t) = mean(F_2(t), ..., F_n(t))``.

Multi-copy routing replaces Δ_i with the slower Δ'_i of a colouring process
in which at most ``a`` nodes actively spread (see :func:`multicopy_deltas`).
"""
from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dist as D
from .estimate import DeltaModel, render

TAIL_TARGET = 1e-3
MAX_BINS = 2 ** 16


@dataclass(frozen=True, eq=False)
class LatencyCurve:
    """CDF of the delivery latency on a uniform grid.

    ``cdf[k]`` is ``P(R <= (k+1)*dt)`` and ``at_zero`` is ``P(R = 0)``.
    """

    dt: float
    cdf: np.ndarray
    at_zero: float = 0.0
    per_i: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    @property
    def grid(self) -> np.ndarray:
        return self.dt * np.arange(1, self.cdf.size + 1)

    @property
    def tail(self) -> float:
        return float(1.0 - self.cdf[-1])

    def at(self, t):
        xs = np.concatenate(([0.0], self.grid))
        ys = np.concatenate(([self.at_zero], self.cdf))
        t_arr = np.asarray(t, dtype=float)
        out = np.where(t_arr < 0, 0.0, np.interp(t_arr, xs, ys))
        return float(out) if out.ndim == 0 else out

    def quantile(self, p: float) -> float:
        """Smallest grid time (interpolated) with F_R >= p; ``inf`` if never reached."""
        xs = np.concatenate(([0.0], self.grid))
        ys = np.concatenate(([self.at_zero], self.cdf))
        if p <= ys[0]:
            return 0.0
        k = int(np.searchsorted(ys, p, side="left"))
        if k >= ys.size:
            return float("inf")
        y0, y1 = ys[k - 1], ys[k]
        frac = 0.0 if y1 == y0 else (p - y0) / (y1 - y0)
        return float(xs[k - 1] + frac * (xs[k] - xs[k - 1]))

    def median(self) -> float:
        return self.quantile(0.5)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("t,F_R\n")
        out.write(f"0,{self.at_zero!r}\n")
        for t, f in zip(self.grid.tolist(), self.cdf.tolist()):
            out.write(f"{t!r},{f!r}\n")
        return out.getvalue()


@dataclass(frozen=True)
class MultiCopyParams:
    a: int
    s: int | None = None
    k_max: int = 256
    tail_eps: float = 1e-6

    def __post_init__(self):
        if self.a < 1:
            raise ValueError("active-copy budget a must be >= 1")
        if self.s is not None and self.s < 0:
            raise ValueError("solitary count must be >= 0")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")


def latency_from_deltas(deltas: list[D.DiscreteDist], keep: bool = False) -> LatencyCurve:
    """Average the CDFs of T_2..T_n built by successive convolution."""
    f = deltas[0]
    cdf_sum = D.to_cdf(f).copy()
    zero_sum = f.atom
    kept = [D.to_cdf(f)] if keep else None
    for g in deltas[1:]:
        f = D.convolve(f, g)
        c = D.to_cdf(f)
        cdf_sum += c
        zero_sum += f.atom
        if keep:
            kept.append(c)
    k = len(deltas)
    return LatencyCurve(f.dt, np.minimum(cdf_sum / k, 1.0), zero_sum / k,
                        tuple(kept) if keep else None)


def _auto_grid(build, dt: float, length: int, auto_extend: bool) -> LatencyCurve:
    while True:
        curve = build(dt, length)
        if not auto_extend or curve.tail < TAIL_TARGET or length >= MAX_BINS:
            return curve
        length = min(2 * length, MAX_BINS)


def epidemic_latency(model: DeltaModel, dt: float, length: int = 4096,
                     auto_extend: bool = True, keep: bool = False) -> LatencyCurve:
    """Epidemic latency CDF; doubles the grid until the tail is below 1e-3 (cap 2**16 bins)."""
    def build(dt, length):
        return latency_from_deltas([render(model, i, dt, length) for i in range(1, model.n)], keep)
    return _auto_grid(build, dt, length, auto_extend)


def delivery_ratio(curve: LatencyCurve, ttl: float) -> float:
    if ttl < 0:
        raise ValueError("ttl must be non-negative")
    return curve.at(ttl)


def solitary_count(means) -> int:
    """Number of solitary nodes from expected Δ_1..Δ_{n-1}.

    The largest ``i < n - i`` whose mirror step is more than twice as slow,
    ``mean Δ_{n-i} > 2 * mean Δ_i``; 0 if there is none.
    """
    m = np.asarray(means, dtype=float)
    n = m.size + 1
    s = 0
    for i in range(1, n):
        if i >= n - i:
            break
        lo, hi = m[i - 1], m[n - i - 1]
        if np.isfinite(lo) and np.isfinite(hi) and hi > 2 * lo:
            s = i
    return s


def model_means(model: DeltaModel) -> np.ndarray:
    return np.array([model.mean(i) for i in range(1, model.n)])


def middle_weights(i: int, n: int, s: int, a: int, k: np.ndarray) -> np.ndarray:
    """P(i, k): k meetings needed, uncoloured chance (n-s-i)/(n-s-a) per meeting."""
    span = n - s - a
    return (n - s - i) / span * ((i - a) / span) ** (k - 1)


def end_weights(i: int, a: int, k: np.ndarray) -> np.ndarray:
    """P(i, k): k attempts needed when a meeting involves an active node with chance a/i."""
    return (a / i) * ((i - a) / i) ** (k - 1)


def _geometric_mix(weights_fn, base_cdf: np.ndarray, base_zero: float, params: MultiCopyParams):
    """sum_k P(i,k) * F^k, truncated at k_max or once the leftover weight < tail_eps."""
    cdf = np.zeros_like(base_cdf)
    zero = 0.0
    used = 0.0
    power = np.ones_like(base_cdf)
    zpow = 1.0
    for k in range(1, params.k_max + 1):
        w = float(weights_fn(np.array([k]))[0])
        power = power * base_cdf
        zpow *= base_zero
        cdf += w * power
        zero += w * zpow
        used += w
        if 1.0 - used < params.tail_eps:
            break
    return cdf, zero


def multicopy_deltas(model: DeltaModel, params: MultiCopyParams, dt: float, length: int,
                     means=None) -> list[D.DiscreteDist]:
    """Δ'_i for i = 1..n-1 in three phases.

    * ``i <= a``: as epidemic, Δ'_i = Δ_i.
    * ``a < i < n - s``: sum_k P(i,k) F_{Δa}^k with the middle-phase weights.
    * ``n - s <= i``: sum_k P(i,k) F_{Δi}^k with the end-phase weights.

    The k-th power is the CDF of a maximum of k draws, which can undercut
    Δ_i itself (e.g. when Δ_a is faster than Δ_i). Restricting who spreads
    can never speed up the next colouring, so each Δ'_i CDF is capped by
    the epidemic F_{Δi}.
    """
    n = model.n
    a = params.a
    s = params.s
    if s is None:
        s = solitary_count(model_means(model) if means is None else means)
    s = min(s, n - 2)
    if a > n - s:
        warnings.warn(f"a={a} exceeds n-s={n - s}; skipping middle phase", stacklevel=2)
    base = {i: render(model, i, dt, length) for i in range(1, n)}
    out = []
    for i in range(1, n):
        if i <= a:
            out.append(base[i])
            continue
        if i < n - s:
            ref = base[a]
            fn = lambda k, i=i: middle_weights(i, n, s, a, k)
        else:
            ref = base[i]
            fn = lambda k, i=i: end_weights(i, a, k)
        cdf, zero = _geometric_mix(fn, D.to_cdf(ref), ref.atom, params)
        cdf = np.minimum(cdf, D.to_cdf(base[i]))
        out.append(D.from_cdf(cdf, dt, min(zero, base[i].atom)))
    return out


def multicopy_latency(model: DeltaModel, params: MultiCopyParams, dt: float, length: int = 4096,
                      auto_extend: bool = True, keep: bool = False) -> LatencyCurve:
    means = model_means(model) if params.s is None else None

    def build(dt, length):
        return latency_from_deltas(multicopy_deltas(model, params, dt, length, means), keep)
    return _auto_grid(build, dt, length, auto_extend)


@dataclass(frozen=True)
class Comparison:
    ks: float
    max_gap: float
    mean_gap: float
    n_samples: int
    undelivered: int = 0

    def as_dict(self) -> dict:
        return {"ks": self.ks, "max_abs_cdf_gap": self.max_gap, "mean_abs_cdf_gap": self.mean_gap,
                "n_samples": self.n_samples, "undelivered": self.undelivered}


def compare(curve: LatencyCurve, latencies, undelivered: int = 0) -> Comparison:
    """KS distance between a predicted CDF and observed latencies.

    Undelivered messages count as latency ``+inf`` in the empirical CDF.
    """
    x = np.sort(np.asarray(latencies, dtype=float))
    total = x.size + undelivered
    if x.size == 0:
        raise ValueError("no observed latencies")
    j = np.arange(1, x.size + 1)
    f = curve.at(x)
    # predicted CDF is continuous except for the jump at t = 0
    f_left = np.where(x > 0, f, 0.0)
    ks = max(float(np.max(j / total - f)), float(np.max(f_left - (j - 1) / total)))
    grid = curve.grid
    emp = np.searchsorted(x, grid, side="right") / total
    gap = np.abs(emp - curve.cdf)
    if undelivered and x.size:
        # beyond the last observation the empirical CDF stays flat below 1
        ks = max(ks, float(np.max(curve.cdf)) - x.size / total)
    return Comparison(max(ks, 0.0), float(gap.max()), float(gap.mean()), int(x.size), int(undelivered))


def comparison_json(named: dict[str, Comparison], extra: dict | None = None) -> str:
    doc = {k: v.as_dict() for k, v in named.items()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
