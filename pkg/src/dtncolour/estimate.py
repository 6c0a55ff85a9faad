"""Per-step models of the inter-colouring time Δ_i.

Three kinds are supported:

``mixture``
    Δ_i is zero with probability ``con[i]`` (colouring through a contact
    that is already up) and otherwise exponential with rate ``rate[i]``.
``homogeneous``
    Pairs meet independently with residual inter-contact CDF F_τ, so
    Δ_i is the minimum of ``i*(n-i)`` residuals.
``empirical``
    A stored histogram per ``i``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dist as D
from .colouring import DeltaSamples
from .trace import ContactTrace, pooled_gaps

SENTINEL_RATE = 1e12


class FitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResidualEstimate:
    """Residual inter-contact time: time from a random instant to the pair's next contact."""

    source: str
    rate: float | None = None
    gaps: np.ndarray | None = field(default=None, repr=False)

    def cdf(self, t) -> np.ndarray:
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.source == "fitted-exponential":
            return -np.expm1(-self.rate * t)
        # length-biased: P(tau <= t) = sum_j min(t, g_j) / sum_j g_j
        g = np.sort(self.gaps)
        total = g.sum()
        if total == 0:
            return np.ones_like(t)
        k = np.searchsorted(g, t, side="right")
        below = np.concatenate(([0.0], np.cumsum(g)))[k]
        return (below + t * (g.size - k)) / total

    def mean(self) -> float:
        if self.source == "fitted-exponential":
            return 1.0 / self.rate
        g = self.gaps
        return float(np.sum(g ** 2) / (2 * np.sum(g)))

    def render(self, dt: float, length: int) -> D.DiscreteDist:
        if self.source == "fitted-exponential":
            return D.from_exponential(self.rate, dt, length)
        return D.from_cdf(self.cdf(dt * np.arange(1, length + 1)), dt)


def estimate_residual(trace: ContactTrace, mode: str = "fitted-exponential") -> ResidualEstimate:
    gaps = pooled_gaps(trace)
    if gaps.size == 0:
        raise ValueError("trace has no pairwise inter-contact gaps")
    if mode == "fitted-exponential":
        m = float(gaps.mean())
        if m <= 0:
            raise ValueError("all inter-contact gaps are zero")
        return ResidualEstimate("fitted-exponential", rate=1.0 / m)
    if mode == "empirical":
        return ResidualEstimate("empirical", gaps=gaps)
    raise ValueError(f"unknown residual mode {mode!r}")


@dataclass
class DeltaModel:
    kind: str
    n: int
    con: np.ndarray | None = None
    rate: np.ndarray | None = None
    residual: ResidualEstimate | None = None
    dists: dict[int, D.DiscreteDist] | None = None
    flags: dict[int, str] = field(default_factory=dict)
    horizon: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.kind == "mixture":
            self.con = np.asarray(self.con, dtype=float)
            self.rate = np.asarray(self.rate, dtype=float)
            if self.con.shape != (self.n - 1,) or self.rate.shape != (self.n - 1,):
                raise ValueError("mixture needs one (con, rate) per i in 1..n-1")
            if np.any((self.con < 0) | (self.con > 1)):
                raise ValueError("con must lie in [0, 1]")
            if np.any(~(self.rate > 0)):
                raise ValueError("rates must be positive")
        elif self.kind == "homogeneous":
            if self.residual is None:
                raise ValueError("homogeneous model needs a residual estimate")
        elif self.kind == "empirical":
            if not self.dists or set(self.dists) != set(range(1, self.n)):
                raise ValueError("empirical model needs a distribution for every i")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")

    def mean(self, i: int) -> float:
        """Expected Δ_i."""
        _check_i(self, i)
        if self.kind == "mixture":
            return float((1 - self.con[i - 1]) / self.rate[i - 1])
        if self.kind == "empirical":
            return self.dists[i].mean()
        m = i * (self.n - i)
        if self.residual.source == "fitted-exponential":
            return 1.0 / (self.residual.rate * m)
        # E[min] = integral of (1 - F_tau)^m over [0, max gap]
        t = np.linspace(0.0, float(np.max(self.residual.gaps)), 20001)
        surv = (1.0 - self.residual.cdf(t)) ** m
        return float(np.sum((surv[1:] + surv[:-1]) * 0.5 * np.diff(t)))

    def to_json(self) -> str:
        doc: dict = {"kind": self.kind, "n": self.n}
        if self.horizon is not None:
            doc["horizon"] = self.horizon
        if self.kind == "mixture":
            doc["per_i"] = [
                {"i": i, "con": float(self.con[i - 1]), "lambda": float(self.rate[i - 1]),
                 **({"flag": self.flags[i]} if i in self.flags else {})}
                for i in range(1, self.n)
            ]
        elif self.kind == "homogeneous":
            r = self.residual
            doc["residual"] = ({"source": r.source, "lambda": r.rate} if r.rate is not None
                               else {"source": r.source, "gaps": r.gaps.tolist()})
            if r.rate is not None:
                doc["per_i"] = [{"i": i, "con": 0.0, "lambda": r.rate * i * (self.n - i)}
                                for i in range(1, self.n)]
        else:
            doc["per_i"] = [
                {"i": i, "dt": d.dt, "atom": d.atom, "tail": d.tail, "mass": d.mass.tolist()}
                for i, d in sorted(self.dists.items())
            ]
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DeltaModel":
        doc = json.loads(text)
        kind, n = doc["kind"], int(doc["n"])
        horizon = doc.get("horizon")
        if kind == "mixture":
            rows = sorted(doc["per_i"], key=lambda r: r["i"])
            if [r["i"] for r in rows] != list(range(1, n)):
                raise ValueError("per_i must cover i = 1..n-1")
            flags = {r["i"]: r["flag"] for r in rows if "flag" in r}
            return cls("mixture", n, con=[r["con"] for r in rows], rate=[r["lambda"] for r in rows],
                       flags=flags, horizon=horizon)
        if kind == "homogeneous":
            r = doc["residual"]
            if "lambda" in r:
                res = ResidualEstimate(r["source"], rate=float(r["lambda"]))
            else:
                res = ResidualEstimate(r["source"], gaps=np.asarray(r["gaps"], dtype=float))
            return cls("homogeneous", n, residual=res, horizon=horizon)
        if kind == "empirical":
            dists = {r["i"]: D.DiscreteDist(r["dt"], np.asarray(r["mass"]), r["tail"], r["atom"])
                     for r in doc["per_i"]}
            return cls("empirical", n, dists=dists, horizon=horizon)
        raise ValueError(f"unknown model kind {kind!r}")


def _check_i(model: DeltaModel, i: int) -> None:
    if not 1 <= i <= model.n - 1:
        raise ValueError(f"i={i} outside 1..{model.n - 1}")


def _interpolate(values: dict[int, float], n: int) -> np.ndarray:
    known = sorted(values)
    xs = np.arange(1, n)
    # np.interp holds the end values constant outside the known range
    return np.interp(xs, known, [values[i] for i in known])


def fit_mixture(samples: DeltaSamples, zero_eps: float = 0.0) -> DeltaModel:
    """Fit ``(Con(i), λ_i)`` per ``i``: zero fraction and method-of-moments rate.

    Samples ``<= zero_eps`` count as immediate colourings. An ``i`` without
    samples is filled by linear interpolation of ``(Con, 1/λ)`` from the
    nearest observed ``i`` values, with a :class:`FitWarning`.
    """
    n = samples.n
    con: dict[int, float] = {}
    scale: dict[int, float] = {}
    flags: dict[int, str] = {}
    for i in range(1, n):
        x = samples.array(i)
        if x.size == 0:
            continue
        zero = x <= zero_eps
        con[i] = float(np.mean(zero))
        pos = x[~zero]
        if pos.size:
            scale[i] = float(pos.mean())
        else:
            flags[i] = "all-zero"
    if not con:
        raise ValueError("no Δ samples for any i")
    missing = [i for i in range(1, n) if i not in con]
    if missing:
        warnings.warn(f"no Δ samples for i={missing}; interpolating", FitWarning, stacklevel=2)
        for i in missing:
            flags[i] = "interpolated"
    con_v = _interpolate(con, n)
    if scale:
        scale_v = _interpolate(scale, n)
    else:
        scale_v = np.full(n - 1, 1.0 / SENTINEL_RATE)
    rate = 1.0 / scale_v
    for i, why in flags.items():
        if why == "all-zero":
            rate[i - 1] = SENTINEL_RATE
    return DeltaModel("mixture", n, con=con_v, rate=rate, flags=flags)


def homogeneous_deltas(residual: ResidualEstimate, n: int) -> DeltaModel:
    return DeltaModel("homogeneous", n, residual=residual)


def empirical_deltas(samples: DeltaSamples, dt: float, length: int) -> DeltaModel:
    dists = {i: D.from_samples(samples.array(i), dt, length) for i in range(1, samples.n)}
    return DeltaModel("empirical", samples.n, dists=dists)


def render(model: DeltaModel, i: int, dt: float, length: int) -> D.DiscreteDist:
    """Δ_i as a :class:`~dtncolour.dist.DiscreteDist` on the given grid."""
    _check_i(model, i)
    if model.kind == "mixture":
        c, lam = float(model.con[i - 1]), float(model.rate[i - 1])
        e = D.from_exponential(lam, dt, length)
        mass = (1 - c) * e.mass
        mass[0] += c
        return D.DiscreteDist(dt, mass, (1 - c) * e.tail, c)
    if model.kind == "homogeneous":
        return D.min_of(model.residual.render(dt, length), i * (model.n - i))
    d = model.dists[i]
    if not np.isclose(d.dt, dt):
        raise ValueError(f"empirical model stored at dt={d.dt}, requested {dt}")
    return d.resized(length)
