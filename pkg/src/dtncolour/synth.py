"""Synthetic contact-trace generators.

* :func:`gen_homogeneous` -- independent Poisson contacts for every pair.
* :func:`gen_cyclic` -- three nodes meeting in the fixed order
  (0,1), (1,2), (2,0), ... with iid exponential gaps. Pairwise processes are
  dependent, yet colouring increments are not.
* :func:`gen_clustered` -- islands of connectivity: frequent intra-cluster
  contacts, and inter-cluster contacts only during periodic bursts in which
  whole clusters meet at once.

The clustered defaults are invented for testing and do not describe any
measured scenario.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import ContactTrace


@dataclass(frozen=True)
class HomogeneousSpec:
    n: int
    rate: float
    horizon: float
    contact_duration: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.rate > 0 or not self.horizon > 0 or self.contact_duration < 0:
            raise ValueError("need rate > 0, horizon > 0, duration >= 0")


@dataclass(frozen=True)
class CyclicSpec:
    rate: float
    horizon: float
    seed: int = 0

    def __post_init__(self):
        if not self.rate > 0 or not self.horizon > 0:
            raise ValueError("need rate > 0 and horizon > 0")


@dataclass(frozen=True)
class ClusterSpec:
    """Clustered mobility.

    Nodes ``0..n-1`` are split into ``cluster_count`` contiguous clusters.
    Each intra-cluster pair meets as a Poisson process (``intra_rate``) with
    contacts lasting ``intra_duration``. Every ``burst_period`` seconds a
    burst of ``burst_length`` seconds opens; inside it each pair of clusters
    meets at Poisson rate ``burst_rate``, and a meeting puts every cross
    pair in contact for ``meet_duration`` seconds. The last ``loners``
    nodes have all their contact rates scaled by ``loner_factor``.
    """

    n: int
    cluster_count: int = 2
    intra_rate: float = 1e-3
    intra_duration: float = 60.0
    burst_period: float = 600.0
    burst_length: float = 120.0
    burst_rate: float = 2e-3
    meet_duration: float = 30.0
    horizon: float = 2e5
    loners: int = 0
    loner_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.cluster_count < 2 or self.n < 2 * self.cluster_count:
            raise ValueError("need at least 2 clusters of at least 2 nodes")
        if min(self.intra_rate, self.burst_rate, self.burst_period, self.horizon) <= 0:
            raise ValueError("rates, period and horizon must be positive")
        if not 0 < self.burst_length <= self.burst_period:
            raise ValueError("burst length must lie in (0, period]")
        if min(self.intra_duration, self.meet_duration) < 0:
            raise ValueError("durations must be non-negative")
        if not 0 <= self.loners <= self.n - 2 or not 0 < self.loner_factor <= 1:
            raise ValueError("invalid loner settings")

    def clusters(self) -> list[np.ndarray]:
        return np.array_split(np.arange(self.n), self.cluster_count)

    def bursts(self) -> np.ndarray:
        """``(start, end)`` rows of the burst windows inside the horizon."""
        starts = np.arange(0.0, self.horizon, self.burst_period)
        return np.column_stack((starts, np.minimum(starts + self.burst_length, self.horizon)))


def _poisson_times(rng: np.random.Generator, rate: float, lo: float, hi: float) -> np.ndarray:
    k = rng.poisson(rate * (hi - lo))
    return np.sort(rng.uniform(lo, hi, size=k))


def gen_homogeneous(spec: HomogeneousSpec) -> ContactTrace:
    rng = np.random.default_rng(spec.seed)
    a_cols, b_cols, s_cols = [], [], []
    for a in range(spec.n):
        for b in range(a + 1, spec.n):
            t = _poisson_times(rng, spec.rate, 0.0, spec.horizon)
            a_cols.append(np.full(t.size, a))
            b_cols.append(np.full(t.size, b))
            s_cols.append(t)
    start = np.concatenate(s_cols)
    end = np.minimum(start + spec.contact_duration, spec.horizon)
    return ContactTrace.from_arrays(np.concatenate(a_cols), np.concatenate(b_cols), start, end,
                                    n=spec.n, horizon=(0.0, spec.horizon))


CYCLE = ((0, 1), (1, 2), (2, 0))


def gen_cyclic(spec: CyclicSpec) -> ContactTrace:
    rng = np.random.default_rng(spec.seed)
    expected = int(spec.rate * spec.horizon * 1.2) + 16
    times = np.cumsum(rng.exponential(1.0 / spec.rate, size=expected))
    while times[-1] < spec.horizon:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / spec.rate, size=expected))
        times = np.concatenate((times, more))
    times = times[times <= spec.horizon]
    pairs = np.array(CYCLE)[np.arange(times.size) % 3]
    return ContactTrace.from_arrays(pairs[:, 0], pairs[:, 1], times, times,
                                    n=3, horizon=(0.0, spec.horizon))


def gen_clustered(spec: ClusterSpec) -> ContactTrace:
    rng = np.random.default_rng(spec.seed)
    scale = np.ones(spec.n)
    if spec.loners:
        scale[spec.n - spec.loners:] = spec.loner_factor
    clusters = spec.clusters()
    a_cols, b_cols, s_cols, e_cols = [], [], [], []

    def emit(a, b, starts, duration):
        a_cols.append(np.full(starts.size, a))
        b_cols.append(np.full(starts.size, b))
        s_cols.append(starts)
        e_cols.append(np.minimum(starts + duration, spec.horizon))

    for members in clusters:
        for x in range(members.size):
            for y in range(x + 1, members.size):
                a, b = int(members[x]), int(members[y])
                rate = spec.intra_rate * scale[a] * scale[b]
                emit(a, b, _poisson_times(rng, rate, 0.0, spec.horizon), spec.intra_duration)
    windows = spec.bursts()
    for ci in range(len(clusters)):
        for cj in range(ci + 1, len(clusters)):
            meets = np.concatenate([_poisson_times(rng, spec.burst_rate, lo, hi) for lo, hi in windows])
            for a in clusters[ci].tolist():
                for b in clusters[cj].tolist():
                    p = scale[a] * scale[b]
                    keep = meets if p >= 1 else meets[rng.random(meets.size) < p]
                    emit(a, b, keep, spec.meet_duration)
    return ContactTrace.from_arrays(np.concatenate(a_cols), np.concatenate(b_cols),
                                    np.concatenate(s_cols), np.concatenate(e_cols),
                                    n=spec.n, horizon=(0.0, spec.horizon))


def inter_cluster_mask(spec: ClusterSpec, trace: ContactTrace) -> np.ndarray:
    label = np.empty(spec.n, dtype=int)
    for k, members in enumerate(spec.clusters()):
        label[members] = k
    return label[trace.a] != label[trace.b]


def parse_gen_spec(text: str):
    """Parse ``kind:key=value,...`` (e.g. ``homogeneous:n=20,lambda=0.001``)."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    kw: dict = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        key = key.strip().lower()
        key = {"lambda": "rate", "mu": "rate", "duration": "contact_duration", "clusters": "cluster_count"}.get(key, key)
        kw[key] = float(val)
    cls = {"homogeneous": HomogeneousSpec, "cyclic": CyclicSpec, "clustered": ClusterSpec}.get(kind)
    if cls is None:
        raise ValueError(f"unknown generator {kind!r}")
    ints = {"n", "seed", "cluster_count", "loners"}
    kw = {k: int(v) if k in ints else v for k, v in kw.items()}
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from None


def generate(spec) -> ContactTrace:
    if isinstance(spec, HomogeneousSpec):
        return gen_homogeneous(spec)
    if isinstance(spec, CyclicSpec):
        return gen_cyclic(spec)
    if isinstance(spec, ClusterSpec):
        return gen_clustered(spec)
    raise TypeError(f"not a generator spec: {spec!r}")
