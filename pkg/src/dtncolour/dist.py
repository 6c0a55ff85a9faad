"""Discrete distributions of non-negative delays on a uniform time grid.

Bin ``k`` holds the probability of ``(k*dt, (k+1)*dt]``; bin 0 additionally
holds the point mass at exactly zero, which is tracked separately in
``atom`` so that ``P(X = 0)`` stays exact through every operation. Mass that
falls beyond the last bin is kept in ``tail``.

The cumulative vector returned by :func:`to_cdf` gives ``P(X <= (k+1)*dt)``
at index ``k``; together with ``P(X <= 0) = atom`` this defines a
piecewise-linear CDF on ``[0, len*dt]`` (see :meth:`DiscreteDist.cdf_at`).
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

MASS_TOL = 1e-9
DIRECT_MAX = 8192


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    dt: float
    mass: np.ndarray
    tail: float = 0.0
    atom: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        mass = np.asarray(self.mass, dtype=float)
        if mass.ndim != 1 or mass.size == 0:
            raise ValueError("mass must be a non-empty vector")
        if np.any(mass < 0):
            raise ValueError("negative probability mass")
        if self.atom < 0 or self.atom > mass[0] + MASS_TOL:
            raise ValueError("zero atom must lie within bin 0")
        if abs(mass.sum() + self.tail - 1.0) > MASS_TOL:
            raise ValueError(f"mass + tail = {mass.sum() + self.tail!r}, expected 1")
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)

    def __len__(self) -> int:
        return self.mass.size

    @property
    def grid(self) -> np.ndarray:
        """Right edges of the bins: the times at which :func:`to_cdf` is exact."""
        return self.dt * np.arange(1, self.mass.size + 1)

    def mean(self) -> float:
        """Mean of the grid mass, bins taken at their midpoints; ``tail`` ignored."""
        cont = self.mass.copy()
        cont[0] -= self.atom
        return float(np.dot(cont, (np.arange(cont.size) + 0.5) * self.dt))

    def cdf_at(self, t) -> np.ndarray | float:
        """Piecewise-linear CDF through ``(0, atom)`` and the bin right edges."""
        xs = np.concatenate(([0.0], self.grid))
        ys = np.concatenate(([self.atom], to_cdf(self)))
        t_arr = np.asarray(t, dtype=float)
        out = np.interp(t_arr, xs, ys)
        out = np.where(t_arr < 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def resized(self, length: int) -> "DiscreteDist":
        """Truncate (moving mass to tail) or zero-pad to ``length`` bins."""
        if length >= self.mass.size:
            mass = np.concatenate((self.mass, np.zeros(length - self.mass.size)))
            return DiscreteDist(self.dt, mass, self.tail, self.atom)
        mass = self.mass[:length].copy()
        return DiscreteDist(self.dt, mass, _tail(mass), self.atom)


def _tail(mass: np.ndarray) -> float:
    return max(0.0, 1.0 - float(mass.sum()))


def _raw_convolve(f: np.ndarray, g: np.ndarray, method: str) -> np.ndarray:
    if method == "auto":
        method = "direct" if max(f.size, g.size) <= DIRECT_MAX else "fft"
    if method == "direct":
        return np.convolve(f, g)
    if method == "fft":
        return np.clip(fftconvolve(f, g), 0.0, None)
    raise ValueError(f"unknown convolution method {method!r}")


def convolve(
    f: DiscreteDist, g: DiscreteDist, length: int | None = None, method: str = "auto"
) -> DiscreteDist:
    """Distribution of the sum of independent ``f`` and ``g``.

    Two interior masses in bins ``i`` and ``j`` sum to somewhere in
    ``((i+j)dt, (i+j+2)dt]``, so their product is split evenly over bins
    ``i+j`` and ``i+j+1``. A zero atom shifts the other operand without
    smearing. This keeps means exactly additive at bin midpoints.
    """
    if not np.isclose(f.dt, g.dt, rtol=1e-12, atol=0.0):
        raise ValueError(f"grid steps differ: {f.dt} vs {g.dt}")
    if length is None:
        length = max(len(f), len(g))
    fc = f.mass.copy()
    fc[0] -= f.atom
    gc = g.mass.copy()
    gc[0] -= g.atom
    inner = _raw_convolve(fc, gc, method)
    out = np.zeros(max(length, inner.size + 1))
    out[: inner.size] += 0.5 * inner
    out[1 : inner.size + 1] += 0.5 * inner
    out[: g.mass.size] += f.atom * g.mass
    out[: fc.size] += g.atom * fc
    mass = np.clip(out[:length], 0.0, None)
    atom = f.atom * g.atom
    return DiscreteDist(f.dt, mass, _tail(mass), min(atom, float(mass[0])))


def to_cdf(f: DiscreteDist) -> np.ndarray:
    return np.minimum(np.cumsum(f.mass), 1.0)


def point_mass(dt: float, length: int) -> DiscreteDist:
    mass = np.zeros(length)
    mass[0] = 1.0
    return DiscreteDist(dt, mass, 0.0, 1.0)


def from_exponential(rate: float, dt: float, length: int) -> DiscreteDist:
    if not rate > 0:
        raise ValueError("rate must be positive")
    edges = np.exp(-rate * dt * np.arange(length + 1))
    mass = edges[:-1] - edges[1:]
    return DiscreteDist(dt, mass, float(edges[-1]))


def from_samples(samples, dt: float, length: int) -> DiscreteDist:
    """Histogram of delays: exact zeros go to the atom, ``x`` in ``((k)dt, (k+1)dt]`` to bin ``k``."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if np.any(x < 0):
        raise ValueError("negative delay sample")
    idx = np.maximum(np.ceil(x / dt).astype(np.int64) - 1, 0)
    inside = idx < length
    mass = np.bincount(idx[inside], minlength=length).astype(float) / x.size
    atom = float(np.count_nonzero(x == 0)) / x.size
    return DiscreteDist(dt, mass, _tail(mass), min(atom, float(mass[0])))


def from_cdf(cdf, dt: float, atom: float = 0.0) -> DiscreteDist:
    """Inverse of :func:`to_cdf`; ``atom`` is ``F(0)``."""
    cdf = np.maximum.accumulate(np.clip(np.asarray(cdf, dtype=float), 0.0, 1.0))
    mass = np.diff(cdf, prepend=0.0)
    return DiscreteDist(dt, mass, _tail(mass), min(max(atom, 0.0), float(mass[0])))


def survival_power(cdf, m: int, form: str = "min") -> np.ndarray:
    """Pointwise CDF of the minimum (``form="min"``) or maximum (``"max"``) of ``m`` iid copies."""
    if m < 1:
        raise ValueError("exponent must be >= 1")
    cdf = np.clip(np.asarray(cdf, dtype=float), 0.0, 1.0)
    if m == 1 and form in ("min", "max"):
        return cdf
    if form == "min":
        return 1.0 - (1.0 - cdf) ** m
    if form == "max":
        return cdf ** m
    raise ValueError(f"unknown form {form!r}")


def min_of(f: DiscreteDist, m: int) -> DiscreteDist:
    return from_cdf(survival_power(to_cdf(f), m, "min"), f.dt, float(survival_power(f.atom, m, "min")))


def to_csv(f: DiscreteDist) -> str:
    out = io.StringIO()
    out.write("t,pdf,cdf\n")
    out.write(f"0,{f.atom!r},{f.atom!r}\n")
    cont = f.mass.copy()
    cont[0] -= f.atom
    for t, p, c in zip(f.grid.tolist(), cont.tolist(), to_cdf(f).tolist()):
        out.write(f"{t!r},{p!r},{c!r}\n")
    return out.getvalue()
