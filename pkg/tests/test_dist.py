import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtncolour import dist as D


def random_dist(rng, length=64, atom=True, dt=0.5):
    w = rng.random(length) * (rng.random(length) < 0.6)
    w[0] += 1e-3
    mass = w / w.sum()
    a = float(rng.uniform(0, mass[0])) if atom else 0.0
    return D.DiscreteDist(dt, mass, 0.0, a)


def double_sum(f, g):
    """Oracle: bin-by-bin product placement, written out as loops."""
    fc, gc = f.mass.copy(), g.mass.copy()
    fc[0] -= f.atom
    gc[0] -= g.atom
    out = np.zeros(len(f) + len(g) + 1)
    for i in range(len(f)):
        for j in range(len(g)):
            out[i + j] += 0.5 * fc[i] * gc[j]
            out[i + j + 1] += 0.5 * fc[i] * gc[j]
        out[i] += g.atom * fc[i]
    for j in range(len(g)):
        out[j] += f.atom * gc[j]
    out[0] += f.atom * g.atom
    return out


dists = st.builds(
    lambda seed, length, with_atom: random_dist(np.random.default_rng(seed), length, with_atom),
    st.integers(0, 2**32 - 1), st.integers(1, 40), st.booleans())


def tv(f, g):
    n = max(len(f), len(g))
    return 0.5 * (np.abs(f.resized(n).mass - g.resized(n).mass).sum() + abs(f.tail - g.tail))


def test_point_mass_is_identity(rng):
    g = random_dist(rng)
    h = D.convolve(D.point_mass(g.dt, len(g)), g)
    np.testing.assert_allclose(h.mass, g.mass, atol=1e-15)
    assert h.atom == pytest.approx(g.atom)


def test_uniform_triangle_against_double_sum():
    f = D.DiscreteDist(1.0, np.r_[np.full(10, 0.1), np.zeros(30)])
    h = D.convolve(f, f)
    want = double_sum(f, f)[:40]
    np.testing.assert_allclose(h.mass, want, atol=1e-15)
    # peak of the triangle sits at t = 10*dt, the shared edge of bins 9 and 10
    top = np.flatnonzero(np.isclose(h.mass, h.mass.max()))
    assert top.tolist() == [9, 10]
    assert h.grid[9] == 10.0
    np.testing.assert_allclose(h.mass[:10], h.mass[19:9:-1])


def test_random_against_double_sum(rng):
    for _ in range(5):
        f, g = random_dist(rng, 17), random_dist(rng, 23)
        h = D.convolve(f, g, length=41)
        np.testing.assert_allclose(h.mass, double_sum(f, g)[:41], atol=1e-15)


def test_fft_path_matches_direct(rng):
    f, g = random_dist(rng, 300), random_dist(rng, 300)
    a = D.convolve(f, g, method="direct")
    b = D.convolve(f, g, method="fft")
    assert np.max(np.abs(a.mass - b.mass)) < 1e-12


def test_mass_conserved_with_room():
    f = D.DiscreteDist(1.0, np.r_[np.full(10, 0.1), np.zeros(15)])
    h = D.convolve(f, f)
    assert h.mass.sum() == pytest.approx(1.0, abs=1e-12)
    assert h.tail == pytest.approx(0.0, abs=1e-12)


@given(dists, dists)
def test_mass_conservation(f, g):
    h = D.convolve(f, g)
    assert abs(h.mass.sum() + h.tail - 1.0) <= 1e-9


@given(dists, dists)
def test_commutative(f, g):
    n = len(f) + len(g) + 1
    assert tv(D.convolve(f, g, n), D.convolve(g, f, n)) <= 1e-9


@given(dists, dists, dists)
def test_associative(f, g, h):
    n = len(f) + len(g) + len(h) + 2
    left = D.convolve(D.convolve(f, g, n), h, n)
    right = D.convolve(f, D.convolve(g, h, n), n)
    assert tv(left, right) <= 1e-9


@given(dists, dists)
def test_mean_additive(f, g):
    h = D.convolve(f, g, len(f) + len(g) + 1)
    assert abs(h.mean() - f.mean() - g.mean()) <= f.dt


def test_cdf_examples(rng):
    np.testing.assert_array_equal(D.to_cdf(D.point_mass(1.0, 5)), np.ones(5))
    np.testing.assert_allclose(D.to_cdf(D.DiscreteDist(1.0, np.full(4, 0.25))), [.25, .5, .75, 1])
    f = random_dist(rng)
    c = D.to_cdf(f)
    np.testing.assert_allclose(c, [sum(f.mass[: k + 1]) for k in range(len(f))], atol=1e-14)
    assert np.all(np.diff(c) >= 0) and c[-1] <= 1


def test_exponential_bins():
    f = D.from_exponential(1.0, 0.1, 200)
    assert f.mass[0] == pytest.approx(1 - np.exp(-0.1), rel=1e-12)
    assert f.mass.sum() + f.tail == pytest.approx(1.0, abs=1e-15)
    big = D.from_exponential(1e6, 0.1, 10)
    assert big.mass[0] > 1 - 1e-12


def test_from_samples_examples(rng):
    z = D.from_samples([0, 0, 0], 0.1, 5)
    assert z.atom == 1.0 and z.mass[0] == 1.0
    two = D.from_samples([0.05, 0.15], 0.1, 2)
    np.testing.assert_allclose(two.mass, [0.5, 0.5])
    assert two.atom == 0.0
    x = rng.exponential(1.0, 200_000)
    emp, ref = D.from_samples(x, 0.1, 100), D.from_exponential(1.0, 0.1, 100)
    assert np.max(np.abs(D.to_cdf(emp) - D.to_cdf(ref))) < 0.01


def test_from_samples_right_closed_bins():
    f = D.from_samples([0.1, 0.2], 0.1, 3)
    np.testing.assert_allclose(f.mass, [0.5, 0.5, 0.0])


def test_survival_power_examples():
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(D.survival_power(u, 1), u)
    np.testing.assert_allclose(D.survival_power(u, 2, "max"), u ** 2)
    f = D.from_exponential(0.5, 0.01, 2000)
    six = D.survival_power(D.to_cdf(f), 6)
    np.testing.assert_allclose(six, 1 - np.exp(-3.0 * f.grid), atol=1e-3)


def test_min_of_keeps_atom():
    f = D.DiscreteDist(1.0, np.array([0.5, 0.5]), 0.0, 0.2)
    g = D.min_of(f, 3)
    assert g.atom == pytest.approx(1 - 0.8 ** 3)


def test_validation():
    with pytest.raises(ValueError):
        D.DiscreteDist(1.0, np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        D.DiscreteDist(1.0, np.array([0.5, 0.5]), atom=0.6)
    with pytest.raises(ValueError):
        D.convolve(D.point_mass(1.0, 3), D.point_mass(2.0, 3))


def test_csv_layout():
    text = D.to_csv(D.DiscreteDist(1.0, np.array([0.5, 0.5]), 0.0, 0.25))
    assert text.splitlines() == ["t,pdf,cdf", "0,0.25,0.25", "1.0,0.25,0.5", "2.0,0.5,1.0"]
