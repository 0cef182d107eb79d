import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoi.circle import TWO_PI, CircleInterval, circ_dist
from hoi.errors import FlowFoldingError, SizeError, ValidationError
from hoi.measures import (
    Atomic,
    GridDensity,
    circular_moments,
    density_from_function,
    dirac,
    dist_to_splay,
    dist_to_sync,
    equally_spaced,
    mass_in_interval,
    pushforward,
    quantile_sample,
    two_atom,
    uniform,
    uniform_density,
    von_mises_density,
    w1_bruteforce_oracle,
    w1_circle,
)


def random_atomic(rng, n_max=6):
    n = int(rng.integers(1, n_max + 1))
    return Atomic(rng.uniform(0, TWO_PI, n), rng.dirichlet(np.ones(n)))


@st.composite
def atomic_measures(draw, n_max=6):
    n = draw(st.integers(1, n_max))
    pos = draw(st.lists(st.floats(0, TWO_PI, exclude_max=True), min_size=n, max_size=n))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    return Atomic(pos, w / w.sum())


# construction


def test_atomic_validation():
    with pytest.raises(ValidationError):
        Atomic([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(ValidationError):
        Atomic([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(ValidationError):
        Atomic([], [])
    with pytest.raises(ValidationError):
        Atomic([np.nan], [1.0])
    assert Atomic([7.0], [1.0]).positions[0] == pytest.approx(7.0 - TWO_PI)


def test_density_validation():
    with pytest.raises(ValidationError):
        GridDensity(np.ones(8))
    with pytest.raises(ValidationError):
        GridDensity(np.full(4, 1 / TWO_PI) * np.array([1, 1, 3, -1]))
    rho = uniform_density(64)
    assert rho.mass == pytest.approx(1.0)
    assert rho.values.flags.writeable is False


def test_canonical_merges_close_atoms():
    mu = Atomic([0.0, 1e-14, 2.0, TWO_PI - 1e-14], [0.25, 0.25, 0.25, 0.25]).canonical()
    assert len(mu) == 2
    assert sorted(mu.weights) == pytest.approx([0.25, 0.75])


# Wasserstein-1


def test_w1_examples():
    assert w1_circle(dirac(0), dirac(np.pi)) == pytest.approx(np.pi)
    assert w1_circle(Atomic([0, np.pi / 2], [0.5, 0.5]), dirac(0)) == pytest.approx(np.pi / 4)
    assert w1_circle(dirac(0.1), dirac(TWO_PI - 0.1)) == pytest.approx(0.2)


def test_oracle_examples():
    assert w1_bruteforce_oracle(dirac(0), dirac(0)) == pytest.approx(0.0, abs=1e-12)
    assert w1_bruteforce_oracle(dirac(0), dirac(np.pi)) == pytest.approx(np.pi)
    three = equally_spaced(3)
    assert w1_bruteforce_oracle(three, three.rotate(0.1)) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(SizeError):
        w1_bruteforce_oracle(equally_spaced(9), dirac(0))


def test_w1_matches_oracle_4_vs_3(rng):
    for _ in range(20):
        a = Atomic(rng.uniform(0, TWO_PI, 4), rng.dirichlet(np.ones(4)))
        b = Atomic(rng.uniform(0, TWO_PI, 3), rng.dirichlet(np.ones(3)))
        assert abs(w1_circle(a, b) - w1_bruteforce_oracle(a, b)) < 1e-9


def test_w1_density_exact_against_fine_atoms():
    rho = von_mises_density(1.0, 0.3, 64)
    fine = quantile_sample(rho, 20000)
    assert w1_circle(rho, dirac(0.0)) == pytest.approx(w1_circle(fine, dirac(0.0)), abs=1e-3)
    assert w1_circle(uniform(), uniform_density(128)) == pytest.approx(0.0, abs=1e-14)


def test_w1_rejects_non_measures():
    with pytest.raises(ValidationError):
        w1_circle([0.0], dirac(0))


@settings(max_examples=60, deadline=None)
@given(atomic_measures(), atomic_measures(), atomic_measures())
def test_w1_metric_properties(a, b, c):
    assert w1_circle(a, a) == pytest.approx(0.0, abs=1e-12)
    assert w1_circle(a, b) == pytest.approx(w1_circle(b, a), abs=1e-12)
    assert w1_circle(a, c) <= w1_circle(a, b) + w1_circle(b, c) + 1e-10
    assert w1_circle(a, b) <= np.pi + 1e-12


@settings(max_examples=40, deadline=None)
@given(atomic_measures(), atomic_measures(), st.floats(0, TWO_PI))
def test_w1_rotation_invariant(a, b, theta):
    assert w1_circle(a.rotate(theta), b.rotate(theta)) == pytest.approx(w1_circle(a, b), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(atomic_measures(), atomic_measures())
def test_w1_matches_oracle_property(a, b):
    assert abs(w1_circle(a, b) - w1_bruteforce_oracle(a, b)) < 1e-9


def test_zero_distance_iff_equal_after_merge():
    a = Atomic([1.0, 2.0], [0.3, 0.7])
    b = Atomic([2.0, 1.0, 1.0 + 1e-13], [0.7, 0.1, 0.2])
    assert w1_circle(a, b) < 1e-12
    assert w1_circle(a, Atomic([1.0, 2.0], [0.31, 0.69])) > 1e-3


# pushforward


def test_pushforward_examples():
    mu = Atomic([0.5, 3.0], [0.4, 0.6])
    assert w1_circle(pushforward(mu, lambda x: x), mu) < 1e-14
    assert pushforward(dirac(0), lambda x: x + np.pi / 2).positions[0] == pytest.approx(np.pi / 2)
    rot = pushforward(uniform_density(128), lambda x: x + 0.77)
    assert np.max(np.abs(rot.values - 1 / TWO_PI)) < 1e-12


def test_pushforward_density_conserves_mass_and_matches_atoms():
    rho = von_mises_density(2.0, 1.0, 256)
    fmap = lambda x: x + 0.3 + 0.5 * np.sin(x)  # noqa: E731
    out = pushforward(rho, fmap)
    assert out.mass == pytest.approx(1.0, abs=1e-12)
    atoms = pushforward(quantile_sample(rho, 4096), fmap)
    assert w1_circle(out, atoms) < 2e-3


def test_pushforward_rejects_folding_map():
    with pytest.raises(FlowFoldingError):
        pushforward(uniform_density(32), lambda x: x + 2.0 * np.sin(x))


def test_pushforward_sup_bound(rng):
    probe = np.linspace(0, TWO_PI, 2049)
    for _ in range(30):
        mu = random_atomic(rng)
        s1, s2 = rng.uniform(0, TWO_PI, 2)
        b1, b2 = rng.uniform(-0.9, 0.9, 2)
        h1 = lambda x: x + s1 + b1 * np.sin(x)  # noqa: E731
        h2 = lambda x: x + s2 + b2 * np.sin(2 * x) / 2  # noqa: E731
        pts = np.concatenate([probe, mu.positions])
        sup = np.max(circ_dist(h1(pts), h2(pts)))
        assert w1_circle(pushforward(mu, h1), pushforward(mu, h2)) <= sup + 1e-10


# moments


def test_moments_examples():
    z = circular_moments(dirac(1.2), 3)
    assert np.allclose(z, np.exp(1j * np.arange(4) * 1.2))
    z = circular_moments(equally_spaced(7, 0.3), 6)
    assert np.max(np.abs(z[1:])) < 1e-14
    z = circular_moments(uniform_density(64), 5)
    assert np.max(np.abs(z[1:])) < 1e-14


@settings(max_examples=30, deadline=None)
@given(atomic_measures())
def test_moments_bounded(mu):
    assert np.all(np.abs(circular_moments(mu, 5)) <= 1 + 1e-12)


# distances to sync and splay


def test_dist_to_sync_examples():
    d, xi = dist_to_sync(dirac(2.0))
    assert d == 0.0 and xi == pytest.approx(2.0)
    d, _ = dist_to_sync(uniform_density(256))
    assert d == pytest.approx(np.pi / 2, abs=1e-10)
    n, psi = 16, 0.3
    d, xi = dist_to_sync(two_atom(n, psi, 1.0))
    assert d == pytest.approx(psi / n) and xi == pytest.approx(1.0)


def test_dist_to_sync_tie_break_smallest_angle():
    d, xi = dist_to_sync(Atomic([1.0, 4.0], [0.5, 0.5]))
    assert d == pytest.approx(1.5) and xi == pytest.approx(1.0)


def test_dist_to_sync_density_matches_atoms():
    rho = von_mises_density(3.0, 2.0, 256)
    d, xi = dist_to_sync(rho)
    d2, _ = dist_to_sync(quantile_sample(rho, 20000))
    assert d == pytest.approx(d2, abs=1e-3)
    assert xi == pytest.approx(2.0, abs=1e-3)


def test_dist_to_splay_examples():
    assert dist_to_splay(uniform_density(64)) == pytest.approx(0.0, abs=1e-14)
    assert dist_to_splay(dirac(0.0)) == pytest.approx(np.pi / 2)
    assert dist_to_splay(equally_spaced(4)) == pytest.approx(np.pi / 8)
    assert dist_to_splay(equally_spaced(50)) == pytest.approx(np.pi / 100)


def test_sync_distance_arc_bound(rng):
    for _ in range(50):
        mu = random_atomic(rng, 8)
        a, b = rng.uniform(0, TWO_PI, 2)
        iv = CircleInterval(a, b)
        m = mass_in_interval(mu, iv)
        assert dist_to_sync(mu)[0] < iv.length * m + np.pi * (1 - m) + 1e-12


# quantile sampling and arcs


def test_quantile_examples():
    atoms = quantile_sample(uniform_density(256), 8)
    assert np.allclose(atoms.positions, (np.arange(8) + 0.5) * TWO_PI / 8)
    rho = von_mises_density(4.0, 1.0, 512)
    w = [w1_circle(quantile_sample(rho, n), rho) for n in (16, 32, 64, 128)]
    assert all(b <= a for a, b in zip(w, w[1:]))
    assert w[2] < TWO_PI / 64


def test_mass_in_interval_examples():
    assert mass_in_interval(uniform_density(64), CircleInterval(0.3, 0.3 + np.pi)) == pytest.approx(0.5)
    assert mass_in_interval(dirac(0.0), CircleInterval(np.pi / 2, 1.5 * np.pi)) == 0.0
    n = 8
    assert mass_in_interval(two_atom(n, 2.0), CircleInterval(1.5, 2.5)) == pytest.approx(1 / n)
    assert mass_in_interval(dirac(1.0), CircleInterval(1.0, 2.0)) == 0.0


def test_density_from_function_normalizes():
    rho = density_from_function(lambda x: 3 + np.cos(x), 128)
    assert rho.mass == pytest.approx(1.0)
    assert rho.values.max() / rho.values.min() == pytest.approx(2.0, rel=1e-3)
