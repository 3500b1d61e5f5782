import numpy as np
from hypothesis import given, settings, strategies as st

from nhbm.compare import annulus_average, compare_radial, disk_density, radial_histogram


def atomic_samples(rng, k, n):
    out = []
    for _ in range(k):
        loc = 0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n))
        out.append((loc, rng.uniform(0, 2 / n, n)))
    return out


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), unweighted=st.booleans())
def test_histogram_mass_equals_measure_mass(seed, unweighted):
    rng = np.random.default_rng(seed)
    samples = atomic_samples(rng, 5, 8)
    if unweighted:
        samples = [(loc, np.full(8, 1 / 8)) for loc, _ in samples]
    edges = np.linspace(0, 20, 11)
    hist = radial_histogram(samples, edges)
    mass = np.mean([w.sum() for _, w in samples])
    assert abs(hist.mass - mass) <= 1e-6


def test_histogram_counts_by_hand():
    samples = [(np.array([0.1, 0.5, 0.55j]), np.array([1.0, 2.0, 3.0]))]
    hist = radial_histogram(samples, [0, 0.2, 0.6])
    assert list(hist.counts) == [1, 2]
    assert np.allclose(hist.weights, [1, 5])
    assert np.allclose(hist.density, [1 / (np.pi * 0.04), 5 / (np.pi * (0.36 - 0.04))])


def test_disk_density_and_error():
    samples = [(np.array([0.0, 1.0]), np.array([1.0, 1.0])), (np.array([2.0]), np.array([1.0]))]
    est, se, count = disk_density(samples, 0j, 0.5)
    area = np.pi * 0.25
    assert count == 1 and np.isclose(est, 0.5 / area)
    assert np.isclose(se, np.std([1 / area, 0], ddof=1) / np.sqrt(2))


def test_uniform_disk_matches_flat_prediction(rng):
    # uniform atoms on the unit disk against the density 1/pi
    samples = []
    for _ in range(200):
        r = np.sqrt(rng.uniform(size=64))
        loc = r * np.exp(2j * np.pi * rng.uniform(size=64))
        samples.append((loc, np.full(64, 1 / 64)))
    hist = radial_histogram(samples, [0.2, 0.4, 0.6, 0.8])
    xs = np.linspace(-1, 1, 101)
    nodes = xs[None, :] + 1j * xs[:, None]
    pred = np.where(np.abs(nodes) <= 1, 1 / np.pi, 0.0)
    rows = compare_radial(hist, nodes, pred, "xi")
    assert all(r["z"] < 4 for r in rows)
    assert np.isclose(annulus_average(pred, nodes, 0.2, 0.4), 1 / np.pi)
