import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ginibre
from nhbm import field
from nhbm.errors import GridTooCoarse
from nhbm.suites import derivative_residuals, fd_laplacian


def random_point(seed, n):
    rng = np.random.default_rng(seed)
    m = ginibre(rng, n)
    z = complex(*rng.normal(size=2))
    w = complex(*rng.normal(size=2))
    return z, w, m


def test_psi_matches_slogdet(rng):
    z, w, m = 0.3 - 0.2j, 0.5 + 0.1j, ginibre(rng, 4)
    shifted = m - z * np.eye(4)
    h = shifted.conj().T @ shifted + abs(w) ** 2 * np.eye(4)
    assert np.isclose(field.psi(z, w, m), np.linalg.slogdet(h)[1] / 8)
    assert np.isclose(field.fk_det(z, w, m), np.sqrt(np.linalg.det(h).real))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_closed_forms_match_finite_differences(seed, n):
    z, w, m = random_point(seed, n)
    res = derivative_residuals(z, w, m)
    assert res["dpsi_dw"] <= 1e-6
    assert res["lap_w_psi"] <= 1e-6
    assert res["dpsi_dm"] <= 1e-6 and res["dpsi_dmbar"] <= 1e-6
    assert res["m_laplacian"] <= 1e-12


def test_lap_z_closed_form_matches_stencil(rng):
    m = ginibre(rng, 3)
    for z, w in [(0.1 + 0.2j, 0.5), (-0.7j, 0.2 + 0.2j)]:
        fd = fd_laplacian(lambda zz: field.psi(zz, w, m), z, 1e-3)
        assert np.isclose(field.lap_z_psi_closed(z, w, m), fd, rtol=1e-6)
        assert np.isclose(field.lap_z_psi(z, w, m), fd, rtol=1e-3)


def test_spde_hand_values():
    drift, qv, _ = field.spde_coefficients(1, 1, np.zeros((2, 2)))
    assert np.isclose(drift, 1 / 8) and np.isclose(qv, 1 / 32)


def test_fk_drift_from_chain_rule(rng):
    # drift of D = exp(n psi) by Ito: D (n psi_drift + n^2 psi_qv / 2) with
    # psi_qv the rate of (d psi)^2
    z, w, m = 0.2, 0.4j, ginibre(rng, 3)
    psi_drift, psi_qv, fk_drift = field.spde_coefficients(z, w, m)
    det = field.fk_det(z, w, m)
    assert np.isclose(fk_drift, det * (3 * psi_drift + 9 * psi_qv / 2))


def test_fk_determinant_properties(rng):
    assert np.isclose(field.fk_det(0, 1e-9, np.eye(3)), 1.0)
    g = ginibre(rng, 3) + 2 * np.eye(3)
    assert np.isclose(field.fk_det(0, 1e-9, g), abs(np.linalg.det(g)), rtol=1e-8)
    c = 0.7 - 1.3j
    assert np.isclose(field.fk_det(0, 1e-9, c * g), abs(c) ** 3 * field.fk_det(0, 1e-9, g), rtol=1e-8)


def test_zero_regularization_rejected():
    with pytest.raises(ValueError):
        field.psi(0, 0, np.eye(2))


def test_martingale_increments_are_first_variations(rng):
    z, w, m = 0.3j, 0.6, ginibre(rng, 3)
    dm = ginibre(rng, 3)
    eps = 1e-6
    fd = (field.psi(z, w, m + eps * dm) - field.psi(z, w, m - eps * dm)) / (2 * eps)
    assert np.isclose(field.psi_martingale_increment(z, w, m, dm), fd, rtol=1e-7)
    fd = (field.fk_det(z, w, m + eps * dm) - field.fk_det(z, w, m - eps * dm)) / (2 * eps)
    assert np.isclose(field.fk_martingale_increment(z, w, m, dm), fd, rtol=1e-7)


def test_vectorized_evaluators_match_scalar(rng):
    m = ginibre(rng, 3)
    zs = np.array([0.1, -0.5 + 0.4j, 1j])
    w = 0.3 + 0.1j
    assert np.allclose(field.psi_grid(zs, w, m), [field.psi(z, w, m) for z in zs])
    mu_l, mu_o = field.mu_densities_grid(zs, w, m)
    ref = np.array([field.mu_densities(z, w, m) for z in zs])
    assert np.allclose(mu_l, ref[:, 0], rtol=1e-6) and np.allclose(mu_o, ref[:, 1])
    ms = np.stack([m, 2 * m])
    assert np.allclose(field.psi_batch(0.2, w, ms), [field.psi(0.2, w, x) for x in ms])


def test_field_grid_rows(rng):
    m = ginibre(rng, 2)
    rows = field.field_grid(m, [0.0, 0.5], [0.0], [0.1, 0.01])
    assert len(rows) == 4
    r = rows[1]
    assert np.isclose(r["psi"], field.psi(0.5, 0.1, m))
    assert np.isclose(complex(r["re_dpsi_dw"], r["im_dpsi_dw"]), field.dpsi_dw(0.5, 0.1, m))
    with pytest.raises(ValueError):
        field.field_grid(m, [], [0.0], [0.1])
    with pytest.raises(ValueError):
        field.field_grid(m, [0.0], [0.0], [0.01, 0.1])


def test_pairing_limits_converge(jordan_like):
    phi = lambda z: np.exp(-np.abs(z - 0.3) ** 2)
    res = field.pairing_limit_w0(jordan_like, phi)
    for errs in (res.xi_errors, res.theta_errors):
        assert all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] <= 1e-2


def test_coarse_grid_rejected(jordan_like):
    xs = np.linspace(-3, 3, 61)
    with pytest.raises(GridTooCoarse):
        field.pairing_limit_w0(jordan_like, lambda z: np.exp(-np.abs(z) ** 2), (1e-2,), grid=(xs, xs))
