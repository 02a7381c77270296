import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smtrt.opacity import (
    GrayOpacityFields,
    MaterialModel,
    collapse_E,
    collapse_F,
    collapse_P,
    eval_multigroup,
    heat_capacity,
    larsen_group_opacity,
    tilde,
)
from smtrt.spectral import C_LIGHT, GroupStructure, group_emission, planck_total

LARSEN_GROUPS = GroupStructure.logarithmic(1e-2, 3e5, 33)
# mpmath Planck-weighted averages of 1e12/nu^3 (1 - exp(-nu/T)) at T = 1000 eV, frozen
LARSEN_THICK_1E3_1E4 = 59.260049150164241079
LARSEN_THICK_0_1E3 = 2811.8593008432840723


def open_groups(rng, G):
    """Random structure starting at 0 and ending at infinity (no spectral tail)."""
    cuts = np.sort(rng.uniform(1.0, 5e3, G - 1))
    return GroupStructure(tuple(np.concatenate([[0.0], cuts, [np.inf]])))


def test_marshak_power_law():
    mat = MaterialModel.power_law(1e12, -3.0, 3e12)
    sig = eval_multigroup((mat,), np.zeros(3, dtype=int), np.full(3, 100.0), LARSEN_GROUPS)
    np.testing.assert_allclose(sig, 1e6, rtol=1e-15)


def test_constant_table_copied():
    tab = tuple(np.linspace(1.0, 33.0, 33))
    sig = eval_multigroup((MaterialModel.constant(tab, 1.0),), [0, 0], np.array([5.0, 7.0]), LARSEN_GROUPS)
    np.testing.assert_array_equal(sig, np.array([tab, tab]))


def test_constant_table_group_count_checked():
    with pytest.raises(ValueError):
        eval_multigroup((MaterialModel.constant((1.0, 2.0), 1.0),), [0], np.array([5.0]), LARSEN_GROUPS)


def test_larsen_single_group_matches_quadrature_oracle():
    # the lowest group always extends down to nu = 0, so [1e3, 1e4] is the second group
    sig = larsen_group_opacity(1e12, np.array([1000.0]), GroupStructure((0.0, 1e3, 1e4)))[0]
    assert sig[1] == pytest.approx(LARSEN_THICK_1E3_1E4, rel=1e-6)
    assert sig[0] == pytest.approx(LARSEN_THICK_0_1E3, rel=1e-6)


def test_larsen_far_tail_is_finite_and_decreasing():
    sig = larsen_group_opacity(1e12, np.array([1.0, 10.0]), LARSEN_GROUPS)
    assert np.all(np.isfinite(sig)) and np.all(sig > 0)
    assert np.all(np.diff(sig, axis=1) < 0)


def test_eval_rejects_nonpositive_temperature():
    mat = MaterialModel.power_law(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        eval_multigroup((mat,), [0], np.array([0.0]), LARSEN_GROUPS)


def test_material_validation():
    with pytest.raises(ValueError):
        MaterialModel.power_law(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        MaterialModel.larsen(-1.0, 1.0)
    with pytest.raises(ValueError):
        MaterialModel("qd", 1.0)
    with pytest.raises(ValueError):
        MaterialModel.constant((), 1.0)


def test_heat_capacity_per_element():
    mats = (MaterialModel.power_law(1.0, 0.0, 2.0), MaterialModel.power_law(1.0, 0.0, 5.0))
    np.testing.assert_array_equal(heat_capacity(mats, [1, 0, 1]), [5.0, 2.0, 5.0])


def test_single_group_collapses_to_sigma(rng):
    g = GroupStructure.gray()
    sigma = rng.uniform(1, 10, (4, 1))
    T = rng.uniform(1, 100, (4, 2))
    E_g = rng.uniform(0.1, 1, (4, 2, 1))
    for out in (collapse_E(E_g, sigma), collapse_F(T, sigma, g), collapse_P(T, sigma, g)):
        np.testing.assert_allclose(out, np.repeat(sigma, 2, axis=1), rtol=1e-15)


def test_equal_energies_give_arithmetic_mean(rng):
    sigma = rng.uniform(1, 10, (3, 5))
    E_g = np.ones((3, 2, 5))
    np.testing.assert_allclose(collapse_E(E_g, sigma), np.repeat(sigma.mean(axis=1)[:, None], 2, 1),
                               rtol=1e-14)


def test_uniform_sigma_invariant(rng):
    sigma = np.full((3, 33), 4.5)
    T = rng.uniform(1, 1000, (3, 2))
    np.testing.assert_allclose(collapse_F(T, sigma, LARSEN_GROUPS), 4.5, rtol=1e-13)
    np.testing.assert_allclose(collapse_P(T, sigma, LARSEN_GROUPS), 4.5, rtol=1e-13)


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_sigma_P_emission_identity(seed, G):
    rng = np.random.default_rng(seed)
    g = open_groups(rng, G)
    ne = 5
    T = rng.uniform(0.5, 2e3, (ne, 2))
    sigma = 10 ** rng.uniform(-2, 8, (ne, G))
    lhs = collapse_P(T, sigma, g) * planck_total(T)
    rhs = np.einsum("eng,eg->en", group_emission(T, g), sigma)
    assert np.max(np.abs(lhs - rhs) / rhs) < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_sigma_E_cancellation_identity(seed, G):
    rng = np.random.default_rng(seed)
    ne = 5
    E_g = 10 ** rng.uniform(-5, 5, (ne, 2, G))
    sigma = 10 ** rng.uniform(-2, 8, (ne, G))
    lhs = collapse_E(E_g, sigma) * E_g.sum(axis=-1)
    rhs = np.einsum("eng,eg->en", E_g, sigma)
    assert np.max(np.abs(lhs - rhs) / rhs) < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 10))
def test_convex_combination_bounds(seed, G):
    rng = np.random.default_rng(seed)
    g = open_groups(rng, G)
    sigma = 10 ** rng.uniform(-1, 6, (4, G))
    T = rng.uniform(1, 2e3, (4, 2))
    E_g = rng.uniform(0, 1, (4, 2, G))
    lo = sigma.min(axis=1)[:, None] * (1 - 1e-13)
    hi = sigma.max(axis=1)[:, None] * (1 + 1e-13)
    for out in (collapse_E(E_g, sigma, T, g), collapse_F(T, sigma, g), collapse_P(T, sigma, g)):
        assert np.all((out >= lo) & (out <= hi))


def test_cold_nodes_fall_back_to_planck_weights():
    sigma = np.array([[1.0, 3.0]])
    g = GroupStructure((0.0, 100.0, np.inf))
    T = np.array([[50.0, 50.0]])
    E_g = np.array([[[0.0, 0.0], [1.0, 1.0]]])
    out = collapse_E(E_g, sigma, T, g)
    assert out[0, 1] == 2.0
    assert out[0, 0] == pytest.approx(collapse_P(T, sigma, g)[0, 0], rel=1e-14)


def test_tilde_values():
    assert tilde(2.0, 0.1) == pytest.approx(2.0 + 1.0 / (C_LIGHT * 0.1), rel=1e-15)
    assert tilde(2.0, 0.1) == pytest.approx(2.333564095, rel=1e-9)
    assert tilde(0.0, 1.0) == pytest.approx(1.0 / C_LIGHT)
    assert tilde(3.0, 1e300) == pytest.approx(3.0, rel=1e-15)
    with pytest.raises(ValueError):
        tilde(1.0, 0.0)
    f = GrayOpacityFields(np.ones((2, 2)), 2 * np.ones((2, 2)), np.ones((2, 2)))
    sE, sF = f.tilded(1.0)
    np.testing.assert_allclose(sF - sE, 1.0)
