import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from bcechoice.discretize import (ContinuousFamily, GridSpec, density_to_pmf, discretize_pmf,
                                  positive_stable_cdf, positive_stable_pdf, positive_stable_ppf,
                                  positive_stable_rvs, product_grid, product_pmf)
from bcechoice.errors import AllZeroMass, GridTooLarge


def test_normal_three_point_pmf():
    _, pmf = discretize_pmf(ContinuousFamily("normal", (0.0, 1.0)), GridSpec.explicit([-1, 0, 1]))
    phi = stats.norm.pdf([-1.0, 0.0, 1.0])
    np.testing.assert_allclose(pmf, phi / phi.sum(), atol=1e-15)
    # the 4-decimal hand value uses phi rounded to 4 decimals first
    np.testing.assert_allclose(pmf, [0.2741, 0.4518, 0.2741], atol=1e-4)


def test_single_point_grid():
    _, pmf = discretize_pmf(ContinuousFamily("normal", (0.0, 1.0)), GridSpec.explicit([0.3]))
    np.testing.assert_allclose(pmf, [1.0])


def test_all_zero_density_raises():
    with pytest.raises(AllZeroMass):
        density_to_pmf(np.zeros(3))
    with pytest.raises(ValueError):
        density_to_pmf(np.array([1.0, -1.0]))


def test_beta_pole_takes_the_mass():
    fam = ContinuousFamily("beta-truncated", (0.5, 2.0))
    _, pmf = discretize_pmf(fam, GridSpec.values(0.0, 1.0, 5))
    np.testing.assert_allclose(pmf, [1.0, 0, 0, 0, 0])


def test_family_validation():
    with pytest.raises(ValueError):
        ContinuousFamily("normal", (0.0, -1.0))
    with pytest.raises(ValueError):
        ContinuousFamily("beta-truncated", (0.0, 1.0))
    with pytest.raises(ValueError):
        ContinuousFamily("cardell-nested", (1.5,))
    with pytest.raises(ValueError):
        ContinuousFamily("weibull", ())


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec.quantiles(1)
    with pytest.raises(ValueError):
        GridSpec.quantiles(5, 0.0, 0.9)
    with pytest.raises(ValueError):
        GridSpec.values(1.0, 0.0, 3)
    g = GridSpec.quantiles(5)
    assert GridSpec.from_dict(g.to_dict()) == g


def test_quantile_grid_includes_both_ends():
    pts = GridSpec.quantiles(3).grid_points(ContinuousFamily("normal", (0.0, 1.0)))
    np.testing.assert_allclose(pts, stats.norm.ppf([0.001, 0.5, 0.999]))


def test_levy_special_case():
    # index 1/2 is the Levy law with scale 1/2
    for x in (0.1, 0.7, 3.0):
        assert positive_stable_pdf(x, 0.5) == pytest.approx(stats.levy.pdf(x, scale=0.5), rel=1e-6)
        assert positive_stable_cdf(x, 0.5) == pytest.approx(stats.levy.cdf(x, scale=0.5), rel=1e-6)


@given(st.floats(0.2, 0.9), st.floats(0.05, 0.95))
def test_stable_ppf_inverts_cdf(alpha, q):
    x = positive_stable_ppf(q, alpha)
    assert positive_stable_cdf(x, alpha) == pytest.approx(q, abs=1e-6)


def test_stable_sampler_laplace_transform():
    rng = np.random.default_rng(0)
    draws = positive_stable_rvs(0.6, 200_000, rng)
    for s in (0.5, 1.0, 2.0):
        assert np.mean(np.exp(-s * draws)) == pytest.approx(np.exp(-s ** 0.6), abs=5e-3)


def test_product_grid_and_pmf():
    sup = product_grid([[0.0, 1.0], [5.0, 6.0, 7.0]])
    assert len(sup) == 6
    np.testing.assert_allclose(sup.values[1], [0.0, 6.0])
    pmf = product_pmf([np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5])])
    np.testing.assert_allclose(pmf[:3], [0.1, 0.15, 0.25])
    with pytest.raises(GridTooLarge):
        product_grid([np.arange(100)] * 4, cap=1000)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=8, unique=True))
def test_pmf_invariants(points):
    _, pmf = discretize_pmf(ContinuousFamily("normal", (0.0, 1.0)), GridSpec.explicit(sorted(points)))
    assert np.all(pmf >= 0)
    assert abs(pmf.sum() - 1.0) <= 1e-12


@given(st.integers(2, 9))
def test_symmetric_density_symmetric_pmf(count):
    pts = np.linspace(-2, 2, count)
    _, pmf = discretize_pmf(ContinuousFamily("normal", (0.0, 1.0)), GridSpec.explicit(pts))
    np.testing.assert_allclose(pmf, pmf[::-1], atol=1e-14)
