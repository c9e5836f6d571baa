import math

import numpy as np
import pytest

from src.distributions import risk
from src.distributions.families import FamilyKind, ParametricFamily, RandomSource, asset_theta, two_point_values
from src.errors import DomainError, InputError


class TestParametricFamily:
    """Construction and validation of distribution families."""

    def test_rejects_nonpositive_scale(self):
        """Test that a normal family with sigma <= 0 is rejected."""
        with pytest.raises(DomainError):
            ParametricFamily.normal(0.0, 0.0)

    def test_rejects_probabilities_off_simplex(self):
        """Test that finite-discrete probabilities must sum to one."""
        with pytest.raises(DomainError):
            ParametricFamily.finite_discrete([1.0, 2.0], [0.5, 0.6])

    def test_from_name_lists_known_families(self):
        """Test that unknown family names raise a domain error."""
        assert FamilyKind.from_name("Gamma") is FamilyKind.GAMMA
        with pytest.raises(DomainError):
            FamilyKind.from_name("weibull")

    def test_two_point_asset_is_standardized(self):
        """Test that the two-point asset has mean 0 and variance 1."""
        theta = asset_theta(1, 20)
        assert theta == pytest.approx(0.5238095, abs=1e-6)
        up, down = two_point_values(theta)
        assert up == pytest.approx(0.9534, abs=1e-4)
        assert down == pytest.approx(-1.0488, abs=1e-4)
        assert theta * up + (1 - theta) * down == pytest.approx(0.0, abs=1e-12)
        assert theta * up**2 + (1 - theta) * down**2 == pytest.approx(1.0, abs=1e-12)

    def test_project_multivariate_support(self):
        """Test that projecting a 2-d discrete family gives the distribution of v'xi."""
        fam = ParametricFamily.finite_discrete([[1.0, 0.0], [0.0, 2.0]], [0.25, 0.75])
        projected = fam.project([1.0, 1.0])
        assert risk.mean(projected) == pytest.approx(0.25 + 1.5)


class TestQuantileAndVar:
    """Quantiles and upper/lower VaR."""

    def test_normal_quantile(self):
        """Test the standard normal 95% quantile."""
        assert risk.quantile(ParametricFamily.normal(0, 1), 0.95) == pytest.approx(1.6449, abs=1e-4)

    def test_exponential_median(self):
        """Test that the exponential median is ln 2."""
        assert risk.quantile(ParametricFamily.exponential(1.0), 0.5) == pytest.approx(math.log(2), abs=1e-12)

    def test_poisson_low_quantile_is_zero(self):
        """Test that P(0) >= p gives a zero quantile for Poisson(3.05)."""
        assert risk.quantile(ParametricFamily.poisson(3.05), 0.0282) == 0.0

    def test_quantile_rejects_boundary_levels(self):
        """Test that p = 0 and p = 1 are domain errors."""
        fam = ParametricFamily.normal(0, 1)
        for p in (0.0, 1.0):
            with pytest.raises(DomainError):
                risk.quantile(fam, p)

    def test_normal_var(self):
        """Test VaR of the standard normal at eps = 0.05."""
        assert risk.var(ParametricFamily.normal(0, 1), 0.05) == pytest.approx(1.6449, abs=1e-4)

    def test_exponential_var(self):
        """Test the closed form -m ln(eps)."""
        assert risk.var(ParametricFamily.exponential(2.0), 0.05) == pytest.approx(5.9915, abs=1e-4)

    def test_discrete_var_takes_upper_atom(self):
        """Test VaR of the first benchmark asset as a finite-discrete family."""
        fam = ParametricFamily.finite_discrete([-1.0488, 0.9534], [0.4762, 0.5238])
        assert risk.var(fam, 0.1) == pytest.approx(0.9534)

    def test_discrete_quantile_at_and_just_past_atoms(self):
        """Test the smallest t with CDF(t) >= p on and just above the cumulative masses 0.3 and 0.7."""
        fam = ParametricFamily.finite_discrete([0.0, 1.0, 2.0], [0.3, 0.4, 0.3])
        levels = np.array([0.3, 0.7, 0.3 + 1e-13, 0.7 + 1e-13])
        assert risk.quantiles(fam, levels).tolist() == [0.0, 1.0, 1.0, 2.0]

    def test_discrete_lower_var_just_below_an_atom(self):
        """Test the largest s with P(xi < s) <= eps when eps sits on or just under the mass 0.3."""
        fam = ParametricFamily.finite_discrete([0.0, 1.0, 2.0], [0.3, 0.4, 0.3])
        assert risk.lower_var(fam, 0.3) == 1.0
        assert risk.lower_var(fam, 0.3 - 1e-13) == 0.0

    def test_lower_var_mirrors_upper(self):
        """Test that the lower VaR of xi equals minus the upper VaR of -xi."""
        fam = ParametricFamily.normal(1.0, 2.0)
        mirrored = ParametricFamily.normal(-1.0, 2.0)
        assert risk.lower_var(fam, 0.1) == pytest.approx(-risk.var(mirrored, 0.1))

    def test_lower_var_of_poisson_at_small_level_is_zero(self):
        """Test that the largest s with P(t < s) <= level is 0 when P(0) exceeds the level."""
        assert risk.lower_var(ParametricFamily.poisson(3.05), 0.0282) == 0.0


class TestCvar:
    """Upper and lower CVaR, including the Gamma closed form."""

    def test_uniform_discrete_worst_quarter(self):
        """Test that CVaR at 0.25 of the uniform law on {1,2,3,4} is 4."""
        fam = ParametricFamily.finite_discrete([1, 2, 3, 4], [0.25] * 4)
        assert risk.cvar(fam, 0.25) == pytest.approx(4.0)

    def test_normal_half_tail(self):
        """Test that CVaR at 0.5 of N(0,1) is phi(0)/0.5."""
        assert risk.cvar(ParametricFamily.normal(0, 1), 0.5) == pytest.approx(0.7979, abs=1e-4)

    def test_gamma_shape_one_matches_exponential(self):
        """Test that Gamma(1, 1) CVaR at 0.1 is 1 - ln 0.1."""
        assert risk.gamma_cvar(1.0, 1.0, 0.1) == pytest.approx(3.3026, abs=1e-4)
        assert risk.cvar(ParametricFamily.gamma(1.0, 1.0), 0.1) == pytest.approx(3.3026, abs=1e-4)
        assert risk.cvar(ParametricFamily.exponential(1.0), 0.1) == pytest.approx(3.3026, abs=1e-4)

    def test_gamma_cvar_full_mass_is_mean(self):
        """Test that CVaR at eps = 1 is a*s."""
        assert risk.gamma_cvar(2.5, 3.0, 1.0) == pytest.approx(7.5)

    def test_gamma_cvar_matches_monte_carlo(self):
        """Test the Gamma(2, 1) worst-half mean against a Monte Carlo tail mean."""
        draws = np.sort(RandomSource(7).generator().gamma(2.0, 1.0, 2_000_000))
        oracle = draws[draws.size // 2 :].mean()
        assert risk.gamma_cvar(2.0, 1.0, 0.5) == pytest.approx(oracle, abs=5e-3)

    def test_cvar_rejects_zero_level(self):
        """Test that eps = 0 is a domain error."""
        with pytest.raises(DomainError):
            risk.cvar(ParametricFamily.normal(0, 1), 0.0)
        with pytest.raises(DomainError):
            risk.gamma_cvar(0.0, 1.0, 0.1)

    def test_cvar_dominates_var(self):
        """Test that CVaR >= VaR and lower CVaR <= lower VaR."""
        for fam in (ParametricFamily.normal(0, 1), ParametricFamily.exponential(2.0), ParametricFamily.gamma(3.0, 0.5)):
            assert risk.cvar(fam, 0.1) >= risk.var(fam, 0.1)
            assert risk.lower_cvar(fam, 0.1) <= risk.lower_var(fam, 0.1)

    def test_lower_cvar_of_discrete_family(self):
        """Test that the lowest 25% mass of {1,2,3,4} has mean 1."""
        fam = ParametricFamily.finite_discrete([1, 2, 3, 4], [0.25] * 4)
        assert risk.lower_cvar(fam, 0.25) == pytest.approx(1.0)
        assert risk.lower_cvar(fam, 0.5) == pytest.approx(1.5)


class TestSampling:
    """Sampling from families with reproducible streams."""

    def test_two_point_moments(self):
        """Test the empirical mean and variance of a benchmark asset."""
        draws = risk.sample(ParametricFamily.two_point_asset(0.5238), 1_000_000, RandomSource(1))
        assert draws.mean() == pytest.approx(0.0, abs=0.005)
        assert draws.var() == pytest.approx(1.0, abs=0.01)

    def test_poisson_mean(self):
        """Test the empirical Poisson mean."""
        draws = risk.sample(ParametricFamily.poisson(3.05), 1_000_000, RandomSource(2))
        assert draws.mean() == pytest.approx(3.05, abs=0.01)

    def test_singleton_is_constant(self):
        """Test that a one-point family always returns its atom."""
        draws = risk.sample(ParametricFamily.finite_discrete([4.2], [1.0]), 100, RandomSource(3))
        assert np.all(draws == 4.2)

    def test_same_source_reproduces_draws(self):
        """Test that identical (seed, stream) pairs give identical draws."""
        fam = ParametricFamily.normal(0, 1)
        first = risk.sample(fam, 50, RandomSource(5, 2))
        second = risk.sample(fam, 50, RandomSource(5, 2))
        other = risk.sample(fam, 50, RandomSource(5, 3))
        assert np.array_equal(first, second)
        assert not np.array_equal(first, other)

    def test_rejects_invalid_count(self):
        """Test that non-positive sample counts are input errors."""
        with pytest.raises(InputError):
            risk.sample(ParametricFamily.normal(0, 1), 0, RandomSource(0))
