import json

import numpy as np
import pytest

from src.bayes.credible import BoxRegion, MarginalInterval, credible_box_dirichlet, credible_ellipsoid
from src.bayes.posterior import DirichletPosterior, dirichlet_mode_info
from src.config import ExperimentConfig, ExperimentKind
from src.copulas.regimes import DependenceRegime, RegimeTag
from src.distributions import risk
from src.distributions.families import FamilyKind, ParametricFamily, RandomSource, two_point_values
from src.errors import EmptySetError, InfeasibleRegionError, InputError
from src.harness.models import AssetModel
from src.harness.repeats import asset_box, regime_from_name
from src.uncertainty_sets.base import Tail
from src.uncertainty_sets.box import CoordinateBox, box_from_intervals, build_coordinate_box
from src.uncertainty_sets.discrete import build_discrete, point_region, support_discrete
from src.uncertainty_sets.geometry import (
    box_hausdorff,
    clip_to_support,
    hausdorff_distance,
    support_function,
    unit_directions,
)
from tests.conftest import THREE_POINT_SUPPORT

ASSET_SUPPORT = [-1.0488, 0.9534]
ASSET_THETA = [0.4762, 0.5238]


def widened_asset_region() -> BoxRegion:
    """θ₂ allowed up to 0.55 around the first benchmark asset."""
    return BoxRegion([0.45, 0.5238], [0.4762, 0.55], 0.1, ASSET_THETA, on_simplex=True)


def three_point_region(alpha: float = 0.19) -> BoxRegion:
    counts = np.array([30.0, 40.0, 30.0])
    return credible_box_dirichlet(DirichletPosterior(counts + 1.0), alpha)


def _geometry_config(**fields) -> ExperimentConfig:
    return ExperimentConfig(experiment=ExperimentKind.GEOMETRY, **fields)


def normal_interval() -> MarginalInterval:
    return MarginalInterval(
        FamilyKind.NORMAL, ("mu", "sigma"), {}, np.array([0.0, 1.0]), np.array([-0.1, 0.9]), np.array([0.1, 1.1]), 0.1
    )


class TestDiscreteSets:
    """The CVaR polytope over a credible region of the simplex."""

    def test_singleton_region_at_full_level_is_the_mean(self):
        """Test that eps = 1 collapses the set to the mean of the support."""
        polytope = build_discrete(point_region(ASSET_THETA), ASSET_SUPPORT, 1.0)
        mean = float(np.dot(ASSET_THETA, ASSET_SUPPORT))
        assert support_discrete(polytope, [1.0]) == pytest.approx(mean, abs=1e-9)
        assert -support_discrete(polytope, [-1.0]) == pytest.approx(mean, abs=1e-9)

    def test_singleton_region_at_small_level_is_the_hull(self):
        """Test that inactive caps give the convex hull of the support."""
        polytope = build_discrete(point_region(ASSET_THETA), ASSET_SUPPORT, 0.4)
        assert support_discrete(polytope, [1.0]) == pytest.approx(0.9534, abs=1e-9)
        assert support_discrete(polytope, [-1.0]) == pytest.approx(1.0488, abs=1e-9)

    def test_widened_region_at_level_six_tenths(self):
        """Test q = (1 - 0.55/0.6, 0.55/0.6) and the value 0.7866."""
        polytope = build_discrete(widened_asset_region(), ASSET_SUPPORT, 0.6)
        value, point = polytope.support_point(np.array([1.0]))
        assert value == pytest.approx(0.7866, abs=1e-4)
        assert point[0] == pytest.approx(value, abs=1e-9)

    def test_widened_region_at_level_one_tenth(self):
        """Test that the best support point alone is reachable when the cap is inactive."""
        polytope = build_discrete(widened_asset_region(), ASSET_SUPPORT, 0.1)
        assert support_discrete(polytope, [1.0]) == pytest.approx(0.9534, abs=1e-9)

    def test_support_matches_enumeration(self):
        """Test the LP value against a grid over θ with the greedy inner maximization."""
        region = credible_box_dirichlet(DirichletPosterior(np.array([4.0, 8.0])), 0.19)
        support = [[-1.0], [2.0]]
        eps = 0.6
        polytope = build_discrete(region, support, eps)
        best = -np.inf
        for theta_2 in np.linspace(region.lower[1], region.upper[1], 2001):
            theta_1 = 1.0 - theta_2
            if not region.lower[0] - 1e-12 <= theta_1 <= region.upper[0] + 1e-12:
                continue
            q_2 = min(theta_2 / eps, 1.0)
            best = max(best, -1.0 * (1.0 - q_2) + 2.0 * q_2)
        assert support_discrete(polytope, [1.0]) == pytest.approx(best, abs=1e-3)
        assert support_discrete(polytope, [1.0]) >= best - 1e-9

    def test_region_missing_the_simplex(self):
        """Test that a box region whose lower ends sum past 1 is infeasible."""
        region = BoxRegion([0.6, 0.6], [0.7, 0.7], 0.1, [0.65, 0.65], on_simplex=True)
        with pytest.raises(InfeasibleRegionError):
            build_discrete(region, ASSET_SUPPORT, 0.5)

    def test_region_without_simplex_flag(self):
        """Test that a region not tied to the simplex is an input error."""
        region = BoxRegion([0.4, 0.4], [0.6, 0.6], 0.1, [0.5, 0.5])
        with pytest.raises(InputError):
            build_discrete(region, ASSET_SUPPORT, 0.5)

    def test_midpoints_of_members_are_members(self):
        """Test convexity of the polytope on random member pairs."""
        polytope = build_discrete(three_point_region(), THREE_POINT_SUPPORT, 0.3)
        generator = RandomSource(41).generator()
        directions = unit_directions(2, 30, generator)
        members = [polytope.support_point(v)[1] for v in directions]
        for _ in range(40):
            i, j = generator.integers(0, len(members), size=2)
            weight = generator.uniform()
            assert polytope.contains(weight * members[i] + (1.0 - weight) * members[j], tolerance=1e-7)

    def test_far_point_is_not_a_member(self):
        """Test that a point outside the support hull is rejected."""
        polytope = build_discrete(three_point_region(), THREE_POINT_SUPPORT, 0.3)
        assert not polytope.contains([0.5, 0.5])

    def test_var_dominance_over_the_region(self):
        """Test VaR_eps of v'xi under every sampled θ in the region against the support function."""
        region = three_point_region()
        eps = 0.2
        polytope = build_discrete(region, THREE_POINT_SUPPORT, eps)
        generator = RandomSource(42).generator()
        thetas = [theta for theta in generator.dirichlet([30.0, 40.0, 30.0], 2000) if region.contains(theta)][:200]
        assert len(thetas) > 20
        support = np.asarray(THREE_POINT_SUPPORT)
        for v in unit_directions(2, 100, generator):
            bound = support_function(polytope, v)
            for theta in thetas:
                family = ParametricFamily.finite_discrete(support @ v, theta, normalize=True)
                assert risk.var(family, eps) <= bound + 1e-6

    def test_support_grows_as_level_shrinks(self):
        """Test monotonicity of the support function in eps."""
        region = three_point_region()
        sets = [build_discrete(region, THREE_POINT_SUPPORT, eps) for eps in (0.6, 0.3, 0.1)]
        for v in unit_directions(2, 20, RandomSource(43).generator()):
            values = [support_function(s, v) for s in sets]
            assert values[0] <= values[1] + 1e-9
            assert values[1] <= values[2] + 1e-9

    def test_ellipsoid_region_brackets_the_center(self):
        """Test that the ellipsoid support lies between the center's set and the hull."""
        summary = dirichlet_mode_info(DirichletPosterior(np.array([31.0, 41.0, 31.0])))
        region = credible_ellipsoid(summary, 0.1)
        eps = 0.3
        polytope = build_discrete(region, THREE_POINT_SUPPORT, eps)
        center_set = build_discrete(point_region(summary.mode), THREE_POINT_SUPPORT, eps)
        support = np.asarray(THREE_POINT_SUPPORT)
        for v in unit_directions(2, 6, RandomSource(44).generator()):
            value = support_function(polytope, v)
            assert value >= support_function(center_set, v) - 1e-6
            assert value <= float((support @ v).max()) + 1e-6

    def test_serializes_to_json(self):
        """Test that the set description is JSON-ready."""
        polytope = build_discrete(three_point_region(), THREE_POINT_SUPPORT, 0.3)
        data = json.loads(json.dumps(polytope.to_dict()))
        assert data["kind"] == "discrete_polytope"
        assert data["region"]["shape"] == "box"


class TestCoordinateBoxes:
    """Per-coordinate worst-case risk over marginal credible intervals."""

    def test_normal_independent_interval(self):
        """Test the endpoints mu -+ 0.1 with sigma extremes at z_0.9."""
        box = build_coordinate_box(DependenceRegime.independent(), [normal_interval()], 0.1)
        assert box.lower[0] == pytest.approx(1.0534, abs=1e-4)
        assert box.upper[0] == pytest.approx(1.5097, abs=1e-4)
        assert box.levels[0] == pytest.approx(0.1)

    def test_gamma_point_region_no_assumption(self):
        """Test that the CVaR regime on Gamma(1, 1) gives 3.3026."""
        marginal = MarginalInterval.point(ParametricFamily.gamma(1.0, 1.0))
        box = build_coordinate_box(DependenceRegime.no_assumption(), [marginal], 0.1)
        assert box.lower[0] == pytest.approx(3.3026, abs=1e-4)
        assert box.upper[0] == pytest.approx(3.3026, abs=1e-4)
        assert box.uses_cvar

    def test_lower_tail_of_point_asset(self):
        """Test that the lower tail of a point two-point asset is its down value."""
        marginal = MarginalInterval.point(ParametricFamily.two_point_asset(0.5238))
        box = build_coordinate_box(DependenceRegime.independent(), [marginal], 0.1, tail=Tail.LOWER)
        assert box.lower[0] == pytest.approx(two_point_values(0.5238)[1], abs=1e-12)

    def test_explicit_levels(self):
        """Test per-coordinate levels overriding the regime default."""
        marginals = [MarginalInterval.point(ParametricFamily.exponential(2.0))] * 2
        box = build_coordinate_box(DependenceRegime.independent(), marginals, 0.1, levels=[0.05, 0.1])
        assert box.upper[0] == pytest.approx(-2.0 * np.log(0.05), abs=1e-6)
        assert box.upper[1] == pytest.approx(-2.0 * np.log(0.1), abs=1e-6)

    def test_subset_chain(self):
        """Test independent ⊆ tail-positive(Π) and independent ⊆ no-assumption, coordinatewise."""
        model = AssetModel(dimension=4)
        samples = model.sample(500, RandomSource(45))
        config = _geometry_config(alpha=0.1, eps=0.1)
        boxes = {
            name: asset_box(model, samples, regime_from_name(name, model.dimension), config, Tail.UPPER)
            for name in ("independent", "tail_positive", "no_assumption")
        }
        inner = boxes["independent"]
        for outer in (boxes["tail_positive"], boxes["no_assumption"]):
            assert np.all(outer.lower <= inner.lower + 1e-9)
            assert np.all(outer.upper >= inner.upper - 1e-9)

    def test_tail_positive_independence_matches_independent_level(self):
        """Test that the independence lower copula reproduces the independent level."""
        d = 4
        independent = DependenceRegime.independent().per_coordinate_level(0.1, d)
        assert regime_from_name("tail_positive", d).per_coordinate_level(0.1, d) == pytest.approx(independent, abs=1e-12)

    def test_support_grows_as_level_shrinks(self):
        """Test monotonicity of the box support function in eps."""
        for regime in (DependenceRegime.independent(), DependenceRegime.no_assumption()):
            boxes = [build_coordinate_box(regime, [normal_interval()] * 2, eps) for eps in (0.3, 0.1, 0.02)]
            for v in unit_directions(2, 20, RandomSource(46).generator()):
                values = [support_function(box, v) for box in boxes]
                assert values[0] <= values[1] + 1e-9
                assert values[1] <= values[2] + 1e-9

    def test_var_dominance_on_nonnegative_directions(self):
        """Test VaR_eps of v'xi under independent true assets against the true independent box."""
        model = AssetModel(dimension=3)
        eps = 0.1
        box = build_coordinate_box(DependenceRegime.independent(), model.true_marginals(), eps)
        outcomes = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)])
        values = np.array([two_point_values(theta) for theta in model.thetas])
        points = np.where(outcomes == 1, values[:, 0], values[:, 1])
        probabilities = np.prod(np.where(outcomes == 1, model.thetas, 1.0 - model.thetas), axis=1)
        generator = RandomSource(47).generator()
        for v in np.abs(generator.standard_normal((100, 3))):
            family = ParametricFamily.finite_discrete(points @ v, probabilities, normalize=True)
            assert risk.var(family, eps) <= support_function(box, v) + 1e-6

    def test_rows_and_json(self):
        """Test the CSV rows and JSON description of a box."""
        box = build_coordinate_box(DependenceRegime.independent(), [normal_interval()], 0.1)
        assert box.rows()[0]["coordinate"] == 1
        data = json.loads(json.dumps(box.to_dict()))
        assert data["regime"] == RegimeTag.INDEPENDENT.value
        assert data["functional"] == "var"

    def test_rejects_empty_coordinate(self):
        """Test that lower > upper is an empty-set error."""
        with pytest.raises(EmptySetError):
            CoordinateBox(np.array([1.0]), np.array([0.0]), RegimeTag.INDEPENDENT, np.array([0.1]))

    def test_hausdorff_shrinks_with_sample_size(self):
        """Test that the median distance to the true box is smaller at N = 10^4 than at N = 10^2."""
        model = AssetModel(dimension=2)
        regime = DependenceRegime.independent()
        config = _geometry_config(alpha=0.1, eps=0.1)
        truth = build_coordinate_box(regime, model.true_marginals(), 0.1)
        medians = []
        for n in (100, 10_000):
            distances = [
                box_hausdorff(asset_box(model, model.sample(n, RandomSource(n, run)), regime, config, Tail.UPPER), truth)
                for run in range(25)
            ]
            medians.append(np.median(distances))
        assert medians[1] < medians[0]


class TestGeometry:
    """Support-function dispatch, clipping and distances."""

    def test_zero_direction(self):
        """Test that v = 0 gives 0 for both set kinds."""
        assert support_function(box_from_intervals([(1.0, 2.0), (-1.0, 3.0)]), [0.0, 0.0]) == 0.0
        polytope = build_discrete(point_region(ASSET_THETA), ASSET_SUPPORT, 0.5)
        assert support_function(polytope, [0.0]) == 0.0

    def test_box_mixed_signs(self):
        """Test sum_i max(v_i l_i, v_i u_i)."""
        box = box_from_intervals([(1.0, 2.0), (-1.0, 3.0)])
        assert support_function(box, [2.0, -1.0]) == pytest.approx(4.0 + 1.0)

    def test_positive_homogeneity(self):
        """Test that doubling v doubles the discrete support value."""
        polytope = build_discrete(three_point_region(), THREE_POINT_SUPPORT, 0.3)
        v = np.array([0.3, -0.7])
        assert support_function(polytope, 2.0 * v) == pytest.approx(2.0 * support_function(polytope, v), abs=1e-9)

    def test_rejects_wrong_dimension(self):
        """Test that a direction of the wrong length is an input error."""
        with pytest.raises(InputError):
            support_function(box_from_intervals([(0.0, 1.0)]), [1.0, 1.0])

    def test_clip_box(self):
        """Test [0, 2] clipped by [1, 3] and a containing clip."""
        box = box_from_intervals([(0.0, 2.0)])
        clipped = clip_to_support(box, [1.0], [3.0])
        assert clipped.lower.tolist() == [1.0]
        assert clipped.upper.tolist() == [2.0]
        unchanged = clip_to_support(box, [-5.0], [5.0])
        assert unchanged.lower.tolist() == [0.0] and unchanged.upper.tolist() == [2.0]

    def test_clip_disjoint_box(self):
        """Test that a disjoint clip is an empty-set error."""
        with pytest.raises(EmptySetError):
            clip_to_support(box_from_intervals([(0.0, 2.0)]), [3.0], [4.0])

    def test_clip_discrete_polytope(self):
        """Test that clipping {-1, 1} mixtures to [0, 1] moves the support at v = -1 from 1 to 0."""
        polytope = build_discrete(point_region([0.5, 0.5]), [-1.0, 1.0], 0.5)
        assert support_function(polytope, [-1.0]) == pytest.approx(1.0, abs=1e-9)
        clipped = clip_to_support(polytope, [0.0], [1.0])
        assert support_function(clipped, [-1.0]) == pytest.approx(0.0, abs=1e-9)
        assert support_function(clipped, [1.0]) == pytest.approx(1.0, abs=1e-9)

    def test_clip_discrete_polytope_to_empty(self):
        """Test that a clip box missing the polytope is an empty-set error."""
        polytope = build_discrete(point_region([0.5, 0.5]), [-1.0, 1.0], 0.5)
        with pytest.raises(EmptySetError):
            clip_to_support(polytope, [2.0], [3.0])

    def test_box_hausdorff_closed_form(self):
        """Test the exact distance between two boxes."""
        first = box_from_intervals([(0.0, 1.0), (0.0, 1.0)])
        second = box_from_intervals([(0.0, 2.0), (0.0, 1.0)])
        assert box_hausdorff(first, second) == pytest.approx(1.0)
        assert hausdorff_distance(first, first) == 0.0

    def test_directional_hausdorff_matches_closed_form(self):
        """Test the support-function distance against the box closed form on one axis shift."""
        first = box_from_intervals([(0.0, 1.0), (0.0, 1.0)])
        second = box_from_intervals([(0.5, 1.5), (0.0, 1.0)])
        directions = unit_directions(2, 0, RandomSource(0))
        assert hausdorff_distance(first, second, directions) == pytest.approx(0.5)
