import math
from unittest import mock

import numpy as np
import pytest

from santalo import EmptySupport, TransformMethod
from santalo.instances import InstanceSpec, build_function
from santalo.grid import Box, GridFunction, integrate
from santalo.polar import (
    covering_polar,
    duality_margin,
    kink_nodes,
    legendre_1d,
    legendre_nd,
    lower_hull,
    polar_function,
    polar_maximality_check,
    truncated_faces,
    )

# seeded potentials compared between the two transform implementations
POTENTIAL_SEEDS_1D = 200
POTENTIAL_SEEDS_2D = 50
# seeded log-concave mixtures the polar identities are checked on
PROPERTY_SEEDS_1D = 20
PROPERTY_SEEDS_2D = 4


def gaussian(box, a=1.0):
    return GridFunction.sample(box, lambda x: -a * np.sum(x ** 2, axis=1) / 2)


def indicator(box, radius=1.0):
    return GridFunction.sample(
        box, lambda x: np.where(np.all(np.abs(x) <= radius + 1e-9, axis=1), 0.0, -np.inf))


@pytest.fixture
def gaussian_1d():
    return gaussian(Box(lower=-8, upper=8, counts=1601))


def test_lower_hull():
    y = np.array([0.0, 1.0, 2.0, 3.0])
    u = np.array([0.0, 1.0, 0.5, 3.0])
    assert lower_hull(y, u).tolist() == [0, 2, 3]
    # collinear points are dropped
    assert lower_hull(y, 2 * y).tolist() == [0, 3]


def test_legendre_1d_quadratic():
    y = np.linspace(-8, 8, 1601)
    x = np.linspace(-4, 4, 81)
    # the conjugate of y^2 / 2 is x^2 / 2, up to h^2 / 8 between nodes
    assert legendre_1d(y, y ** 2 / 2, x) == pytest.approx(x ** 2 / 2, abs=2e-5)


def test_legendre_1d_empty_support():
    with pytest.raises(EmptySupport):
        legendre_1d(np.arange(3.0), np.full(3, np.inf), np.arange(3.0))


@pytest.mark.parametrize('seed', range(POTENTIAL_SEEDS_1D))
def test_fast_matches_brute_1d(seed):
    rng = np.random.default_rng(seed)
    y = np.sort(rng.uniform(-3, 3, 200))
    y = np.unique(y)
    u = rng.normal(size=len(y)) + y ** 2
    u[rng.integers(len(y), size=10)] = np.inf
    x = np.linspace(-10, 10, 301)

    fast = legendre_1d(y, u, x, TransformMethod.FAST_LLT)
    brute = legendre_1d(y, u, x, TransformMethod.BRUTE_FORCE)
    assert np.max(np.abs(fast - brute)) <= 1e-10


@pytest.mark.parametrize('seed', range(POTENTIAL_SEEDS_2D))
def test_fast_matches_brute_2d(seed):
    rng = np.random.default_rng(seed)
    in_box = Box(lower=[-2, -1], upper=[2, 3], counts=[21, 17])
    out_box = Box(lower=[-5, -5], upper=[5, 5], counts=[15, 19])
    x = in_box.nodes()
    u = (np.sum(x ** 2, axis=1) + rng.normal(size=len(x))).reshape(in_box.counts)

    fast = legendre_nd(u, in_box, out_box, TransformMethod.FAST_LLT)
    brute = legendre_nd(u, in_box, out_box, TransformMethod.BRUTE_FORCE)
    assert fast.shape == (15, 19)
    assert np.max(np.abs(fast - brute)) <= 1e-10


def test_gaussian_is_self_polar(gaussian_1d):
    polar = polar_function(gaussian_1d).output
    y = polar.box.axis(0)
    inner = np.abs(y) <= 4
    assert polar.logvals[inner] == pytest.approx(-y[inner] ** 2 / 2, abs=2e-5)
    assert integrate(gaussian_1d) * integrate(polar) == pytest.approx(2 * math.pi, rel=1e-3)


def test_indicator_polar():
    f = indicator(Box(lower=-2, upper=2, counts=4001))
    out_box = Box(lower=-60, upper=60, counts=12001)
    polar = polar_function(f, out_box).output
    y = out_box.axis(0)
    assert polar.logvals == pytest.approx(-np.abs(y), abs=1e-9)
    assert integrate(polar) == pytest.approx(2.0, rel=1e-4)


def test_polar_of_zero_function():
    box = Box(lower=-1, upper=1, counts=5)
    with pytest.raises(EmptySupport):
        polar_function(GridFunction(box=box, logvals=[-np.inf] * 5))


def test_polar_2d_scaled_gaussian():
    box = Box.around(0.0, 8.0, 201, 2)
    f = gaussian(box, a=2.0)
    polar = polar_function(f, Box.around(0.0, 8.0 * math.sqrt(2), 201, 2)).output
    assert integrate(f) * integrate(polar) == pytest.approx((2 * math.pi) ** 2, rel=1e-2)


def test_order_reversal():
    box = Box(lower=-8, upper=8, counts=801)
    narrow, wide = gaussian(box, a=2.0), gaussian(box, a=1.0)
    assert np.all(narrow.logvals <= wide.logvals)
    assert np.all(polar_function(narrow).output.logvals
                  >= polar_function(wide).output.logvals - 1e-12)


def test_double_polar_is_extensive(gaussian_1d):
    polar = polar_function(gaussian_1d).output
    double = polar_function(polar, gaussian_1d.box).output
    assert np.all(double.logvals >= gaussian_1d.logvals - 1e-9)
    triple = polar_function(double, polar.box).output
    assert triple.logvals == pytest.approx(polar.logvals, abs=1e-9)


def test_scaling_covariance(gaussian_1d):
    polar = polar_function(gaussian_1d).output
    scaled = polar_function(gaussian_1d.scaled(3.0)).output
    assert scaled.logvals == pytest.approx(polar.logvals - math.log(3.0), abs=1e-12)


def test_duality_margin(gaussian_1d):
    polar = polar_function(gaussian_1d).output
    margin = duality_margin(gaussian_1d, polar)
    assert margin.value <= 1e-9
    assert margin.pairs == 1601 ** 2
    assert not margin.subsampled

    # a dual function larger than the polar violates the premise
    assert duality_margin(gaussian_1d, polar.scaled(1.5)).value == pytest.approx(
        math.log(1.5), abs=1e-9)


def test_duality_margin_subsampled(gaussian_1d):
    polar = polar_function(gaussian_1d).output
    first = duality_margin(gaussian_1d, polar, pair_limit=10000, seed=1)
    second = duality_margin(gaussian_1d, polar, pair_limit=10000, seed=1)
    assert first.subsampled
    assert first.pairs == 10000
    assert first.value == second.value
    assert first.value <= 1e-9


def test_maximality(gaussian_1d):
    polar = polar_function(gaussian_1d).output
    assert polar_maximality_check(gaussian_1d, polar)
    assert not polar_maximality_check(gaussian_1d, polar.scaled(1.01))


def test_kink_nodes(gaussian_1d):
    assert kink_nodes(gaussian_1d) == 0
    assert kink_nodes(indicator(Box(lower=-2, upper=2, counts=41))) == 2
    assert kink_nodes(indicator(Box.around(0.0, 2.0, 41, 2))) == 80


def mixture(seed, dim=1):
    spec = InstanceSpec.parse(f'logconcave_mixture(seed={seed})', dim=dim)
    return build_function(spec).function


@pytest.fixture(params=[
    *[('mixture', seed, 1) for seed in range(PROPERTY_SEEDS_1D)],
    *[('mixture', seed, 2) for seed in range(PROPERTY_SEEDS_2D)],
    ('indicator', 0, 1),
    ], ids=lambda p: f'{p[0]}-{p[1]}-{p[2]}d')
def instance(request):
    kind, seed, dim = request.param
    if kind == 'indicator':
        return indicator(Box(lower=-2, upper=2, counts=401))
    return mixture(seed, dim)


def test_instance_order_reversal(instance):
    inner = np.all(np.abs(instance.box.nodes()) <= 1.5, axis=1).reshape(instance.box.counts)
    smaller = instance.restricted(inner)
    assert np.all(polar_function(smaller).output.logvals
                  >= polar_function(instance).output.logvals - 1e-9)


def test_instance_double_polar(instance):
    polar = polar_function(instance).output
    double = polar_function(polar, instance.box).output
    support = instance.support()
    assert np.all(double.logvals[support] >= instance.logvals[support] - 1e-9)

    triple = polar_function(double, polar.box).output
    assert triple.logvals == pytest.approx(polar.logvals, rel=1e-10, abs=1e-9)


def test_instance_scaling_covariance(instance):
    polar = polar_function(instance).output
    scaled = polar_function(instance.scaled(0.25)).output
    assert scaled.logvals == pytest.approx(polar.logvals - math.log(0.25), rel=1e-12, abs=1e-9)


def test_covering_polar_grows_until_negligible():
    f = indicator(Box(lower=-2, upper=2, counts=401))
    logger = mock.MagicMock()
    result = covering_polar(f, logger=logger)
    assert truncated_faces(result.output) == []
    assert result.output_box.lower[0] < -2
    assert result.output_box.upper[0] > 2
    assert result.output_box.spacing == pytest.approx(f.box.spacing)
    assert integrate(result.output) == pytest.approx(2.0, rel=1e-4)
    logger.warning.assert_not_called()


def test_covering_polar_keeps_mirrored_box(gaussian_1d):
    result = covering_polar(gaussian_1d)
    assert result.output_box == gaussian_1d.box.mirrored()


def test_covering_polar_origin_on_boundary():
    # the polar of e^{-s} on [0, 10] is 1 on y <= 1 and is not integrable
    f = GridFunction.sample(Box(lower=0, upper=10, counts=101), lambda x: -x[:, 0])
    logger = mock.MagicMock()
    result = covering_polar(f, logger=logger)
    logger.warning.assert_called_once()
    assert truncated_faces(result.output) == [(0, 0)]
    assert result.output_box.size <= 16 * f.box.size
