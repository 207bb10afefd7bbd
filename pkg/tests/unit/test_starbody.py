import math

import numpy as np
import pytest

from santalo import BoxTooSmall, GridFormatError, Theorem
from santalo.grid import Box, integrate
from santalo.instances import random_star_radial
from santalo.starbody import (
    BallConstants,
    StarBody,
    am_gm_margin,
    angular_grid,
    centroid,
    gauge_eval,
    load_body,
    phi_of_body,
    polar_body,
    recenter_body,
    save_body,
    verify_cn_identity,
    verify_lutwak,
    volume,
    )

# seeded random stars of the Lutwak and c_n suites
STAR_SEEDS = 50
CN_STAR_SEEDS = 20


def ellipse(a=2.0, b=0.5):
    return StarBody.from_radial(
        2, lambda u: 1 / np.sqrt((u[:, 0] / a) ** 2 + (u[:, 1] / b) ** 2))


def random_star(seed):
    return StarBody.from_radial(2, random_star_radial(2, seed), seed=seed)


def disc(radius=1.0):
    return StarBody.from_radial(2, lambda u: np.full(len(u), radius))


def square(half_width=1.0):
    return StarBody.from_radial(2, lambda u: half_width / np.max(np.abs(u), axis=1))


def shifted_disc(center):
    center = np.asarray(center)

    def radial(u):
        along = u @ center
        return along + np.sqrt(1 - center @ center + along ** 2)

    return StarBody.from_radial(2, radial)


@pytest.mark.parametrize(('dim', 'total'), [(2, 2 * math.pi), (3, 4 * math.pi)])
def test_angular_weights(dim, total):
    grid = angular_grid(dim)
    assert grid.weights.sum() == pytest.approx(total, rel=1e-3)
    assert np.linalg.norm(grid.directions, axis=1) == pytest.approx(np.ones(grid.size))


def test_angular_grid_unsupported_dimension():
    with pytest.raises(ValueError, match='dimension 2 and 3'):
        angular_grid(4)


def test_body_rejects_bad_radii():
    grid = angular_grid(2, (8,))
    with pytest.raises(ValueError, match='positive'):
        StarBody(grid=grid, rho=[1.0] * 7 + [0.0])
    with pytest.raises(ValueError, match='Expected 8 radii'):
        StarBody(grid=grid, rho=[1.0] * 5)


def test_pole_rows_averaged():
    body = StarBody.from_radial(3, lambda u: 1 + 0.1 * u[:, 0], counts=(9, 16))
    rows = body.rho.reshape(9, 16)
    assert np.all(rows[0] == rows[1].mean())
    assert np.all(rows[-1] == rows[-2].mean())


@pytest.mark.parametrize('dim', [2, 3])
def test_ball_constants(dim):
    constants = BallConstants.for_dimension(dim)
    assert constants.v_n == pytest.approx([math.pi, 4 * math.pi / 3][dim - 2])
    assert constants.c_n * constants.v_n == pytest.approx((2 * math.pi) ** (dim / 2))


def test_volume_and_centroid():
    assert volume(disc()) == pytest.approx(math.pi, rel=1e-9)
    assert volume(square()) == pytest.approx(4.0, rel=1e-4)
    assert volume(StarBody.from_radial(3, lambda u: np.ones(len(u)))) == pytest.approx(
        4 * math.pi / 3, rel=1e-3)
    assert centroid(shifted_disc([0.3, 0.0])) == pytest.approx([0.3, 0.0], abs=1e-4)


def test_gauge():
    body = disc(2.0)
    assert gauge_eval(body, [1.0, 0.0]) == pytest.approx(0.5)
    assert gauge_eval(body, [0.0, 0.0]) == 0.0
    assert gauge_eval(square(), np.array([[2.0, 1.0], [0.5, -0.5]])) == pytest.approx(
        [2.0, 0.5], rel=1e-4)


def test_polar_body_of_square():
    polar = polar_body(square())
    # the polar of the square is the cross-polytope |x| + |y| <= 1
    assert volume(polar) == pytest.approx(2.0, rel=1e-4)
    assert gauge_eval(polar, [0.5, 0.5]) == pytest.approx(1.0, rel=1e-6)


def test_polar_body_of_ellipse():
    body = ellipse()
    polar = polar_body(body)
    assert volume(body) * volume(polar) == pytest.approx(math.pi ** 2, rel=1e-3)
    # semi-axes (2, 1/2) turn into (1/2, 2)
    u = body.grid.directions
    assert polar.rho == pytest.approx(1 / np.sqrt((2 * u[:, 0]) ** 2 + (0.5 * u[:, 1]) ** 2),
                                      rel=1e-3)


def test_polar_body_reverses_order():
    assert np.all(disc().rho <= square().rho)
    assert np.all(polar_body(square()).rho <= polar_body(disc()).rho + 1e-12)


def test_polar_body_scaling():
    body = random_star(4)
    assert polar_body(body.scaled(2.0)).rho == pytest.approx(polar_body(body).rho / 2, rel=1e-12)


def test_polar_body_triple_polar():
    body = random_star(5)
    polar = polar_body(body)
    double = polar_body(polar)
    assert np.all(double.rho >= body.rho * (1 - 1e-12))
    assert polar_body(double).rho == pytest.approx(polar.rho, rel=1e-9)


def test_recenter_body():
    body = shifted_disc([0.3, 0.0])
    recentered = recenter_body(body)
    assert np.linalg.norm(centroid(recentered)) <= 1e-4
    assert recentered.rho == pytest.approx(np.ones(recentered.grid.size), abs=1e-3)
    assert volume(recentered) == pytest.approx(math.pi, rel=1e-3)


def test_recenter_centered_body_is_noop():
    body = disc()
    assert recenter_body(body) is body


def test_phi_box_too_small():
    with pytest.raises(BoxTooSmall):
        phi_of_body(disc(), Box.around(0.0, 2.0, 41, 2))


def test_phi_of_disc():
    assert integrate(phi_of_body(disc())) == pytest.approx(2 * math.pi, rel=1e-6)


@pytest.mark.parametrize(
    'body',
    [disc(), square(), ellipse(), *[random_star(seed) for seed in range(1, CN_STAR_SEEDS + 1)]],
    ids=['disc', 'square', 'ellipse', *[f'star-{s}' for s in range(1, CN_STAR_SEEDS + 1)]])
def test_cn_identity(body):
    report = verify_cn_identity(body)
    assert report.theorem is Theorem.CN_IDENTITY
    assert report.passed
    assert abs(report.margin) <= 1e-2 * report.bound


def test_lutwak_disc_is_equality():
    direct, functional = verify_lutwak(disc())
    assert direct.theorem is Theorem.COROLLARY
    assert direct.passed and functional.passed
    assert direct.product == pytest.approx(math.pi ** 2, rel=1e-5)
    assert functional.product == pytest.approx(4 * math.pi ** 2, rel=1e-3)
    assert direct.grid_meta['route'] == 'direct'
    assert functional.grid_meta['route'] == 'functional'
    assert direct.grid_meta['gauge_margin'] <= 1e-6
    assert direct.grid_meta['am_gm_margin'] <= 0.0
    assert direct.flags == []


def test_lutwak_square():
    direct, functional = verify_lutwak(square())
    assert direct.product == pytest.approx(8.0, rel=1e-3)
    assert direct.passed and functional.passed
    assert functional.product == pytest.approx(
        8.0 * BallConstants.for_dimension(2).c_n ** 2, rel=1e-2)


def test_lutwak_recenters():
    direct, _ = verify_lutwak(shifted_disc([0.3, 0.0]))
    assert direct.grid_meta['recentered_from'] == pytest.approx([0.3, 0.0], abs=1e-4)
    assert direct.product == pytest.approx(math.pi ** 2, rel=1e-2)


@pytest.mark.parametrize('seed', range(1, STAR_SEEDS + 1))
def test_lutwak_random_star(seed):
    direct, functional = verify_lutwak(random_star(seed))
    assert direct.passed
    assert functional.passed
    assert direct.grid_meta['seed'] == seed
    assert direct.grid_meta['am_gm_margin'] <= 1e-6
    assert 'am-gm' not in direct.flags


def test_am_gm_margin():
    assert am_gm_margin(np.array([2.0]), np.array([1.0])) == pytest.approx(-0.5)
    assert am_gm_margin(np.array([1.0, 2.0]), np.array([1.0, 0.0])) == 0.0


def test_lutwak_ball_3d():
    ball = StarBody.from_radial(3, lambda u: np.ones(len(u)), counts=(49, 96))
    direct, functional = verify_lutwak(ball)
    assert direct.product == pytest.approx((4 * math.pi / 3) ** 2, rel=1e-2)
    assert direct.passed and functional.passed


def test_body_file(tmp_path):
    body = StarBody.from_radial(2, random_star_radial(2, 7), counts=(64,), seed=7)
    path = tmp_path / 'star.json'
    save_body(body, path)
    loaded = load_body(path)
    assert loaded.seed == 7
    assert loaded.grid.counts == (64,)
    assert np.array_equal(loaded.rho, body.rho)


def test_body_file_invalid(tmp_path):
    path = tmp_path / 'star.json'
    path.write_text('{"dim": 2}')
    with pytest.raises(GridFormatError, match='Invalid body file'):
        load_body(path)
    with pytest.raises(GridFormatError):
        load_body(tmp_path / 'missing.json')
