"""
Star-shaped bodies described by radial functions on angular grids.

A body is ``S = {r theta : 0 <= r <= rho(theta)}``, its gauge is ``N_S(x) = |x| / rho(x / |x|)``
and ``phi_S = exp(-N_S^2 / 2)`` links its volume to the functional inequality through
``integral(phi_S) = c_n vol(S)``.
"""

from __future__ import annotations

import functools
import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Optional

try:
    from attrs import evolve, field, frozen
except ModuleNotFoundError:
    from attr import evolve, field, frozen

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import ConvexHull
from scipy.special import gamma

from . import (
    BODY_TOLERANCE,
    MARGIN_SEED,
    BoxTooSmall,
    CentroidNotInterior,
    FloatArray,
    GridFormatError,
    Theorem,
    Unbounded,
    VerificationReport,
    gaussian_bound,
    )
from .grid import Box, GridFunction, barycenter, integrate
from .polar import edge_fraction

ANGLES_2D = 2048
# latitude rows include both poles
ANGLES_3D = (97, 192)

RECENTER_ITERATIONS = 5
RECENTER_TOLERANCE = 1e-6
RAY_SCAN_STEPS = 64
RAY_BISECTIONS = 50

PHI_HALF_WIDTH = 6.5
PHI_COUNTS = {2: 401, 3: 121}
PHI_MIN_GAUGE = 5.0

GAUGE_PAIRS = 10**5
GAUGE_TOLERANCE = 1e-6
PHI_BARYCENTER_TOLERANCE = 1e-3
CHUNK_ENTRIES = 2**22


@frozen(eq=False)
class AngularGrid:
    """
    Directions and quadrature weights on the unit circle or sphere.

    In 2-D ``counts = (M,)`` angles ``2 pi k / M``. In 3-D ``counts = (n_lat, n_lon)``: latitudes
    from ``-pi/2`` to ``pi/2`` inclusive, longitudes ``2 pi k / n_lon``, directions in row-major
    order with latitude first.
    """

    dim: int
    counts: tuple[int, ...]
    directions: FloatArray
    weights: FloatArray

    def __attrs_post_init__(self) -> None:
        # shared through the lru_cache of angular_grid
        self.directions.flags.writeable = False
        self.weights.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def longitudes(self) -> FloatArray:
        n_lon = self.counts[-1]
        return 2 * math.pi * np.arange(n_lon) / n_lon

    @property
    def latitudes(self) -> FloatArray:
        return np.linspace(-math.pi / 2, math.pi / 2, self.counts[0])


@functools.lru_cache(maxsize=8)
def angular_grid(dim: int, counts: Optional[tuple[int, ...]] = None) -> AngularGrid:
    if dim == 2:
        (m,) = counts or (ANGLES_2D,)
        theta = 2 * math.pi * np.arange(m) / m
        directions = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(m, 2 * math.pi / m)
        return AngularGrid(dim=2, counts=(m,), directions=directions, weights=weights)

    if dim == 3:
        n_lat, n_lon = counts or ANGLES_3D
        lat = np.linspace(-math.pi / 2, math.pi / 2, n_lat)
        lon = 2 * math.pi * np.arange(n_lon) / n_lon
        lat_grid, lon_grid = np.meshgrid(lat, lon, indexing='ij')
        directions = np.stack([
            np.cos(lat_grid) * np.cos(lon_grid),
            np.cos(lat_grid) * np.sin(lon_grid),
            np.sin(lat_grid),
            ], axis=-1).reshape(-1, 3)

        lat_weights = np.full(n_lat, math.pi / (n_lat - 1))
        lat_weights[0] = lat_weights[-1] = lat_weights[0] / 2
        weights = np.outer(lat_weights * np.cos(lat), np.full(n_lon, 2 * math.pi / n_lon))
        return AngularGrid(
            dim=3, counts=(n_lat, n_lon), directions=directions, weights=weights.ravel())

    raise ValueError(f"Star bodies are supported in dimension 2 and 3, got {dim}")


def _as_radii(value: Any) -> FloatArray:
    array = np.array(value, dtype=np.float64).ravel()
    array.flags.writeable = False
    return array


@frozen(eq=False)
class StarBody:
    """ A body star-shaped about the origin, given by its radial function on ``grid`` """

    grid: AngularGrid
    rho: FloatArray = field(converter=_as_radii)
    seed: Optional[int] = None

    def __attrs_post_init__(self) -> None:
        if self.rho.size != self.grid.size:
            raise ValueError(
                f"Expected {self.grid.size} radii for counts {self.grid.counts}, "
                f"got {self.rho.size}")
        if not np.all(np.isfinite(self.rho)) or np.any(self.rho <= 0):
            raise ValueError("Radial function must be positive and finite")

    @classmethod
    def from_values(cls,
                    grid: AngularGrid,
                    rho: FloatArray,
                    seed: Optional[int] = None) -> StarBody:
        """ Body from radii at the grid directions, pole rows averaged over the adjacent ring """

        rho = np.array(rho, dtype=np.float64).ravel()
        if grid.dim == 3:
            rows = rho.reshape(grid.counts)
            rows[0] = rows[1].mean()
            rows[-1] = rows[-2].mean()
            rho = rows.ravel()
        return cls(grid=grid, rho=rho, seed=seed)

    @classmethod
    def from_radial(cls,
                    dim: int,
                    radial: Callable[[FloatArray], FloatArray],
                    counts: Optional[tuple[int, ...]] = None,
                    seed: Optional[int] = None) -> StarBody:
        """ Sample ``radial`` (mapping (K, dim) unit directions to K radii) """

        grid = angular_grid(dim, counts)
        return cls.from_values(grid, radial(grid.directions), seed)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def boundary_points(self) -> FloatArray:
        return self.grid.directions * self.rho[:, None]

    def scaled(self, factor: float) -> StarBody:
        return StarBody(grid=self.grid, rho=self.rho * factor, seed=self.seed)

    def to_dict(self) -> dict[str, Any]:
        return {
            'dim': self.dim,
            'counts': list(self.grid.counts),
            'rho': self.rho.tolist(),
            'seed': self.seed,
            }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StarBody:
        grid = angular_grid(int(data['dim']), tuple(int(c) for c in data['counts']))
        return cls(grid=grid, rho=data['rho'], seed=data.get('seed'))


def save_body(body: StarBody, path: Path) -> None:
    path.write_text(json.dumps(body.to_dict()) + '\n')


def load_body(path: Path) -> StarBody:
    try:
        return StarBody.from_dict(json.loads(path.read_text()))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise GridFormatError(f"Invalid body file {path}: {exc}") from exc


@frozen
class BallConstants:
    """ Volume ``v_n`` of the Euclidean unit ball and ``c_n = (2 pi)^{n/2} / v_n`` """

    n: int
    v_n: float
    c_n: float

    @classmethod
    def for_dimension(cls, n: int) -> BallConstants:
        v_n = float(math.pi ** (n / 2) / gamma(n / 2 + 1))
        return cls(n=n, v_n=v_n, c_n=(2 * math.pi) ** (n / 2) / v_n)


def _radius_at(body: StarBody, directions: FloatArray) -> FloatArray:
    """ ``rho`` at arbitrary unit directions by linear interpolation in angle """

    if body.dim == 2:
        angles = np.mod(np.arctan2(directions[..., 1], directions[..., 0]), 2 * math.pi)
        grid_angles = body.grid.longitudes
        return np.interp(angles, grid_angles, body.rho, period=2 * math.pi)

    grid = body.grid
    rows = body.rho.reshape(grid.counts)
    # wrap the first longitude around to 2 pi
    wrapped = np.concatenate([rows, rows[:, :1]], axis=1)
    longitudes = np.append(grid.longitudes, 2 * math.pi)
    interpolator = RegularGridInterpolator((grid.latitudes, longitudes), wrapped)
    lat = np.arcsin(np.clip(directions[..., 2], -1.0, 1.0))
    lon = np.mod(np.arctan2(directions[..., 1], directions[..., 0]), 2 * math.pi)
    return interpolator(np.stack([lat, lon], axis=-1))


def gauge_eval(body: StarBody, x: Any) -> Any:
    """ ``N_S(x) = |x| / rho(x / |x|)`` for one point or an array of points (..., dim) """

    points = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(points, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    radii = _radius_at(body, points / np.expand_dims(safe, -1))
    gauge = np.where(norms > 0, norms / radii, 0.0)
    return float(gauge) if gauge.ndim == 0 else gauge


def polar_body(body: StarBody) -> StarBody:
    """
    ``S°`` on the same angular grid, ``rho°(eta) = 1 / h_S(eta)``.

    The support function is the maximum over the boundary points of the convex hull, which
    underestimates it between grid directions.
    """

    points = body.boundary_points()
    vertices = points[ConvexHull(points).vertices]
    directions = body.grid.directions

    support = np.empty(len(directions))
    step = max(1, CHUNK_ENTRIES // len(vertices))
    for start in range(0, len(directions), step):
        support[start:start + step] = np.max(directions[start:start + step] @ vertices.T, axis=1)

    if np.any(support <= 0):
        raise Unbounded("Support function is not positive, the origin is not interior")
    return StarBody.from_values(body.grid, 1 / support)


def volume(body: StarBody) -> float:
    """ ``(1/n) integral rho^n`` over the unit sphere """

    return float(body.grid.weights @ body.rho ** body.dim) / body.dim


def centroid(body: StarBody) -> FloatArray:
    n = body.dim
    moment = (body.grid.weights * body.rho ** (n + 1)) @ body.grid.directions / (n + 1)
    return np.asarray(moment / volume(body), dtype=np.float64)


def _boundary_radii(body: StarBody, origin: FloatArray) -> FloatArray:
    """
    Distance from ``origin`` to the boundary of ``body`` along every grid direction.

    A coarse scan finds the first step outside the body, then bisection refines it.
    """

    directions = body.grid.directions
    reach = 2 * float(body.rho.max()) + float(np.linalg.norm(origin))
    steps = np.linspace(0.0, reach, RAY_SCAN_STEPS + 1)

    inside = np.ones(len(directions), dtype=bool)
    low = np.zeros(len(directions))
    high = np.full(len(directions), reach)
    for r in steps[1:]:
        outside = gauge_eval(body, origin + r * directions) >= 1
        crossed = inside & outside
        high[crossed] = r
        inside &= ~outside
        low[inside] = r
        if not inside.any():
            break

    for _ in range(RAY_BISECTIONS):
        middle = (low + high) / 2
        outside = gauge_eval(body, origin + middle[:, None] * directions) >= 1
        high = np.where(outside, middle, high)
        low = np.where(outside, low, middle)
    return (low + high) / 2


def recenter_body(body: StarBody, logger: Optional[logging.Logger] = None) -> StarBody:
    """
    Translate ``body`` so that its centroid is the origin and resample the radial function
    about the new origin.
    """

    logger = logger or logging.getLogger()
    scale = float(body.rho.max())
    if np.linalg.norm(centroid(body)) <= 1e-9 * scale:
        return body

    shift = np.zeros(body.dim)
    current = body
    for iteration in range(RECENTER_ITERATIONS):
        shift = shift + centroid(current)
        if gauge_eval(body, shift) >= 1:
            raise CentroidNotInterior(
                f"Centroid {shift.tolist()} lies outside the body")
        current = StarBody.from_values(body.grid, _boundary_radii(body, shift), body.seed)
        residual = float(np.linalg.norm(centroid(current)))
        logger.debug(f'recentering pass {iteration}: shift={shift.tolist()} residual={residual}')
        if residual <= RECENTER_TOLERANCE * scale:
            return current

    logger.warning(
        f'recentering did not converge in {RECENTER_ITERATIONS} passes, residual {residual:.3g}')
    return current


def phi_of_body(body: StarBody, box: Optional[Box] = None) -> GridFunction:
    """ ``exp(-N_S(x)^2 / 2)`` sampled on ``box`` """

    if box is None:
        box = Box.around(0.0, PHI_HALF_WIDTH * float(body.rho.max()),
                         PHI_COUNTS[body.dim], body.dim)

    gauge = gauge_eval(body, box.nodes()).reshape(box.counts)
    lowest = math.inf
    for axis in range(box.dim):
        for index in (0, -1):
            lowest = min(lowest, float(np.min(np.take(gauge, index, axis=axis))))
    if lowest < PHI_MIN_GAUGE:
        raise BoxTooSmall(
            f"Gauge reaches only {lowest:.3g} on the faces of {box}, "
            f"at least {PHI_MIN_GAUGE} is needed")
    return GridFunction(box=box, logvals=-gauge ** 2 / 2)


def verify_cn_identity(body: StarBody,
                       box: Optional[Box] = None,
                       *,
                       tolerance: float = BODY_TOLERANCE,
                       logger: Optional[logging.Logger] = None) -> VerificationReport:
    """ Check ``integral(phi_S) = c_n vol(S)`` """

    logger = logger or logging.getLogger()
    constants = BallConstants.for_dimension(body.dim)
    phi = phi_of_body(body, box)
    body_volume = volume(body)
    report = VerificationReport.identity(
        Theorem.CN_IDENTITY,
        integrate(phi),
        constants.c_n * body_volume,
        tolerance,
        grid_meta={'volume': body_volume, 'c_n': constants.c_n, 'box': phi.box.to_dict(),
                   'counts': list(body.grid.counts), 'seed': body.seed})
    logger.info(report.describe())
    return report


def am_gm_margin(gauge_x: FloatArray, gauge_y: FloatArray) -> float:
    """ Largest ``N_S(x) N_{S°}(y) - (N_S(x)^2 + N_{S°}(y)^2) / 2`` over the pairs, at most 0 """

    return float(np.max(gauge_x * gauge_y - (gauge_x ** 2 + gauge_y ** 2) / 2))


def verify_lutwak(body: StarBody,
                  *,
                  tolerance: float = BODY_TOLERANCE,
                  pairs: int = GAUGE_PAIRS,
                  seed: int = MARGIN_SEED,
                  logger: Optional[logging.Logger] = None) -> list[VerificationReport]:
    """
    Check ``vol(S) vol(S°) <= v_n^2`` for the recentered body, directly and through
    ``integral(phi_S) integral(phi_{S°}) <= (2 pi)^n``.
    """

    logger = logger or logging.getLogger()
    original_centroid = centroid(body)
    body = recenter_body(body, logger)
    polar = polar_body(body)
    constants = BallConstants.for_dimension(body.dim)

    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(pairs, body.dim))
    y = rng.uniform(-1.0, 1.0, size=(pairs, body.dim))
    gauge_x, gauge_y = gauge_eval(body, x), gauge_eval(polar, y)
    scale = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
    inner = np.einsum('ij,ij->i', x, y)
    gauge_margin = float(np.max((inner - gauge_x * gauge_y) / scale))
    am_gm = am_gm_margin(gauge_x, gauge_y)

    phi_body, phi_polar = phi_of_body(body), phi_of_body(polar)
    phi_center = barycenter(phi_body)

    flags = []
    if gauge_margin > GAUGE_TOLERANCE:
        flags.append('gauge-duality')
    if am_gm > GAUGE_TOLERANCE:
        flags.append('am-gm')
    if np.max(np.abs(phi_center)) > PHI_BARYCENTER_TOLERANCE:
        flags.append('barycenter')
    for name, phi in (('phi', phi_body), ('phi-polar', phi_polar)):
        if edge_fraction(phi) > GAUGE_TOLERANCE:
            flags.append(f'truncation:{name}')
    for flag in flags:
        logger.warning(f'{Theorem.COROLLARY}: {flag}')

    body_volume, polar_volume = volume(body), volume(polar)
    meta = {
        'volume': body_volume,
        'polar_volume': polar_volume,
        'recentered_from': original_centroid.tolist(),
        'counts': list(body.grid.counts),
        'seed': body.seed,
        'gauge_margin': gauge_margin,
        'am_gm_margin': am_gm,
        'phi_barycenter': phi_center.tolist(),
        }
    direct = VerificationReport.check(
        Theorem.COROLLARY,
        body_volume * polar_volume,
        constants.v_n ** 2,
        tolerance,
        grid_meta={**meta, 'route': 'direct'},
        flags=flags)
    functional = VerificationReport.check(
        Theorem.COROLLARY,
        integrate(phi_body) * integrate(phi_polar),
        gaussian_bound(body.dim),
        tolerance,
        grid_meta={**meta, 'route': 'functional', 'box': phi_body.box.to_dict(),
                   'polar_box': phi_polar.box.to_dict()},
        flags=flags)
    if am_gm > GAUGE_TOLERANCE:
        direct = evolve(direct, passed=False)
        functional = evolve(functional, passed=False)
    logger.info(direct.describe())
    logger.info(functional.describe())
    return [direct, functional]
