""" Sampled functions on rectangular grids, stored in log-space """

from __future__ import annotations

import logging
import math
import struct
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Callable, Optional, Union

try:
    from attrs import Factory, evolve, field, frozen
except ModuleNotFoundError:
    from attr import Factory, evolve, field, frozen

import numpy as np
import numpy.typing as npt
from scipy.special import logsumexp

from . import FloatArray, GridFormatError, NotBracketed, Unbounded, ZeroMass

GRID_MAGIC = b'GRIDFN1'
GRID_HEADER = struct.Struct('<7sI')
GRID_AXIS = struct.Struct('<ddI')

MAX_DIM = 3
MAX_NODES = 2**24

# nodes within this relative distance of a hyperplane lie on it
TIE_TOLERANCE = 1e-9
QUANTILE_TOLERANCE = 1e-4
LOG_FLOAT_MAX = math.log(sys.float_info.max)

VectorLike = Union[float, Sequence[float], FloatArray]


def _as_floats(value: Any) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(value, dtype=np.float64)).ravel())


def _as_counts(value: Any) -> tuple[int, ...]:
    return tuple(int(v) for v in np.atleast_1d(np.asarray(value)).ravel())


def as_vector(value: VectorLike, dim: int) -> FloatArray:
    """ Broadcast a scalar or sequence to a float vector with ``dim`` components """

    vector = np.atleast_1d(np.asarray(value, dtype=np.float64)).ravel()
    if vector.size == 1 and dim > 1:
        vector = np.full(dim, vector[0])
    if vector.size != dim:
        raise ValueError(f"Expected a vector with {dim} components, got {vector.size}")
    return vector


@frozen
class Box:
    """
    Rectangular sampling domain.

    Node coordinates along axis ``i`` are ``linspace(lower[i], upper[i], counts[i]) + offset[i]``.
    Translations only move ``offset``, so the spacing and the quadrature weights of a translated
    box are bit-identical to the original ones.
    """

    lower: tuple[float, ...] = field(converter=_as_floats)
    upper: tuple[float, ...] = field(converter=_as_floats)
    counts: tuple[int, ...] = field(converter=_as_counts)
    offset: tuple[float, ...] = field(
        default=Factory(lambda self: (0.0,) * len(self.lower), takes_self=True),
        converter=_as_floats)

    def __attrs_post_init__(self) -> None:
        dim = len(self.lower)
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"Box dimension must be between 1 and {MAX_DIM}, got {dim}")
        if not len(self.upper) == len(self.counts) == len(self.offset) == dim:
            raise ValueError(
                f"Box fields disagree on the dimension: lower={self.lower}, "
                f"upper={self.upper}, counts={self.counts}, offset={self.offset}")
        for axis in range(dim):
            if not self.lower[axis] < self.upper[axis]:
                raise ValueError(
                    f"Box axis {axis} is empty: [{self.lower[axis]}, {self.upper[axis]}]")
            if self.counts[axis] < 2:
                raise ValueError(f"Box axis {axis} needs at least 2 samples")
        if math.prod(self.counts) > MAX_NODES:
            raise ValueError(f"Box with counts {self.counts} exceeds {MAX_NODES} nodes")

    @classmethod
    def around(cls,
               center: VectorLike,
               half_width: VectorLike,
               counts: Union[int, Sequence[int]],
               dim: int) -> Box:
        """ Box centered at ``center`` with the given half widths """

        center_ = as_vector(center, dim)
        half_ = as_vector(half_width, dim)
        counts_ = as_vector(counts, dim).astype(int)
        return cls(lower=center_ - half_, upper=center_ + half_, counts=counts_)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @property
    def spacing(self) -> FloatArray:
        return ((np.asarray(self.upper) - np.asarray(self.lower))
                / (np.asarray(self.counts) - 1))

    @property
    def lower_corner(self) -> FloatArray:
        return np.asarray(self.lower) + np.asarray(self.offset)

    @property
    def upper_corner(self) -> FloatArray:
        return np.asarray(self.upper) + np.asarray(self.offset)

    def axis(self, i: int) -> FloatArray:
        return np.linspace(self.lower[i], self.upper[i], self.counts[i]) + self.offset[i]

    def axes(self) -> list[FloatArray]:
        return [self.axis(i) for i in range(self.dim)]

    def meshgrid(self) -> list[FloatArray]:
        """ Sparse coordinate arrays broadcasting to the grid shape """

        return list(np.meshgrid(*self.axes(), indexing='ij', sparse=True))

    def nodes(self) -> FloatArray:
        """ All node coordinates, shape (size, dim), row-major """

        full = np.meshgrid(*self.axes(), indexing='ij')
        return np.stack([c.ravel() for c in full], axis=-1)

    def corners(self) -> FloatArray:
        lower, upper = self.lower_corner, self.upper_corner
        return np.array([
            [upper[i] if (k >> i) & 1 else lower[i] for i in range(self.dim)]
            for k in range(2 ** self.dim)])

    def log_weights(self) -> FloatArray:
        """ Logarithms of the tensor trapezoid weights, shaped like the grid """

        total = np.zeros(self.counts)
        for i, h in enumerate(self.spacing):
            w = np.full(self.counts[i], math.log(h))
            w[0] = w[-1] = math.log(h / 2)
            shape = [1] * self.dim
            shape[i] = self.counts[i]
            total = total + w.reshape(shape)
        return total

    def index_coordinates(self, points: FloatArray) -> FloatArray:
        """ Fractional grid indices of ``points`` (shape (..., dim)), axis first """

        scaled = (points - self.lower_corner) / self.spacing
        return np.moveaxis(scaled, -1, 0)

    def translated(self, z: VectorLike) -> Box:
        return evolve(self, offset=np.asarray(self.offset) - as_vector(z, self.dim))

    def mirrored(self) -> Box:
        """ The box reflected through the origin, with the same counts """

        return Box(lower=-self.upper_corner, upper=-self.lower_corner, counts=self.counts)

    def with_counts(self, counts: Union[int, Sequence[int]]) -> Box:
        return evolve(self, counts=as_vector(counts, self.dim).astype(int))

    def to_dict(self) -> dict[str, Any]:
        return {
            'lower': list(self.lower),
            'upper': list(self.upper),
            'counts': list(self.counts),
            'offset': list(self.offset),
            }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Box:
        return cls(**data)


def _as_logvals(value: Any) -> FloatArray:
    if (isinstance(value, np.ndarray)
            and value.dtype == np.float64
            and not value.flags.writeable):
        return value
    array = np.array(value, dtype=np.float64)
    array.flags.writeable = False
    return array


@frozen(eq=False)
class GridFunction:
    """
    A non-negative function sampled on the nodes of a box.

    ``logvals`` holds ``log f`` at every node, shaped like ``box.counts``;
    negative infinity encodes ``f = 0``. The array is read-only and shared
    between a function and its translates.
    """

    box: Box
    logvals: FloatArray = field(converter=_as_logvals)

    def __attrs_post_init__(self) -> None:
        if self.logvals.size != self.box.size:
            raise ValueError(
                f"Expected {self.box.size} samples for counts {self.box.counts}, "
                f"got {self.logvals.size}")
        if self.logvals.shape != self.box.counts:
            object.__setattr__(self, 'logvals', self.logvals.reshape(self.box.counts))
        if np.isnan(self.logvals).any() or np.isposinf(self.logvals).any():
            raise ValueError("Log-values must be finite reals or negative infinity")

    @classmethod
    def sample(cls,
               box: Box,
               log_density: Callable[[FloatArray], FloatArray]) -> GridFunction:
        """ Sample ``log_density`` (mapping (N, dim) points to N log-values) on ``box`` """

        with np.errstate(divide='ignore'):
            logvals = np.asarray(log_density(box.nodes()), dtype=np.float64)
        return cls(box=box, logvals=logvals.reshape(box.counts))

    @property
    def dim(self) -> int:
        return self.box.dim

    def values(self) -> FloatArray:
        return np.exp(self.logvals)

    def support(self) -> FloatArray:
        return np.isfinite(self.logvals)

    def with_logvals(self, logvals: FloatArray) -> GridFunction:
        return GridFunction(box=self.box, logvals=logvals)

    def scaled(self, factor: float) -> GridFunction:
        """ ``factor * f`` """

        return self.with_logvals(self.logvals + math.log(factor))

    def restricted(self, mask: FloatArray) -> GridFunction:
        """ ``f`` multiplied by the indicator of ``mask`` """

        return self.with_logvals(np.where(mask, self.logvals, -np.inf))

    def meta(self) -> dict[str, Any]:
        return self.box.to_dict()


@frozen
class Hyperplane:
    """ H = {x : <x, normal> = offset}, H+ is the side where <x, normal> >= offset """

    normal: tuple[float, ...] = field(converter=_as_floats)
    offset: float = field(default=0.0, converter=float)

    def __attrs_post_init__(self) -> None:
        norm = float(np.linalg.norm(self.normal))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"Hyperplane normal must be a unit vector, |normal| = {norm}")

    @classmethod
    def along(cls, direction: VectorLike, offset: float = 0.0) -> Hyperplane:
        """ Hyperplane whose normal is ``direction`` scaled to unit length """

        vector = np.atleast_1d(np.asarray(direction, dtype=np.float64))
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise ValueError("Hyperplane direction must be non-zero")
        return cls(normal=vector / norm, offset=offset)

    @property
    def dim(self) -> int:
        return len(self.normal)

    @property
    def vector(self) -> FloatArray:
        return np.asarray(self.normal)

    def projection(self, box: Box) -> FloatArray:
        """ <x, normal> at every node of ``box`` """

        return inner_product_field(box, self.vector)

    def shifted(self, z: VectorLike) -> Hyperplane:
        """ The hyperplane seen from the origin ``z``, i.e. H - z """

        return evolve(self, offset=self.offset - float(np.dot(as_vector(z, self.dim),
                                                             self.vector)))

    def to_dict(self) -> dict[str, Any]:
        return {'normal': list(self.normal), 'offset': self.offset}


@frozen(eq=False)
class HalfspaceStats:
    lambda_: float
    b_plus: Optional[FloatArray]
    b_minus: Optional[FloatArray]
    log_mass: float


def inner_product_field(box: Box, z: VectorLike) -> FloatArray:
    """ <x, z> at every node of ``box``, shaped like the grid """

    vector = as_vector(z, box.dim)
    total = np.zeros(box.counts)
    for zi, coords in zip(vector, box.meshgrid()):
        total = total + zi * coords
    return total


def _logsum(terms: FloatArray) -> float:
    if not np.isfinite(terms).any():
        return -math.inf
    return float(logsumexp(terms))


def _log_terms(f: GridFunction) -> FloatArray:
    return f.logvals + f.box.log_weights()


def _tie_tolerance(projection: FloatArray) -> float:
    return TIE_TOLERANCE * max(1.0, float(np.max(np.abs(projection))))


def log_integrate(f: GridFunction) -> float:
    """ Logarithm of the trapezoid integral of ``f``, negative infinity for the zero function """

    return _logsum(_log_terms(f))


def integrate(f: GridFunction) -> float:
    """ Trapezoid integral of ``exp(logvals)`` over the box, accumulated in log-space """

    log_mass = log_integrate(f)
    if log_mass > LOG_FLOAT_MAX:
        raise Unbounded(
            f"Integral of the function on {f.box} overflows, log mass {log_mass:.6g}")
    return 0.0 if log_mass == -math.inf else math.exp(log_mass)


def _weighted_mean(box: Box, weights: FloatArray) -> FloatArray:
    total = float(weights.sum())
    result = np.empty(box.dim)
    for i, axis in enumerate(box.axes()):
        others = tuple(j for j in range(box.dim) if j != i)
        marginal = weights.sum(axis=others) if others else weights
        result[i] = float(marginal @ axis) / total
    return result


def barycenter(f: GridFunction) -> FloatArray:
    """ Center of mass of ``f`` under the trapezoid rule """

    terms = _log_terms(f)
    log_mass = _logsum(terms)
    if log_mass == -math.inf:
        raise ZeroMass(f"Cannot compute the barycenter of a function with zero mass on {f.box}")
    return _weighted_mean(f.box, np.exp(terms - log_mass))


def translate(f: GridFunction, z: VectorLike) -> GridFunction:
    """
    Return ``f_z(x) = f(z + x)``.

    The samples are shared, only the box moves by ``-z``.
    """

    shift = as_vector(z, f.dim)
    if not np.any(shift):
        return f
    return GridFunction(box=f.box.translated(shift), logvals=f.logvals)


def halfspace_stats(f: GridFunction, hyperplane: Hyperplane) -> HalfspaceStats:
    """
    Mass fraction and conditional barycenters of ``f`` on both sides of ``hyperplane``.

    Nodes lying on the hyperplane are counted in H+.
    """

    terms = _log_terms(f)
    log_mass = _logsum(terms)
    if log_mass == -math.inf:
        raise ZeroMass(f"Function on {f.box} has zero mass")

    projection = hyperplane.projection(f.box)
    upper = projection >= hyperplane.offset - _tie_tolerance(projection)

    def _side(mask: npt.NDArray[np.bool_]) -> tuple[float, Optional[FloatArray]]:
        side_terms = np.where(mask, terms, -np.inf)
        log_side = _logsum(side_terms)
        if log_side == -math.inf:
            return log_side, None
        return log_side, _weighted_mean(f.box, np.exp(side_terms - log_side))

    log_plus, b_plus = _side(upper)
    log_minus, b_minus = _side(~upper)
    lambda_ = math.exp(log_plus - np.logaddexp(log_plus, log_minus))

    return HalfspaceStats(lambda_=lambda_, b_plus=b_plus, b_minus=b_minus, log_mass=log_mass)


def find_quantile_offset(f: GridFunction,
                         normal: VectorLike,
                         lambda_target: float,
                         logger: Optional[logging.Logger] = None) -> float:
    """
    Locate the offset of the hyperplane with the given normal cutting off ``lambda_target``
    of the mass into H+.

    The node-based mass fraction is a step function of the offset, constant between two
    consecutive projection levels. The cut is searched by bisection over the sorted levels and
    the returned offset is the midpoint between the two levels around it, so no node lies on
    the hyperplane and the node fraction is a midpoint-rule approximation of the continuous one.

    The attainable fractions are the cumulative level masses, so the achieved fraction can miss
    the target by up to half the mass of the level at the cut. A miss above
    ``QUANTILE_TOLERANCE`` is logged as a warning; a finer grid along ``normal`` narrows it.
    """

    logger = logger or logging.getLogger()

    if not 0.0 < lambda_target < 1.0:
        raise NotBracketed(f"Mass fraction {lambda_target} is outside (0, 1)")

    hyperplane = Hyperplane.along(as_vector(normal, f.dim))
    terms = _log_terms(f).ravel()
    log_mass = _logsum(terms)
    if log_mass == -math.inf:
        raise ZeroMass(f"Function on {f.box} has zero mass")

    projection = hyperplane.projection(f.box).ravel()
    tolerance = _tie_tolerance(projection)
    support = np.isfinite(terms)
    projection = projection[support]
    weights = np.exp(terms[support] - log_mass)

    order = np.argsort(projection, kind='stable')
    projection, weights = projection[order], weights[order]

    # levels closer than the tie tolerance are one level
    starts = np.concatenate(([True], np.diff(projection) > tolerance))
    levels = projection[starts]
    if len(levels) < 2:
        raise NotBracketed(
            f"Support of the function on {f.box} is flat along {hyperplane.normal}")
    level_mass = np.bincount(np.cumsum(starts) - 1, weights=weights)
    upper_mass = np.cumsum(level_mass[::-1])[::-1]
    upper_mass = upper_mass / upper_mass[0]

    # a cut below level j leaves upper_mass[j] in H+, for j = 1 .. len(levels) - 1
    reached = int(np.searchsorted(-upper_mass, -lambda_target, side='right'))
    candidates = [j for j in (reached - 1, reached) if 1 <= j < len(levels)]
    cut = min(candidates, key=lambda j: abs(upper_mass[j] - lambda_target))
    error = abs(upper_mass[cut] - lambda_target)

    outside = lambda_target > upper_mass[1] or lambda_target < upper_mass[-1]
    if outside and error > QUANTILE_TOLERANCE:
        raise NotBracketed(
            f"Mass fraction {lambda_target} along {hyperplane.normal} is not attainable on "
            f"{f.box}, attainable range is [{upper_mass[-1]:.6g}, {upper_mass[1]:.6g}]")

    offset = float((levels[cut - 1] + levels[cut]) / 2)
    if error > QUANTILE_TOLERANCE:
        logger.warning(
            f'quantile {lambda_target} along {hyperplane.normal} is resolved to node fraction '
            f'{upper_mass[cut]:.6g} on {f.box}, refine the grid along the normal')
    logger.debug(
        f'quantile {lambda_target} along {hyperplane.normal}: offset {offset:.6g}, '
        f'node fraction {upper_mass[cut]:.6g}')
    return offset


def save_grid_function(f: GridFunction, path: Path) -> None:
    """ Write ``f`` in the GRIDFN1 format, the box offset is folded into the bounds """

    box = f.box
    chunks = [GRID_HEADER.pack(GRID_MAGIC, box.dim)]
    for lower, upper, count in zip(box.lower_corner, box.upper_corner, box.counts):
        chunks.append(GRID_AXIS.pack(float(lower), float(upper), count))
    chunks.append(np.ascontiguousarray(f.logvals, dtype='<f8').tobytes())
    Path(path).write_bytes(b''.join(chunks))


def load_grid_function(path: Path) -> GridFunction:
    """ Read a GRIDFN1 file """

    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise GridFormatError(f"Cannot read grid file {path}: {exc}") from exc
    if len(data) < GRID_HEADER.size:
        raise GridFormatError(f"Grid file {path} is truncated")
    magic, dim = GRID_HEADER.unpack_from(data, 0)
    if magic != GRID_MAGIC:
        raise GridFormatError(f"Grid file {path} does not start with {GRID_MAGIC!r}")
    if not 1 <= dim <= MAX_DIM:
        raise GridFormatError(f"Grid file {path} declares unsupported dimension {dim}")

    position = GRID_HEADER.size
    lower, upper, counts = [], [], []
    for _ in range(dim):
        if len(data) < position + GRID_AXIS.size:
            raise GridFormatError(f"Grid file {path} is truncated in the header")
        lo, up, count = GRID_AXIS.unpack_from(data, position)
        lower.append(lo)
        upper.append(up)
        counts.append(count)
        position += GRID_AXIS.size

    expected = math.prod(counts) * 8
    if len(data) - position != expected:
        raise GridFormatError(
            f"Grid file {path} carries {len(data) - position} payload bytes, expected {expected}")

    try:
        box = Box(lower=lower, upper=upper, counts=counts)
        logvals = np.frombuffer(data, dtype='<f8', offset=position).astype(np.float64)
        return GridFunction(box=box, logvals=logvals.reshape(box.counts))
    except ValueError as exc:
        raise GridFormatError(f"Grid file {path} is invalid: {exc}") from exc
