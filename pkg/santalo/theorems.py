"""
Verifiers of the functional Santalo inequalities.

Every verifier instantiates the dual function as the polar of the (shifted) input, which is
the pointwise-largest function satisfying the duality premise. A bound verified for it holds
for every admissible dual function.
"""

from __future__ import annotations

import logging
import math
from typing import Any, Callable, Optional

try:
    from attrs import evolve, field, frozen
except ModuleNotFoundError:
    from attr import evolve, field, frozen

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import map_coordinates
from scipy.optimize import minimize, minimize_scalar

from . import (
    BARYCENTER_TOLERANCE,
    BOUND_TOLERANCE,
    LEMMA_TOLERANCE,
    MARGIN_SEED,
    PAIR_LIMIT,
    PREMISE_TOLERANCE,
    DegenerateSplit,
    FloatArray,
    InterpolationOutOfBox,
    NoIntersection,
    PremiseViolated,
    SantaloError,
    Theorem,
    TransformMethod,
    Unbounded,
    VerificationReport,
    ZeroMass,
    gaussian_bound,
    split_bound,
    )
from .grid import (
    QUANTILE_TOLERANCE,
    TIE_TOLERANCE,
    Box,
    GridFunction,
    Hyperplane,
    VectorLike,
    as_vector,
    barycenter,
    find_quantile_offset,
    halfspace_stats,
    inner_product_field,
    integrate,
    log_integrate,
    translate,
    )
from .polar import (
    EDGE_TOLERANCE,
    covering_polar,
    duality_margin,
    edge_fraction,
    kink_nodes,
    polar_function,
    )

# lambda closer than this to 0 or 1 is a degenerate split
SPLIT_TOLERANCE = 1e-12
# a ray integral must have decayed below this fraction of the peak before leaving the box
RAY_TAIL_TOLERANCE = 1e-6
REDUCED_MARGIN_TOLERANCE = 1e-2
REDUCTION_MASS_TOLERANCE = 1e-2
REDUCTION_BARYCENTER_TOLERANCE = 1e-3
LINEAR_TOLERANCE = 1e-9
SUM_IDENTITY_TOLERANCE = 1e-12
SEARCH_XATOL = 1e-4
SEARCH_PASSES = 20
RAY_CHUNK_ENTRIES = 2**21


def _meta(f: GridFunction, g: Optional[GridFunction] = None, **extra: Any) -> dict[str, Any]:
    meta: dict[str, Any] = {'box': f.box.to_dict(), 'counts': list(f.box.counts)}
    if g is not None:
        meta['polar_box'] = g.box.to_dict()
    meta.update(extra)
    return meta


def grid_flags(f: GridFunction, g: Optional[GridFunction] = None) -> list[str]:
    """ Kink and truncation warnings of an input function and its polar """

    flags = []
    kinks = kink_nodes(f)
    if kinks:
        flags.append(f'kink-nodes:{kinks}')
    for name, function in (('input', f), ('polar', g)):
        if function is not None and edge_fraction(function) > EDGE_TOLERANCE:
            flags.append(f'truncation:{name}')
    return flags


def sampled_polar(f: GridFunction,
                  out_box: Optional[Box],
                  method: TransformMethod,
                  logger: Optional[logging.Logger] = None) -> GridFunction:
    """ Polar on ``out_box``, or on a mirrored box grown until the polar is not truncated """

    if out_box is None:
        return covering_polar(f, method, logger).output
    return polar_function(f, out_box, method).output


def _log_flags(logger: logging.Logger, report: VerificationReport) -> None:
    logger.info(report.describe())
    for flag in report.flags:
        logger.warning(f'{report.theorem}: {flag}')


def santalo_product(f: GridFunction,
                    out_box: Optional[Box] = None,
                    method: TransformMethod = TransformMethod.FAST_LLT) -> float:
    """ The functional volume product of ``f`` and its polar """

    mass = integrate(f)
    if mass == 0.0:
        raise ZeroMass(f"Function on {f.box} has zero mass")
    return mass * integrate(sampled_polar(f, out_box, method))


def tilt(g: GridFunction, z: VectorLike) -> GridFunction:
    """ ``g(y) e^{<y, z>}`` """

    return g.with_logvals(g.logvals + inner_product_field(g.box, z))


def tilted_integral(g: GridFunction, z: VectorLike) -> float:
    """ The integral of ``g(y) e^{<y, z>}`` """

    return integrate(tilt(g, z))


def _recentered_polar(f: GridFunction,
                      out_box: Optional[Box],
                      method: TransformMethod,
                      logger: Optional[logging.Logger] = None,
                      ) -> tuple[float, FloatArray, GridFunction]:
    mass = integrate(f)
    if mass == 0.0:
        raise ZeroMass(f"Function on {f.box} has zero mass")
    center = barycenter(f)
    polar = sampled_polar(translate(f, center), out_box, method, logger)
    return mass, center, polar


def product_map(f: GridFunction,
                out_box: Optional[Box] = None,
                method: TransformMethod = TransformMethod.FAST_LLT,
                ) -> Callable[[VectorLike], float]:
    """
    The map ``z -> integral(f) * integral((f_z)°)``.

    A single transform serves every ``z`` through ``(f_z)°(y) = e^{<z - b, y>} (f_b)°(y)``,
    where ``b`` is the barycenter of ``f`` and ``out_box`` is the polar box of ``f_b``.
    """

    mass, center, polar = _recentered_polar(f, out_box, method)

    def product(z: VectorLike) -> float:
        try:
            return mass * tilted_integral(polar, as_vector(z, f.dim) - center)
        except Unbounded:
            return math.inf

    return product


def verify_thm2(f: GridFunction,
                out_box: Optional[Box] = None,
                *,
                recenter: bool = True,
                tolerance: float = BOUND_TOLERANCE,
                method: TransformMethod = TransformMethod.FAST_LLT,
                logger: Optional[logging.Logger] = None) -> VerificationReport:
    """
    Check ``integral(f) integral(f°) <= (2 pi)^n`` for ``f`` with barycenter at the origin.

    With ``recenter`` the function is first translated to its barycenter, otherwise an
    off-center function is rejected.
    """

    logger = logger or logging.getLogger()

    center = barycenter(f)
    if recenter:
        f = translate(f, center)
    elif np.max(np.abs(center)) > BARYCENTER_TOLERANCE:
        raise PremiseViolated(f"Barycenter {center.tolist()} is not at the origin")

    polar = sampled_polar(f, out_box, method, logger)
    product = integrate(f) * integrate(polar)
    report = VerificationReport.check(
        Theorem.THM2,
        product,
        gaussian_bound(f.dim),
        tolerance,
        grid_meta=_meta(f, polar, barycenter=center.tolist()),
        flags=grid_flags(f, polar))
    _log_flags(logger, report)
    return report


@frozen(eq=False)
class CenteredPolar:
    """ A translation ``z`` of ``f`` whose polar ``(f_z)°`` has its barycenter at the origin """

    z: FloatArray
    # (f_z)°, sampled on the polar box of f_b
    polar: GridFunction
    residual: FloatArray
    converged: bool

    def translated(self, f: GridFunction) -> GridFunction:
        return translate(f, self.z)


def centered_polar(f: GridFunction,
                   out_box: Optional[Box] = None,
                   method: TransformMethod = TransformMethod.FAST_LLT,
                   logger: Optional[logging.Logger] = None) -> CenteredPolar:
    """
    ``z`` minimizes the convex map ``w -> log integral(e^{<w, y>} (f_b)°(y))``, whose gradient
    is the barycenter of the tilted polar; ``b`` is the barycenter of ``f``.
    """

    logger = logger or logging.getLogger()
    _, center, polar = _recentered_polar(f, out_box, method, logger)

    def objective(w: FloatArray) -> tuple[float, FloatArray]:
        tilted = tilt(polar, w)
        return log_integrate(tilted), barycenter(tilted)

    result = minimize(objective, np.zeros(f.dim), jac=True, method='BFGS',
                      options={'gtol': 1e-10})
    shift = np.asarray(result.x, dtype=np.float64)
    tilted = tilt(polar, shift)
    residual = barycenter(tilted)
    z = center + shift
    logger.debug(f'tilted polar barycenter vanishes at z={z.tolist()}, residual {residual}')
    return CenteredPolar(z=z, polar=tilted, residual=residual, converged=bool(result.success))


def verify_thm1(f: GridFunction,
                out_box: Optional[Box] = None,
                *,
                tolerance: float = BOUND_TOLERANCE,
                method: TransformMethod = TransformMethod.FAST_LLT,
                logger: Optional[logging.Logger] = None) -> VerificationReport:
    """ Locate ``z`` with ``barycenter((f_z)°) = 0`` and check the product at that point """

    logger = logger or logging.getLogger()
    centered = centered_polar(f, out_box, method, logger)

    flags = grid_flags(f, centered.polar)
    if np.max(np.abs(centered.residual)) > BARYCENTER_TOLERANCE:
        flags.append('barycenter-residual')
    report = VerificationReport.check(
        Theorem.THM1,
        integrate(f) * integrate(centered.polar),
        gaussian_bound(f.dim),
        tolerance,
        grid_meta=_meta(f, centered.polar,
                        z=centered.z.tolist(),
                        residual_barycenter=centered.residual.tolist(),
                        converged=centered.converged),
        flags=flags)
    _log_flags(logger, report)
    return report


@frozen(eq=False)
class SplitData:
    """ A hyperplane split of a density and the point z constructed on it """

    hyperplane: Hyperplane
    lambda_: float
    b_plus: FloatArray
    b_minus: FloatArray
    z: FloatArray
    v: FloatArray
    # orthonormal columns e_1 .. e_n, the last one is the normal
    frame: FloatArray

    def to_dict(self) -> dict[str, Any]:
        return {
            'hyperplane': self.hyperplane.to_dict(),
            'lambda': self.lambda_,
            'b_plus': self.b_plus.tolist(),
            'b_minus': self.b_minus.tolist(),
            'z': self.z.tolist(),
            'v': self.v.tolist(),
            }


def orthonormal_frame(normal: FloatArray) -> FloatArray:
    """ Orthonormal columns completed from the coordinate axes, the last one is ``normal`` """

    dim = len(normal)
    if dim == 1:
        return normal.reshape(1, 1).copy()
    pivot = int(np.argmax(np.abs(normal)))
    identity = np.eye(dim)
    columns = [normal] + [identity[:, i] for i in range(dim) if i != pivot]
    q, r = np.linalg.qr(np.column_stack(columns))
    q = q * np.sign(np.diag(r))
    return np.column_stack([q[:, 1:], normal])


def construct_split(f: GridFunction,
                    hyperplane: Hyperplane,
                    logger: Optional[logging.Logger] = None) -> SplitData:
    """
    Intersect the line through the conditional barycenters ``b+`` and ``b-`` with the
    hyperplane.
    """

    logger = logger or logging.getLogger()
    if hyperplane.dim != f.dim:
        raise ValueError(f"Hyperplane dimension {hyperplane.dim} differs from {f.dim}")

    stats = halfspace_stats(f, hyperplane)
    if (stats.b_plus is None or stats.b_minus is None
            or not SPLIT_TOLERANCE < stats.lambda_ < 1 - SPLIT_TOLERANCE):
        raise DegenerateSplit(
            f"Hyperplane {hyperplane.to_dict()} leaves a side empty (lambda={stats.lambda_})")

    normal = hyperplane.vector
    d_plus = float(stats.b_plus @ normal) - hyperplane.offset
    d_minus = float(stats.b_minus @ normal) - hyperplane.offset
    if not d_plus > 0 > d_minus:
        raise NoIntersection(
            f"Barycenters are not strictly separated by the hyperplane: "
            f"distances {d_plus:.3g} and {d_minus:.3g}")

    t = -d_minus / (d_plus - d_minus)
    z = stats.b_minus + t * (stats.b_plus - stats.b_minus)
    above = stats.b_plus - z
    v = above / float(above @ normal)
    logger.debug(
        f'split lambda={stats.lambda_:.6g} b+={stats.b_plus.tolist()} '
        f'b-={stats.b_minus.tolist()} z={z.tolist()}')

    return SplitData(
        hyperplane=hyperplane,
        lambda_=stats.lambda_,
        b_plus=stats.b_plus,
        b_minus=stats.b_minus,
        z=z,
        v=v,
        frame=orthonormal_frame(normal))


def _split_product(f: GridFunction,
                   hyperplane: Hyperplane,
                   out_box: Optional[Box],
                   method: TransformMethod,
                   logger: logging.Logger) -> tuple[SplitData, float, GridFunction]:
    split = construct_split(f, hyperplane, logger)
    polar = sampled_polar(translate(f, split.z), out_box, method, logger)
    return split, integrate(f) * integrate(polar), polar


def verify_thm3_lambda(f: GridFunction,
                       hyperplane: Hyperplane,
                       out_box: Optional[Box] = None,
                       *,
                       tolerance: float = BOUND_TOLERANCE,
                       method: TransformMethod = TransformMethod.FAST_LLT,
                       logger: Optional[logging.Logger] = None) -> VerificationReport:
    """ Check ``integral(f) integral((f_z)°) <= (2 pi)^n / (4 lambda (1 - lambda))`` """

    logger = logger or logging.getLogger()
    split, product, polar = _split_product(f, hyperplane, out_box, method, logger)
    report = VerificationReport.check(
        Theorem.THM3_LAMBDA,
        product,
        split_bound(f.dim, split.lambda_),
        tolerance,
        lambda_=split.lambda_,
        grid_meta=_meta(f, polar, split=split.to_dict()),
        flags=grid_flags(f, polar))
    _log_flags(logger, report)
    return report


def median_hyperplane(f: GridFunction,
                      direction: VectorLike,
                      logger: Optional[logging.Logger] = None) -> Hyperplane:
    normal = Hyperplane.along(as_vector(direction, f.dim)).vector
    return Hyperplane(normal=normal, offset=find_quantile_offset(f, normal, 0.5, logger))


def verify_thm3_median(f: GridFunction,
                       direction: VectorLike,
                       out_box: Optional[Box] = None,
                       *,
                       tolerance: float = BOUND_TOLERANCE,
                       method: TransformMethod = TransformMethod.FAST_LLT,
                       logger: Optional[logging.Logger] = None) -> VerificationReport:
    """ Check the median split against ``(2 pi)^n`` """

    logger = logger or logging.getLogger()
    hyperplane = median_hyperplane(f, direction, logger)
    split, product, polar = _split_product(f, hyperplane, out_box, method, logger)
    flags = grid_flags(f, polar)
    if abs(split.lambda_ - 0.5) > QUANTILE_TOLERANCE:
        flags.append(f'quantile-miss:{split.lambda_:.6g}')
    report = VerificationReport.check(
        Theorem.THM3_MEDIAN,
        product,
        gaussian_bound(f.dim),
        tolerance,
        lambda_=split.lambda_,
        grid_meta=_meta(f, polar, split=split.to_dict()),
        flags=flags)
    _log_flags(logger, report)
    return report


@frozen(eq=False)
class DimensionReduction:
    """
    Fiber integrals of a split density and of its dual over the hyperplane.

    Functions on H are sampled in the coordinates of the frame vectors ``e_1 .. e_{n-1}``.
    ``A`` is the identity on H and maps the normal to ``v``; ``B`` is its inverse transpose.
    The minus side uses the reversed normal and ``b-``.
    """

    split: SplitData
    A: FloatArray
    B: FloatArray
    A_minus: FloatArray
    B_minus: FloatArray
    F_plus: GridFunction
    G_plus: GridFunction
    F_minus: GridFunction
    G_minus: GridFunction
    reduced_margin_plus: float
    reduced_margin_minus: float
    flags: list[str] = field(factory=list)

    @property
    def lambda_(self) -> float:
        return self.split.lambda_

    @property
    def dim(self) -> int:
        return len(self.split.z)

    def check_invariants(self, pairs: int = 100, seed: int = MARGIN_SEED) -> list[str]:
        """ Names of the violated invariants, empty when all hold """

        violations = []
        rng = np.random.default_rng(seed)
        sides = (
            ('plus', self.A, self.B, self.F_plus, self.lambda_),
            ('minus', self.A_minus, self.B_minus, self.F_minus, 1 - self.lambda_),
            )
        for name, a, b, fiber, mass in sides:
            if abs(np.linalg.det(a) - 1) > LINEAR_TOLERANCE:
                violations.append(f'det-A-{name}')
            if abs(np.linalg.det(b) - 1) > LINEAR_TOLERANCE:
                violations.append(f'det-B-{name}')
            x = rng.standard_normal((pairs, self.dim))
            y = rng.standard_normal((pairs, self.dim))
            mixed = np.einsum('ij,ij->i', x @ a.T, y @ b.T)
            plain = np.einsum('ij,ij->i', x, y)
            scale = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
            if np.max(np.abs(mixed - plain) / scale) > LINEAR_TOLERANCE:
                violations.append(f'inner-product-{name}')
            if abs(integrate(fiber) - mass) > REDUCTION_MASS_TOLERANCE * mass:
                violations.append(f'fiber-mass-{name}')
            if np.max(np.abs(barycenter(fiber))) > REDUCTION_BARYCENTER_TOLERANCE:
                violations.append(f'fiber-barycenter-{name}')
        return violations


def _shear(v: FloatArray, e: FloatArray) -> tuple[FloatArray, FloatArray]:
    """ ``A = I + (v - e) e^T`` and its inverse transpose ``B = I - e (v - e)^T`` """

    identity = np.eye(len(v))
    return identity + np.outer(v - e, e), identity - np.outer(e, v - e)


def _hyperplane_box(box: Box, frame: FloatArray) -> Box:
    """ Box in frame coordinates covering the projection of ``box`` onto H """

    projected = box.corners() @ frame
    counts = [box.counts[int(np.argmax(np.abs(frame[:, i])))] for i in range(frame.shape[1])]
    return Box(lower=projected.min(axis=0), upper=projected.max(axis=0), counts=counts)


def _ray_integrals(f: GridFunction,
                   origins: FloatArray,
                   direction: FloatArray) -> FloatArray:
    """
    ``integral_0^inf f(origin + s direction) ds`` for every origin, sampling ``f`` by multilinear
    interpolation and integrating with the trapezoid rule.
    """

    box = f.box
    values = np.ascontiguousarray(f.values())
    peak = float(values.max())
    speed = float(np.linalg.norm(direction))
    step = float(np.min(box.spacing)) / speed
    length = float(np.linalg.norm(box.upper_corner - box.lower_corner)) / speed
    s = np.arange(int(math.ceil(length / step)) + 2) * step
    upper_index = np.asarray(box.counts, dtype=np.float64) - 1

    result = np.zeros(len(origins))
    rows = max(1, RAY_CHUNK_ENTRIES // len(s))
    for start in range(0, len(origins), rows):
        points = origins[start:start + rows, None, :] + s[None, :, None] * direction
        coords = box.index_coordinates(points)
        sampled = map_coordinates(
            values, coords.reshape(box.dim, -1), order=1, mode='constant', cval=0.0,
            ).reshape(points.shape[:2])

        inside = np.all((coords >= 0) & (coords <= upper_index.reshape(-1, 1, 1)), axis=0)
        entered = inside.any(axis=1)
        last = inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1)
        exit_values = sampled[np.arange(len(last)), last][entered]
        if exit_values.size and float(exit_values.max()) > RAY_TAIL_TOLERANCE * peak:
            raise InterpolationOutOfBox(
                f"Ray integral along {direction.tolist()} leaves {box} while the integrand "
                f"is still {float(exit_values.max()) / peak:.3g} of its peak")

        result[start:start + rows] = trapezoid(sampled, dx=step, axis=1)
    return result


def _fiber_function(f: GridFunction,
                    box: Box,
                    frame: FloatArray,
                    direction: FloatArray,
                    origin_map: Optional[FloatArray] = None) -> GridFunction:
    coords = box.nodes()
    origins = coords @ frame.T
    if origin_map is not None:
        origins = origins @ origin_map.T
    with np.errstate(divide='ignore'):
        logvals = np.log(_ray_integrals(f, origins, direction))
    return GridFunction(box=box, logvals=logvals.reshape(box.counts))


def reduce_dimension(f: GridFunction,
                     g: GridFunction,
                     hyperplane: Hyperplane,
                     *,
                     pair_limit: int = PAIR_LIMIT,
                     seed: int = MARGIN_SEED,
                     logger: Optional[logging.Logger] = None) -> DimensionReduction:
    """
    Build the fiber integrals of the induction step.

    ``f`` must already be translated so that the split point is the origin, ``g`` is its dual.
    ``f`` is normalized to unit mass and ``g`` scaled by the reciprocal, which keeps the duality
    premise, so that ``integral(F+) = lambda``:

        F+(y) = integral_0^inf f(y + s v) ds,  G+(y') = integral_0^inf g(B y' + t e_n) dt
    """

    logger = logger or logging.getLogger()
    if f.dim < 2:
        raise PremiseViolated("Dimension reduction needs at least two dimensions")

    split = construct_split(f, hyperplane, logger)
    scale = max(1.0, float(np.max(np.abs(f.box.corners()))))
    if float(np.linalg.norm(split.z)) > BARYCENTER_TOLERANCE * scale:
        raise PremiseViolated(
            f"Split point {split.z.tolist()} is not at the origin, translate the function first")

    mass = integrate(f)
    f = f.scaled(1 / mass)
    g = g.scaled(mass)

    normal = hyperplane.vector
    on_plane = split.frame[:, :-1]
    v_minus = split.b_minus - split.z
    v_minus = v_minus / float(v_minus @ -normal)

    a_plus, b_plus = _shear(split.v, normal)
    a_minus, b_minus = _shear(v_minus, -normal)

    f_box = _hyperplane_box(f.box, on_plane)
    g_box = _hyperplane_box(g.box, on_plane)
    f_plus = _fiber_function(f, f_box, on_plane, split.v)
    f_minus = _fiber_function(f, f_box, on_plane, v_minus)
    g_plus = _fiber_function(g, g_box, on_plane, normal, b_plus)
    g_minus = _fiber_function(g, g_box, on_plane, -normal, b_minus)

    half_pi = math.log(math.pi / 2)
    margin_plus = duality_margin(f_plus, g_plus, pair_limit, seed, logger).value - half_pi
    margin_minus = duality_margin(f_minus, g_minus, pair_limit, seed, logger).value - half_pi

    reduction = DimensionReduction(
        split=split,
        A=a_plus,
        B=b_plus,
        A_minus=a_minus,
        B_minus=b_minus,
        F_plus=f_plus,
        G_plus=g_plus,
        F_minus=f_minus,
        G_minus=g_minus,
        reduced_margin_plus=margin_plus,
        reduced_margin_minus=margin_minus,
        flags=['interpolated'])

    violations = reduction.check_invariants(seed=seed)
    for name, margin in (('plus', margin_plus), ('minus', margin_minus)):
        if margin > REDUCED_MARGIN_TOLERANCE:
            violations.append(f'reduced-duality-{name}')
    for violation in violations:
        logger.warning(f'dimension reduction invariant violated: {violation}')
    reduction.flags.extend(violations)
    logger.debug(
        f'reduced margins {margin_plus:.3g} / {margin_minus:.3g}, '
        f'fiber masses {integrate(f_plus):.6g} / {integrate(f_minus):.6g}')
    return reduction


@frozen
class InductionStep:
    """ Reports of one induction step: reduced products, side bounds and their sum """

    plus: VerificationReport
    minus: VerificationReport
    side_plus: VerificationReport
    side_minus: VerificationReport
    combined: VerificationReport

    def reports(self) -> list[VerificationReport]:
        return [self.plus, self.minus, self.side_plus, self.side_minus, self.combined]

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports())


def verify_induction_step(reduction: DimensionReduction,
                          *,
                          tolerance: float = BOUND_TOLERANCE,
                          logger: Optional[logging.Logger] = None) -> InductionStep:
    """
    Check ``integral(F+) integral(G+) <= (pi / 2) (2 pi)^{n-1}`` on both sides, the implied
    side bounds ``integral_{H+} g o B <= (2 pi)^n / (4 lambda)`` and their sum.
    """

    logger = logger or logging.getLogger()
    dim = reduction.dim
    lambda_ = reduction.lambda_
    reduced_bound = (math.pi / 2) * gaussian_bound(dim - 1)
    flags = list(reduction.flags)

    def _meta_for(side: str, fiber: GridFunction, dual: GridFunction,
                  margin: float) -> dict[str, Any]:
        return {
            'side': side,
            'fiber_box': fiber.box.to_dict(),
            'dual_fiber_box': dual.box.to_dict(),
            'fiber_mass': integrate(fiber),
            'reduced_margin': margin,
            'split': reduction.split.to_dict(),
            }

    mass_g_plus = integrate(reduction.G_plus)
    mass_g_minus = integrate(reduction.G_minus)
    plus_meta = _meta_for('plus', reduction.F_plus, reduction.G_plus,
                          reduction.reduced_margin_plus)
    minus_meta = _meta_for('minus', reduction.F_minus, reduction.G_minus,
                           reduction.reduced_margin_minus)

    plus = VerificationReport.check(
        Theorem.INDUCTION_STEP, integrate(reduction.F_plus) * mass_g_plus, reduced_bound,
        tolerance, lambda_=lambda_, grid_meta=plus_meta, flags=flags)
    minus = VerificationReport.check(
        Theorem.INDUCTION_STEP, integrate(reduction.F_minus) * mass_g_minus, reduced_bound,
        tolerance, lambda_=lambda_, grid_meta=minus_meta, flags=flags)

    side_plus = VerificationReport.check(
        Theorem.INDUCTION_STEP, mass_g_plus, gaussian_bound(dim) / (4 * lambda_), tolerance,
        lambda_=lambda_, grid_meta={**plus_meta, 'quantity': 'side'}, flags=flags)
    side_minus = VerificationReport.check(
        Theorem.INDUCTION_STEP, mass_g_minus, gaussian_bound(dim) / (4 * (1 - lambda_)),
        tolerance, lambda_=lambda_, grid_meta={**minus_meta, 'quantity': 'side'}, flags=flags)

    summed = side_plus.bound + side_minus.bound
    expected = split_bound(dim, lambda_)
    combined_flags = list(flags)
    if abs(summed - expected) > SUM_IDENTITY_TOLERANCE * expected:
        combined_flags.append('sum-identity')
    combined = VerificationReport.check(
        Theorem.INDUCTION_STEP, mass_g_plus + mass_g_minus, summed, tolerance,
        lambda_=lambda_,
        grid_meta={'quantity': 'combined', 'split_bound': expected,
                   'split': reduction.split.to_dict()},
        flags=combined_flags)
    if 'sum-identity' in combined_flags:
        combined = evolve(combined, passed=False)

    step = InductionStep(
        plus=plus, minus=minus, side_plus=side_plus, side_minus=side_minus, combined=combined)
    for report in step.reports():
        logger.info(report.describe())
    return step


def verify_lemma_gm(phi1: GridFunction,
                    phi2: GridFunction,
                    *,
                    tolerance: float = LEMMA_TOLERANCE,
                    pair_limit: int = PAIR_LIMIT,
                    seed: int = MARGIN_SEED,
                    logger: Optional[logging.Logger] = None) -> VerificationReport:
    """
    Check ``integral(phi1) integral(phi2) <= pi / 2`` for functions on the half-line with
    ``phi1(s) phi2(t) <= e^{-st}``.
    """

    logger = logger or logging.getLogger()
    for name, phi in (('phi1', phi1), ('phi2', phi2)):
        if phi.dim != 1:
            raise PremiseViolated(f"{name} must be one-dimensional, got dimension {phi.dim}")
        nodes = phi.box.axis(0)[phi.support().ravel()]
        if nodes.size and float(nodes.min()) < -TIE_TOLERANCE * max(1.0, float(nodes.max())):
            raise PremiseViolated(f"{name} is not supported on the half-line [0, inf)")

    premise = duality_margin(phi1, phi2, pair_limit, seed, logger)
    if premise.value > PREMISE_TOLERANCE:
        raise PremiseViolated(
            f"phi1(s) phi2(t) <= exp(-st) fails by {premise.value:.3g} in log units")

    flags = ['subsampled-margin'] if premise.subsampled else []
    report = VerificationReport.check(
        Theorem.LEMMA1,
        integrate(phi1) * integrate(phi2),
        math.pi / 2,
        tolerance,
        grid_meta={'phi1_box': phi1.box.to_dict(), 'phi2_box': phi2.box.to_dict(),
                   'premise_margin': premise.value, 'pairs': premise.pairs},
        flags=flags)
    _log_flags(logger, report)
    return report


def halfline(f: GridFunction, side: int) -> GridFunction:
    """ ``s -> f(side * s)`` restricted to ``s >= 0``, for a one-dimensional ``f`` """

    coords = f.box.axis(0) * side
    keep = np.nonzero(coords >= -TIE_TOLERANCE * max(1.0, float(np.max(np.abs(coords)))))[0]
    if len(keep) < 2:
        raise DegenerateSplit(f"Fewer than two nodes of {f.box} lie on the half-line")
    nodes, logvals = coords[keep], f.logvals.ravel()[keep]
    if side < 0:
        nodes, logvals = nodes[::-1], logvals[::-1]
    box = Box(lower=max(0.0, float(nodes[0])), upper=nodes[-1], counts=len(nodes))
    return GridFunction(box=box, logvals=logvals)


def verify_halfline_split(f: GridFunction,
                          offset: float,
                          out_box: Optional[Box] = None,
                          *,
                          tolerance: float = LEMMA_TOLERANCE,
                          method: TransformMethod = TransformMethod.FAST_LLT,
                          pair_limit: int = PAIR_LIMIT,
                          seed: int = MARGIN_SEED,
                          logger: Optional[logging.Logger] = None) -> list[VerificationReport]:
    """
    One-dimensional base case of the split: with ``g = (f_r)°`` for ``r = offset``, apply the
    half-line lemma to ``(f(r + s), g(t))`` and to ``(f(r - s), g(-t))``.

    The implied side bounds ``integral_{R+} g <= pi / (2 lambda integral(f))`` and the minus
    counterpart are recorded in the grid metadata.
    """

    logger = logger or logging.getLogger()
    if f.dim != 1:
        raise PremiseViolated(f"Half-line split needs a one-dimensional function, got {f.dim}")

    shifted = translate(f, [offset])
    polar = sampled_polar(shifted, out_box, method, logger)
    lambda_ = halfspace_stats(f, Hyperplane(normal=(1.0,), offset=offset)).lambda_
    mass = integrate(f)

    reports = []
    for side, name, fraction in ((1, 'plus', lambda_), (-1, 'minus', 1 - lambda_)):
        phi1, phi2 = halfline(shifted, side), halfline(polar, side)
        report = verify_lemma_gm(
            phi1, phi2, tolerance=tolerance, pair_limit=pair_limit, seed=seed, logger=logger)
        side_bound = math.pi / (2 * fraction * mass) if fraction > 0 else math.inf
        report.grid_meta.update({
            'side': name,
            'offset': offset,
            'side_integral': integrate(phi2),
            'side_bound': side_bound,
            })
        reports.append(evolve(report, lambda_=fraction))
    return reports


def verify_shift_identity(f: GridFunction,
                          g: GridFunction,
                          z: VectorLike,
                          lambda_: float = 0.5,
                          *,
                          tolerance: float = BOUND_TOLERANCE,
                          pair_limit: int = PAIR_LIMIT,
                          seed: int = MARGIN_SEED,
                          logger: Optional[logging.Logger] = None) -> VerificationReport:
    """
    Check both halves of the shift argument for a centered ``g``:

    (a) ``integral(f) integral(g e^{<y,z>}) <= (2 pi)^n / (4 lambda (1 - lambda))``,
    (b) ``integral(g) <= integral(g e^{<y,z>}) - <integral(y g(y)), z>``, from
        ``1 <= e^t - t``.
    """

    logger = logger or logging.getLogger()
    shift = as_vector(z, f.dim)

    center = barycenter(g)
    if np.max(np.abs(center)) > BARYCENTER_TOLERANCE:
        raise PremiseViolated(f"Barycenter of g {center.tolist()} is not at the origin")

    tilted = tilt(g, shift)
    premise = duality_margin(translate(f, shift), tilted, pair_limit, seed, logger)
    if premise.value > PREMISE_TOLERANCE:
        raise PremiseViolated(
            f"f_z and the tilted g violate the duality relation by {premise.value:.3g}")

    mass_g = integrate(g)
    tilted_mass = integrate(tilted)
    rhs = tilted_mass - float((center * mass_g) @ shift)
    shift_ok = mass_g <= rhs + PREMISE_TOLERANCE * max(1.0, abs(rhs))

    flags = ['subsampled-margin'] if premise.subsampled else []
    if not shift_ok:
        flags.append('shift-inequality')
    report = VerificationReport.check(
        Theorem.EQ8,
        integrate(f) * tilted_mass,
        split_bound(f.dim, lambda_),
        tolerance,
        lambda_=lambda_,
        grid_meta=_meta(f, g,
                        z=shift.tolist(),
                        premise_margin=premise.value,
                        shift_check={'lhs': mass_g, 'rhs': rhs, 'passed': bool(shift_ok)}),
        flags=flags)
    if not shift_ok:
        report = evolve(report, passed=False)
    _log_flags(logger, report)
    return report


@frozen(eq=False)
class SantaloPoint:
    z: FloatArray
    product: float
    evaluations: int


def santalo_point_search(f: GridFunction,
                         out_box: Optional[Box] = None,
                         *,
                         method: TransformMethod = TransformMethod.FAST_LLT,
                         xatol: float = SEARCH_XATOL,
                         logger: Optional[logging.Logger] = None) -> SantaloPoint:
    """
    Minimize ``z -> integral(f) integral((f_z)°)`` by coordinate-wise bounded scalar searches.

    Starts from the median split point of every axis direction and from the barycenter; the
    best point evaluated is returned.
    """

    logger = logger or logging.getLogger()
    product = product_map(f, out_box, method)
    best_z = np.zeros(f.dim)
    best_value = math.inf
    evaluations = 0

    def evaluate(z: FloatArray) -> float:
        nonlocal best_z, best_value, evaluations
        value = product(z)
        evaluations += 1
        if value < best_value:
            best_z, best_value = np.array(z, dtype=np.float64), value
        return value

    starts = []
    identity = np.eye(f.dim)
    for axis in range(f.dim):
        try:
            hyperplane = median_hyperplane(f, identity[axis], logger)
            starts.append(construct_split(f, hyperplane, logger).z)
        except SantaloError as exc:
            logger.debug(f'no median start along axis {axis}: {exc}')
    starts.append(barycenter(f))

    z = min(starts, key=evaluate).copy()
    current = evaluate(z)
    lower, upper = f.box.lower_corner, f.box.upper_corner
    for sweep in range(SEARCH_PASSES):
        moved = 0.0
        for axis in range(f.dim):
            def along(t: float, axis: int = axis) -> float:
                candidate = z.copy()
                candidate[axis] = t
                return evaluate(candidate)

            result = minimize_scalar(along, bounds=(lower[axis], upper[axis]),
                                     method='bounded', options={'xatol': xatol})
            if float(result.fun) < current:
                moved = max(moved, abs(float(result.x) - z[axis]))
                z[axis] = float(result.x)
                current = float(result.fun)
        logger.debug(f'search pass {sweep}: z={z.tolist()} product={current:.8g}')
        if moved < xatol:
            break

    return SantaloPoint(z=best_z, product=best_value, evaluations=evaluations)
