""" Discrete Legendre-Fenchel conjugates and the polar function transform """

from __future__ import annotations

import logging
import math
from typing import Optional

try:
    from attrs import frozen
except ModuleNotFoundError:
    from attr import frozen

import numpy as np

from . import (
    MARGIN_SEED,
    PAIR_LIMIT,
    EmptySupport,
    FloatArray,
    TransformMethod,
    )
from .grid import MAX_NODES, Box, GridFunction

# rows of a chunked pairwise maximum are sized to stay around this many entries
CHUNK_ENTRIES = 2**22
MAXIMALITY_SLACK = 1e-6
# a function larger than this fraction of its peak on a face of its box is truncated
EDGE_TOLERANCE = 1e-6
# a covering polar box may hold at most this many times the nodes of the mirrored box
GROWTH_LIMIT = 16


@frozen(eq=False)
class TransformResult:
    output: GridFunction
    method: TransformMethod
    input_box: Box
    output_box: Box


@frozen
class DualityMargin:
    """ Maximum of log f(x) + log g(y) + <x, y> over the evaluated pairs """

    value: float
    pairs: int
    subsampled: bool = False


def lower_hull(y: FloatArray, u: FloatArray) -> FloatArray:
    """
    Indices of the vertices of the lower convex hull of the points (y[j], u[j]).

    ``y`` must be strictly increasing; monotone chain, linear in the number of points.
    """

    hull: list[int] = []
    for k in range(len(y)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j when it lies on or above the chord from i to k
            if (u[j] - u[i]) * (y[k] - y[i]) >= (u[k] - u[i]) * (y[j] - y[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    return np.asarray(hull, dtype=np.intp)


def _support(y: FloatArray, u: FloatArray) -> tuple[FloatArray, FloatArray]:
    finite = np.isfinite(u)
    return y[finite], u[finite]


def _legendre_brute(y: FloatArray, u: FloatArray, x: FloatArray) -> FloatArray:
    step = max(1, CHUNK_ENTRIES // max(1, len(y)))
    result = np.empty(len(x))
    for start in range(0, len(x), step):
        chunk = x[start:start + step]
        result[start:start + step] = np.max(np.outer(chunk, y) - u, axis=1)
    return result


def _legendre_fast(y: FloatArray, u: FloatArray, x: FloatArray) -> FloatArray:
    """
    Hull in O(N), then one binary search of the hull slopes per output node, O(M log N).

    A monotone pointer merge would be O(N + M) but needs a Python-level loop.
    """

    hull = lower_hull(y, u)
    hy, hu = y[hull], u[hull]
    if len(hull) == 1:
        return x * hy[0] - hu[0]
    slopes = np.diff(hu) / np.diff(hy)
    # the maximiser for slope x is the first hull vertex whose right slope is >= x
    k = np.searchsorted(slopes, x, side='left')
    return x * hy[k] - hu[k]


def legendre_1d(y: FloatArray,
                u: FloatArray,
                x: FloatArray,
                method: TransformMethod = TransformMethod.FAST_LLT) -> FloatArray:
    """
    Discrete conjugate ``u*(x_i) = max_j (x_i y_j - u(y_j))`` over the finite samples of ``u``.

    ``+inf`` entries of ``u`` mark nodes outside the support. The fast path convexifies ``u``
    through its lower hull first, so non-convex inputs are conjugated through their convex hull.
    """

    ys, us = _support(np.asarray(y, dtype=np.float64), np.asarray(u, dtype=np.float64))
    if ys.size == 0:
        raise EmptySupport("Cannot conjugate a potential without finite samples")
    x = np.asarray(x, dtype=np.float64)
    if method is TransformMethod.BRUTE_FORCE:
        return _legendre_brute(ys, us, x)
    return _legendre_fast(ys, us, x)


def _sweep(values: FloatArray,
           axis: int,
           y: FloatArray,
           x: FloatArray,
           method: TransformMethod) -> FloatArray:
    """ Apply ``legendre_1d`` along one axis for every fixed prefix and suffix """

    moved = np.moveaxis(values, axis, -1)
    rows = moved.reshape(-1, moved.shape[-1])
    result = np.full((rows.shape[0], len(x)), -np.inf)
    for r, row in enumerate(rows):
        if np.isfinite(row).any():
            result[r] = legendre_1d(y, row, x, method)
    result = result.reshape(moved.shape[:-1] + (len(x),))
    return np.moveaxis(result, -1, axis)


def legendre_nd(u: FloatArray,
                in_box: Box,
                out_box: Box,
                method: TransformMethod = TransformMethod.FAST_LLT) -> FloatArray:
    """
    Conjugate ``u*(x) = max_y (<x, y> - u(y))`` of a potential sampled on ``in_box``,
    evaluated on ``out_box``.

    The maximum factorizes axis by axis, u* = T1[-T2[-T3[u]]], so the transform is a
    sequence of one-dimensional sweeps from the last axis to the first.
    """

    u = np.asarray(u, dtype=np.float64).reshape(in_box.counts)
    if in_box.dim != out_box.dim:
        raise ValueError(f"Box dimensions differ: {in_box.dim} != {out_box.dim}")
    if not np.isfinite(u).any():
        raise EmptySupport(f"Potential on {in_box} has no finite sample")

    if method is TransformMethod.BRUTE_FORCE:
        return legendre_nd_brute(u, in_box, out_box)

    in_axes, out_axes = in_box.axes(), out_box.axes()
    values = u
    for step, axis in enumerate(reversed(range(in_box.dim))):
        if step:
            values = -values
        values = _sweep(values, axis, in_axes[axis], out_axes[axis], method)
    return values


def legendre_nd_brute(u: FloatArray, in_box: Box, out_box: Box) -> FloatArray:
    """ Reference conjugate, a direct maximum over all pairs of nodes """

    u = np.asarray(u, dtype=np.float64).ravel()
    finite = np.isfinite(u)
    if not finite.any():
        raise EmptySupport(f"Potential on {in_box} has no finite sample")
    y, uy = in_box.nodes()[finite], u[finite]
    x = out_box.nodes()

    step = max(1, CHUNK_ENTRIES // len(uy))
    result = np.empty(len(x))
    for start in range(0, len(x), step):
        chunk = x[start:start + step]
        result[start:start + step] = np.max(chunk @ y.T - uy, axis=1)
    return result.reshape(out_box.counts)


def polar_function(f: GridFunction,
                   out_box: Optional[Box] = None,
                   method: TransformMethod = TransformMethod.FAST_LLT) -> TransformResult:
    """
    The polar function ``f°(x) = inf_y e^{-<x,y>} / f(y)``, i.e. ``log f° = -(-log f)*``.

    The default output box is the input box mirrored through the origin.
    """

    out_box = out_box or f.box.mirrored()
    if not f.support().any():
        raise EmptySupport(f"Cannot take the polar of the zero function on {f.box}")
    conjugate = legendre_nd(-f.logvals, f.box, out_box, method)
    return TransformResult(
        output=GridFunction(box=out_box, logvals=-conjugate),
        method=method,
        input_box=f.box,
        output_box=out_box)


def edge_fraction(f: GridFunction) -> float:
    """ Largest value of ``f`` on the faces of its box relative to its maximum """

    return max((fraction for _, _, fraction in _face_fractions(f)), default=0.0)


def _face_fractions(f: GridFunction) -> list[tuple[int, int, float]]:
    peak = float(np.max(f.logvals))
    if peak == -math.inf:
        return []
    faces = []
    for axis in range(f.dim):
        for side, index in ((0, 0), (1, -1)):
            edge = float(np.max(np.take(f.logvals, index, axis=axis)))
            faces.append((axis, side, math.exp(edge - peak)))
    return faces


def truncated_faces(f: GridFunction) -> list[tuple[int, int]]:
    """ Faces ``(axis, side)`` where ``f`` exceeds ``EDGE_TOLERANCE`` of its peak, 1 is upper """

    return [(axis, side) for axis, side, fraction in _face_fractions(f)
            if fraction > EDGE_TOLERANCE]


def _grown(box: Box, faces: list[tuple[int, int]]) -> Box:
    """ ``box`` extended by its own width across every face, with the same spacing """

    lower, upper, counts = list(box.lower), list(box.upper), list(box.counts)
    for axis, side in faces:
        width = box.upper[axis] - box.lower[axis]
        if side:
            upper[axis] += width
        else:
            lower[axis] -= width
        counts[axis] += box.counts[axis] - 1
    return Box(lower=lower, upper=upper, counts=counts, offset=box.offset)


def covering_polar(f: GridFunction,
                   method: TransformMethod = TransformMethod.FAST_LLT,
                   logger: Optional[logging.Logger] = None) -> TransformResult:
    """
    The polar on the mirrored input box, grown across every face where the polar is not
    negligible.

    Growth stops at ``GROWTH_LIMIT`` times the nodes of the mirrored box; a polar that is still
    truncated then is returned with a warning, e.g. when the origin is not interior to the
    support of ``f`` and ``f°`` is not integrable.
    """

    logger = logger or logging.getLogger()
    result = polar_function(f, None, method)
    limit = min(GROWTH_LIMIT * result.output_box.size, MAX_NODES)
    while faces := truncated_faces(result.output):
        box = result.output_box
        grown_size = math.prod(
            count + (count - 1) * sum(1 for axis, _ in faces if axis == i)
            for i, count in enumerate(box.counts))
        if grown_size > limit:
            logger.warning(
                f'polar of the function on {f.box} is still truncated on {box}, '
                f'growing it further would exceed {limit} nodes')
            break
        result = polar_function(f, _grown(box, faces), method)
    logger.debug(f'polar of the function on {f.box} sampled on {result.output_box}')
    return result


def _support_points(f: GridFunction) -> tuple[FloatArray, FloatArray]:
    logvals = f.logvals.ravel()
    finite = np.isfinite(logvals)
    return f.box.nodes()[finite], logvals[finite]


def duality_margin(f: GridFunction,
                   g: GridFunction,
                   pair_limit: int = PAIR_LIMIT,
                   seed: int = MARGIN_SEED,
                   logger: Optional[logging.Logger] = None) -> DualityMargin:
    """
    Largest violation of ``f(x) g(y) <= e^{-<x,y>}`` over the sampled pairs, in log units.

    Every pair is evaluated when there are at most ``pair_limit`` of them; otherwise a
    seeded subsample of ``pair_limit`` pairs is drawn and the result is flagged.
    """

    if f.dim != g.dim:
        raise ValueError(f"Dimensions differ: {f.dim} != {g.dim}")
    logger = logger or logging.getLogger()

    x, lf = _support_points(f)
    y, lg = _support_points(g)
    pairs = len(lf) * len(lg)
    if pairs == 0:
        return DualityMargin(value=-math.inf, pairs=0)

    if pairs <= pair_limit:
        step = max(1, CHUNK_ENTRIES // len(lg))
        best = -math.inf
        for start in range(0, len(lf), step):
            block = lf[start:start + step, None] + lg[None, :] + x[start:start + step] @ y.T
            best = max(best, float(block.max()))
        return DualityMargin(value=best, pairs=pairs)

    logger.warning(
        f'duality margin over {pairs} pairs exceeds the limit, sampling {pair_limit} pairs')
    rng = np.random.default_rng(seed)
    best = -math.inf
    remaining = pair_limit
    batch = min(pair_limit, 2**20)
    while remaining > 0:
        size = min(batch, remaining)
        i = rng.integers(len(lf), size=size)
        j = rng.integers(len(lg), size=size)
        values = lf[i] + lg[j] + np.einsum('ij,ij->i', x[i], y[j])
        best = max(best, float(values.max()))
        remaining -= size
    return DualityMargin(value=best, pairs=pair_limit, subsampled=True)


def polar_maximality_check(f: GridFunction,
                           g: GridFunction,
                           method: TransformMethod = TransformMethod.FAST_LLT) -> bool:
    """ True when ``g <= f° (1 + 1e-6)`` at every node of ``g``'s box """

    polar = polar_function(f, g.box, method).output
    support = g.support()
    return bool(np.all(
        g.logvals[support] <= polar.logvals[support] + math.log1p(MAXIMALITY_SLACK)))


def kink_nodes(f: GridFunction) -> int:
    """ Number of support nodes with a neighbour outside the support """

    support = f.support()
    boundary = np.zeros_like(support)
    for axis in range(f.dim):
        lead = [slice(None)] * f.dim
        tail = [slice(None)] * f.dim
        lead[axis] = slice(1, None)
        tail[axis] = slice(None, -1)
        # neighbour above is zero, or neighbour below is zero
        boundary[tuple(tail)] |= support[tuple(tail)] & ~support[tuple(lead)]
        boundary[tuple(lead)] |= support[tuple(lead)] & ~support[tuple(tail)]
    return int(boundary.sum())
