""" Analytic and seeded random instances: log-concave functions and star bodies """

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Callable, Optional

try:
    from attrs import define, field, frozen
except ModuleNotFoundError:
    from attr import define, field, frozen

import numpy as np

from . import (
    BodyFamily,
    ConfigError,
    FloatArray,
    InstanceKind,
    Serializable,
    yaml_parser,
    )
from .grid import Box, GridFunction, load_grid_function, save_grid_function
from .starbody import StarBody, load_body, save_body

# default grid counts per dimension
GAUSSIAN_COUNTS = {1: 1601, 2: 401, 3: 65}
MIXTURE_COUNTS = {1: 2801, 2: 351, 3: 65}
INDICATOR_COUNTS = {1: 4001, 2: 401, 3: 65}

GAUSSIAN_HALF_WIDTH = 8.0
MIXTURE_HALF_WIDTH = 14.0
EXPONENTIAL_LENGTH = 40.0
INDICATOR_POLAR_HALF_WIDTH = {1: 60.0, 2: 30.0, 3: 30.0}
INDICATOR_POLAR_COUNTS = {1: 12001, 2: 401, 3: 65}

RANDOM_STAR_MODES = 16
RANDOM_STAR_BUMPS = 16

RANDOM_FAMILIES = ('logconcave_mixture', str(BodyFamily.RANDOM_STAR))

# box, polar box and log-density of a family
Sampling = tuple[Box, Box, Callable[[FloatArray], FloatArray]]


def _split_arguments(text: str) -> list[str]:
    """ Split on commas outside of brackets """

    parts, depth, current = [], 0, ''
    for char in text:
        if char in '([{':
            depth += 1
        elif char in ')]}':
            depth -= 1
        if char == ',' and depth == 0:
            parts.append(current)
            current = ''
        else:
            current += char
    if current.strip():
        parts.append(current)
    return parts


def _optional_box(value: Any) -> Optional[Box]:
    if value is None or isinstance(value, Box):
        return value
    return Box.from_dict(value)


@define
class InstanceSpec(Serializable):
    """
    A named instance with its parameters, e.g. ``scaled_gaussian(a=2)`` or
    ``random-star(seed=3, smoothness=2)``.
    """

    kind: InstanceKind = field(converter=InstanceKind)
    dim: Optional[int] = field(default=None)
    params: dict[str, Any] = field(factory=dict)
    box: Optional[Box] = field(default=None, converter=_optional_box)
    polar_box: Optional[Box] = field(default=None, converter=_optional_box)
    resolution: Optional[int] = None

    def __attrs_post_init__(self) -> None:
        if self.dim is None:
            self.dim = 2 if self.is_body else 1
        self.dim = int(self.dim)
        self._validate()

    @property
    def is_body(self) -> bool:
        return self.kind in (InstanceKind.BODY_FAMILY, InstanceKind.BODY_FILE)

    @property
    def family(self) -> Optional[BodyFamily]:
        if self.kind is not InstanceKind.BODY_FAMILY:
            return None
        return BodyFamily(self.params['family'])

    @property
    def seed(self) -> Optional[int]:
        seed = self.params.get('seed')
        return None if seed is None else int(seed)

    def _validate(self) -> None:
        assert self.dim is not None
        low = 2 if self.is_body else 1
        if not low <= self.dim <= 3:
            raise ConfigError(f"Instance {self}: dim must be between {low} and 3, got {self.dim}")
        if self.kind is InstanceKind.SCALED_GAUSSIAN and 'a' not in self.params:
            raise ConfigError(f"Instance {self}: parameter 'a' is required")
        if float(self.params.get('a', 1.0)) <= 0:
            raise ConfigError(f"Instance {self}: parameter 'a' must be positive")
        if self.kind is InstanceKind.LOGCONCAVE_MIXTURE:
            if 'seed' not in self.params:
                raise ConfigError(f"Instance {self}: parameter 'seed' is required")
            if int(self.params.get('components', 3)) < 1:
                raise ConfigError(f"Instance {self}: parameter 'components' must be positive")
        if self.kind is InstanceKind.INDICATOR_INTERVAL and self.dim != 1:
            raise ConfigError(f"Instance {self}: indicator_interval is one-dimensional")
        if self.kind in (InstanceKind.GRID_FILE, InstanceKind.BODY_FILE) \
                and 'path' not in self.params:
            raise ConfigError(f"Instance {self}: parameter 'path' is required")
        if self.kind is InstanceKind.BODY_FAMILY:
            try:
                family = BodyFamily(self.params.get('family'))
            except ValueError as exc:
                raise ConfigError(
                    f"Instance {self}: unknown body family, "
                    f"expected one of {', '.join(BodyFamily.values())}") from exc
            if family is BodyFamily.RANDOM_STAR and 'seed' not in self.params:
                raise ConfigError(f"Instance {self}: parameter 'seed' is required")
            if not 0 <= float(self.params.get('amplitude', 0.3)) < 1:
                raise ConfigError(f"Instance {self}: parameter 'amplitude' must be in [0, 1)")
        if self.resolution is not None and self.resolution < 2:
            raise ConfigError(f"Instance {self}: resolution must be at least 2")

    @classmethod
    def parse(cls, text: str, **overrides: Any) -> InstanceSpec:
        """ Parse ``name`` or ``name(key=value, ...)``, values are read as YAML scalars """

        text = text.strip()
        name, _, rest = text.partition('(')
        name = name.strip()
        params: dict[str, Any] = {}
        if rest:
            if not rest.endswith(')'):
                raise ConfigError(f"Instance '{text}': missing closing parenthesis")
            parser = yaml_parser()
            for argument in _split_arguments(rest[:-1]):
                key, sep, value = argument.partition('=')
                if not sep:
                    raise ConfigError(f"Instance '{text}': expected key=value, got '{argument}'")
                params[key.strip()] = parser.load(value.strip())

        if name in BodyFamily.values():
            params['family'] = name
            kind = InstanceKind.BODY_FAMILY
        elif name in InstanceKind.values():
            kind = InstanceKind(name)
        else:
            raise ConfigError(
                f"Instance '{text}': unknown kind '{name}', expected one of "
                f"{', '.join(InstanceKind.values() + BodyFamily.values())}")
        return cls(kind=kind, params=params, **{k: v for k, v in overrides.items()
                                                  if v is not None})

    def __str__(self) -> str:
        name = str(self.params.get('family', self.kind))
        params = {k: v for k, v in self.params.items() if k != 'family'}
        if not params:
            return name
        return f'{name}({", ".join(f"{k}={v}" for k, v in params.items())})'

    def to_dict(self) -> dict[str, Any]:
        return {
            'kind': self.kind.value,
            'dim': self.dim,
            'params': dict(self.params),
            'box': self.box.to_dict() if self.box else None,
            'polar_box': self.polar_box.to_dict() if self.polar_box else None,
            'resolution': self.resolution,
            }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> InstanceSpec:
        return cls(**data)


@frozen(eq=False)
class FunctionInstance:
    """ A sampled function with the box its recentered polar should be sampled on """

    spec: InstanceSpec
    function: GridFunction
    polar_box: Box


def _counts(spec: InstanceSpec, defaults: dict[int, int]) -> int:
    assert spec.dim is not None
    return spec.resolution or defaults[spec.dim]


def _with_overrides(spec: InstanceSpec, box: Box, polar_box: Box) -> tuple[Box, Box]:
    box = spec.box or box
    if spec.resolution and spec.box:
        box = box.with_counts(spec.resolution)
    return box, spec.polar_box or polar_box


def _gaussian(spec: InstanceSpec) -> Sampling:
    assert spec.dim is not None
    a = float(spec.params.get('a', 1.0))
    center = np.asarray(spec.params.get('center', 0.0), dtype=np.float64)
    counts = _counts(spec, GAUSSIAN_COUNTS)
    box = Box.around(center, GAUSSIAN_HALF_WIDTH / math.sqrt(a), counts, spec.dim)
    polar_box = Box.around(0.0, GAUSSIAN_HALF_WIDTH * math.sqrt(a), counts, spec.dim)
    return box, polar_box, lambda x: -a * np.sum((x - center) ** 2, axis=1) / 2


def _exponential(spec: InstanceSpec) -> Sampling:
    if spec.dim != 1:
        raise ConfigError(f"Instance {spec}: exponential is one-dimensional")
    counts = spec.resolution or int(EXPONENTIAL_LENGTH * 1000) + 1
    box = Box(lower=0.0, upper=EXPONENTIAL_LENGTH, counts=counts)
    polar_counts = round((counts - 1) * (EXPONENTIAL_LENGTH + 1) / EXPONENTIAL_LENGTH) + 1
    polar_box = Box(lower=-EXPONENTIAL_LENGTH, upper=1.0, counts=polar_counts)
    return box, polar_box, lambda x: -x[:, 0]


def _indicator(spec: InstanceSpec) -> Sampling:
    assert spec.dim is not None
    lower = np.broadcast_to(np.asarray(spec.params.get('lower', -1.0), dtype=np.float64),
                            (spec.dim,))
    upper = np.broadcast_to(np.asarray(spec.params.get('upper', 1.0), dtype=np.float64),
                            (spec.dim,))
    if np.any(lower >= upper):
        raise ConfigError(f"Instance {spec}: lower must be below upper")
    pad = (upper - lower) / 2
    box = Box(lower=lower - pad, upper=upper + pad,
              counts=[_counts(spec, INDICATOR_COUNTS)] * spec.dim)
    polar_box = Box.around(0.0, INDICATOR_POLAR_HALF_WIDTH[spec.dim],
                           INDICATOR_POLAR_COUNTS[spec.dim], spec.dim)
    slack = 1e-9 * float(np.max(np.abs(box.corners())))

    def log_density(x: FloatArray) -> FloatArray:
        inside = np.all((x >= lower - slack) & (x <= upper + slack), axis=1)
        return np.where(inside, 0.0, -np.inf)

    return box, polar_box, log_density


def _mixture(spec: InstanceSpec) -> Sampling:
    """ ``-log f = max_k (a_k |x - c_k|^2 / 2 + <b_k, x> + d_k)``, convex for every draw """

    assert spec.dim is not None
    components = int(spec.params.get('components', 3))
    rng = np.random.default_rng(spec.seed)
    a = rng.uniform(0.5, 2.0, components)
    c = rng.uniform(-1.0, 1.0, (components, spec.dim))
    b = rng.uniform(-0.5, 0.5, (components, spec.dim))
    d = rng.uniform(-0.5, 0.5, components)

    def log_density(x: FloatArray) -> FloatArray:
        quadratic = a * np.sum((x[:, None, :] - c) ** 2, axis=2) / 2
        return -np.max(quadratic + x @ b.T + d, axis=1)

    box = Box.around(0.0, MIXTURE_HALF_WIDTH, _counts(spec, MIXTURE_COUNTS), spec.dim)
    return box, box.mirrored(), log_density


FUNCTION_BUILDERS: dict[InstanceKind, Callable[[InstanceSpec], Sampling]] = {
    InstanceKind.GAUSSIAN: _gaussian,
    InstanceKind.SCALED_GAUSSIAN: _gaussian,
    InstanceKind.EXPONENTIAL: _exponential,
    InstanceKind.INDICATOR_INTERVAL: _indicator,
    InstanceKind.INDICATOR_BOX: _indicator,
    InstanceKind.LOGCONCAVE_MIXTURE: _mixture,
    }


def build_function(spec: InstanceSpec) -> FunctionInstance:
    if spec.is_body:
        raise ConfigError(f"Instance {spec} is a body, not a function")

    if spec.kind is InstanceKind.GRID_FILE:
        function = load_grid_function(Path(spec.params['path']))
        polar_box = spec.polar_box or function.box.mirrored()
        return FunctionInstance(spec=spec, function=function, polar_box=polar_box)

    box, polar_box, log_density = FUNCTION_BUILDERS[spec.kind](spec)
    box, polar_box = _with_overrides(spec, box, polar_box)
    return FunctionInstance(
        spec=spec, function=GridFunction.sample(box, log_density), polar_box=polar_box)


def random_star_radial(dim: int,
                       seed: int,
                       smoothness: float = 2.0,
                       amplitude: float = 0.3) -> Callable[[FloatArray], FloatArray]:
    """
    ``rho = exp(noise)`` with smooth seeded noise: a Fourier series with coefficients decaying
    like ``k^-smoothness`` in 2-D, a sum of von Mises bumps in 3-D.
    """

    rng = np.random.default_rng(seed)
    if dim == 2:
        k = np.arange(1, RANDOM_STAR_MODES + 1)
        decay = k ** -float(smoothness)
        cos_coef = rng.standard_normal(RANDOM_STAR_MODES) * decay
        sin_coef = rng.standard_normal(RANDOM_STAR_MODES) * decay
        scale = amplitude / math.sqrt(float(np.sum(decay ** 2)))

        def radial_2d(directions: FloatArray) -> FloatArray:
            theta = np.arctan2(directions[:, 1], directions[:, 0])
            noise = np.cos(np.outer(theta, k)) @ cos_coef + np.sin(np.outer(theta, k)) @ sin_coef
            return np.exp(scale * noise)

        return radial_2d

    centers = rng.standard_normal((RANDOM_STAR_BUMPS, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    heights = rng.standard_normal(RANDOM_STAR_BUMPS)
    concentration = 16.0 / float(smoothness)

    def radial_3d(directions: FloatArray) -> FloatArray:
        bumps = np.exp(concentration * (directions @ centers.T - 1))
        return np.exp(amplitude * (bumps @ heights) / math.sqrt(RANDOM_STAR_BUMPS))

    return radial_3d


def body_radial(spec: InstanceSpec) -> Callable[[FloatArray], FloatArray]:
    family, params = spec.family, spec.params
    if family is BodyFamily.BALL:
        radius = float(params.get('radius', 1.0))
        return lambda u: np.full(len(u), radius)
    if family is BodyFamily.ELLIPSOID:
        semi_axes = np.broadcast_to(
            np.asarray(params.get('semi_axes', 1.0), dtype=np.float64), (spec.dim or 2,))
        return lambda u: 1 / np.sqrt(np.sum((u / semi_axes) ** 2, axis=1))
    if family is BodyFamily.CUBE:
        half_width = float(params.get('half_width', 1.0))
        return lambda u: half_width / np.max(np.abs(u), axis=1)
    if family is BodyFamily.CROSS_POLYTOPE:
        radius = float(params.get('radius', 1.0))
        return lambda u: radius / np.sum(np.abs(u), axis=1)
    if family is BodyFamily.COSINE_PERTURBED:
        amplitude = float(params.get('amplitude', 0.3))
        mode = int(params.get('mode', 1))
        return lambda u: 1 + amplitude * np.cos(mode * np.arccos(np.clip(u[:, 0], -1, 1)))
    assert spec.dim is not None and spec.seed is not None
    return random_star_radial(spec.dim, spec.seed,
                              float(params.get('smoothness', 2.0)),
                              float(params.get('amplitude', 0.3)))


def _angular_counts(spec: InstanceSpec) -> Optional[tuple[int, ...]]:
    if not spec.resolution:
        return None
    if spec.dim == 2:
        return (spec.resolution,)
    return (spec.resolution, 2 * (spec.resolution - 1))


def build_body(spec: InstanceSpec) -> StarBody:
    if spec.kind is InstanceKind.BODY_FILE:
        return load_body(Path(spec.params['path']))
    if spec.kind is not InstanceKind.BODY_FAMILY:
        raise ConfigError(f"Instance {spec} is a function, not a body")
    assert spec.dim is not None
    return StarBody.from_radial(spec.dim, body_radial(spec), _angular_counts(spec), spec.seed)


def generate(seed: int,
             family: str,
             count: int,
             out_dir: Path,
             *,
             dim: int = 1,
             logger: Optional[logging.Logger] = None) -> list[Path]:
    """
    Materialize ``count`` random instances with seeds spawned from ``seed``.

    Log-concave mixtures are written as ``<name>.grid`` with a ``<name>.yaml`` sidecar holding
    the instance, random stars as ``<name>.json`` body files.
    """

    logger = logger or logging.getLogger()
    if family not in RANDOM_FAMILIES:
        raise ConfigError(
            f"Cannot generate family '{family}', expected one of {', '.join(RANDOM_FAMILIES)}")

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for child in np.random.SeedSequence(seed).spawn(count):
        child_seed = int(child.generate_state(1)[0])
        name = f'{family}-{child_seed}'
        if family == 'logconcave_mixture':
            spec = InstanceSpec(kind=InstanceKind.LOGCONCAVE_MIXTURE, dim=dim,
                                params={'seed': child_seed})
            path = out_dir / f'{name}.grid'
            save_grid_function(build_function(spec).function, path)
            spec.to_yaml_file(out_dir / f'{name}.yaml')
        else:
            spec = InstanceSpec(kind=InstanceKind.BODY_FAMILY, dim=max(dim, 2),
                                params={'family': family, 'seed': child_seed})
            path = out_dir / f'{name}.json'
            save_body(build_body(spec), path)
        logger.info(f'generated {spec} into {path}')
        written.append(path)
    return written
