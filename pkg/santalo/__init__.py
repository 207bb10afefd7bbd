from __future__ import annotations

import io
import json
import logging
import math
import os

try:
    from attrs import asdict, define, field
except ModuleNotFoundError:
    from attr import asdict, define, field
from configparser import ConfigParser
from enum import Enum
from pathlib import Path
from typing import Any, Optional, TypeVar

import jinja2
import numpy as np
import numpy.typing as npt
import ruamel.yaml

FloatArray = npt.NDArray[np.float64]

# one-sided relative tolerance of the functional bounds, absorbs the upward
# bias of the discrete polar transform
BOUND_TOLERANCE = 3e-2
BODY_TOLERANCE = 1e-2
LEMMA_TOLERANCE = 1e-3
BARYCENTER_TOLERANCE = 1e-6
PREMISE_TOLERANCE = 1e-9
PAIR_LIMIT = 10**8
MARGIN_SEED = 20090101

SerializableT = TypeVar('SerializableT', bound='Serializable')
SettingsT = TypeVar('SettingsT', bound='Settings')


class SantaloError(Exception):
    """ Base class of every error raised by santalo """


class ZeroMass(SantaloError):
    """ The function integrates to zero """


class EmptySupport(SantaloError):
    """ The function has no finite sample """


class NotBracketed(SantaloError):
    """ The requested mass fraction cannot be reached inside the box """


class DegenerateSplit(SantaloError):
    """ One side of the hyperplane carries no mass """


class NoIntersection(SantaloError):
    """ The barycenters do not lie strictly on opposite sides of the hyperplane """


class PremiseViolated(SantaloError):
    """ The inputs do not satisfy the hypothesis of the checked statement """


class InterpolationOutOfBox(SantaloError):
    """ A ray integral leaves the sampled box before the integrand decays """


class Unbounded(SantaloError):
    """ The polar body is unbounded """


class CentroidNotInterior(SantaloError):
    """ The centroid lies outside the body """


class BoxTooSmall(SantaloError):
    """ The sampling box truncates a non-negligible part of the function """


class GridFormatError(SantaloError):
    """ A grid or body file is malformed or unreadable """


class ConfigError(SantaloError):
    """ A run configuration is invalid """


class Theorem(Enum):
    """ Statements a VerificationReport can refer to """

    THM1 = 'Thm1'
    THM2 = 'Thm2'
    THM3_LAMBDA = 'Thm3Lambda'
    THM3_MEDIAN = 'Thm3Median'
    LEMMA1 = 'Lemma1'
    EQ8 = 'Eq8'
    COROLLARY = 'Corollary'
    INDUCTION_STEP = 'InductionStep'
    CN_IDENTITY = 'CnIdentity'

    def __str__(self) -> str:
        return self.value


class TransformMethod(Enum):
    """ Implementations of the discrete Legendre-Fenchel transform """

    BRUTE_FORCE = 'BruteForce'
    FAST_LLT = 'FastLLT'

    def __str__(self) -> str:
        return self.value


class InstanceKind(Enum):
    """ Families an InstanceSpec can describe """

    GAUSSIAN = 'gaussian'
    SCALED_GAUSSIAN = 'scaled_gaussian'
    EXPONENTIAL = 'exponential'
    INDICATOR_INTERVAL = 'indicator_interval'
    INDICATOR_BOX = 'indicator_box'
    LOGCONCAVE_MIXTURE = 'logconcave_mixture'
    GRID_FILE = 'grid_file'
    BODY_FAMILY = 'body_family'
    BODY_FILE = 'body_file'

    @classmethod
    def values(cls: type[InstanceKind]) -> list[str]:
        return [str(v) for v in InstanceKind.__members__.values()]

    def __str__(self) -> str:
        return self.value


class BodyFamily(Enum):
    """ Analytic star body families """

    BALL = 'ball'
    ELLIPSOID = 'ellipsoid'
    CUBE = 'cube'
    CROSS_POLYTOPE = 'cross-polytope'
    COSINE_PERTURBED = 'cosine-perturbed'
    RANDOM_STAR = 'random-star'

    @classmethod
    def values(cls: type[BodyFamily]) -> list[str]:
        return [str(v) for v in BodyFamily.__members__.values()]

    def __str__(self) -> str:
        return self.value


class RunCommand(Enum):
    """ Verifiers a batch run can execute """

    FUNCTIONAL = 'functional'
    AKM = 'akm'
    STAR = 'star'
    CN = 'cn'
    SPLIT = 'split'
    MEDIAN = 'median'
    LEMMA = 'lemma'
    HALFLINE = 'halfline'
    SHIFT = 'shift'
    INDUCTION = 'induction'

    def __str__(self) -> str:
        return self.value


class OutputFormat(Enum):
    JSON = 'json'
    CSV = 'csv'

    def __str__(self) -> str:
        return self.value


def yaml_parser() -> ruamel.yaml.YAML:
    """ Create standardized YAML parser """

    yaml = ruamel.yaml.YAML(typ='safe')

    yaml.indent(mapping=4, sequence=4, offset=2)
    yaml.default_flow_style = False
    yaml.allow_unicode = True
    yaml.encoding = 'utf-8'

    # For simpler dumping of well-known classes
    def _represent_enum(
            representer: ruamel.yaml.representer.Representer,
            data: Enum) -> ruamel.yaml.nodes.ScalarNode:
        return representer.represent_scalar('tag:yaml.org,2002:str', data.value)

    yaml.representer.add_representer(Theorem, _represent_enum)
    yaml.representer.add_representer(TransformMethod, _represent_enum)
    yaml.representer.add_representer(InstanceKind, _represent_enum)
    yaml.representer.add_representer(BodyFamily, _represent_enum)
    yaml.representer.add_representer(RunCommand, _represent_enum)
    yaml.representer.add_representer(OutputFormat, _represent_enum)

    return yaml


def default_template_environment() -> jinja2.Environment:
    """
    Create a Jinja2 environment with default settings.

    Enables block trimming and left strip.
    """

    environment = jinja2.Environment()

    environment.trim_blocks = True
    environment.lstrip_blocks = True

    return environment


def render_template(
        template: str,
        environment: Optional[jinja2.Environment] = None,
        **variables: Any,
        ) -> str:
    """
    Render a template recursively.

    :param template: template to render.
    :param environment: Jinja2 environment to use.
    :param variables: variables to pass to the template.
    """

    environment = environment or default_template_environment()
    old = template
    try:
        while True:
            new = environment.from_string(old).render(**variables).strip()
            if old == new:
                return new
            old = new

    except jinja2.exceptions.TemplateSyntaxError as exc:
        raise SantaloError(
            f"Could not parse template at line {exc.lineno}.") from exc

    except jinja2.exceptions.TemplateError as exc:
        raise SantaloError("Could not render template.") from exc


@define
class Settings:
    """ Class storing santalo settings """

    threads: int = field(default=1, converter=int)
    pair_limit: int = field(default=PAIR_LIMIT, converter=lambda v: int(float(v)))
    margin_seed: int = field(default=MARGIN_SEED, converter=int)
    tolerance: float = field(default=BOUND_TOLERANCE, converter=float)
    body_tolerance: float = field(default=BODY_TOLERANCE, converter=float)

    @threads.validator
    def _check_threads(self, attribute: Any, value: int) -> None:
        if value < 0:
            raise ConfigError(f"threads must be non-negative, got {value}")

    @pair_limit.validator
    def _check_pair_limit(self, attribute: Any, value: int) -> None:
        if value < 1:
            raise ConfigError(f"pair_limit must be positive, got {value}")

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    @classmethod
    def load(cls: type[SettingsT], config_file: Path) -> SettingsT:
        cp = ConfigParser()
        cp.read(config_file)

        def _get(
                cp: ConfigParser,
                path: str,
                envvar: str,
                default: Any) -> str:
            section, key = path.split('/', 1)
            # environment wins over the config file
            env = os.environ.get(envvar, None) if envvar else None
            return env if env else cp.get(section, key, fallback=str(default))

        try:
            return cls(
                threads=_get(
                    cp,
                    'santalo/threads',
                    'SANTALO_THREADS',
                    1),
                pair_limit=_get(
                    cp,
                    'santalo/pair_limit',
                    'SANTALO_PAIR_LIMIT',
                    PAIR_LIMIT),
                margin_seed=_get(
                    cp,
                    'santalo/margin_seed',
                    'SANTALO_MARGIN_SEED',
                    MARGIN_SEED),
                tolerance=_get(
                    cp,
                    'santalo/tolerance',
                    'SANTALO_TOLERANCE',
                    BOUND_TOLERANCE),
                body_tolerance=_get(
                    cp,
                    'starbody/tolerance',
                    'SANTALO_BODY_TOLERANCE',
                    BODY_TOLERANCE),
                )
        except ValueError as exc:
            raise ConfigError(f"Invalid value in settings file {config_file}: {exc}") from exc


@define
class Serializable:
    """ A class whose instances can be serialized into YAML """

    def to_dict(self) -> dict[str, Any]:
        return asdict(self, recurse=True)

    def to_yaml(self) -> str:
        output = io.StringIO()

        parser = yaml_parser()
        parser.width = 4096
        parser.dump(self.to_dict(), output)

        return output.getvalue()

    def to_yaml_file(self, filepath: Path) -> None:
        filepath.write_text(self.to_yaml())

    @classmethod
    def from_dict(cls: type[SerializableT], data: dict[str, Any]) -> SerializableT:
        return cls(**data)

    @classmethod
    def from_yaml(cls: type[SerializableT], serialized: str) -> SerializableT:
        data = yaml_parser().load(serialized)

        return cls.from_dict(data)

    @classmethod
    def from_yaml_file(cls: type[SerializableT], filepath: Path) -> SerializableT:
        return cls.from_yaml(filepath.read_text())


def _finite_or_nan(value: Any) -> float:
    return float('nan') if value is None else float(value)


@define
class VerificationReport(Serializable):
    """ Outcome of one numerical check of a bound """

    theorem: Theorem = field(converter=Theorem)
    product: float = field(converter=_finite_or_nan)
    bound: float = field(converter=_finite_or_nan)
    margin: float = field(converter=_finite_or_nan)
    passed: bool = field(converter=bool)
    lambda_: Optional[float] = field(
        default=None,
        converter=lambda v: None if v is None else float(v))
    grid_meta: dict[str, Any] = field(factory=dict)
    flags: list[str] = field(factory=list)

    @classmethod
    def check(cls,
              theorem: Theorem,
              product: float,
              bound: float,
              tolerance: float,
              *,
              lambda_: Optional[float] = None,
              grid_meta: Optional[dict[str, Any]] = None,
              flags: Optional[list[str]] = None) -> VerificationReport:
        """ One-sided check, product <= bound * (1 + tolerance) """

        meta = dict(grid_meta or {})
        meta.setdefault('tolerance', tolerance)
        return cls(
            theorem=theorem,
            product=product,
            bound=bound,
            margin=bound - product,
            passed=bool(np.isfinite(product) and product <= bound * (1 + tolerance)),
            lambda_=lambda_,
            grid_meta=meta,
            flags=list(flags or []))

    @classmethod
    def identity(cls,
                 theorem: Theorem,
                 product: float,
                 bound: float,
                 tolerance: float,
                 *,
                 grid_meta: Optional[dict[str, Any]] = None,
                 flags: Optional[list[str]] = None) -> VerificationReport:
        """ Two-sided check, |product - bound| <= tolerance * |bound| """

        meta = dict(grid_meta or {})
        meta.setdefault('tolerance', tolerance)
        return cls(
            theorem=theorem,
            product=product,
            bound=bound,
            margin=bound - product,
            passed=bool(abs(product - bound) <= tolerance * abs(bound)),
            grid_meta=meta,
            flags=list(flags or []))

    @classmethod
    def failure(cls,
                theorem: Theorem,
                error: Exception,
                grid_meta: Optional[dict[str, Any]] = None) -> VerificationReport:
        return cls(
            theorem=theorem,
            product=None,
            bound=None,
            margin=None,
            passed=False,
            grid_meta=dict(grid_meta or {}),
            flags=[f'error:{type(error).__name__}: {error}'])

    def to_dict(self) -> dict[str, Any]:
        return {
            'theorem': self.theorem.value,
            'product': self.product,
            'bound': self.bound,
            'margin': self.margin,
            'lambda': self.lambda_,
            'grid_meta': self.grid_meta,
            'passed': self.passed,
            'flags': list(self.flags),
            }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VerificationReport:
        data = dict(data)
        data['lambda_'] = data.pop('lambda', None)
        return cls(**data)

    def describe(self) -> str:
        lam = '' if self.lambda_ is None else f' lambda={self.lambda_:.4f}'
        verdict = 'passed' if self.passed else 'FAILED'
        return (f'{self.theorem}: product={self.product:.6g} bound={self.bound:.6g}'
                f'{lam} {verdict}')


def _json_value(value: Any) -> Any:
    """ Non-finite floats become null, JSON has no literal for them """

    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def reports_to_json(reports: list[VerificationReport]) -> str:
    data = [_json_value(r.to_dict()) for r in reports]
    return json.dumps(data, indent=2, allow_nan=False) + '\n'


def gaussian_bound(dim: int) -> float:
    """ The (2 pi)^n bound of the functional inequality """

    return float((2 * math.pi) ** dim)


def split_bound(dim: int, lambda_: float) -> float:
    """ The (2 pi)^n / (4 lambda (1 - lambda)) bound of a split at mass fraction lambda """

    return gaussian_bound(dim) / (4 * lambda_ * (1 - lambda_))


@define
class CLIContext:
    """ State information about one santalo invocation """

    logger: logging.Logger
    settings: Settings

    def enter_command(self, command: str) -> None:
        self.logger.handlers[0].formatter = logging.Formatter(
            f'[%(asctime)s] [{command.ljust(8, " ")}] %(message)s',
            )
