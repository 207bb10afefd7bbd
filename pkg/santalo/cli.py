import csv
import io
import logging
import multiprocessing
import os
import sys
from pathlib import Path
from typing import Any, Callable, Optional

try:
    from attrs import define, field, fields, frozen
except ModuleNotFoundError:
    from attr import define, field, fields, frozen

import click
import numpy as np

from . import (
    CLIContext,
    ConfigError,
    InstanceKind,
    OutputFormat,
    RunCommand,
    SantaloError,
    Serializable,
    Settings,
    Theorem,
    TransformMethod,
    VerificationReport,
    render_template,
    reports_to_json,
    split_bound,
    yaml_parser,
    )
from .grid import (
    Box,
    Hyperplane,
    as_vector,
    find_quantile_offset,
    integrate,
    save_grid_function,
    translate,
    )
from .instances import (
    GAUSSIAN_COUNTS,
    InstanceSpec,
    build_body,
    build_function,
    generate,
    )
from .polar import polar_function
from .starbody import verify_cn_identity, verify_lutwak
from .theorems import (
    centered_polar,
    construct_split,
    median_hyperplane,
    reduce_dimension,
    sampled_polar,
    santalo_point_search,
    verify_halfline_split,
    verify_induction_step,
    verify_shift_identity,
    verify_thm1,
    verify_thm2,
    verify_thm3_lambda,
    verify_thm3_median,
    )

SANTALO_DEFAULT_CONFIG = '$HOME/.santalo'

EXIT_FAILED = 1
EXIT_CONFIG = 2

COMMAND_THEOREMS = {
    RunCommand.FUNCTIONAL: Theorem.THM2,
    RunCommand.AKM: Theorem.THM1,
    RunCommand.STAR: Theorem.COROLLARY,
    RunCommand.CN: Theorem.CN_IDENTITY,
    RunCommand.SPLIT: Theorem.THM3_LAMBDA,
    RunCommand.MEDIAN: Theorem.THM3_MEDIAN,
    RunCommand.LEMMA: Theorem.LEMMA1,
    RunCommand.HALFLINE: Theorem.LEMMA1,
    RunCommand.SHIFT: Theorem.EQ8,
    RunCommand.INDUCTION: Theorem.INDUCTION_STEP,
    }
BODY_COMMANDS = (RunCommand.STAR, RunCommand.CN)

DEFAULT_LAMBDA_SWEEP = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
DEFAULT_RESOLUTION_SWEEP = [101, 201, 401, 801, 1601]

SUMMARY_TEMPLATE = """
{{ command }}: {{ reports | length }} reports, {{ failed | length }} failed
{% for report in reports %}
  {{ loop.index }}. {{ report.grid_meta.get('instance', '') }} {{ report.describe() }}
{% for flag in report.flags %}
     flag {{ flag }}
{% endfor %}
{% endfor %}
"""

logging.basicConfig(
    format='%(asctime)s %(message)s',
    datefmt='%m/%d/%Y %I:%M:%S %p',
    level=logging.INFO)


def parse_box(text: str, counts: Optional[int], dim: int) -> Box:
    """ ``-8:8,-4:4`` into a box, a single range applies to every axis """

    try:
        ranges = [tuple(float(v) for v in part.split(':')) for part in text.split(',')]
    except ValueError as exc:
        raise ConfigError(f"--box: cannot parse '{text}', expected lower:upper,...") from exc
    if any(len(r) != 2 for r in ranges):
        raise ConfigError(f"--box: expected lower:upper for every axis, got '{text}'")
    if len(ranges) == 1:
        ranges = ranges * dim
    try:
        return Box(lower=[r[0] for r in ranges],
                   upper=[r[1] for r in ranges],
                   counts=[counts or GAUSSIAN_COUNTS.get(len(ranges), 65)] * len(ranges))
    except ValueError as exc:
        raise ConfigError(f"--box: {exc}") from exc


def parse_vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(',')]
    except ValueError as exc:
        raise ConfigError(f"--direction: cannot parse '{text}'") from exc


def _as_instances(value: Any) -> list[InstanceSpec]:
    instances = []
    for item in value or []:
        if isinstance(item, InstanceSpec):
            instances.append(item)
        elif isinstance(item, str):
            instances.append(InstanceSpec.parse(item))
        else:
            instances.append(InstanceSpec.from_dict(item))
    return instances


def _as_formats(value: Any) -> list[OutputFormat]:
    if isinstance(value, str):
        value = value.split(',')
    return [OutputFormat(v.strip() if isinstance(v, str) else v) for v in value]


@define
class RunConfig(Serializable):
    """ A batch of verifications of one kind over a list of instances """

    command: RunCommand = field(converter=RunCommand)
    instances: list[InstanceSpec] = field(factory=list, converter=_as_instances)
    directions: list[list[float]] = field(factory=list)
    lambda_targets: list[float] = field(factory=list)
    output_path: Optional[str] = None
    formats: list[OutputFormat] = field(factory=lambda: [OutputFormat.JSON],
                                        converter=_as_formats)
    global_seed: int = field(default=0, converter=int)
    method: TransformMethod = field(default=TransformMethod.FAST_LLT, converter=TransformMethod)

    def validate(self) -> None:
        if not self.instances:
            raise ConfigError("instances: at least one instance is required")
        for target in self.lambda_targets:
            if not 0 < target < 1:
                raise ConfigError(f"lambda_targets: {target} is not in (0, 1)")
        if self.global_seed < 0:
            raise ConfigError(f"global_seed: must be non-negative, got {self.global_seed}")
        for spec in self.instances:
            if spec.is_body != (self.command in BODY_COMMANDS):
                expected = 'a body' if self.command in BODY_COMMANDS else 'a function'
                raise ConfigError(f"instances: {self.command} needs {expected}, got {spec}")
            if self.command is RunCommand.INDUCTION and spec.dim == 1:
                raise ConfigError(f"instances: induction needs dim >= 2, got {spec}")
        for direction in self.directions:
            if not any(direction):
                raise ConfigError("directions: the zero vector is not a direction")

    def to_dict(self) -> dict[str, Any]:
        return {
            'command': self.command.value,
            'instances': [spec.to_dict() for spec in self.instances],
            'directions': self.directions,
            'lambda_targets': self.lambda_targets,
            'output_path': self.output_path,
            'formats': [f.value for f in self.formats],
            'global_seed': self.global_seed,
            'method': self.method.value,
            }

    @classmethod
    def load(cls, path: Path, **overrides: Any) -> 'RunConfig':
        """ Read a YAML or JSON run configuration, ``overrides`` that are set win """

        try:
            data = yaml_parser().load(path.read_text()) or {}
        except Exception as exc:
            raise ConfigError(f"Cannot read run configuration {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"Run configuration {path} is not a mapping")
        data.update({k: v for k, v in overrides.items() if v is not None and v != []})
        return cls.build(data)

    @classmethod
    def build(cls, data: dict[str, Any]) -> 'RunConfig':
        """ Validate ``data`` into a configuration, errors name the offending field """

        unknown = sorted(set(data) - {a.name for a in fields(cls)})
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown field")
        if 'command' not in data:
            raise ConfigError("command: field is required")
        for name, convert in (('command', RunCommand),
                              ('method', TransformMethod),
                              ('formats', _as_formats)):
            if name not in data:
                continue
            try:
                convert(data[name])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: invalid value {data[name]!r}") from exc
        try:
            config = cls(**data)
        except ConfigError as exc:
            raise ConfigError(f"instances: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Invalid run configuration: {exc}") from exc
        config.validate()
        return config


@frozen
class Task:
    """ One verification of one instance, shipped to a worker """

    index: int
    command: RunCommand
    spec: InstanceSpec
    settings: Settings
    method: TransformMethod
    seed: int
    direction: Optional[tuple[float, ...]] = None
    lambda_: Optional[float] = None


def _instance_meta(task: Task) -> dict[str, Any]:
    return {'instance': str(task.spec), 'dim': task.spec.dim, 'task_seed': task.seed}


def _direction(task: Task) -> list[float]:
    assert task.spec.dim is not None
    if task.direction is not None:
        return list(as_vector(task.direction, task.spec.dim))
    return [1.0] + [0.0] * (task.spec.dim - 1)


def _verify(task: Task) -> list[VerificationReport]:
    logger = logging.getLogger()
    settings = task.settings
    command = task.command

    if command is RunCommand.STAR:
        return verify_lutwak(build_body(task.spec), tolerance=settings.body_tolerance,
                             seed=task.seed, logger=logger)
    if command is RunCommand.CN:
        return [verify_cn_identity(build_body(task.spec), tolerance=settings.body_tolerance,
                                   logger=logger)]

    instance = build_function(task.spec)
    f, polar_box = instance.function, instance.polar_box
    common: dict[str, Any] = {'tolerance': settings.tolerance, 'method': task.method,
                              'logger': logger}
    margins: dict[str, Any] = {'pair_limit': settings.pair_limit, 'seed': settings.margin_seed,
                               'logger': logger}

    if command is RunCommand.FUNCTIONAL:
        return [verify_thm2(f, polar_box, **common)]
    if command is RunCommand.AKM:
        return [verify_thm1(f, polar_box, **common)]
    if command is RunCommand.MEDIAN:
        return [verify_thm3_median(f, _direction(task), polar_box, **common)]
    if command is RunCommand.SPLIT:
        normal = Hyperplane.along(_direction(task)).vector
        offset = find_quantile_offset(f, normal, task.lambda_ or 0.5, logger)
        return [verify_thm3_lambda(f, Hyperplane(normal=normal, offset=offset), polar_box,
                                   **common)]
    if command in (RunCommand.LEMMA, RunCommand.HALFLINE):
        offset = 0.0
        if command is RunCommand.HALFLINE:
            offset = find_quantile_offset(f, [1.0], task.lambda_ or 0.5, logger)
        return verify_halfline_split(f, offset, method=task.method, **margins)
    if command is RunCommand.SHIFT:
        centered = centered_polar(f, polar_box, task.method, logger)
        h = centered.translated(f)
        split = construct_split(h, median_hyperplane(h, _direction(task), logger), logger)
        return [verify_shift_identity(h, centered.polar, split.z, split.lambda_,
                                      tolerance=settings.tolerance, **margins)]

    # induction
    hyperplane = median_hyperplane(f, _direction(task), logger)
    split = construct_split(f, hyperplane, logger)
    shifted = translate(f, split.z)
    polar = sampled_polar(shifted, polar_box, task.method, logger)
    reduction = reduce_dimension(shifted, polar, hyperplane.shifted(split.z), **margins)
    return verify_induction_step(reduction, tolerance=settings.tolerance,
                                 logger=logger).reports()


def run_task(task: Task) -> list[VerificationReport]:
    """ Run one task, turning an instance error into a failed report """

    try:
        reports = _verify(task)
    except (SantaloError, ValueError) as exc:
        logging.getLogger().error(f'{task.spec}: {type(exc).__name__}: {exc}')
        reports = [VerificationReport.failure(COMMAND_THEOREMS[task.command], exc)]
    for report in reports:
        report.grid_meta.update(_instance_meta(task))
        if task.spec.seed is not None:
            report.grid_meta.setdefault('seed', task.spec.seed)
        if task.direction is not None:
            report.grid_meta['direction'] = list(task.direction)
    return reports


def build_tasks(config: RunConfig, settings: Settings) -> list[Task]:
    directions: list[Optional[tuple[float, ...]]] = [
        tuple(d) for d in config.directions] or [None]
    lambdas: list[Optional[float]] = list(config.lambda_targets) or [None]
    seeds = np.random.SeedSequence(config.global_seed).spawn(len(config.instances))

    tasks = []
    for spec, seed in zip(config.instances, seeds):
        for direction in directions:
            for lambda_ in lambdas:
                tasks.append(Task(
                    index=len(tasks),
                    command=config.command,
                    spec=spec,
                    settings=settings,
                    method=config.method,
                    seed=int(seed.generate_state(1)[0]),
                    direction=direction,
                    lambda_=lambda_))
    return tasks


def reports_to_csv(reports: list[VerificationReport]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(['theorem', 'instance', 'seed', 'lambda', 'product', 'bound', 'margin',
                     'passed'])
    for report in reports:
        writer.writerow([
            report.theorem.value,
            report.grid_meta.get('instance', ''),
            report.grid_meta.get('task_seed', ''),
            '' if report.lambda_ is None else repr(report.lambda_),
            repr(report.product),
            repr(report.bound),
            repr(report.margin),
            str(report.passed).lower(),
            ])
    return output.getvalue()


def run(ctx: CLIContext, config: RunConfig) -> int:
    """ Execute a batch, write the reports and return the exit status """

    tasks = build_tasks(config, ctx.settings)
    workers = min(ctx.settings.workers, len(tasks))
    ctx.logger.info(f'Running {len(tasks)} {config.command} verifications with {workers} workers')

    if workers > 1:
        with multiprocessing.Pool(workers) as worker_pool:
            results = worker_pool.map(run_task, tasks)
    else:
        results = [run_task(task) for task in tasks]
    reports = [report for result in results for report in result]

    if config.output_path:
        base = Path(config.output_path)
        base.parent.mkdir(parents=True, exist_ok=True)
        if OutputFormat.JSON in config.formats:
            base.with_suffix('.json').write_text(reports_to_json(reports))
            ctx.logger.info(f'Reports written to {base.with_suffix(".json")}')
        if OutputFormat.CSV in config.formats:
            base.with_suffix('.csv').write_text(reports_to_csv(reports))
            ctx.logger.info(f'Reports written to {base.with_suffix(".csv")}')
    else:
        click.echo(reports_to_json(reports), nl=False)

    failed = [report for report in reports if not report.passed]
    ctx.logger.info(render_template(
        SUMMARY_TEMPLATE, command=str(config.command), reports=reports, failed=failed))
    return EXIT_FAILED if failed else 0


@click.group()
@click.option(
    '--conf-file',
    default='',
    help='Path to santalo configuration file.',
    )
@click.option(
    '--debug',
    is_flag=True,
    default=False,
    help='Enable debug logging',
    )
@click.pass_context
def main(click_context: click.Context, conf_file: str, debug: bool) -> None:

    # when user has specified config file, check its presence
    if conf_file:
        if not Path(conf_file).exists():
            raise FileNotFoundError(f"Configuration file '{conf_file}' does not exist.")
    else:
        conf_file = SANTALO_DEFAULT_CONFIG

    ctx = CLIContext(logger=logging.getLogger(), settings=Settings())
    click_context.obj = ctx
    try:
        ctx.settings = Settings.load(Path(os.path.expandvars(conf_file)))
    except ConfigError as exc:
        ctx.logger.error(str(exc))
        sys.exit(EXIT_CONFIG)

    if debug:
        ctx.logger.setLevel(logging.DEBUG)
    ctx.logger.debug(f'settings={ctx.settings}')


def _instance_options(func: Callable[..., Any]) -> Callable[..., Any]:
    options = [
        click.option(
            '--instance', 'instances',
            default=[],
            multiple=True,
            help='Instance to verify, e.g. "gaussian" or "scaled_gaussian(a=2)".',
            ),
        click.option(
            '--dim',
            type=click.IntRange(1, 3),
            default=None,
            help='Dimension of the instances.',
            ),
        click.option(
            '--resolution',
            type=click.IntRange(min=2),
            default=None,
            help='Grid points per axis (angles for bodies).',
            ),
        click.option(
            '--box',
            default='',
            help='Sampling box override, e.g. "-8:8,-8:8".',
            ),
        click.option(
            '--polar-box',
            default='',
            help='Polar sampling box override, e.g. "-8:8".',
            ),
        click.option(
            '--method',
            type=click.Choice([str(m) for m in TransformMethod]),
            default=None,
            help='Legendre transform implementation.',
            ),
        ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    options = [
        click.option(
            '--config', 'config_file',
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            default=None,
            help='YAML or JSON run configuration, command-line options win.',
            ),
        click.option(
            '--lambda', 'lambdas',
            type=float,
            default=[],
            multiple=True,
            help='Mass fraction of the split hyperplane.',
            ),
        click.option(
            '--direction', 'directions',
            default=[],
            multiple=True,
            help='Normal of the split hyperplane, e.g. "1,0".',
            ),
        click.option(
            '--seed',
            type=click.IntRange(min=0),
            default=None,
            help='Global seed of the run.',
            ),
        click.option(
            '--out',
            default=None,
            help='Output path without suffix, reports are printed when omitted.',
            ),
        click.option(
            '--format', 'formats',
            default=None,
            help='Comma separated output formats: json, csv.',
            ),
        ]
    for option in reversed(options):
        func = option(func)
    return _instance_options(func)


def _specs(instances: tuple[str, ...],
           dim: Optional[int],
           resolution: Optional[int],
           box: str,
           polar_box: str) -> list[InstanceSpec]:
    specs = []
    for text in instances:
        spec = InstanceSpec.parse(text, dim=dim, resolution=resolution)
        assert spec.dim is not None
        if box:
            spec.box = parse_box(box, resolution, spec.dim)
        if polar_box:
            spec.polar_box = parse_box(polar_box, resolution, spec.dim)
        specs.append(spec)
    return specs


def _run_command(ctx: CLIContext, command: RunCommand, **options: Any) -> None:
    ctx.enter_command(str(command))
    try:
        overrides: dict[str, Any] = {
            'command': command,
            'instances': _specs(options['instances'], options['dim'], options['resolution'],
                                options['box'], options['polar_box']),
            'directions': [parse_vector(d) for d in options['directions']],
            'lambda_targets': list(options['lambdas']),
            'output_path': options['out'],
            'formats': options['formats'],
            'global_seed': options['seed'],
            'method': options['method'],
            }
        if options['config_file']:
            config = RunConfig.load(
                options['config_file'],
                **{k: v for k, v in overrides.items() if k != 'command'})
            if config.command is not command:
                raise ConfigError(
                    f"command: configuration is for '{config.command}', not '{command}'")
        else:
            config = RunConfig.build({k: v for k, v in overrides.items()
                                      if v is not None and v != []})
    except ConfigError as exc:
        ctx.logger.error(str(exc))
        sys.exit(EXIT_CONFIG)

    sys.exit(run(ctx, config))


@main.group(name='verify')
def cmd_verify() -> None:
    """ Verify an inequality over a batch of instances """


def _verify_command(command: RunCommand, help_text: str) -> None:

    @cmd_verify.command(name=str(command), help=help_text)
    @_run_options
    @click.pass_obj
    def _command(ctx: CLIContext, **options: Any) -> None:
        _run_command(ctx, command, **options)


_verify_command(RunCommand.FUNCTIONAL, 'Volume product of the barycentered function.')
_verify_command(RunCommand.AKM, 'Volume product at the point centering the polar.')
_verify_command(RunCommand.STAR, 'Volume product of a recentered star body.')
_verify_command(RunCommand.CN, 'Integral of exp(-N^2/2) against c_n times the volume.')
_verify_command(RunCommand.SPLIT, 'Split bound at the hyperplane of mass fraction lambda.')
_verify_command(RunCommand.MEDIAN, 'Split bound at the median hyperplane.')
_verify_command(RunCommand.LEMMA, 'Half-line product bound at the origin.')
_verify_command(RunCommand.HALFLINE, 'Half-line products at the split of mass fraction lambda.')
_verify_command(RunCommand.SHIFT, 'Shift inequality for a centered dual function.')
_verify_command(RunCommand.INDUCTION, 'Dimension reduction and induction step.')


@main.group(name='transform')
def cmd_transform() -> None:
    """ Discrete transforms """


@cmd_transform.command(name='polar')
@_instance_options
@click.option(
    '--out',
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help='Grid file to write the polar function into.',
    )
@click.pass_obj
def cmd_transform_polar(ctx: CLIContext, out: Path, **options: Any) -> None:
    ctx.enter_command('polar')
    try:
        specs = _specs(options['instances'], options['dim'], options['resolution'],
                       options['box'], options['polar_box'])
        if len(specs) != 1:
            raise ConfigError("instances: exactly one instance is required")
        instance = build_function(specs[0])
    except ConfigError as exc:
        ctx.logger.error(str(exc))
        sys.exit(EXIT_CONFIG)

    method = TransformMethod(options['method'] or TransformMethod.FAST_LLT)
    try:
        result = polar_function(instance.function, instance.polar_box, method)
    except SantaloError as exc:
        ctx.logger.error(f'{specs[0]}: {exc}')
        sys.exit(EXIT_FAILED)
    save_grid_function(result.output, out)
    ctx.logger.info(
        f'Polar of {specs[0]} written to {out}, integral {integrate(result.output):.8g}')


@main.group(name='search')
def cmd_search() -> None:
    """ Searches over translations """


@cmd_search.command(name='santalo-point')
@_instance_options
@click.pass_obj
def cmd_search_santalo_point(ctx: CLIContext, **options: Any) -> None:
    ctx.enter_command('search')
    try:
        specs = _specs(options['instances'], options['dim'], options['resolution'],
                       options['box'], options['polar_box'])
        if not specs:
            raise ConfigError("instances: at least one instance is required")
        instances = [build_function(spec) for spec in specs]
    except ConfigError as exc:
        ctx.logger.error(str(exc))
        sys.exit(EXIT_CONFIG)

    method = TransformMethod(options['method'] or TransformMethod.FAST_LLT)
    results = []
    for instance in instances:
        try:
            point = santalo_point_search(instance.function, instance.polar_box, method=method,
                                         logger=ctx.logger)
        except SantaloError as exc:
            ctx.logger.error(f'{instance.spec}: {exc}')
            sys.exit(EXIT_FAILED)
        ctx.logger.info(f'{instance.spec}: z={point.z.tolist()} product={point.product:.8g} '
                        f'after {point.evaluations} evaluations')
        results.append({'instance': str(instance.spec), 'z': point.z.tolist(),
                        'product': point.product, 'evaluations': point.evaluations})
    output = io.StringIO()
    yaml_parser().dump(results, output)
    click.echo(output.getvalue(), nl=False)


@main.command(name='generate')
@click.option(
    '--seed',
    type=click.IntRange(min=0),
    required=True,
    help='Seed the instance seeds are spawned from.',
    )
@click.option(
    '--family',
    type=click.Choice(['logconcave_mixture', 'random-star']),
    required=True,
    help='Random family to draw from.',
    )
@click.option(
    '--count',
    type=click.IntRange(min=1),
    default=1,
    help='Number of instances.',
    )
@click.option(
    '--dim',
    type=click.IntRange(1, 3),
    default=1,
    help='Dimension of the instances.',
    )
@click.option(
    '--out',
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help='Directory to write the instances into.',
    )
@click.pass_obj
def cmd_generate(ctx: CLIContext, seed: int, family: str, count: int, dim: int,
                 out: Path) -> None:
    ctx.enter_command('generate')
    try:
        paths = generate(seed, family, count, out, dim=dim, logger=ctx.logger)
    except ConfigError as exc:
        ctx.logger.error(str(exc))
        sys.exit(EXIT_CONFIG)
    for path in paths:
        click.echo(str(path))


def emit_plot_data(rows: list[tuple[float, float, float]]) -> str:
    """ CSV with the columns x, product and bound """

    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(['x', 'product', 'bound'])
    for x, product, bound in rows:
        writer.writerow([repr(x), repr(product), repr(bound)])
    return output.getvalue()


def lambda_sweep(ctx: CLIContext,
                 spec: InstanceSpec,
                 lambdas: list[float],
                 direction: Optional[list[float]],
                 method: TransformMethod) -> list[tuple[float, float, float]]:
    """ Split products against ``(2 pi)^n / (4 lambda (1 - lambda))`` """

    instance = build_function(spec)
    f = instance.function
    normal = Hyperplane.along(direction or [1.0] + [0.0] * (f.dim - 1)).vector
    rows = []
    for target in lambdas:
        offset = find_quantile_offset(f, normal, target, ctx.logger)
        report = verify_thm3_lambda(f, Hyperplane(normal=normal, offset=offset),
                                    instance.polar_box, tolerance=ctx.settings.tolerance,
                                    method=method, logger=ctx.logger)
        rows.append((target, report.product, split_bound(f.dim, target)))
    return rows


def resolution_sweep(ctx: CLIContext,
                     spec: InstanceSpec,
                     resolutions: list[int],
                     method: TransformMethod) -> list[tuple[float, float, float]]:
    """ Products of the barycentered function as the grid is refined """

    rows = []
    for resolution in resolutions:
        refined = InstanceSpec.from_dict({**spec.to_dict(), 'resolution': resolution})
        instance = build_function(refined)
        report = verify_thm2(instance.function, instance.polar_box,
                             tolerance=ctx.settings.tolerance, method=method,
                             logger=ctx.logger)
        rows.append((float(resolution), report.product, report.bound))
    return rows


@main.command(name='plot-data')
@_instance_options
@click.option(
    '--sweep',
    type=click.Choice(['lambda', 'resolution']),
    default='lambda',
    help='Quantity on the x axis.',
    )
@click.option(
    '--value', 'values',
    type=float,
    default=[],
    multiple=True,
    help='Sweep values, mass fractions or grid resolutions.',
    )
@click.option(
    '--direction',
    default='',
    help='Normal of the split hyperplane, e.g. "1,0".',
    )
@click.option(
    '--out',
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help='CSV file, printed when omitted.',
    )
@click.pass_obj
def cmd_plot_data(ctx: CLIContext, sweep: str, values: tuple[float, ...], direction: str,
                  out: Optional[Path], **options: Any) -> None:
    ctx.enter_command('plot')
    try:
        specs = _specs(options['instances'], options['dim'], None,
                       options['box'], options['polar_box'])
        if len(specs) != 1:
            raise ConfigError("instances: exactly one instance is required")
        if specs[0].kind in (InstanceKind.BODY_FAMILY, InstanceKind.BODY_FILE):
            raise ConfigError(f"instances: {specs[0]} is a body, a function is required")
        normal = parse_vector(direction) if direction else None
        if sweep == 'lambda' and any(not 0 < v < 1 for v in values):
            raise ConfigError("value: mass fractions must be in (0, 1)")
    except ConfigError as exc:
        ctx.logger.error(str(exc))
        sys.exit(EXIT_CONFIG)

    method = TransformMethod(options['method'] or TransformMethod.FAST_LLT)
    try:
        if sweep == 'lambda':
            rows = lambda_sweep(ctx, specs[0], list(values) or DEFAULT_LAMBDA_SWEEP, normal,
                                method)
        else:
            resolutions = [int(v) for v in values] or DEFAULT_RESOLUTION_SWEEP
            rows = resolution_sweep(ctx, specs[0], resolutions, method)
    except SantaloError as exc:
        ctx.logger.error(f'{specs[0]}: {exc}')
        sys.exit(EXIT_FAILED)

    data = emit_plot_data(rows)
    if out:
        out.write_text(data)
        ctx.logger.info(f'Plot data written to {out}')
    else:
        click.echo(data, nl=False)
