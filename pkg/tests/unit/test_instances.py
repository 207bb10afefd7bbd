import math

import numpy as np
import pytest

from santalo import BodyFamily, ConfigError, InstanceKind
from santalo.grid import Box, integrate, load_grid_function, save_grid_function
from santalo.instances import (
    InstanceSpec,
    build_body,
    build_function,
    generate,
    )
from santalo.starbody import load_body, volume
from santalo.theorems import verify_thm2


def test_parse_plain():
    spec = InstanceSpec.parse('gaussian')
    assert spec.kind is InstanceKind.GAUSSIAN
    assert spec.dim == 1
    assert spec.params == {}
    assert str(spec) == 'gaussian'


def test_parse_parameters():
    spec = InstanceSpec.parse('gaussian(center=[1.0, -0.5], a=2)', dim=2)
    assert spec.dim == 2
    assert spec.params == {'center': [1.0, -0.5], 'a': 2}
    assert str(spec) == 'gaussian(center=[1.0, -0.5], a=2)'


def test_parse_body_family():
    spec = InstanceSpec.parse('random-star(seed=3, smoothness=2.5)')
    assert spec.kind is InstanceKind.BODY_FAMILY
    assert spec.family is BodyFamily.RANDOM_STAR
    assert spec.is_body
    assert spec.dim == 2
    assert spec.seed == 3
    assert str(spec) == 'random-star(seed=3, smoothness=2.5)'


@pytest.mark.parametrize(('text', 'overrides', 'message'), [
    ('unknown', {}, 'unknown kind'),
    ('gaussian(a=2', {}, 'closing parenthesis'),
    ('gaussian(2)', {}, 'key=value'),
    ('scaled_gaussian', {}, "'a' is required"),
    ('scaled_gaussian(a=-1)', {}, 'must be positive'),
    ('logconcave_mixture', {}, "'seed' is required"),
    ('random-star', {}, "'seed' is required"),
    ('cosine-perturbed(amplitude=1.5)', {}, 'amplitude'),
    ('indicator_interval', {'dim': 2}, 'one-dimensional'),
    ('gaussian', {'dim': 4}, 'dim must be between'),
    ('ball', {'dim': 1}, 'dim must be between'),
    ('grid_file', {}, "'path' is required"),
    ('gaussian', {'resolution': 1}, 'resolution'),
    ])
def test_parse_errors(text, overrides, message):
    with pytest.raises(ConfigError, match=message):
        InstanceSpec.parse(text, **overrides)


def test_spec_yaml_round_trip():
    spec = InstanceSpec.parse('logconcave_mixture(seed=11, components=4)', dim=2, resolution=101)
    loaded = InstanceSpec.from_yaml(spec.to_yaml())
    assert loaded.to_dict() == spec.to_dict()


def test_build_gaussian():
    instance = build_function(InstanceSpec.parse('scaled_gaussian(a=4)'))
    f = instance.function
    assert f.box.counts == (1601,)
    assert f.box.upper == (4.0,)
    assert instance.polar_box.upper == (16.0,)
    assert integrate(f) == pytest.approx(math.sqrt(2 * math.pi / 4), rel=1e-6)


def test_build_exponential():
    instance = build_function(InstanceSpec.parse('exponential'))
    assert instance.function.box.lower == (0.0,)
    assert instance.polar_box.lower == (-40.0,)
    assert instance.polar_box.upper == (1.0,)
    # the polar box keeps the spacing of the input box
    assert instance.polar_box.spacing == pytest.approx(instance.function.box.spacing)
    assert integrate(instance.function) == pytest.approx(1.0, rel=1e-6)


def test_build_exponential_is_one_dimensional():
    with pytest.raises(ConfigError, match='one-dimensional'):
        build_function(InstanceSpec.parse('exponential', dim=2))


def test_build_indicator_box():
    instance = build_function(
        InstanceSpec.parse('indicator_box(lower=[0, -1], upper=[2, 1])', dim=2, resolution=401))
    f = instance.function
    assert f.box.lower == (-1.0, -2.0)
    assert f.box.upper == (3.0, 2.0)
    assert integrate(f) == pytest.approx(4.0, rel=2e-2)


def test_build_with_box_override():
    box = Box(lower=-5, upper=5, counts=11)
    instance = build_function(InstanceSpec(kind='gaussian', box=box, resolution=101))
    assert instance.function.box.counts == (101,)
    assert instance.function.box.upper == (5.0,)


@pytest.mark.parametrize('seed', range(5))
def test_mixture_is_log_concave(seed):
    f = build_function(InstanceSpec.parse(f'logconcave_mixture(seed={seed})')).function
    potential = -f.logvals
    assert np.all(np.isfinite(potential))
    assert np.all(np.diff(potential, 2) >= -1e-9)


def test_mixture_is_seeded():
    first = build_function(InstanceSpec.parse('logconcave_mixture(seed=5)', dim=2)).function
    second = build_function(InstanceSpec.parse('logconcave_mixture(seed=5)', dim=2)).function
    other = build_function(InstanceSpec.parse('logconcave_mixture(seed=6)', dim=2)).function
    assert np.array_equal(first.logvals, second.logvals)
    assert not np.array_equal(first.logvals, other.logvals)


def test_build_grid_file(tmp_path):
    source = build_function(InstanceSpec.parse('gaussian')).function
    path = tmp_path / 'gaussian.grid'
    save_grid_function(source, path)
    instance = build_function(InstanceSpec(kind='grid_file', params={'path': str(path)}))
    assert np.array_equal(instance.function.logvals, source.logvals)
    assert instance.polar_box.lower == (-8.0,)


def test_build_function_rejects_body():
    with pytest.raises(ConfigError, match='is a body'):
        build_function(InstanceSpec.parse('ball'))
    with pytest.raises(ConfigError, match='is a function'):
        build_body(InstanceSpec.parse('gaussian'))


@pytest.mark.parametrize(('text', 'expected'), [
    ('ball(radius=2)', 4 * math.pi),
    ('ellipsoid(semi_axes=[2, 0.5])', math.pi),
    ('cube', 4.0),
    ('cross-polytope', 2.0),
    ])
def test_build_body_volume(text, expected):
    assert volume(build_body(InstanceSpec.parse(text))) == pytest.approx(expected, rel=1e-4)


def test_build_body_resolution():
    body = build_body(InstanceSpec.parse('ball', dim=3, resolution=17))
    assert body.grid.counts == (17, 32)
    assert volume(body) == pytest.approx(4 * math.pi / 3, rel=1e-2)


def test_random_star_is_seeded():
    first = build_body(InstanceSpec.parse('random-star(seed=3)'))
    second = build_body(InstanceSpec.parse('random-star(seed=3)'))
    assert np.array_equal(first.rho, second.rho)
    assert first.seed == 3
    assert np.all(first.rho > 0)


def test_generate_mixtures(tmp_path):
    paths = generate(42, 'logconcave_mixture', 3, tmp_path / 'first')
    again = generate(42, 'logconcave_mixture', 3, tmp_path / 'second')
    assert [p.name for p in paths] == [p.name for p in again]
    assert len({p.name for p in paths}) == 3

    for path, other in zip(paths, again):
        assert path.suffix == '.grid'
        assert path.read_bytes() == other.read_bytes()
        sidecar = InstanceSpec.from_yaml_file(path.with_suffix('.yaml'))
        assert sidecar.kind is InstanceKind.LOGCONCAVE_MIXTURE
        assert path.name == f'logconcave_mixture-{sidecar.seed}.grid'
        rebuilt = build_function(sidecar).function
        assert np.array_equal(rebuilt.logvals, load_grid_function(path).logvals)



def test_generate_seed_sensitivity(tmp_path):
    (first,) = generate(7, 'logconcave_mixture', 1, tmp_path / 'seven')
    (second,) = generate(8, 'logconcave_mixture', 1, tmp_path / 'eight')
    f, g = load_grid_function(first), load_grid_function(second)
    assert f.box == g.box
    assert np.max(np.abs(f.values() - g.values())) > 1e-3


def test_generated_mixtures_verify(tmp_path):
    for path in generate(13, 'logconcave_mixture', 10, tmp_path):
        report = verify_thm2(load_grid_function(path))
        assert report.passed, f'{path.name}: {report.describe()}'

def test_generate_stars(tmp_path):
    paths = generate(7, 'random-star', 2, tmp_path)
    assert all(p.suffix == '.json' for p in paths)
    body = load_body(paths[0])
    assert body.dim == 2
    assert paths[0].name == f'random-star-{body.seed}.json'


def test_generate_unknown_family(tmp_path):
    with pytest.raises(ConfigError, match='Cannot generate'):
        generate(1, 'gaussian', 1, tmp_path)
