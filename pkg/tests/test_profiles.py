import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratwave.errors import AssumptionViolation, InputError, ProfileFormatError
from stratwave.profiles import (ASSUMPTION_A, ASSUMPTION_B, LateralMedium, load_profile,
                                make_constant_profile, make_sampled_profile, make_smooth_profile,
                                make_step_profile, parse_profile_spec, validate)


def test_step_profile_valid():
    p = make_step_profile(1, 4, 1)
    assert p.infimum == 1.0 and p.tail_value == 4.0
    assert p.cutoff_depth == -1.0
    assert p.monotone_decreasing
    assert p.evaluate(-0.5) == 1.0 and p.evaluate(-1.0) == 4.0 and p.evaluate(-3.0) == 4.0


@pytest.mark.parametrize("args", [(1, 1, 1), (4, 1, 1)])
def test_step_profile_rejects_missing_slow_layer(args):
    with pytest.raises(AssumptionViolation) as info:
        make_step_profile(*args)
    assert info.value.assumption == "slow-layer"


def test_step_profile_rejects_nonpositive_thickness():
    with pytest.raises(InputError):
        make_step_profile(1, 4, 0)


def test_exponential_clip_depth():
    p = make_smooth_profile(4, 1, 0.5, clip_tol=1e-2)
    # deviation 3 exp(Z / 0.5) reaches the tolerance at Z0
    assert p.cutoff_depth == pytest.approx(0.5 * math.log(1e-2 / 3), rel=1e-14)
    assert p.cutoff_depth == pytest.approx(-2.8519, abs=1e-4)
    assert p.monotone_decreasing
    assert 3 * math.exp(p.cutoff_depth / 0.5) == pytest.approx(1e-2)


def test_exponential_without_contrast_fails():
    with pytest.raises(AssumptionViolation):
        make_smooth_profile(1, 1, 0.5)


def test_exponential_sharp_limit_is_a_thin_step():
    p = make_smooth_profile(4, 1, 1e-6)
    z = np.array([-1.0, -1e-3, -1e-4])
    np.testing.assert_array_equal(p.evaluate(z), 4.0)
    assert p.evaluate(0.0) == 1.0


def test_tail_is_exactly_constant():
    for p in (make_step_profile(1, 4, 1), make_smooth_profile(4, 1, 0.5),
              make_sampled_profile([-1, -0.5, 0], [3, 2, 1])):
        z = np.linspace(p.cutoff_depth - 10, p.cutoff_depth, 101)
        assert np.all(p.evaluate(z) == p.tail_value)


def test_load_profile_csv_step_like():
    text = "Z,N\n-1,4\n-0.5,4\n-0.4,1\n0,1\n"
    p = load_profile(text.encode())
    assert p.cutoff_depth == -1.0
    assert p.tail_value == 4.0 and p.surface_value == 1.0
    np.testing.assert_array_equal(p.evaluate([-1, -0.5, -0.4, 0]), [4, 4, 1, 1])
    assert p.evaluate(-7.0) == 4.0
    assert load_profile(io.StringIO(text)) == p


def test_load_profile_single_row_fails():
    with pytest.raises(AssumptionViolation):
        load_profile(b"Z,N\n0,1\n")


def test_load_profile_rejects_repeated_depth():
    with pytest.raises(ProfileFormatError) as info:
        load_profile(b"Z,N\n-1,4\n-1,2\n0,1\n")
    assert info.value.field == "Z"


@pytest.mark.parametrize("text", ["Z,N\n-1,4\n-0.5,1\n", "Z,N\n-1,4\n0,0\n", "A,B\n-1,4\n0,1\n",
                                  "Z,N\n-1,x\n0,1\n"])
def test_load_profile_malformed(text):
    with pytest.raises(InputError):
        load_profile(text.encode())


def test_validate_step():
    report = validate(make_step_profile(1, 4, 1))
    assert report.passed and report.inverse_eligible
    assert report.assumption3_margin == 3.0
    assert set(report.to_dict()) == {"positivity", "tail_constant", "assumption3_margin",
                                     "monotone", "inverse_eligible"}


def test_validate_pocket_profile():
    report = validate(make_sampled_profile([-3, -2, -1, 0], [4, 1, 2, 1]))
    assert report.slow_layer and report.assumption3_margin == 3.0
    assert not report.monotone
    assert not report.inverse_eligible


def test_validate_constant_profile():
    report = validate(make_constant_profile(2.0))
    assert report.assumption3_margin == 0.0
    assert not report.passed


def test_parse_profile_spec():
    assert parse_profile_spec("step:1,4,1") == make_step_profile(1, 4, 1)
    assert parse_profile_spec("exp:4,1,0.5") == make_smooth_profile(4, 1, 0.5)
    with pytest.raises(InputError):
        parse_profile_spec("wave:1,2")


def test_averages_of_step():
    p = make_step_profile(1, 4, 1)
    # interval [-1.5, -0.5]: half layer, half half-space
    assert p.cell_average(-1.5, -0.5) == pytest.approx(2.5)
    assert p.harmonic_average(-1.5, -0.5) == pytest.approx(1.0 / (0.5 / 1 + 0.5 / 4))


def test_lateral_medium_layers():
    p = make_step_profile(1, 4, 1)
    med = LateralMedium.uniform(p, ASSUMPTION_A, (1.0,))
    # N(x, z, Z) = N0(Z) (1 + z)
    assert med.evaluate(0.3, -0.5, -0.2) == pytest.approx(0.5)
    with pytest.raises(InputError):
        LateralMedium.uniform(p, ASSUMPTION_B, (1.0,))
    mod = LateralMedium.modulated(p, 0.1, 1.0)
    assert mod.profile_at(math.pi / 2).surface_value == pytest.approx(1.1)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.1, 10), ratio=st.floats(1.001, 10), h=st.floats(0.05, 5))
def test_validate_step_passes_for_ordered_layers(a, ratio, h):
    report = validate(make_step_profile(a, a * ratio, h))
    assert report.passed and report.inverse_eligible


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.1, 10), min_size=2, max_size=12))
def test_sampled_profile_reproduces_samples(values):
    n = np.array(values)
    if not n.min() < n[0]:
        with pytest.raises(AssumptionViolation):
            make_sampled_profile(np.linspace(-len(n), 0, len(n)), n)
        return
    z = np.linspace(-len(n), 0, len(n))
    p = make_sampled_profile(z, n)
    np.testing.assert_array_equal(p.evaluate(z), n)
    assert p.monotone_decreasing == bool(np.all(np.diff(n) <= 0))
