import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from isobubble.configuration import (LARGEST_LEFT, LARGEST_RIGHT, Configuration, Interval,
                                     MassSpec, build_standard, classify, region_masses,
                                     same_mass_slacks, stationarity_residual, total_perimeter)
from isobubble.density import Density
from isobubble.exceptions import HypothesisViolation, InvalidTarget, OriginSingularity
from strategies import CONTROL, LOG_CONCAVE, densities, mass_specs

lin = Density.power(1)
r2, r8 = math.sqrt(2), math.sqrt(8)


def cfg(*ivs, d=lin):
    return Configuration([Interval(*iv) for iv in ivs], d)


def test_two_piece_versus_single_interval():
    two = cfg((-2, 0, 1), (0, 4, 1))
    one = cfg((0, math.sqrt(20), 1))
    assert total_perimeter(two) == 6.0
    assert total_perimeter(one) == pytest.approx(math.sqrt(20), abs=1e-12)
    assert region_masses(two) == {1: pytest.approx(10.0, abs=1e-12)}


def test_perimeter_counts_shared_points_once():
    c = cfg((0, r2, 1), (-2, 0, 2))
    assert total_perimeter(c) == pytest.approx(r2 + 2, abs=1e-12)
    # origin under a nonvanishing density contributes f(0) = 1 exactly once
    c = cfg((-1, 0, 1), (0, 1, 2), d=CONTROL)
    assert total_perimeter(c) == pytest.approx(2 * math.e + 1, abs=1e-12)


def test_degenerate_interval_contributes_no_mass():
    c = cfg((0, 1, 1), (1, 1, 2), (1, 2, 3))
    m = region_masses(c)
    assert m[2] == 0.0
    assert m[1] == pytest.approx(0.5) and m[3] == pytest.approx(1.5)


def test_region_masses_three():
    c = cfg((0, r2, 1), (r2, r8, 3), (-2, 0, 2))
    m = region_masses(c)
    assert [m[r] for r in (1, 2, 3)] == pytest.approx([1, 2, 3], abs=1e-12)


def test_interval_and_configuration_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0, 1)
    with pytest.raises(ValueError):
        Interval(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        cfg((0, 2, 1), (1, 3, 2))
    with pytest.raises(ValueError):
        cfg((0, 1, 1), (1, 2, 3))
    with pytest.raises(ValueError):
        MassSpec([2, 1])
    with pytest.raises(ValueError):
        MassSpec([1, 0])
    assert MassSpec.from_unsorted([3, 1, 2]).masses == (1.0, 2.0, 3.0)


def test_endpoint_snapping():
    c = cfg((0, 1.0, 1), (1.0 + 1e-14, 2, 2))
    assert len(c.endpoints) == 3


def test_build_standard_examples():
    c = build_standard(MassSpec([1, 2]), lin, LARGEST_LEFT)
    assert c.allclose(cfg((0, r2, 1), (-2, 0, 2)), atol=1e-12)
    assert total_perimeter(c) == pytest.approx(3.414213562373095, abs=1e-12)
    c = build_standard(MassSpec([10]), lin)
    assert c.allclose(cfg((0, math.sqrt(20), 1)), atol=1e-12)
    c = build_standard(MassSpec([1, 2, 3]), lin, LARGEST_RIGHT)
    assert c.allclose(cfg((-2, 0, 2), (0, r2, 1), (r2, r8, 3)), atol=1e-12)
    assert total_perimeter(c) == pytest.approx(3 * r2 + 2, abs=1e-12)


def test_build_standard_needs_vanishing_density():
    with pytest.raises(HypothesisViolation):
        build_standard(MassSpec([1, 2]), CONTROL)


def test_classify_examples():
    rep = classify(build_standard(MassSpec([1, 2, 3]), lin))
    assert rep.condensed and rep.standard and rep.one_interval_per_region
    assert rep.origin_is_boundary and rep.alternating == []
    # A-, B-, A+, B+
    alt = Configuration.from_stacks([(2, 1.0), (1, 1.0)], [(1, 1.0), (2, 1.0)], lin)
    assert classify(alt).alternating == [(1, 2)]
    nested = Configuration.from_stacks([(2, 1.0), (1, 1.0)], [(2, 1.0), (1, 1.0)], lin)
    rep = classify(nested)
    assert rep.nested == [(1, 2)] and rep.alternating == []
    rep = classify(cfg((0, 1, 1), (1, 2, 2)))
    assert rep.condensed and not rep.standard


def test_classify_scattered():
    rep = classify(cfg((0.2, 0.5, 1), (0.7, 1.0, 2), (2.0, 2.2, 1)))
    assert not rep.condensed and not rep.one_interval_per_region


def test_side_stacks_and_round_trip():
    c = build_standard(MassSpec([1, 2, 3]), lin)
    left, right = c.side_stacks()
    assert [r for r, _ in left] == [2] and [r for r, _ in right] == [1, 3]
    assert Configuration.from_stacks(left, right, lin).allclose(c, atol=1e-12)
    with pytest.raises(InvalidTarget):
        cfg((0.5, 1, 1)).side_stacks()


def test_json_round_trip():
    c = build_standard(MassSpec([1, 2, 3]), Density.power_composite(1, 2))
    obj = json.loads(json.dumps(c.to_json()))
    assert obj["intervals"][0].keys() == {"left", "right", "region"}
    assert Configuration.from_json(obj).allclose(c, atol=0)


def test_stationarity_residual_examples():
    assert stationarity_residual(cfg((1, 2, 1)), [1.0, 2.0], 1) == pytest.approx(1.5)
    assert stationarity_residual(cfg((-1.5, 1.5, 1)), [-1.5, 1.5], 1) == pytest.approx(0.0, abs=1e-15)
    c = cfg((0, r2, 1), (-2, 0, 2))
    assert stationarity_residual(c, [-2.0, r2], 1) == pytest.approx(1 / r2 - 0.5, abs=1e-12)
    with pytest.raises(OriginSingularity):
        stationarity_residual(c, [0.0], 1)


def test_stationarity_residual_matches_finite_difference():
    # move both ends of [1, 2] right by mass h under |x|: x -> sqrt(x^2 + 2h)
    h = 1e-6
    p = lambda t: math.sqrt(1 + 2 * t) + math.sqrt(4 + 2 * t)
    fd = (p(h) - p(-h)) / (2 * h)
    assert stationarity_residual(cfg((1, 2, 1)), [1.0, 2.0], 1) == pytest.approx(fd, rel=1e-8)


@given(densities, mass_specs(1, 6))
def test_standard_is_standard_and_reflects(d, spec):
    right = build_standard(spec, d, LARGEST_RIGHT)
    left = build_standard(spec, d, LARGEST_LEFT)
    assert classify(right).standard
    assert right.reflect().allclose(left, atol=1e-12)
    assert total_perimeter(right) == pytest.approx(total_perimeter(left), abs=1e-12)
    m = region_masses(right)
    for r, target in enumerate(spec.masses, start=1):
        assert abs(m[r] - target) <= 1e-8


@given(densities, st.floats(0, 5), st.floats(0.001, 5), st.floats(0.01, 20))
def test_same_mass_inequalities(d, a1, gap, M):
    a2 = a1 + gap
    s1, s2, s3 = same_mass_slacks(d, a1, a2, M)
    assert s1 > 0 and s2 > 0
    assert s3 >= -1e-10


def test_same_mass_inequality_fails_for_log_convex():
    rng = np.random.default_rng(3)
    worst = min(same_mass_slacks(CONTROL, *sorted(rng.uniform(0, 2, 2)), rng.uniform(0.05, 3))[2]
                for _ in range(200))
    assert worst < 0
