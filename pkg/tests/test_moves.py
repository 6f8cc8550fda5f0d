import math

import numpy as np
import pytest

from isobubble.configuration import (Configuration, Interval, MassSpec, classify, region_masses,
                                     total_perimeter)
from isobubble.density import Density
from isobubble.exceptions import InvalidTarget, LogConcavityRequired
from isobubble.moves import (canonical, consolidate, eliminate_alternating, flip_innermost,
                             merge_across_origin, reduce_to_fixpoint, transpose)
from isobubble.optimizer import verify_theorem
from strategies import (CONTROL, LOG_CONCAVE, random_alternating, random_scattered,
                        random_split, random_transpose)

lin = Density.power(1)


def cfg(*ivs, d=lin):
    return Configuration([Interval(*iv) for iv in ivs], d)


def assert_certified(before, after, rep):
    mb, ma = region_masses(before), region_masses(after)
    assert max(abs(mb[r] - ma[r]) for r in mb) <= 1e-8
    assert rep.mass_drift <= 1e-8
    assert rep.perimeter_after <= rep.perimeter_before + 1e-9
    assert rep.perimeter_after == pytest.approx(total_perimeter(after), abs=1e-12)


# -- consolidate ------------------------------------------------------------

def test_consolidate_scattered():
    c = cfg((0.2, 0.5, 1), (0.7, 1.0, 2), (1.3, 1.6, 3))
    new, rep = consolidate(c)
    assert rep.applied and rep.perimeter_after < rep.perimeter_before
    assert new.is_packed() and new.intervals[0].left == 0.0
    assert [iv.region for iv in new.intervals] == [1, 2, 3]
    assert_certified(c, new, rep)


def test_consolidate_condensed_is_fixed_point():
    c = Configuration.from_stacks([(2, 2.0)], [(1, 1.0), (3, 3.0)], lin)
    new, rep = consolidate(c)
    assert new is c and not rep.applied


def test_consolidate_merges_pieces():
    c = cfg((0.1, 0.4, 1), (0.4, 0.9, 2), (1.2, 1.5, 1))
    new, rep = consolidate(c)
    assert len(new.intervals_of(1)) == 1 and len(new.intervals_of(2)) == 1
    assert_certified(c, new, rep)


def test_consolidate_each_side_separately():
    c = cfg((-1.5, -1.0, 1), (-0.8, -0.3, 2), (0.2, 0.6, 1))
    new, rep = consolidate(c)
    left, right = new.side_stacks()
    assert [r for r, _ in left] == [2, 1] and [r for r, _ in right] == [1]
    assert_certified(c, new, rep)


def test_consolidate_idempotent():
    rng = np.random.default_rng(11)
    for _ in range(50):
        c = random_scattered(rng, LOG_CONCAVE[int(rng.integers(0, 5))])
        once, _ = consolidate(c)
        twice, rep = consolidate(once)
        assert twice.allclose(once, atol=1e-10) and not rep.applied


# -- transpose --------------------------------------------------------------

def test_transpose_adjacent_smaller_goes_inward():
    a, m = 0.5, math.sqrt(0.25 + 4.0)  # R2 holds mass 2
    b = math.sqrt(m * m + 2.0)         # R1 holds mass 1
    c = cfg((a, m, 2), (m, b, 1))
    new, rep = transpose(c, 1, 2)
    assert rep.applied and rep.perimeter_after < rep.perimeter_before
    r1, r2 = new.intervals_of(1)[0], new.intervals_of(2)[0]
    assert r1.left == a and r2.right == pytest.approx(b, abs=1e-12)
    assert r1.right < m
    assert_certified(c, new, rep)


def test_transpose_equal_masses():
    c = Configuration.from_stacks([], [(1, 1.0), (2, 1.0)], lin)
    new, rep = transpose(c, 1, 2)
    assert abs(rep.perimeter_after - rep.perimeter_before) <= 1e-9
    assert new.intervals[0].region == 2


def test_transpose_refuses_uphill_unless_forced():
    c = Configuration.from_stacks([], [(1, 1.0), (2, 2.0)], lin)
    new, rep = transpose(c, 1, 2)
    assert new is c and not rep.applied
    forced, rep = transpose(c, 1, 2, force=True)
    assert rep.applied and rep.perimeter_after > rep.perimeter_before
    assert forced.intervals[0].region == 2


def test_transpose_cross_origin():
    # left: A (3), L (1.5) with outer end c; right: B (1), J (2) ending at d;
    # masses outward of both are paired: 5 | 5, then one extra (6) on the right
    left = [(1, 3.0), (2, 1.5), (3, 5.0)]
    right = [(4, 1.0), (5, 2.0), (6, 5.0), (7, 6.0)]
    c = Configuration.from_stacks(left, right, lin)
    c_end, d_end = c.outer_endpoint(2), c.outer_endpoint(5)
    assert abs(c_end) > abs(d_end)
    new, rep = transpose(c, 2, 5)
    assert rep.applied and rep.perimeter_after < rep.perimeter_before
    nl, nr = new.side_stacks()
    assert [r for r, _ in nl] == [1, 5, 3] and [r for r, _ in nr] == [4, 2, 6, 7]
    assert_certified(c, new, rep)


def test_transpose_invalid_targets():
    c = cfg((0, 1, 1), (1, 2, 2), (2, 3, 3), (3, 4, 1))
    with pytest.raises(InvalidTarget):
        transpose(c, 1, 2)
    c = cfg((0, 1, 1), (1, 2, 2), (2, 3, 3))
    with pytest.raises(InvalidTarget):
        transpose(c, 1, 3)
    with pytest.raises(InvalidTarget):
        transpose(cfg((-1, 1, 1), (1, 2, 2)), 1, 2)


# -- eliminate_alternating ---------------------------------------------------

def alternating_layout():
    # left to right: B-, A-, | B+, A+
    return Configuration.from_stacks([(1, 2.0), (2, 1.0)], [(2, 1.0), (1, 2.0)], lin)


def test_eliminate_alternating_layout():
    c = alternating_layout()
    assert classify(c).alternating == [(1, 2)]
    new, rep = eliminate_alternating(c, (1, 2))
    assert rep.applied and rep.perimeter_after < rep.perimeter_before
    assert classify(new).alternating == []
    # the inner B piece (right side) is gone: region 2 only on the left now
    left, right = new.side_stacks()
    assert 2 not in [r for r, _ in right]
    assert_certified(c, new, rep)


def test_eliminate_no_pair():
    c = Configuration.from_stacks([(2, 2.0)], [(1, 1.0)], lin)
    new, rep = eliminate_alternating(c, (1, 2))
    assert new is c and not rep.applied


def test_eliminate_wrong_pair():
    c = Configuration.from_stacks([(1, 1.0), (2, 1.0), (3, 1.0)], [(2, 1.0), (1, 1.0), (3, 1.0)], lin)
    with pytest.raises(InvalidTarget):
        eliminate_alternating(c, (1, 3))


def test_eliminate_symmetric_matches_optimizer():
    c = Configuration.from_stacks([(1, 1.0), (2, 2.0)], [(2, 1.0), (1, 2.0)], lin)
    new, rep = eliminate_alternating(c, (1, 2))
    best = verify_theorem(MassSpec([3.0, 3.0]), lin).standard_perimeter
    assert rep.perimeter_after == pytest.approx(best, abs=1e-12)
    assert rep.perimeter_before - rep.perimeter_after == pytest.approx(
        total_perimeter(c) - 2 * math.sqrt(6), abs=1e-12)


def test_eliminate_trajectory_matches_reconstruction():
    c = alternating_layout()
    new, rep = eliminate_alternating(c, (1, 2), trajectory=True)
    traj = rep.trajectory
    assert traj.reason in ("event", "origin_guard")
    assert traj.perimeters[-1] == pytest.approx(rep.perimeter_after, abs=1e-6)


# -- merge_across_origin -----------------------------------------------------

def test_merge_lone_region():
    c = cfg((-1, 0, 1), (0, math.sqrt(3), 1))
    new, rep = merge_across_origin(c, 1)
    assert rep.perimeter_before == pytest.approx(1 + math.sqrt(3))
    assert rep.perimeter_after == pytest.approx(2.0, abs=1e-12)
    assert new.allclose(cfg((0, 2, 1)), atol=1e-12)


def test_merge_tie_goes_right():
    c = cfg((-1, 1, 1))
    new, rep = merge_across_origin(c, 1)
    assert rep.detail["direction"] == "right"
    assert new.allclose(cfg((0, math.sqrt(2), 1)), atol=1e-12)
    other = cfg((-math.sqrt(2), 0, 1))
    assert total_perimeter(other) == pytest.approx(rep.perimeter_after, abs=1e-12)


def _fd_rate(c, r, h=1e-6):
    left, right = c.side_stacks()

    def perim(t):
        lt = [(x, m - t if x == r else m) for x, m in left]
        rt = [(x, m + t if x == r else m) for x, m in right]
        return total_perimeter(Configuration.from_stacks(lt, rt, c.density))
    return (perim(h) - perim(-h)) / (2 * h)


@pytest.mark.parametrize("left,right,expected", [
    ([(2, 3.0), (1, 1.0), (3, 0.5)], [(1, 2.0)], "right"),
    ([(1, 2.0)], [(2, 3.0), (1, 1.0), (3, 0.5)], "left"),
])
def test_merge_direction_follows_rate(left, right, expected):
    c = Configuration.from_stacks(left, right, lin)
    new, rep = merge_across_origin(c, 1)
    fd = _fd_rate(c, 1)
    assert rep.detail["perimeter_rate"] == pytest.approx(fd, rel=1e-5)
    assert rep.detail["direction"] == expected
    assert (fd <= 0) == (expected == "right")
    assert rep.detail["perimeter_rate2"] < 0
    assert_certified(c, new, rep)


def test_merge_requires_log_concavity():
    c = Configuration.from_stacks([(1, 0.5), (2, 1.0)], [(1, 0.5), (3, 1.0)], CONTROL)
    with pytest.raises(LogConcavityRequired):
        merge_across_origin(c, 1)
    _, rep = merge_across_origin(c, 1, require_log_concave=False)
    assert rep.detail["perimeter_rate2"] > 0


def test_merge_invalid_target():
    c = Configuration.from_stacks([(2, 1.0)], [(1, 1.0)], lin)
    with pytest.raises(InvalidTarget):
        merge_across_origin(c, 1)


# -- flip and fixpoint ------------------------------------------------------

def test_flip_innermost():
    c = Configuration.from_stacks([], [(1, 1.0), (2, 2.0)], lin)
    new, rep = flip_innermost(c)
    assert rep.applied and rep.perimeter_after < rep.perimeter_before
    assert classify(new).origin_is_boundary


@pytest.mark.parametrize("d", LOG_CONCAVE, ids=str)
def test_random_move_certificates(d):
    rng = np.random.default_rng(5)
    for _ in range(40):
        c = random_scattered(rng, d)
        new, rep = consolidate(c)
        assert_certified(c, new, rep)
        c, pair = random_transpose(rng, d)
        new, rep = transpose(c, *pair)
        assert_certified(c, new, rep)
        c, pair = random_alternating(rng, d)
        pair = classify(c).alternating[0]
        new, rep = eliminate_alternating(c, pair)
        assert rep.applied and len(canonical(new).intervals) < len(canonical(c).intervals)
        assert_certified(c, new, rep)
        c, r = random_split(rng, d)
        new, rep = merge_across_origin(c, r)
        assert_certified(c, new, rep)


@pytest.mark.parametrize("d", LOG_CONCAVE, ids=str)
def test_fixpoint(d):
    rng = np.random.default_rng(8)
    for _ in range(30):
        c = random_scattered(rng, d)
        final, reports = reduce_to_fixpoint(c)
        assert len(final.intervals) == c.n_regions
        assert classify(final).origin_is_boundary
        assert all(r.applied for r in reports[1:])
        assert total_perimeter(final) <= total_perimeter(c) + 1e-9
        mb, ma = region_masses(c), region_masses(final)
        assert max(abs(mb[r] - ma[r]) for r in mb) <= 1e-8


def test_move_report_json():
    _, rep = consolidate(cfg((0.2, 0.5, 1)))
    assert set(rep.to_json()) == {"move", "before", "after", "mass_drift", "applied"}
