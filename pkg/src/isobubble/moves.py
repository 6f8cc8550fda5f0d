"""Perimeter-reducing rewrites of configurations.

Each move returns ``(new_configuration, MoveReport)``.  Moves never relabel
regions.  Endpoint positions of the result are rebuilt with
:func:`~isobubble.density.invert_mass` from per-side mass stacks instead of
being read off an integrated flow, so masses are exact to quadrature
accuracy; the flow itself can be integrated alongside on request
(``trajectory=True``) for inspection.
"""
from dataclasses import dataclass, field

import numpy as np

from .configuration import (Configuration, Interval, classify, region_masses,
                            stationarity_residual, total_perimeter)
from .density import DEFAULT_QUAD, invert_mass, mass
from .exceptions import InvalidTarget, LogConcavityRequired
from .flow import DEFAULT_SETTINGS, FlowState, IntervalCollapse, perimeter_rate2, run_until

__all__ = [
    "MoveReport",
    "consolidate",
    "transpose",
    "eliminate_alternating",
    "merge_across_origin",
    "flip_innermost",
    "reduce_to_fixpoint",
]

PERIMETER_SLACK = 1e-9


@dataclass
class MoveReport:
    move_name: str
    perimeter_before: float
    perimeter_after: float
    mass_drift: float
    applied: bool
    detail: dict = field(default_factory=dict)
    trajectory: object = None

    @property
    def perimeter_dropped(self):
        return self.perimeter_after < self.perimeter_before

    def to_json(self):
        return {"move": self.move_name, "before": self.perimeter_before,
                "after": self.perimeter_after, "mass_drift": self.mass_drift,
                "applied": self.applied}


def _report(name, before, after, applied, q, **detail):
    if applied:
        mb, ma = region_masses(before, q), region_masses(after, q)
        drift = max(abs(mb[r] - ma.get(r, 0.0)) for r in mb)
        p_after = total_perimeter(after)
    else:
        drift, p_after = 0.0, total_perimeter(before)
    return MoveReport(name, total_perimeter(before), p_after, drift, applied, detail)


def canonical(c):
    """Drop degenerate intervals and join touching intervals of one region."""
    out = []
    for iv in c.intervals:
        if iv.length == 0:
            continue
        if out and out[-1].region == iv.region and out[-1].right == iv.left:
            out[-1] = Interval(out[-1].left, iv.right, iv.region)
        else:
            out.append(iv)
    return Configuration(out, c.density)


def split_at_origin(c):
    """Cut every interval that straddles the origin into two pieces."""
    out = []
    for iv in c.intervals:
        if iv.left < 0 < iv.right:
            out += [Interval(iv.left, 0.0, iv.region), Interval(0.0, iv.right, iv.region)]
        else:
            out.append(iv)
    return Configuration(out, c.density)


def _finish(name, c, new, q, **detail):
    applied = not new.allclose(canonical(c), atol=1e-10)
    return (new if applied else c), _report(name, c, new, applied, q, **detail)


# ---------------------------------------------------------------------------

def consolidate(c, q=None):
    """Merge each region's pieces on each side into one interval, packed from the origin.

    Per side, regions keep the order of their outermost extents, so every
    region's outer endpoint moves toward the origin (or stays).
    """
    if not c.density.radially_increasing:
        raise ValueError("consolidation needs a radially increasing density")
    q = q or DEFAULT_QUAD
    sides = {1: {}, -1: {}}
    for iv in c.intervals:
        for sgn, lo, hi in ((1, max(iv.left, 0.0), iv.right), (-1, iv.left, min(iv.right, 0.0))):
            if hi <= lo:
                continue
            m, extent = sides[sgn].get(iv.region, (0.0, 0.0))
            sides[sgn][iv.region] = (m + mass(c.density, lo, hi, q),
                                     max(extent, hi if sgn > 0 else -lo))
    stacks = {}
    for sgn, regions in sides.items():
        order = sorted(regions.items(), key=lambda kv: (kv[1][1], kv[0]))
        stacks[sgn] = [(r, m) for r, (m, _) in order]
    new = Configuration.from_stacks(stacks[-1], stacks[1], c.density, q)
    return _finish("consolidate", c, new, q)


def _single_piece(c, region):
    ivs = [iv for iv in canonical(c).intervals if iv.region == region]
    if len(ivs) != 1:
        raise InvalidTarget(f"region {region} is not a single interval")
    iv = ivs[0]
    if iv.left < 0 < iv.right:
        raise InvalidTarget(f"region {region} straddles the origin")
    return iv


def transpose(c, i, j, q=None, force=False):
    """Exchange the positions of two single-interval regions.

    Adjacent regions on one side swap in place: the outer endpoint of the
    pair stays put and only the shared endpoint moves.  Regions on opposite
    sides of a packed configuration trade slots, and every endpoint outward
    of those slots is rebuilt.  Unless ``force`` is set, a swap that would
    raise the perimeter is not committed (``applied=False``).
    """
    q = q or DEFAULT_QUAD
    if i == j:
        raise InvalidTarget("cannot transpose a region with itself")
    a, b = _single_piece(c, i), _single_piece(c, j)
    side_a = 1 if a.left >= 0 and a.right > 0 else -1
    side_b = 1 if b.left >= 0 and b.right > 0 else -1
    d = c.density

    if side_a == side_b:
        if a.right == b.left:
            first, second = a, b
        elif b.right == a.left:
            first, second = b, a
        else:
            raise InvalidTarget(f"regions {i} and {j} are not adjacent")
        # inner sits nearer the origin
        inner, outer = (first, second) if side_a > 0 else (second, first)
        m_inner = mass(d, inner.left, inner.right, q)
        m_outer = mass(d, outer.left, outer.right, q)
        if side_a > 0:
            start, end = inner.left, outer.right
            mid = invert_mass(d, start, m_outer, "right", q)
            swapped = [Interval(start, mid, outer.region), Interval(mid, end, inner.region)]
        else:
            start, end = inner.right, outer.left
            mid = invert_mass(d, start, m_outer, "left", q)
            swapped = [Interval(mid, start, outer.region), Interval(end, mid, inner.region)]
        rest = [iv for iv in canonical(c).intervals if iv.region not in (i, j)]
        new = Configuration(rest + swapped, d)
        kind = "same_side"
    else:
        left, right = c.side_stacks(q)
        m = {r: mm for r, mm in left + right}

        def swap(stack):
            out = []
            for r, mm in stack:
                if r == i:
                    out.append((j, m[j]))
                elif r == j:
                    out.append((i, m[i]))
                else:
                    out.append((r, mm))
            return out

        new = Configuration.from_stacks(swap(left), swap(right), d, q)
        kind = "cross_origin"

    p_before, p_new = total_perimeter(c), total_perimeter(new)
    if p_new > p_before + PERIMETER_SLACK and not force:
        return c, _report("transpose", c, c, False, q, kind=kind, rejected_perimeter=p_new)
    new_c, rep = _finish("transpose", c, new, q, kind=kind)
    if not rep.applied:
        # an exchange that leaves the geometry unchanged (equal masses) still counts
        rep = _report("transpose", c, new, True, q, kind=kind)
        new_c = new
    return new_c, rep


def _positions(stack_side):
    return {r: k for k, (r, _) in enumerate(stack_side)}


def _flow_trajectory(c, directions, stops, settings):
    s = FlowState.from_configuration(split_at_origin(c), directions)
    _, traj = run_until(s, stops, settings)
    return traj


def eliminate_alternating(c, pair, q=None, trajectory=False, settings=None):
    """Siphon mass out of the two inner pieces of an alternating pair.

    With the pair laid out as ``X-, Y-, X+, Y+`` (left to right), endpoints
    from the inner end of ``X-`` to the outer end of ``Y-`` move toward the
    origin, as do endpoints from the outer end of ``X+`` to the inner end of
    ``Y+``.  Every region keeps its mass; the flow stops when ``Y-`` or
    ``X+`` is empty.
    """
    q = q or DEFAULT_QUAD
    a, b = sorted(pair)
    report = classify(c, q)
    if not report.alternating:
        return c, _report("eliminate_alternating", c, c, False, q)
    if (a, b) not in report.alternating:
        raise InvalidTarget(f"regions {a} and {b} are not in an alternating pattern")
    left, right = c.side_stacks(q)
    lpos, rpos = _positions(left), _positions(right)
    x, y = (a, b) if lpos[a] > lpos[b] else (b, a)
    left = [list(e) for e in left]
    right = [list(e) for e in right]
    m_y_minus = left[lpos[y]][1]
    m_x_plus = right[rpos[x]][1]
    t = min(m_y_minus, m_x_plus)
    left[lpos[y]][1] = m_y_minus - t if t < m_y_minus else 0.0
    left[lpos[x]][1] += t
    right[rpos[x]][1] = m_x_plus - t if t < m_x_plus else 0.0
    right[rpos[y]][1] += t
    new = Configuration.from_stacks(left, right, c.density, q)
    collapsed = [f"{y}-"] * (t == m_y_minus) + [f"{x}+"] * (t == m_x_plus)
    new_c, rep = _finish("eliminate_alternating", c, new, q, transferred=t, collapsed=collapsed)

    if trajectory:
        lp, rp = c.side_pieces()
        x_minus_inner = dict((r, inner) for r, inner, _ in lp)[x]
        y_minus_outer = dict((r, outer) for r, _, outer in lp)[y]
        x_plus_outer = dict((r, outer) for r, _, outer in rp)[x]
        y_plus_inner = dict((r, inner) for r, inner, _ in rp)[y]
        dirs = {}
        for p in c.endpoints:
            if x_minus_inner <= p <= y_minus_outer:
                dirs[p] = 1
            elif x_plus_outer <= p <= y_plus_inner:
                dirs[p] = -1
        rep.trajectory = _flow_trajectory(c, dirs, [IntervalCollapse(x), IntervalCollapse(y)],
                                          settings or DEFAULT_SETTINGS)
    return new_c, rep


def merge_across_origin(c, r, q=None, require_log_concave=True, trajectory=False, settings=None):
    """Move a region split across the origin entirely to one side.

    With the region as ``[r1, r2] U [r3, r4]``, ``r2 <= 0 <= r3``, every
    endpoint left of ``r2`` or right of ``r3`` moves at speed 1/f.  The
    direction follows the sign of dP/dt at the start (ties go right): to the
    right ``[r1, r2]`` empties, to the left ``[r3, r4]`` does.  For a
    log-concave density the perimeter is concave along this flow, so it
    decreases all the way.
    """
    q = q or DEFAULT_QUAD
    d = c.density
    if require_log_concave and not d.log_concave:
        raise LogConcavityRequired(f"{d} is not log-concave")
    left, right = c.side_stacks(q)
    lpos, rpos = _positions(left), _positions(right)
    if r not in lpos or r not in rpos:
        raise InvalidTarget(f"region {r} does not straddle the origin")
    lp, rp = c.side_pieces()
    r2 = lp[lpos[r]][1]
    r3 = rp[rpos[r]][1]
    boundary = c.boundary_points()
    moving = [p for p in boundary if p < r2 or p > r3]
    rate = stationarity_residual(c, moving, 1) if moving else 0.0
    direction = "right" if rate <= 0 else "left"

    flow_dirs = {p: (1 if direction == "right" else -1) for p in c.endpoints if p < r2 or p > r3}
    state = FlowState.from_configuration(split_at_origin(c), flow_dirs)
    rate2 = perimeter_rate2(state)

    left = [list(e) for e in left]
    right = [list(e) for e in right]
    if direction == "right":
        t = left[lpos[r]][1]
        left[lpos[r]][1] = 0.0
        right[rpos[r]][1] += t
    else:
        t = right[rpos[r]][1]
        right[rpos[r]][1] = 0.0
        left[lpos[r]][1] += t
    new = Configuration.from_stacks(left, right, d, q)
    new_c, rep = _finish("merge_across_origin", c, new, q, direction=direction,
                         perimeter_rate=rate, perimeter_rate2=rate2, transferred=t)
    if trajectory:
        rep.trajectory = _flow_trajectory(c, flow_dirs, [IntervalCollapse(r)],
                                          settings or DEFAULT_SETTINGS)
    return new_c, rep


def flip_innermost(c, q=None):
    """When every region sits on one side, move the innermost one across.

    Its outer endpoint lands at the mirror image of where it was while all
    other endpoints move inward, so the perimeter strictly drops.
    """
    q = q or DEFAULT_QUAD
    left, right = c.side_stacks(q)
    if left and right:
        return c, _report("flip_innermost", c, c, False, q)
    full = left or right
    if len(full) < 2:
        return c, _report("flip_innermost", c, c, False, q)
    moved, rest = full[:1], full[1:]
    new_left, new_right = (moved, rest) if right else (rest, moved)
    new = Configuration.from_stacks(new_left, new_right, c.density, q)
    return _finish("flip_innermost", c, new, q)


def _unsorted_pair(c, q):
    left, right = c.side_stacks(q)
    for stack in (left, right):
        for (r1, m1), (r2, m2) in zip(stack, stack[1:]):
            if m1 > m2 * (1 + 1e-12):
                return r1, r2
    return None


def reduce_to_fixpoint(c, q=None, max_moves=10_000):
    """Apply moves until none applies; returns ``(configuration, reports)``.

    Order: consolidate once, then repeatedly eliminate alternating pairs,
    merge regions split across the origin, sort each side by mass with
    adjacent transpositions, and finally move a region across if one side
    is empty.
    """
    q = q or DEFAULT_QUAD
    cfg, rep = consolidate(c, q)
    reports = [rep]
    for _ in range(max_moves):
        cls = classify(cfg, q)
        if cls.alternating:
            cfg, rep = eliminate_alternating(cfg, cls.alternating[0], q)
        else:
            lp, rp = cfg.side_pieces()
            straddling = sorted({r for r, _, _ in lp} & {r for r, _, _ in rp})
            if straddling:
                cfg, rep = merge_across_origin(cfg, straddling[0], q)
            else:
                pair = _unsorted_pair(cfg, q)
                if pair:
                    cfg, rep = transpose(cfg, *pair, q=q)
                else:
                    cfg, rep = flip_innermost(cfg, q)
                    if not rep.applied:
                        return cfg, reports
        reports.append(rep)
        if not rep.applied:
            raise RuntimeError(f"move {rep.move_name} did not apply; fixpoint loop stalled")
    raise RuntimeError(f"no fixpoint after {max_moves} moves")
