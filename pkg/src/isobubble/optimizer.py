"""Desk-scale verification of the standard n-bubble.

Once every region is a single interval and each side is packed in ascending
mass order, a configuration is determined by which side each region sits
on.  Fixing the largest region to the right leaves ``2**(n-1)`` candidates;
:func:`verify_theorem` scores them all.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from joblib import Parallel, delayed

from .configuration import (LARGEST_RIGHT, Configuration, MassSpec, stacks_for,
                            standard_sides, total_perimeter)
from .density import DEFAULT_QUAD, invert_mass
from .exceptions import HypothesisViolation, InvalidTarget

__all__ = [
    "BIFURCATION_TOL",
    "SignAssignment",
    "enumerate_assignments",
    "realize",
    "assignment_perimeter",
    "golden_section",
    "SplitResult",
    "VerificationReport",
    "verify_theorem",
    "BifurcationReport",
    "bifurcation_search",
    "InflationRow",
    "inflation_experiment",
]

BIFURCATION_TOL = 1e-9
SPLIT_TOL = 1e-6
_INTERIOR_SAMPLES = np.linspace(0.1, 0.9, 9)


@dataclass(frozen=True)
class SignAssignment:
    """Side of each region, ``+1`` right and ``-1`` left, indexed by region - 1."""

    sides: tuple

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        if not sides or any(s not in (1, -1) for s in sides):
            raise ValueError(f"sides must be a nonempty sequence of +1/-1, got {self.sides!r}")
        object.__setattr__(self, "sides", sides)

    @classmethod
    def standard(cls, n):
        return cls(standard_sides(n, LARGEST_RIGHT))

    @property
    def n(self):
        return len(self.sides)

    @property
    def is_canonical(self):
        return self.sides[-1] == 1

    @property
    def is_standard(self):
        return self.sides == standard_sides(self.n, LARGEST_RIGHT)

    def reflect(self):
        return SignAssignment(tuple(-s for s in self.sides))

    def __str__(self):
        return "".join("+" if s > 0 else "-" for s in self.sides)

    def to_json(self):
        return list(self.sides)


def _as_spec(spec):
    return spec if isinstance(spec, MassSpec) else MassSpec(spec)


def enumerate_assignments(spec):
    """All canonical assignments (largest region on the right), standard first."""
    n = spec if isinstance(spec, int) else _as_spec(spec).n
    if n < 1:
        raise ValueError("need at least one region")
    std = SignAssignment.standard(n)
    rest = [SignAssignment(head + (1,)) for head in product((1, -1), repeat=n - 1)]
    return [std] + [a for a in rest if a != std]


def realize(spec, s, d, q=None):
    spec = _as_spec(spec)
    if s.n != spec.n:
        raise ValueError(f"assignment has {s.n} regions, spec has {spec.n}")
    left, right = stacks_for(spec, s.sides)
    return Configuration.from_stacks(left, right, d, q)


def _stack_perimeter(d, left, right, q):
    """Perimeter of a packed configuration given per-side ``(region, mass)`` stacks.

    Zero masses are skipped.  Only outer endpoints and the origin can carry
    perimeter; the origin does not when one region spans it.
    """
    left = [(r, m) for r, m in left if m > 0]
    right = [(r, m) for r, m in right if m > 0]
    total = 0.0
    for stack, direction in ((left, "left"), (right, "right")):
        cum = 0.0
        for k, (r, m) in enumerate(stack):
            cum += m
            nxt = stack[k + 1][0] if k + 1 < len(stack) else None
            if nxt != r:
                total += float(d.eval(invert_mass(d, 0.0, cum, direction, q)))
    if not (left and right and left[0][0] == right[0][0]):
        total += float(d.eval(0.0))
    return total


def assignment_perimeter(spec, s, d, q=None):
    """Perimeter of ``realize(spec, s, d)`` without building the configuration."""
    spec = _as_spec(spec)
    left, right = stacks_for(spec, s.sides)
    return _stack_perimeter(d, left, right, q or DEFAULT_QUAD)


def _side_multisets(spec, s):
    left = sorted(m for m, x in zip(spec.masses, s.sides) if x < 0)
    right = sorted(m for m, x in zip(spec.masses, s.sides) if x > 0)
    return left, right


def _equivalent(spec, a, b):
    """Same per-side mass multisets up to reflection, i.e. equal-mass relabeling."""
    la, ra = _side_multisets(spec, a)
    lb, rb = _side_multisets(spec, b)
    return (la, ra) == (lb, rb) or (la, ra) == (rb, lb)


def golden_section(func, a, b, tol=SPLIT_TOL):
    """Minimize a unimodal ``func`` on ``[a, b]``; returns ``(x, func(x))``.

    Brackets shrink by the golden ratio until narrower than ``tol``; the
    interval ends are never evaluated.
    """
    inv_phi = (math.sqrt(5) - 1) / 2
    c = b - inv_phi * (b - a)
    e = a + inv_phi * (b - a)
    fc, fe = func(c), func(e)
    while b - a > tol:
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - inv_phi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, e, fe
            e = a + inv_phi * (b - a)
            fe = func(e)
    return (c, fc) if fc <= fe else (e, fe)


@dataclass
class SplitResult:
    """Best cross-origin split of one region within one assignment.

    ``lam`` is the fraction of the region's mass kept on its assigned side.
    """

    assignment: SignAssignment
    region: int
    lam: float
    perimeter: float
    boundary_perimeter: float
    interior_min: float

    @property
    def collapsed(self):
        return min(self.lam, 1.0 - self.lam) <= 1e-4

    def to_json(self):
        return {"sides": self.assignment.to_json(), "region": self.region, "lambda": self.lam,
                "perimeter": self.perimeter, "boundary_perimeter": self.boundary_perimeter,
                "interior_min": self.interior_min}


def _split_perimeter_fn(spec, s, region, d, q):
    def perim(lam):
        left, right = [], []
        for r, (m, side) in enumerate(zip(spec.masses, s.sides), start=1):
            if r == region:
                own, other = lam * m, (1.0 - lam) * m
                (right if side > 0 else left).append((r, own))
                (left if side > 0 else right).append((r, other))
            else:
                (right if side > 0 else left).append((r, m))
        left.sort(key=lambda e: e[1])
        right.sort(key=lambda e: e[1])
        return _stack_perimeter(d, left, right, q)
    return perim


def optimize_split(spec, s, region, d, q=None, tol=SPLIT_TOL):
    """Golden-section search over the split fraction of ``region``."""
    spec = _as_spec(spec)
    perim = _split_perimeter_fn(spec, s, region, d, q or DEFAULT_QUAD)
    lam, p = golden_section(perim, 0.0, 1.0, tol)
    boundary = min(perim(0.0), perim(1.0))
    interior = min(perim(x) for x in _INTERIOR_SAMPLES)
    return SplitResult(s, region, float(lam), float(p), float(boundary), float(interior))


@dataclass
class VerificationReport:
    masses: tuple
    density: object
    standard_perimeter: float
    competitor_table: list
    min_gap: float
    winner_is_standard: bool
    authoritative: bool = True
    split_check: list = None
    equivalent: list = field(default_factory=list)

    @property
    def best_competitor(self):
        """Lowest-perimeter assignment that is not a relabeling of the standard one."""
        rows = [(s, p) for (s, p), eq in zip(self.competitor_table, self.equivalent) if not eq]
        return min(rows, key=lambda sp: sp[1]) if rows else None

    @property
    def split_collapsed(self):
        if self.split_check is None:
            return None
        return all(r.collapsed and r.interior_min > r.boundary_perimeter for r in self.split_check)

    def to_json(self):
        def num(x):
            return None if not math.isfinite(x) else x
        out = {
            "density": self.density.to_json(),
            "masses": list(self.masses),
            "standard_perimeter": self.standard_perimeter,
            "competitors": [
                {"sides": s.to_json(), "label": str(s), "perimeter": p,
                 "gap": p - self.standard_perimeter, "equivalent_to_standard": eq}
                for (s, p), eq in zip(self.competitor_table, self.equivalent)
            ],
            "min_gap": num(self.min_gap),
            "winner_is_standard": self.winner_is_standard,
            "authoritative": self.authoritative,
        }
        if self.split_check is not None:
            best = min(self.split_check, key=lambda r: r.perimeter)
            out["split_check"] = {
                "best_split_perimeter": best.perimeter,
                "collapsed": self.split_collapsed,
                "splits": [r.to_json() for r in self.split_check],
            }
        return out


def verify_theorem(spec, d, split_depth=0, allow_invalid=False, q=None):
    """Score every canonical assignment against the standard one.

    ``min_gap`` is taken over assignments that are not the standard one up
    to swapping equal masses (those tie by construction).  With
    ``split_depth > 0`` the ``split_depth`` best assignments additionally get
    a per-region cross-origin split search.
    """
    spec = _as_spec(spec)
    if split_depth < 0:
        raise ValueError("split_depth must be >= 0")
    valid = d.satisfies_theorem_hypotheses
    if not valid and not allow_invalid:
        raise HypothesisViolation(f"{d} does not satisfy the n-bubble hypotheses")
    q = q or DEFAULT_QUAD
    assignments = enumerate_assignments(spec)
    table = [(s, assignment_perimeter(spec, s, d, q)) for s in assignments]
    std, p_std = table[0]
    equivalent = [_equivalent(spec, s, std) for s, _ in table]
    gaps = [p - p_std for (s, p), eq in zip(table, equivalent) if not eq]
    min_gap = min(gaps) if gaps else math.inf
    rep = VerificationReport(spec.masses, d, p_std, table, min_gap,
                             min_gap > BIFURCATION_TOL, valid, equivalent=equivalent)
    if split_depth > 0:
        ranked = sorted(table, key=lambda sp: sp[1])[:split_depth]
        rep.split_check = [optimize_split(spec, s, r, d, q)
                           for s, _ in ranked for r in range(1, spec.n + 1)]
    return rep


@dataclass
class BifurcationReport:
    tail: tuple
    density: object
    rows: list  # (M1, standard_perimeter, best_competitor_perimeter, gap)
    tol: float = BIFURCATION_TOL
    authoritative: bool = True

    @property
    def bifurcating(self):
        return [r[0] for r in self.rows if abs(r[3]) <= self.tol]

    @property
    def standard_wins(self):
        return [r[0] for r in self.rows if r[3] > self.tol]

    @property
    def threshold(self):
        """Largest grid M1 below which (inclusive) the standard assignment always wins."""
        best = None
        for m1, _, _, gap in sorted(self.rows):
            if gap <= self.tol:
                break
            best = m1
        return best

    @property
    def min_gap(self):
        return min(r[3] for r in self.rows)

    @property
    def message(self):
        if not self.bifurcating and all(r[3] > self.tol for r in self.rows):
            msg = "no bifurcation found"
        elif self.bifurcating:
            msg = "bifurcation found at M1 = " + ", ".join(repr(m) for m in self.bifurcating)
        else:
            msg = "nonstandard winner found"
        if not self.authoritative:
            msg += " (non-authoritative: density violates the theorem hypotheses)"
        return msg

    def to_csv(self, fh=None):
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf)
        w.writerow(["M1", "standard_perimeter", "best_competitor_perimeter", "gap"])
        for row in self.rows:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue() if fh is None else None

    def to_json(self):
        return {"density": self.density.to_json(), "tail": list(self.tail),
                "n_points": len(self.rows), "min_gap": self.min_gap,
                "bifurcating": self.bifurcating, "threshold": self.threshold,
                "authoritative": self.authoritative, "message": self.message}


def _grid(m1_grid):
    if isinstance(m1_grid, tuple) and len(m1_grid) == 3 and isinstance(m1_grid[2], int):
        lo, hi, steps = m1_grid
        if steps < 1 or not 0 < lo <= hi:
            raise ValueError(f"bad grid {m1_grid!r}")
        return np.linspace(lo, hi, steps) if steps > 1 else np.array([float(lo)])
    grid = np.asarray(m1_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be a nonempty list of positive masses")
    return grid


def _sweep_row(m1, tail, d, q):
    spec = MassSpec.from_unsorted((m1,) + tuple(tail))
    rep = verify_theorem(spec, d, allow_invalid=True, q=q)
    best = rep.best_competitor
    p_best = best[1] if best else math.inf
    return (float(m1), rep.standard_perimeter, p_best, p_best - rep.standard_perimeter)


def bifurcation_search(tail, d, m1_grid, tol=BIFURCATION_TOL, q=None, n_jobs=None):
    """Sweep the smallest mass over ``m1_grid`` with the other masses fixed.

    ``m1_grid`` is either explicit values or ``(lo, hi, steps)`` for an
    evenly spaced grid.  Rows come back in grid order whatever ``n_jobs`` is.
    """
    tail = tuple(float(m) for m in tail)
    if not tail or min(tail) <= 0:
        raise ValueError("tail masses must be positive")
    grid = _grid(m1_grid)
    q = q or DEFAULT_QUAD
    if n_jobs in (None, 1):
        rows = [_sweep_row(m, tail, d, q) for m in grid]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_sweep_row)(m, tail, d, q) for m in grid)
    return BifurcationReport(tail, d, list(rows), tol, d.satisfies_theorem_hypotheses)


@dataclass(frozen=True)
class InflationRow:
    delta: float
    dp_standard: float
    dp_competitor: float
    left_shifted: bool

    @property
    def difference(self):
        return self.dp_competitor - self.dp_standard

    def to_json(self):
        return {"delta": self.delta, "dP_std": self.dp_standard, "dP_comp": self.dp_competitor,
                "difference": self.difference, "left_shifted": self.left_shifted}


def _outer_endpoints(d, left, right, q):
    out = {}
    for stack, direction in ((left, "left"), (right, "right")):
        cum = 0.0
        for r, m in stack:
            cum += m
            out[r] = invert_mass(d, 0.0, cum, direction, q)
    return out


def _inflate(stack, target, delta):
    return [(r, m + delta if r == target else m) for r, m in stack]


def inflation_experiment(spec, d, delta_grid, target=None, competitor=None, q=None):
    """Grow the second-largest mass in the standard and a competing layout.

    Stacking order on each side is frozen at the uninflated masses so only
    endpoints outward of the target move.  Each row reports the perimeter
    increase of both layouts and whether the competitor is shifted to the
    left of the standard one (before inflation).
    """
    spec = _as_spec(spec)
    q = q or DEFAULT_QUAD
    n = spec.n
    if n < 2:
        raise InvalidTarget("inflation needs at least two regions")
    if target is None:
        target = n - 1
    if target != n - 1:
        raise InvalidTarget(f"target must be the second-largest region {n - 1}, got {target}")
    std = SignAssignment.standard(n)
    if competitor is None:
        rep = verify_theorem(spec, d, allow_invalid=True, q=q)
        best = rep.best_competitor
        if best is None:
            raise InvalidTarget("no nonstandard competitor exists for these masses")
        competitor = best[0]
    if competitor.n != n:
        raise InvalidTarget("competitor has the wrong number of regions")

    std_stacks = stacks_for(spec, std.sides)
    comp_stacks = stacks_for(spec, competitor.sides)
    a = _outer_endpoints(d, *std_stacks, q)
    b = _outer_endpoints(d, *comp_stacks, q)
    shifted = bool(b[target] < a[target] <= 0 < b[n] < a[n])
    p_std = _stack_perimeter(d, *std_stacks, q)
    p_comp = _stack_perimeter(d, *comp_stacks, q)

    rows = []
    for delta in delta_grid:
        delta = float(delta)
        if delta < 0:
            raise ValueError("inflation amounts must be nonnegative")
        ps = _stack_perimeter(d, *(_inflate(s, target, delta) for s in std_stacks), q)
        pc = _stack_perimeter(d, *(_inflate(s, target, delta) for s in comp_stacks), q)
        rows.append(InflationRow(delta, ps - p_std, pc - p_comp, shifted))
    return competitor, rows
