"""Labeled multi-interval configurations and the standard n-bubble builder."""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .density import DEFAULT_QUAD, Density, invert_mass, mass
from .exceptions import HypothesisViolation, InvalidTarget, OriginSingularity

__all__ = [
    "Interval",
    "MassSpec",
    "Configuration",
    "StructureReport",
    "total_perimeter",
    "region_masses",
    "build_standard",
    "standard_sides",
    "classify",
    "stationarity_residual",
    "same_mass_slacks",
]

# endpoints closer than this are the same point
SNAP_TOL = 1e-12
LARGEST_RIGHT = "largest_right"
LARGEST_LEFT = "largest_left"


@dataclass(frozen=True)
class Interval:
    left: float
    right: float
    region: int

    def __post_init__(self):
        object.__setattr__(self, "left", float(self.left))
        object.__setattr__(self, "right", float(self.right))
        if not self.left <= self.right:
            raise ValueError(f"interval needs left <= right, got [{self.left}, {self.right}]")
        if int(self.region) != self.region or self.region < 1:
            raise ValueError(f"region ids are integers >= 1, got {self.region!r}")
        object.__setattr__(self, "region", int(self.region))

    @property
    def length(self):
        return self.right - self.left

    def to_json(self):
        return {"left": self.left, "right": self.right, "region": self.region}


class MassSpec:
    """Target masses ``M_1 <= ... <= M_n``; region ``i`` carries ``masses[i-1]``."""

    def __init__(self, masses):
        masses = tuple(float(m) for m in masses)
        if not masses:
            raise ValueError("a mass spec needs at least one mass")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise ValueError(f"masses must be finite and positive, got {masses}")
        if any(b < a for a, b in zip(masses, masses[1:])):
            raise ValueError(f"masses must be sorted ascending, got {masses}")
        self.masses = masses

    @classmethod
    def from_unsorted(cls, values):
        """Sort stably, so equal masses keep their input order."""
        return cls(sorted((float(v) for v in values)))

    @property
    def n(self):
        return len(self.masses)

    def mass_of(self, region):
        return self.masses[region - 1]

    def __len__(self):
        return len(self.masses)

    def __iter__(self):
        return iter(self.masses)

    def __eq__(self, other):
        return isinstance(other, MassSpec) and self.masses == other.masses

    def __hash__(self):
        return hash(self.masses)

    def __repr__(self):
        return f"MassSpec({list(self.masses)})"


def _snap(values):
    """Map each value to a representative of its SNAP_TOL cluster; 0 wins its cluster."""
    uniq = sorted(set(values))
    rep = {}
    cluster = []
    for v in uniq + [None]:
        if v is not None and cluster and v - cluster[-1] <= SNAP_TOL * max(1.0, abs(v)):
            cluster.append(v)
            continue
        if cluster:
            target = 0.0 if any(abs(c) <= SNAP_TOL for c in cluster) else cluster[0]
            for c in cluster:
                rep[c] = target
        cluster = [v]
    return rep


class Configuration:
    """An immutable, ordered set of labeled intervals under a density.

    Region ids must cover ``1..n``.  Interiors are pairwise disjoint;
    neighbouring intervals may share an endpoint.
    """

    def __init__(self, intervals, density):
        intervals = [iv if isinstance(iv, Interval) else Interval(*iv) for iv in intervals]
        if not intervals:
            raise ValueError("a configuration needs at least one interval")
        rep = _snap([x for iv in intervals for x in (iv.left, iv.right)])
        intervals = [Interval(rep[iv.left], rep[iv.right], iv.region) for iv in intervals]
        intervals.sort(key=lambda iv: (iv.left, iv.right))
        for prev, cur in zip(intervals, intervals[1:]):
            if cur.left < prev.right:
                raise ValueError(f"intervals overlap: {prev} and {cur}")
        ids = {iv.region for iv in intervals}
        n = max(ids)
        if ids != set(range(1, n + 1)):
            raise ValueError(f"region ids must cover 1..{n}, got {sorted(ids)}")
        self.intervals = tuple(intervals)
        self.density = density
        self.n_regions = n

    # -- accessors --------------------------------------------------------
    def intervals_of(self, region):
        return [iv for iv in self.intervals if iv.region == region]

    @property
    def endpoints(self):
        return sorted({x for iv in self.intervals for x in (iv.left, iv.right)})

    @property
    def leftmost(self):
        return self.intervals[0].left

    @property
    def rightmost(self):
        return max(iv.right for iv in self.intervals)

    def outer_endpoint(self, region):
        """Endpoint of ``region`` furthest from the origin (signed)."""
        pts = [x for iv in self.intervals_of(region) for x in (iv.left, iv.right)]
        return max(pts, key=abs)

    def boundary_points(self):
        """Distinct endpoints that separate something; counted once in the perimeter.

        Degenerate intervals are ignored, and a point where two intervals of
        the same region meet is interior to that region.
        """
        ends, starts = {}, {}
        for iv in self.intervals:
            if iv.length > 0:
                ends[iv.right] = iv.region
                starts[iv.left] = iv.region
        pts = []
        for x in sorted(set(ends) | set(starts)):
            if x in ends and x in starts and ends[x] == starts[x]:
                continue
            pts.append(x)
        return pts

    # -- side views -------------------------------------------------------
    def side_pieces(self):
        """Pieces per side after cutting at the origin and joining same-region neighbours.

        Returns ``(left, right)``: lists of ``(region, inner, outer)`` ordered
        from the origin outward, where ``inner``/``outer`` are the endpoints
        nearer to and further from the origin.
        """
        right, left = [], []
        for iv in self.intervals:
            if iv.length == 0:
                continue
            if iv.right > 0:
                right.append([iv.region, max(iv.left, 0.0), iv.right])
            if iv.left < 0:
                left.append([iv.region, min(iv.right, 0.0), iv.left])
        left.reverse()
        out = []
        for side in (left, right):
            joined = []
            for piece in side:
                if joined and joined[-1][0] == piece[0] and joined[-1][2] == piece[1]:
                    joined[-1][2] = piece[2]
                else:
                    joined.append(piece)
            out.append([tuple(p) for p in joined])
        return out[0], out[1]

    def is_packed(self):
        """Both sides are gap-free stacks anchored at the origin."""
        for side in self.side_pieces():
            prev = 0.0
            for _, inner, outer in side:
                if inner != prev:
                    return False
                prev = outer
        return True

    def side_stacks(self, q=None):
        """Per-side ``[(region, mass), ...]`` from the origin outward.

        Only defined for packed configurations, which are fully described by
        these stacks.
        """
        if not self.is_packed():
            raise InvalidTarget("configuration is not packed against the origin")
        q = q or DEFAULT_QUAD
        out = []
        for side in self.side_pieces():
            out.append([(r, mass(self.density, min(a, b), max(a, b), q)) for r, a, b in side])
        return out[0], out[1]

    @classmethod
    def from_stacks(cls, left, right, density, q=None):
        """Pack ``(region, mass)`` stacks outward from the origin.

        Each endpoint is placed by inverting the cumulative mass measured from
        the origin.

        Zero-mass entries are dropped and consecutive entries of one region
        are joined, including a region sitting innermost on both sides.
        """
        q = q or DEFAULT_QUAD
        intervals = []
        for stack, direction in ((right, "right"), (left, "left")):
            x = 0.0
            merged = []
            for region, m in stack:
                if m <= 0:
                    continue
                if merged and merged[-1][0] == region:
                    merged[-1][1] += m
                else:
                    merged.append([region, m])
            cum = 0.0
            for region, m in merged:
                # invert cumulative mass from the origin so errors do not pile up
                cum += m
                y = invert_mass(density, 0.0, cum, direction, q)
                lo, hi = (x, y) if direction == "right" else (y, x)
                intervals.append(Interval(lo, hi, region))
                x = y
        intervals.sort(key=lambda iv: iv.left)
        joined = []
        for iv in intervals:
            if joined and joined[-1].region == iv.region and joined[-1].right == iv.left:
                joined[-1] = Interval(joined[-1].left, iv.right, iv.region)
            else:
                joined.append(iv)
        return cls(joined, density)

    def reflect(self):
        return Configuration([Interval(-iv.right, -iv.left, iv.region) for iv in self.intervals],
                             self.density)

    def allclose(self, other, atol=1e-10):
        if len(self.intervals) != len(other.intervals):
            return False
        return all(a.region == b.region and abs(a.left - b.left) <= atol
                   and abs(a.right - b.right) <= atol
                   for a, b in zip(self.intervals, other.intervals))

    # -- JSON -------------------------------------------------------------
    def to_json(self):
        return {"density": self.density.to_json(),
                "intervals": [iv.to_json() for iv in self.intervals]}

    @classmethod
    def from_json(cls, obj):
        density = Density.from_json(obj["density"])
        return cls([Interval(i["left"], i["right"], i["region"]) for i in obj["intervals"]],
                   density)

    def __repr__(self):
        body = ", ".join(f"[{iv.left:.6g},{iv.right:.6g}]:R{iv.region}" for iv in self.intervals)
        return f"Configuration({{{body}}}, {self.density})"


def total_perimeter(c):
    """Sum of f over the distinct boundary points (shared endpoints counted once)."""
    pts = c.boundary_points()
    return float(np.sum(c.density.eval(np.asarray(pts, dtype=float)))) if pts else 0.0


def region_masses(c, q=None):
    """Mass per region id, summed over the region's intervals."""
    out = {r: 0.0 for r in range(1, c.n_regions + 1)}
    for iv in c.intervals:
        out[iv.region] += mass(c.density, iv.left, iv.right, q)
    return out


def standard_sides(n, orient=LARGEST_RIGHT):
    """Side (+1 right, -1 left) of each region in the standard configuration."""
    if orient not in (LARGEST_RIGHT, LARGEST_LEFT):
        raise ValueError(f"orient must be {LARGEST_RIGHT!r} or {LARGEST_LEFT!r}")
    top = 1 if orient == LARGEST_RIGHT else -1
    return tuple(top if (n - i) % 2 == 0 else -top for i in range(1, n + 1))


def stacks_for(spec, sides):
    """Per-side stacks for a one-interval-per-region placement.

    Each side is ordered by ascending mass from the origin; ties keep index
    order.
    """
    left, right = [], []
    for region, (m, s) in enumerate(zip(spec.masses, sides), start=1):
        (right if s > 0 else left).append((region, m))
    left.sort(key=lambda e: e[1])
    right.sort(key=lambda e: e[1])
    return left, right


def build_standard(spec, d, orient=LARGEST_RIGHT, q=None):
    """The standard configuration: one interval per region, sides alternating
    with index parity and the largest region on the ``orient`` side."""
    if not d.vanishes_at_origin:
        raise HypothesisViolation(f"standard configuration needs f(0) = 0; {d} does not vanish")
    left, right = stacks_for(spec, standard_sides(spec.n, orient))
    return Configuration.from_stacks(left, right, d, q)


@dataclass
class StructureReport:
    condensed: bool
    one_interval_per_region: bool
    origin_is_boundary: bool
    standard: bool
    alternating: list = field(default_factory=list)
    nested: list = field(default_factory=list)

    def to_json(self):
        return {
            "condensed": self.condensed,
            "one_interval_per_region": self.one_interval_per_region,
            "origin_is_boundary": self.origin_is_boundary,
            "standard": self.standard,
            "alternating": [list(p) for p in self.alternating],
            "nested": [list(p) for p in self.nested],
        }


def _nondecreasing(values, rtol=1e-9):
    return all(b >= a * (1 - rtol) - 1e-12 for a, b in zip(values, values[1:]))


def _same_multiset(xs, ys, rtol=1e-8):
    if len(xs) != len(ys):
        return False
    return all(abs(a - b) <= rtol * max(1.0, abs(a)) for a, b in zip(sorted(xs), sorted(ys)))


def classify(c, q=None):
    """Structural flags plus the alternating and nested region pairs."""
    d = c.density
    left, right = c.side_pieces()
    piece_mass = {}
    for side_name, side in (("L", left), ("R", right)):
        piece_mass[side_name] = [mass(d, min(a, b), max(a, b), q) for _, a, b in side]

    packed = c.is_packed()
    at_most_one = all(len({r for r, _, _ in side}) == len(side) for side in (left, right))
    condensed = (packed and at_most_one and bool(left or right)
                 and _nondecreasing(piece_mass["L"]) and _nondecreasing(piece_mass["R"]))

    runs = {}
    prev = None
    for iv in c.intervals:
        if iv.length == 0:
            continue
        if prev is not None and prev.region == iv.region and prev.right == iv.left:
            prev = iv
            continue
        runs[iv.region] = runs.get(iv.region, 0) + 1
        prev = iv
    one_each = all(runs.get(r, 0) == 1 for r in range(1, c.n_regions + 1))

    origin_is_boundary = bool(left and right and left[0][1] == 0.0 and right[0][1] == 0.0
                              and left[0][0] != right[0][0])

    left_idx = {r: i for i, (r, _, _) in enumerate(left)}
    right_idx = {r: i for i, (r, _, _) in enumerate(right)}
    both = sorted(set(left_idx) & set(right_idx))
    alternating, nested = [], []
    for a, b in combinations(both, 2):
        a_outer_left = left_idx[a] > left_idx[b]
        a_outer_right = right_idx[a] > right_idx[b]
        (nested if a_outer_left == a_outer_right else alternating).append((a, b))

    standard = False
    if condensed and one_each and not both and (origin_is_boundary or c.n_regions == 1):
        masses = region_masses(c, q)
        spec = MassSpec.from_unsorted(masses.values())
        sides = standard_sides(spec.n)
        std_right = [m for m, s in zip(spec.masses, sides) if s > 0]
        std_left = [m for m, s in zip(spec.masses, sides) if s < 0]
        standard = ((_same_multiset(piece_mass["R"], std_right)
                     and _same_multiset(piece_mass["L"], std_left))
                    or (_same_multiset(piece_mass["R"], std_left)
                        and _same_multiset(piece_mass["L"], std_right)))
    return StructureReport(condensed, one_each, origin_is_boundary, standard,
                           alternating, nested)


def stationarity_residual(c, moving, directions=1):
    """Instantaneous dP/dt when the ``moving`` endpoints travel at speed 1/f.

    ``directions`` is +1/-1 per moving endpoint (or one sign for all).  The
    origin cannot move: the density vanishes there.
    """
    moving = [float(x) for x in moving]
    if np.isscalar(directions):
        directions = [directions] * len(moving)
    if len(directions) != len(moving):
        raise ValueError("need one direction per moving endpoint")
    pts = c.endpoints
    for x in moving:
        if not any(abs(x - p) <= SNAP_TOL * max(1.0, abs(p)) for p in pts):
            raise ValueError(f"{x!r} is not an endpoint of the configuration")
        if x == 0.0 and c.density.vanishes_at_origin:
            raise OriginSingularity("cannot move an endpoint sitting at the origin")
    if not moving:
        return 0.0
    signs = np.sign(np.asarray(directions, dtype=float))
    return float(np.sum(signs * c.density.log_deriv(np.asarray(moving))))


def same_mass_slacks(d, a1, a2, M, q=None):
    """Slacks of the same-mass interval inequalities on the positive axis.

    Builds ``[a1, b1]`` and ``[a2, b2]`` each holding mass ``M`` with
    ``0 <= a1 < a2`` and returns ``(b2 - b1, (b1 - a1) - (b2 - a2),
    (f(b1) - f(a1)) - (f(b2) - f(a2)))``.  For a radially increasing density
    the first two are positive; the third is nonnegative when the density is
    also log-concave.
    """
    if not 0 <= a1 < a2:
        raise ValueError("need 0 <= a1 < a2")
    b1 = invert_mass(d, a1, M, "right", q)
    b2 = invert_mass(d, a2, M, "right", q)
    f = d.eval
    return (b2 - b1, (b1 - a1) - (b2 - a2),
            float((f(b1) - f(a1)) - (f(b2) - f(a2))))
