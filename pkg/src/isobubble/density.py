"""Density families on the real line, weighted mass, and inverse-mass solving.

Every density here is even, so the cumulative mass ``F(x) = int_0^x f`` is an
odd function and ``mass(a, b) = F(b) - F(a)``.
"""
import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erfi

from .exceptions import FlagViolation, NonConvergence, OriginSingularity

__all__ = [
    "Family",
    "Density",
    "QuadratureSettings",
    "FlagCheck",
    "FlagReport",
    "mass",
    "invert_mass",
    "adaptive_simpson",
    "check_flags",
]

QUAD_TOL_ENV = "ISOBUBBLE_QUAD_TOL"


class Family(str, Enum):
    POWER = "power"
    POWER_COMPOSITE = "power_composite"
    LOG_CONVEX_CONTROL = "log_convex_control"


@dataclass(frozen=True)
class QuadratureSettings:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_depth: int = 60
    max_expand: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_depth < 10:
            raise ValueError("max_depth must be at least 10")
        if self.max_expand < 1:
            raise ValueError("max_expand must be positive")

    @classmethod
    def from_env(cls, **overrides):
        """Default settings, with both tolerances taken from ``ISOBUBBLE_QUAD_TOL`` if set."""
        raw = os.environ.get(QUAD_TOL_ENV)
        if raw:
            tol = float(raw)
            overrides.setdefault("abs_tol", tol)
            overrides.setdefault("rel_tol", tol)
        return cls(**overrides)


DEFAULT_QUAD = QuadratureSettings()


@dataclass(frozen=True)
class Density:
    """A symmetric density from one of the built-in families.

    ``power``: ``|x|**p``; ``power_composite``: ``|x|**p * (1 + |x|)**q``;
    ``log_convex_control``: ``exp(x**2)``, kept as a negative control for
    arguments that need log-concavity.
    """

    family: Family
    p: float = 1.0
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.LOG_CONVEX_CONTROL:
            object.__setattr__(self, "p", 0.0)
            object.__setattr__(self, "q", 0.0)
            return
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ValueError(f"exponent p must be positive, got {self.p!r}")
        if self.family is Family.POWER:
            object.__setattr__(self, "q", 0.0)
        elif not (self.q >= 0 and math.isfinite(self.q)):
            raise ValueError(f"exponent q must be nonnegative, got {self.q!r}")

    @classmethod
    def power(cls, p=1.0):
        return cls(Family.POWER, p=float(p))

    @classmethod
    def power_composite(cls, p=1.0, q=1.0):
        return cls(Family.POWER_COMPOSITE, p=float(p), q=float(q))

    @classmethod
    def log_convex_control(cls):
        return cls(Family.LOG_CONVEX_CONTROL)

    # -- declared flags -------------------------------------------------
    symmetric = property(lambda self: True)
    radially_increasing = property(lambda self: True)

    @property
    def vanishes_at_origin(self):
        return self.family is not Family.LOG_CONVEX_CONTROL

    @property
    def log_concave(self):
        return self.family is not Family.LOG_CONVEX_CONTROL

    @property
    def flags(self):
        return {
            "symmetric": self.symmetric,
            "vanishes_at_origin": self.vanishes_at_origin,
            "radially_increasing": self.radially_increasing,
            "log_concave": self.log_concave,
        }

    @property
    def satisfies_theorem_hypotheses(self):
        return all(self.flags.values())

    # -- pointwise closed forms -----------------------------------------
    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """f(x); accepts scalars or arrays."""
        if self.family is Family.LOG_CONVEX_CONTROL:
            return np.exp(np.square(x))
        ax = np.abs(x)
        out = ax ** self.p
        if self.family is Family.POWER_COMPOSITE and self.q:
            out = out * (1.0 + ax) ** self.q
        return out

    def _require_nonzero(self, x):
        if self.vanishes_at_origin and np.any(np.asarray(x) == 0):
            raise OriginSingularity("log-derivative is undefined where f vanishes (x = 0)")

    def log_deriv(self, x):
        """(log f)'(x) = f'(x) / f(x)."""
        self._require_nonzero(x)
        if self.family is Family.LOG_CONVEX_CONTROL:
            return 2.0 * np.asarray(x, dtype=float)
        x = np.asarray(x, dtype=float)
        out = self.p / x
        if self.family is Family.POWER_COMPOSITE and self.q:
            out = out + self.q * np.sign(x) / (1.0 + np.abs(x))
        return out

    def log_deriv2(self, x):
        """(log f)''(x)."""
        self._require_nonzero(x)
        x = np.asarray(x, dtype=float)
        if self.family is Family.LOG_CONVEX_CONTROL:
            return np.full_like(x, 2.0)
        out = -self.p / x**2
        if self.family is Family.POWER_COMPOSITE and self.q:
            out = out - self.q / (1.0 + np.abs(x)) ** 2
        return out

    def deriv(self, x):
        """f'(x), away from the origin for the vanishing families."""
        if self.family is Family.LOG_CONVEX_CONTROL:
            return 2.0 * np.asarray(x, dtype=float) * self.eval(x)
        return self.eval(x) * self.log_deriv(x)

    def deriv2(self, x):
        """f''(x), away from the origin for the vanishing families."""
        if self.family is Family.LOG_CONVEX_CONTROL:
            x = np.asarray(x, dtype=float)
            return (4.0 * x**2 + 2.0) * self.eval(x)
        l1 = self.log_deriv(x)
        return self.eval(x) * (self.log_deriv2(x) + l1 * l1)

    # -- cumulative mass --------------------------------------------------
    @property
    def has_closed_form_mass(self):
        if self.family is Family.POWER_COMPOSITE:
            return float(self.q).is_integer()
        return True

    def cumulative(self, x):
        """Signed mass from the origin, ``int_0^x f``; closed forms only."""
        if self.family is Family.LOG_CONVEX_CONTROL:
            return 0.5 * math.sqrt(math.pi) * erfi(x)
        if not self.has_closed_form_mass:
            raise NotImplementedError("no closed-form antiderivative for non-integer q")
        ax = np.abs(x)
        if self.family is Family.POWER:
            out = ax ** (self.p + 1.0) / (self.p + 1.0)
        else:
            q = int(self.q)
            out = sum(math.comb(q, k) * ax ** (self.p + k + 1.0) / (self.p + k + 1.0)
                      for k in range(q + 1))
        return np.sign(x) * out

    def _inverse_cumulative_guess(self, m):
        """Closed-form inverse of F where one exists (power family), else None."""
        if self.family is Family.POWER:
            return math.copysign(((self.p + 1.0) * abs(m)) ** (1.0 / (self.p + 1.0)), m)
        return None

    # -- JSON ------------------------------------------------------------
    def to_json(self):
        if self.family is Family.POWER:
            return {"family": "power", "p": self.p}
        if self.family is Family.POWER_COMPOSITE:
            return {"family": "power_composite", "p": self.p, "q": self.q}
        return {"family": "log_convex_control"}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or "family" not in obj:
            raise ValueError("density must be an object with a 'family' key")
        family = Family(obj["family"])
        if family is Family.POWER:
            return cls.power(obj.get("p", 1.0))
        if family is Family.POWER_COMPOSITE:
            return cls.power_composite(obj.get("p", 1.0), obj.get("q", 0.0))
        return cls.log_convex_control()

    def __str__(self):
        if self.family is Family.POWER:
            return f"|x|^{self.p:g}"
        if self.family is Family.POWER_COMPOSITE:
            return f"|x|^{self.p:g}(1+|x|)^{self.q:g}"
        return "exp(x^2)"


# ---------------------------------------------------------------------------
# quadrature

def adaptive_simpson(func, a, b, abs_tol=1e-10, rel_tol=1e-10, max_depth=60):
    """Adaptive Simpson quadrature of a scalar function on [a, b].

    Uses the usual ``|S2 - S| <= 15 tol`` acceptance with Richardson
    correction; the tolerance is halved on every split.  For integrals
    smaller than 1 the absolute tolerance is scaled by the first estimate,
    so tiny masses still come out to full relative accuracy.
    """
    if a == b:
        return 0.0
    fa, fm, fb = func(a), func(0.5 * (a + b)), func(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    scale = min(1.0, abs(whole)) or 1.0
    tol = max(abs_tol * scale, rel_tol * abs(whole))
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, t, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = func(lm), func(rm)
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        delta = left + right - s
        if abs(delta) <= 15.0 * t:
            total += left + right + delta / 15.0
            continue
        if depth + 1 > max_depth:
            raise NonConvergence(
                f"adaptive Simpson exceeded max_depth={max_depth} on [{lo!r}, {hi!r}]")
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * t, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * t, depth + 1))
    return total


def _quad_one_signed(d, a, b, q):
    # 0 <= a <= b.  Substituting x = s**2 removes the |x|**p cusp at the origin.
    def g(s):
        return 2.0 * s * float(d.eval(s * s))
    return adaptive_simpson(g, math.sqrt(a), math.sqrt(b),
                            q.abs_tol, q.rel_tol, q.max_depth)


def _quadrature_mass(d, a, b, q):
    if a >= 0:
        return _quad_one_signed(d, a, b, q)
    if b <= 0:
        return _quad_one_signed(d, -b, -a, q)
    return _quad_one_signed(d, 0.0, -a, q) + _quad_one_signed(d, 0.0, b, q)


def mass(d, a, b, q=None, method="auto"):
    """Weighted mass of [a, b] under ``d``.

    ``method="auto"`` uses the closed-form antiderivative when the family has
    one (unless the difference would cancel badly) and adaptive quadrature
    otherwise; ``"quadrature"`` forces quadrature.
    """
    a, b = float(a), float(b)
    if a > b:
        raise ValueError(f"mass needs a <= b, got [{a!r}, {b!r}]")
    if a == b:
        return 0.0
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    q = q or DEFAULT_QUAD
    if method == "auto" and d.has_closed_form_mass:
        fa, fb = float(d.cumulative(a)), float(d.cumulative(b))
        # short intervals far out lose digits to cancellation; integrate those
        if fb - fa >= 1e-3 * max(abs(fa), abs(fb)):
            return fb - fa
    return _quadrature_mass(d, a, b, q)


def invert_mass(d, a, M, direction="right", q=None):
    """Return ``b`` with ``int_a^b f = M`` (``direction="right"``) or
    ``int_b^a f = M`` (``direction="left"``).

    A bracket is grown by doubling from step 1 and then closed by a
    safeguarded Newton iteration (f is the derivative of the mass map), with
    bisection whenever a Newton step leaves the bracket.
    """
    a, M = float(a), float(M)
    if not M >= 0:
        raise ValueError(f"mass must be nonnegative, got {M!r}")
    if direction not in ("right", "left"):
        raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")
    if M == 0.0:
        return a
    if direction == "left":
        # every family is symmetric: solve the mirrored problem so that left
        # and right results are exact reflections of each other
        return -invert_mass(d, -a, M, "right", q)
    q = q or DEFAULT_QUAD
    sgn = 1.0

    if d.has_closed_form_mass:
        target = float(d.cumulative(a)) + sgn * M

        def excess(s):
            return sgn * (float(d.cumulative(a + sgn * s)) - target)

        guess = d._inverse_cumulative_guess(target)
        s0 = sgn * (guess - a) if guess is not None else None
    else:
        def excess(s):
            b = a + sgn * s
            lo, hi = (a, b) if sgn > 0 else (b, a)
            return _quadrature_mass(d, lo, hi, q) - M

        s0 = None

    # bracket [lo, hi] on the distance s >= 0 travelled from a
    lo, hi = 0.0, None
    if s0 is not None and s0 > 0:
        e0 = excess(s0)
        if abs(e0) <= 0.01 * q.abs_tol:
            return a + sgn * s0
        if e0 > 0:
            hi = s0
        else:
            lo = s0
    if hi is None:
        step = 1.0 if s0 is None else max(s0, 1.0)
        hi = lo + step
        for _ in range(q.max_expand):
            if excess(hi) >= 0:
                break
            lo, step = hi, 2.0 * step
            hi = lo + step
        else:
            raise NonConvergence(
                f"could not bracket mass {M!r} from {a!r} within {q.max_expand} doublings")

    s = s0 if (s0 is not None and lo <= s0 <= hi) else 0.5 * (lo + hi)
    for _ in range(200):
        e = excess(s)
        if abs(e) <= 0.01 * q.abs_tol:
            return a + sgn * s
        if e > 0:
            hi = s
        else:
            lo = s
        slope = float(d.eval(a + sgn * s))
        s_new = s - e / slope if slope > 0 else None
        if s_new is None or not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if hi - lo <= 1e-12 * max(1.0, abs(a) + hi):
            s = s_new
            break
        s = s_new

    # bracket is tight: polish with a few Newton steps, keep the best
    best_s, best_e = s, abs(excess(s))
    for _ in range(5):
        slope = float(d.eval(a + sgn * s))
        if slope <= 0:
            break
        s = min(max(s - excess(s) / slope, 0.0), hi)
        e = abs(excess(s))
        if e < best_e:
            best_s, best_e = s, e
        if e <= 0.01 * q.abs_tol:
            break
    # near a steep density no float b may reach abs_tol: allow a few ulps of b
    floor = 4.0 * float(d.eval(a + sgn * best_s)) * math.ulp(a + sgn * best_s)
    if best_e > max(q.abs_tol, floor):
        raise NonConvergence(f"inverse mass residual {best_e:.3e} exceeds abs_tol")
    return a + sgn * best_s


# ---------------------------------------------------------------------------
# flag validation

@dataclass(frozen=True)
class FlagCheck:
    declared: bool
    holds: bool
    worst: float
    witness: float | None

    def to_json(self):
        return {"declared": self.declared, "holds": self.holds,
                "worst": self.worst, "witness": self.witness}


@dataclass(frozen=True)
class FlagReport:
    density: Density
    checks: dict

    @property
    def consistent(self):
        """Every declared flag was confirmed numerically."""
        return all(c.holds for c in self.checks.values() if c.declared)

    @property
    def satisfies_theorem_hypotheses(self):
        return all(c.holds for c in self.checks.values())

    def to_json(self):
        return {
            "density": self.density.to_json(),
            "flags": {k: v.to_json() for k, v in self.checks.items()},
            "consistent": self.consistent,
            "satisfies_theorem_hypotheses": self.satisfies_theorem_hypotheses,
        }


def check_flags(d, samples=1000, strict=True):
    """Numerically test the four structural properties on a symmetric grid.

    Each property is reported with its worst violation and the grid point
    where it occurred.  With ``strict`` a declared flag that fails raises
    :class:`FlagViolation`.
    """
    if samples < 100:
        raise ValueError("samples must be at least 100")
    pos = np.geomspace(1e-2, 10.0, samples // 2)
    xs = np.concatenate([-pos[::-1], pos])
    fx = d.eval(xs)
    checks = {}

    asym = np.abs(d.eval(pos) - d.eval(-pos)) / np.maximum(1.0, d.eval(pos))
    i = int(np.argmax(asym))
    checks["symmetric"] = FlagCheck(d.symmetric, bool(asym[i] <= 1e-12), float(asym[i]),
                                    float(pos[i]) if asym[i] > 1e-12 else None)

    f0 = float(d.eval(0.0))
    checks["vanishes_at_origin"] = FlagCheck(d.vanishes_at_origin, f0 == 0.0, f0,
                                             0.0 if f0 != 0.0 else None)

    fp = d.eval(pos)
    drops = -np.diff(fp) / np.maximum(1.0, fp[1:])
    i = int(np.argmax(drops))
    ok = bool(drops[i] <= 1e-12)
    checks["radially_increasing"] = FlagCheck(d.radially_increasing, ok, float(max(drops[i], 0.0)),
                                              None if ok else float(pos[i + 1]))

    # central second difference of log f, independent of the closed forms
    h = 1e-3 * np.abs(xs)
    with np.errstate(divide="ignore"):
        second = (np.log(d.eval(xs + h)) - 2.0 * np.log(fx) + np.log(d.eval(xs - h))) / h**2
    i = int(np.argmax(second))
    ok = bool(second[i] < 0)
    checks["log_concave"] = FlagCheck(d.log_concave, ok, float(second[i]),
                                      None if ok else float(xs[i]))

    report = FlagReport(d, checks)
    if strict:
        for name, c in checks.items():
            if c.declared and not c.holds:
                raise FlagViolation(name, c.witness, c.worst)
    return report
