"""First-variation endpoint flows: dx/dt = direction / f(x).

Moving an endpoint at speed 1/f changes the mass on either side of it at
unit rate, so an interval whose two endpoints move together keeps its mass
while the perimeter changes at rate ``sum(direction * (log f)'(x))``.

Integration uses an embedded Dormand-Prince 5(4) pair with step-size
control.  Steps are clamped so no moving endpoint enters the band
``|x| < origin_guard`` and no event function (interval lengths, requested
endpoint meetings) is overshot by more than ``collision_tol``.
"""
import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .density import mass
from .exceptions import MaxStepsExceeded, OriginSingularity, StepFailure

__all__ = [
    "FlowSettings",
    "FlowState",
    "Trajectory",
    "IntervalCollapse",
    "EndpointMeets",
    "TimeReached",
    "step",
    "perimeter_rate",
    "perimeter_rate2",
    "run_until",
]


@dataclass(frozen=True)
class FlowSettings:
    dt_init: float = 1e-3
    error_tol: float = 1e-8
    origin_guard: float = 1e-9
    collision_tol: float = 1e-10
    max_steps: int = 10**7
    max_records: int = 10**5

    def __post_init__(self):
        for name in ("dt_init", "error_tol", "origin_guard", "collision_tol",
                     "max_steps", "max_records"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_SETTINGS = FlowSettings()


@dataclass(frozen=True)
class FlowState:
    """Endpoint positions with per-endpoint direction and a frozen mask.

    ``intervals`` holds ``(left_index, right_index, region)`` triples into
    ``positions`` and is only used for instrumentation and collision events;
    ``counted`` marks positions that contribute to the perimeter.
    """

    positions: np.ndarray
    directions: np.ndarray
    frozen: np.ndarray
    density: object
    time: float = 0.0
    intervals: tuple = ()
    counted: np.ndarray = None
    h_next: float = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        dirs = np.sign(np.array(self.directions, dtype=float))
        frz = np.array(self.frozen, dtype=bool)
        if not (pos.shape == dirs.shape == frz.shape) or pos.ndim != 1:
            raise ValueError("positions, directions and frozen must be 1-d and equally long")
        if np.any(dirs[~frz] == 0):
            raise ValueError("moving endpoints need direction +1 or -1")
        if self.density.vanishes_at_origin and np.any(pos[~frz] == 0.0):
            raise OriginSingularity("a moving endpoint sits at the origin")
        cnt = np.ones_like(frz) if self.counted is None else np.array(self.counted, dtype=bool)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "frozen", frz)
        object.__setattr__(self, "counted", cnt)
        object.__setattr__(self, "intervals", tuple(tuple(iv) for iv in self.intervals))

    @classmethod
    def from_configuration(cls, c, directions):
        """Flow over the endpoints of ``c``; ``directions`` maps endpoint value to +1/-1.

        Endpoints not listed are frozen.
        """
        pts = c.endpoints
        index = {x: i for i, x in enumerate(pts)}
        dirs = np.zeros(len(pts))
        for x, sgn in directions.items():
            matches = [i for i, p in enumerate(pts) if abs(p - x) <= 1e-12 * max(1.0, abs(p))]
            if not matches:
                raise ValueError(f"{x!r} is not an endpoint of the configuration")
            dirs[matches[0]] = sgn
        boundary = set(c.boundary_points())
        return cls(
            positions=pts,
            directions=dirs,
            frozen=dirs == 0,
            density=c.density,
            intervals=[(index[iv.left], index[iv.right], iv.region) for iv in c.intervals],
            counted=[x in boundary for x in pts],
        )

    @property
    def moving(self):
        return ~self.frozen

    def perimeter(self):
        return float(np.sum(self.density.eval(self.positions[self.counted])))

    def interval_masses(self):
        x = self.positions
        return [mass(self.density, x[i], x[j]) if x[j] > x[i] else 0.0
                for i, j, _ in self.intervals]

    def region_masses(self):
        out = {}
        for (_, _, r), m in zip(self.intervals, self.interval_masses()):
            out[r] = out.get(r, 0.0) + m
        return dict(sorted(out.items()))


# -- stop predicates --------------------------------------------------------

@dataclass(frozen=True)
class IntervalCollapse:
    region: int


@dataclass(frozen=True)
class EndpointMeets:
    i: int
    j: int


@dataclass(frozen=True)
class TimeReached:
    T: float


# -- instruments ------------------------------------------------------------

def _active(s):
    mask = s.moving & s.counted
    x = s.positions[mask]
    if s.density.vanishes_at_origin and np.any(x == 0.0):
        raise OriginSingularity("perimeter derivatives are undefined at the origin")
    return mask, x


def perimeter_rate(s):
    """dP/dt: sum of direction * f'/f over moving endpoints."""
    mask, x = _active(s)
    if x.size == 0:
        return 0.0
    return float(np.sum(s.directions[mask] * s.density.log_deriv(x)))


def perimeter_rate2(s):
    """d2P/dt2: sum of (f f'' - f'^2) / f^3 over moving endpoints.

    The direction drops out: each term is (log f)''(x) * x'(t) * direction.
    """
    _, x = _active(s)
    if x.size == 0:
        return 0.0
    d = s.density
    f, f1, f2 = d.eval(x), d.deriv(x), d.deriv2(x)
    return float(np.sum((f * f2 - f1 * f1) / f**3))


# -- integrator ---------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array(_A[6] + [0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _velocity(s, x):
    v = np.zeros_like(x)
    m = s.moving
    with np.errstate(divide="ignore", invalid="ignore"):
        v[m] = s.directions[m] / s.density.eval(x[m])
    return v


def _dp_step(s, h):
    y = s.positions
    k = np.empty((7, y.size))
    k[0] = _velocity(s, y)
    for i in range(1, 7):
        yi = y + h * np.dot(_A[i], k[:i])
        k[i] = _velocity(s, yi)
    y5 = y + h * np.dot(_B5, k)
    err = h * np.dot(_E, k)
    return y5, err


def _error_norm(s, y_old, y_new, err, tol):
    # Local error is measured in mass units (f * dx), the quantity the flow
    # conserves.  The embedded estimate undershoots the true error by up to
    # two orders of magnitude while 1/f changes fast (early steps near the
    # origin), so each step only gets a thousandth of ``tol``.
    m = s.moving
    if not np.any(m):
        return 0.0
    if not (np.all(np.isfinite(y_new[m])) and np.all(np.isfinite(err[m]))):
        return np.inf
    w = np.maximum(s.density.eval(y_old[m]), s.density.eval(y_new[m]))
    return float(np.max(w * np.abs(err[m]))) / (1e-3 * tol)


def _interval_events(s):
    # every interval that starts non-degenerate must not turn inside out
    return [lambda x, i=i, j=j: x[j] - x[i]
            for i, j, _ in s.intervals if s.positions[j] > s.positions[i]
            and not (s.frozen[i] and s.frozen[j])]


def _guard_time(s, settings):
    """Time until the first inward-moving endpoint reaches the guard band."""
    g = settings.origin_guard
    best = np.inf
    for i in np.flatnonzero(s.moving):
        x = s.positions[i]
        if x * s.directions[i] >= 0:
            continue
        edge = np.copysign(g, x)
        if abs(x) <= g:
            return 0.0
        best = min(best, mass(s.density, min(x, edge), max(x, edge)))
    return best


def step(s, settings=DEFAULT_SETTINGS, h=None, t_end=None, events=()):
    """Advance every unfrozen endpoint by one accepted adaptive step.

    ``events`` are extra functions of the position vector that are positive
    now and must not be overshot below ``-collision_tol``.
    """
    h = h or s.h_next or settings.dt_init
    if t_end is not None:
        h = min(h, t_end - s.time)
        if h <= 0:
            return s
    h = min(h, _guard_time(s, settings))
    guard_capped = False
    ev = list(_interval_events(s)) + list(events)
    y0 = s.positions
    while True:
        if not h > 1e-15:
            raise StepFailure(f"step size underflow at t={s.time!r} (h={h!r})")
        y1, err = _dp_step(s, h)
        e = _error_norm(s, y0, y1, err, settings.error_tol)
        if e > 1.0:
            h *= max(0.1, 0.9 * e ** -0.2) if np.isfinite(e) else 0.25
            continue
        m = s.moving
        if np.any(np.abs(y1[m]) < settings.origin_guard) or np.any(np.sign(y1[m]) != np.sign(y0[m])):
            h *= 0.5
            guard_capped = True
            continue
        if any(f(y1) < -settings.collision_tol for f in ev):
            h *= 0.5
            continue
        break
    factor = 5.0 if e == 0 else min(5.0, 0.9 * e ** -0.2)
    h_next = h * factor if not guard_capped else h
    t_new = s.time + h
    if t_end is not None and abs(t_end - t_new) <= 1e-14 * max(1.0, abs(t_end)):
        t_new = t_end
    return replace(s, positions=y1, time=t_new, h_next=h_next)


# -- driver -----------------------------------------------------------------

@dataclass
class Trajectory:
    """Per-step log of a flow run; thinned uniformly once it exceeds ``max_records``."""

    regions: list
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    perimeters: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    reason: str = ""
    n_steps: int = 0
    _stride: int = 1

    def record(self, s, max_records):
        self.times.append(s.time)
        self.positions.append(s.positions.copy())
        self.perimeters.append(s.perimeter())
        rm = s.region_masses()
        self.masses.append([rm.get(r, 0.0) for r in self.regions])
        if len(self.times) > max_records:
            for name in ("times", "positions", "perimeters", "masses"):
                setattr(self, name, getattr(self, name)[::2])
            self._stride *= 2

    def __len__(self):
        return len(self.times)

    def to_csv(self, fh=None):
        """Write ``t, endpoint_0.., perimeter, mass_region_1..`` rows; returns text if no handle."""
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\r\n")
        k = len(self.positions[0]) if self.positions else 0
        w.writerow(["t"] + [f"endpoint_{i}" for i in range(k)] + ["perimeter"]
                   + [f"mass_region_{r}" for r in self.regions])
        for t, x, p, m in zip(self.times, self.positions, self.perimeters, self.masses):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(p))]
                       + [repr(float(v)) for v in m])
        if fh is None:
            return out.getvalue()
        return None


def _event_fn(s, stop):
    if isinstance(stop, IntervalCollapse):
        idx = [(i, j) for i, j, r in s.intervals if r == stop.region]
        if not idx:
            raise ValueError(f"region {stop.region} has no intervals in this flow")
        return lambda x: min(x[j] - x[i] for i, j in idx)
    if isinstance(stop, EndpointMeets):
        n = len(s.positions)
        if not (0 <= stop.i < n and 0 <= stop.j < n) or stop.i == stop.j:
            raise ValueError(f"invalid endpoint pair {stop.i}, {stop.j}")
        sgn = np.sign(s.positions[stop.j] - s.positions[stop.i]) or 1.0
        return lambda x: sgn * (x[stop.j] - x[stop.i])
    raise TypeError(f"unknown stop predicate {stop!r}")


def run_until(s, stop, settings=DEFAULT_SETTINGS):
    """Integrate until a stop predicate fires.

    ``stop`` is one predicate or a list; the run also ends, with
    ``trajectory.reason`` set accordingly, when an interval collapses
    (``"collision"``) or a moving endpoint reaches the origin guard band
    (``"origin_guard"``).  Returns ``(final_state, trajectory)``.
    """
    stops = list(stop) if isinstance(stop, (list, tuple)) else [stop]
    t_end = None
    events = []
    for st in stops:
        if isinstance(st, TimeReached):
            if st.T < s.time:
                raise ValueError("TimeReached target lies in the past")
            t_end = st.T if t_end is None else min(t_end, st.T)
        else:
            events.append(_event_fn(s, st))
    regions = sorted({r for _, _, r in s.intervals})
    traj = Trajectory(regions=regions)
    traj.record(s, settings.max_records)
    collisions = _interval_events(s)
    tol = settings.collision_tol

    def finished(state):
        x = state.positions
        if any(f(x) <= tol for f in events):
            return "event"
        if t_end is not None and state.time >= t_end:
            return "time"
        if any(f(x) <= tol for f in collisions):
            return "collision"
        if _guard_time(state, settings) <= 1e-14 * max(1.0, abs(state.time)) or np.any(
                np.abs(x[state.moving]) <= 2.0 * settings.origin_guard):
            return "origin_guard"
        return ""

    reason = finished(s)
    while not reason:
        if traj.n_steps >= settings.max_steps:
            raise MaxStepsExceeded(f"no stop after {settings.max_steps} steps")
        s = step(s, settings, t_end=t_end, events=events)
        traj.n_steps += 1
        reason = finished(s)
        if reason or traj.n_steps % traj._stride == 0:
            traj.record(s, settings.max_records)
    if reason in ("event", "collision"):
        s = _snap_collapsed(s, tol)
        traj.positions[-1] = s.positions.copy()
    traj.reason = reason
    return s, traj


def _snap_collapsed(s, tol):
    x = s.positions.copy()
    for i, j, _ in s.intervals:
        if x[j] - x[i] <= tol:
            # keep the frozen end if there is one
            if s.frozen[j] and not s.frozen[i]:
                x[i] = x[j]
            else:
                x[j] = x[i]
    return replace(s, positions=x)
