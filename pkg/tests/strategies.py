"""Hypothesis strategies and seeded generators shared by the tests."""
import numpy as np
from hypothesis import strategies as st

from isobubble.configuration import MassSpec
from isobubble.density import Density

LOG_CONCAVE = [
    Density.power(0.5),
    Density.power(1),
    Density.power(2),
    Density.power(3),
    Density.power_composite(1, 2),
]
CONTROL = Density.log_convex_control()

densities = st.sampled_from(LOG_CONCAVE)
all_densities = st.sampled_from(LOG_CONCAVE + [CONTROL])
masses = st.floats(0.05, 20.0, allow_nan=False, allow_infinity=False)


def mass_specs(min_n=1, max_n=5):
    return st.lists(masses, min_size=min_n, max_size=max_n).map(MassSpec.from_unsorted)


def random_spec(rng, n, lo=0.05, hi=20.0):
    return MassSpec.from_unsorted(np.exp(rng.uniform(np.log(lo), np.log(hi), n)))


# -- random move instances (numpy Generator based, reused by the acceptance suite)

from isobubble.configuration import Configuration, Interval  # noqa: E402


def _mass(rng):
    return float(np.exp(rng.uniform(np.log(0.1), np.log(5.0))))


def random_scattered(rng, d, n=None):
    """Regions with several pieces, gaps between them, possibly straddling the origin."""
    n = n or int(rng.integers(2, 6))
    labels = list(range(1, n + 1)) + list(rng.integers(1, n + 1, size=int(rng.integers(0, n + 2))))
    rng.shuffle(labels)
    x = -float(rng.uniform(0.5, 4.0))
    ivs = []
    for r in labels:
        w = float(rng.uniform(0.05, 1.0))
        ivs.append(Interval(x, x + w, int(r)))
        x += w + float(rng.uniform(0.0, 0.4)) * (rng.random() < 0.7)
    return Configuration(ivs, d)


def random_packed(rng, d, n=None, split=()):
    """Packed stacks; regions in ``split`` get a piece on both sides."""
    n = n or int(rng.integers(2, 6))
    left, right = [], []
    for r in range(1, n + 1):
        if r in split:
            left.append((r, _mass(rng)))
            right.append((r, _mass(rng)))
        else:
            (left if rng.random() < 0.5 else right).append((r, _mass(rng)))
    rng.shuffle(left)
    rng.shuffle(right)
    return Configuration.from_stacks(left, right, d)


def random_alternating(rng, d):
    """Packed configuration containing an alternating pair, returned with the pair."""
    n = int(rng.integers(2, 6))
    x, y = (int(v) for v in rng.choice(np.arange(1, n + 1), size=2, replace=False))
    left, right = [], []
    for r in range(1, n + 1):
        if r not in (x, y):
            (left if rng.random() < 0.5 else right).append((r, _mass(rng)))
    for stack, (inner, outer) in ((left, (y, x)), (right, (x, y))):
        i = int(rng.integers(0, len(stack) + 1))
        j = int(rng.integers(i, len(stack) + 1))
        stack.insert(i, (inner, _mass(rng)))
        stack.insert(j + 1, (outer, _mass(rng)))
    return Configuration.from_stacks(left, right, d), (min(x, y), max(x, y))


def random_transpose(rng, d):
    """One-interval-per-region packed layout plus a transposable pair."""
    while True:
        c = random_packed(rng, d)
        left, right = c.side_stacks()
        if rng.random() < 0.5:
            stack = left if len(left) >= 2 and (len(right) < 2 or rng.random() < 0.5) else right
            if len(stack) < 2:
                continue
            k = int(rng.integers(0, len(stack) - 1))
            return c, (stack[k][0], stack[k + 1][0])
        if left and right:
            a = left[int(rng.integers(0, len(left)))][0]
            b = right[int(rng.integers(0, len(right)))][0]
            return c, (a, b)


def random_split(rng, d):
    """Packed configuration with one region on both sides of the origin."""
    n = int(rng.integers(1, 6))
    r = int(rng.integers(1, n + 1))
    return random_packed(rng, d, n, split=(r,)), r
