import numpy as np
from sklearn.utils import check_array

from .density import Density, Family


def check_masses(X):
    """2-D float array of strictly positive, finite masses (one spec per row)."""
    X = check_array(X, dtype=float, ensure_2d=True)
    if np.any(X <= 0):
        raise ValueError("masses must be strictly positive")
    return X


def make_density(family, p=1.0, q=0.0):
    family = Family(family)
    if family is Family.POWER:
        return Density.power(p)
    if family is Family.POWER_COMPOSITE:
        return Density.power_composite(p, q)
    return Density.log_convex_control()
