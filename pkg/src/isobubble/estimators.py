"""scikit-learn style wrappers around the builders and the verifier.

Each row of ``X`` is one set of region masses.  Rows are sorted before use,
so column ``k`` of the output refers to the ``k``-th smallest mass.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_masses, make_density
from .configuration import LARGEST_RIGHT, MassSpec, build_standard, total_perimeter
from .density import QuadratureSettings, check_flags
from .optimizer import verify_theorem

__all__ = ["StandardBubble", "TheoremVerifier"]


class _DensityParams:
    def _fit_density(self):
        self.density_ = make_density(self.family, self.p, self.q)
        self.flag_report_ = check_flags(self.density_)
        tol = self.quad_tol
        self.quad_ = QuadratureSettings(tol, tol) if tol else QuadratureSettings.from_env()


class StandardBubble(_DensityParams, TransformerMixin, BaseEstimator):
    """Maps mass vectors to the signed outer endpoints of the standard bubble.

    ``transform`` returns one endpoint per region (the end away from the
    origin); ``predict`` returns the total perimeter.
    """

    def __init__(self, family="power", p=1.0, q=0.0, orient=LARGEST_RIGHT, quad_tol=None):
        self.family = family
        self.p = p
        self.q = q
        self.orient = orient
        self.quad_tol = quad_tol

    def fit(self, X=None, y=None):
        self._fit_density()
        if X is not None:
            self.n_features_in_ = check_masses(X).shape[1]
        return self

    def _configs(self, X):
        check_is_fitted(self, "density_")
        X = check_masses(X)
        return [build_standard(MassSpec.from_unsorted(row), self.density_, self.orient, self.quad_)
                for row in X]

    def transform(self, X):
        out = []
        for c in self._configs(X):
            out.append([c.outer_endpoint(r) for r in range(1, c.n_regions + 1)])
        return np.asarray(out, dtype=float)

    def predict(self, X):
        return np.array([total_perimeter(c) for c in self._configs(X)])


class TheoremVerifier(_DensityParams, BaseEstimator):
    """Checks, row by row, that the standard layout has the least perimeter."""

    def __init__(self, family="power", p=1.0, q=0.0, split_depth=0, allow_invalid=False,
                 quad_tol=None):
        self.family = family
        self.p = p
        self.q = q
        self.split_depth = split_depth
        self.allow_invalid = allow_invalid
        self.quad_tol = quad_tol

    def _verify(self, X):
        return [verify_theorem(MassSpec.from_unsorted(row), self.density_, self.split_depth,
                               self.allow_invalid, self.quad_)
                for row in check_masses(X)]

    def fit(self, X, y=None):
        self._fit_density()
        self.reports_ = self._verify(X)
        self.min_gaps_ = np.array([r.min_gap for r in self.reports_])
        self.n_features_in_ = len(self.reports_[0].masses) if self.reports_ else 0
        return self

    def predict(self, X):
        check_is_fitted(self, "density_")
        return np.array([r.winner_is_standard for r in self._verify(X)])

    def score(self, X, y=None):
        return float(np.mean(self.predict(X)))
