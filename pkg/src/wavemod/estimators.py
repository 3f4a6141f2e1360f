"""scikit-learn style wrappers for decay fitting and phase extraction."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .experiment import PhaseExtractor
from .fitting import fit_decay


def _times(X):
    t = np.asarray(X, dtype=float)
    return t[:, 0] if t.ndim > 1 else t


class DecayRateEstimator(BaseEstimator, RegressorMixin):
    """Power-law decay y ~ c (shift + t)^p, optionally with a log(2 + t) factor.

    ``log_correction`` is False, True (power fixed to 1) or "free" (power
    fitted in [0, 1]).  X is a column of times.
    """

    def __init__(self, t_min=None, t_max=None, log_correction=False, shift=1.0, floor=0.0):
        self.t_min = t_min
        self.t_max = t_max
        self.log_correction = log_correction
        self.shift = shift
        self.floor = floor

    def fit(self, X, y):
        t = _times(X)
        self.fit_ = fit_decay(t, y, self.t_min, self.t_max, self.log_correction,
                              self.floor, self.shift)
        self.slope_ = self.fit_.slope
        self.prefactor_ = self.fit_.prefactor
        self.log_power_ = self.fit_.log_power if self.log_correction == "free" else (
            1.0 if self.log_correction else 0.0)
        return self

    def predict(self, X):
        if not hasattr(self, "fit_"):
            raise NotFittedError("DecayRateEstimator is not fitted")
        t = _times(X)
        return self.prefactor_ * (self.shift + t) ** self.slope_ * np.log(2 + t) ** self.log_power_


class PhaseTransformer(BaseEstimator, TransformerMixin):
    """Maps torus snapshots (S, M, n) to phase fields (S, M).

    ``fit`` takes one period of the reference profile.
    """

    def __init__(self, L=16, N=64, window=1.0):
        self.L = L
        self.N = N
        self.window = window

    def fit(self, X, y=None):
        self.extractor_ = PhaseExtractor(np.asarray(X, dtype=float), self.L, self.N,
                                         self.window)
        return self

    def transform(self, X):
        if not hasattr(self, "extractor_"):
            raise NotFittedError("PhaseTransformer is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        out, ref = [], None
        for u in X:
            g, _ = self.extractor_(u, ref)
            out.append(g)
            ref = g
        return np.array(out)
