"""Log-log decay fits."""

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats


@dataclass
class SlopeFit:
    slope: float
    prefactor: float
    r2: float
    stderr: float
    t_min: float
    t_max: float
    points: int
    log_corrected: bool = False
    log_power: float = 0.0

    @property
    def interval(self):
        """95% confidence interval of the slope."""
        if self.points <= 2:
            return (self.slope, self.slope)
        q = stats.t.ppf(0.975, self.points - 2)
        return (self.slope - q * self.stderr, self.slope + q * self.stderr)

    def to_dict(self):
        lo, hi = self.interval
        return {"slope": self.slope, "prefactor": self.prefactor, "r2": self.r2,
                "ci95": [lo, hi], "t_min": self.t_min, "t_max": self.t_max,
                "points": self.points, "log_corrected": self.log_corrected,
                "log_power": self.log_power}


def fit_decay(t, y, t_min=None, t_max=None, log_correction=False, floor=0.0,
              shift=0.0):
    """Fit y ~ c (shift + t)^p, or y ~ c log(2 + t) (shift + t)^p.

    ``log_correction="free"`` fits y ~ c log(2 + t)^b (shift + t)^p with the
    log power b constrained to [0, 1], so a rate bound of the form
    log(2 + t) (1 + t)^p is tested without imposing the logarithm.
    Samples at or below ``floor`` are discarded (round-off plateaus).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y) & (y > floor)
    if t_min is not None:
        keep &= t >= t_min
    if t_max is not None:
        keep &= t <= t_max
    t, y = t[keep], y[keep]
    if t.size < 2:
        raise ValueError("fewer than two usable samples in the fit window")
    if log_correction == "free":
        return _fit_free_log(t, y, shift)
    z = np.log(y / np.log(2 + t)) if log_correction else np.log(y)
    res = stats.linregress(np.log(shift + t), z)
    r2 = res.rvalue ** 2 if t.size > 2 else 1.0
    return SlopeFit(float(res.slope), float(np.exp(res.intercept)), float(r2),
                    float(res.stderr), float(t.min()), float(t.max()), int(t.size),
                    log_correction)


def _fit_free_log(t, y, shift):
    X = np.column_stack([np.log(shift + t), np.log(np.log(2 + t)), np.ones_like(t)])
    z = np.log(y)
    sol = optimize.lsq_linear(X, z, bounds=([-np.inf, 0.0, -np.inf], [np.inf, 1.0, np.inf]),
                              method="bvls")
    p, b, c = sol.x
    resid = z - X @ sol.x
    dof = max(t.size - 3, 1)
    s2 = resid @ resid / dof
    stderr = float(np.sqrt(s2 * np.linalg.pinv(X.T @ X)[0, 0]))
    ss = np.sum((z - z.mean()) ** 2)
    r2 = 1.0 - resid @ resid / ss if ss > 0 else 1.0
    return SlopeFit(float(p), float(np.exp(c)), float(r2), stderr, float(t.min()),
                    float(t.max()), int(t.size), True, float(b))


def geometric_times(t0, t1, ratio=1.25):
    """Geometrically spaced times t0, t0*ratio, ... up to and including t1."""
    out = [t0]
    while out[-1] * ratio < t1 * (1 - 1e-12):
        out.append(out[-1] * ratio)
    if out[-1] < t1:
        out.append(t1)
    return np.array(out)
