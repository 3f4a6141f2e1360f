"""Fourier pseudo-spectral ETDRK4 for u_t = L u + N(u) with diagonal L."""

import numpy as np


class StepInstability(RuntimeError):
    pass


def etd_coefficients(hL, contour_points=32):
    """ETDRK4 weights by contour averages around each h*L (stable near hL = 0)."""
    hL = np.asarray(hL, dtype=complex)
    # full circle: the symbols are complex, so no real-part symmetry is used
    r = np.exp(2j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
    LR = hL[..., None] + r
    mean = lambda z: np.mean(z, axis=-1)
    eLR = np.exp(LR)
    Q = mean((np.exp(LR / 2) - 1) / LR)
    f1 = mean((-4 - LR + eLR * (4 - 3 * LR + LR ** 2)) / LR ** 3)
    f2 = mean((2 + LR + eLR * (LR - 2)) / LR ** 3)
    f3 = mean((-4 - 3 * LR - LR ** 2 + eLR * (4 - LR)) / LR ** 3)
    return np.exp(hL), np.exp(hL / 2), Q, f1, f2, f3


class ETDRK4:
    """Exponential RK4 on a periodic grid of ``M`` points along axis 0.

    ``symbol`` is the Fourier multiplier of L, shape (M//2 + 1,) or
    (M//2 + 1, n) for the rfft layout; ``nonlinear`` maps physical samples to
    physical samples of N(u).
    """

    def __init__(self, symbol, nonlinear, dt, M, cap=1e6):
        self.M, self.dt, self.cap = M, float(dt), cap
        self.nonlinear = nonlinear
        E, E2, Q, f1, f2, f3 = etd_coefficients(self.dt * np.asarray(symbol))
        self.E, self.E2 = E, E2
        self.Q, self.f1, self.f2, self.f3 = (self.dt * c for c in (Q, f1, f2, f3))

    def _N(self, vh):
        u = np.fft.irfft(vh, n=self.M, axis=0)
        return np.fft.rfft(self.nonlinear(u), axis=0)

    def step_hat(self, vh):
        Nv = self._N(vh)
        a = self.E2 * vh + self.Q * Nv
        Na = self._N(a)
        b = self.E2 * vh + self.Q * Na
        Nb = self._N(b)
        c = self.E2 * a + self.Q * (2 * Nb - Nv)
        Nc = self._N(c)
        return (self.E * vh + Nv * self.f1 + 2 * (Na + Nb) * self.f2 + Nc * self.f3)

    def advance(self, u, steps):
        vh = np.fft.rfft(u, axis=0)
        for _ in range(int(steps)):
            vh = self.step_hat(vh)
        u = np.fft.irfft(vh, n=self.M, axis=0)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > self.cap:
            raise StepInstability("solution blew up; reduce the time step")
        return u


def rfft_wavenumbers(M, length):
    return 2 * np.pi * np.fft.rfftfreq(M, d=length / M)


def integrate(u0, t, symbol, nonlinear, dt):
    """Integrate to time ``t`` with the largest step <= dt that divides t."""
    u0 = np.asarray(u0, dtype=float)
    if t == 0:
        return u0.copy()
    steps = max(1, int(np.ceil(t / dt - 1e-9)))
    stepper = ETDRK4(symbol, nonlinear, t / steps, u0.shape[0])
    return stepper.advance(u0, steps)
