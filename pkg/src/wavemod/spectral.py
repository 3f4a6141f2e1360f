"""Trigonometric differentiation and L2(0,1) inner products on equispaced grids."""

import numpy as np


def grid(N, length=1.0, start=0.0):
    return start + length * np.arange(N) / N


def wavenumbers(N, length=1.0):
    """Angular wavenumbers 2*pi*j/length in FFT order."""
    return 2.0 * np.pi * np.fft.fftfreq(N, d=length / N)


def _multiplier(N, order, length):
    kappa = wavenumbers(N, length)
    m = (1j * kappa) ** order
    if N % 2 == 0 and order % 2 == 1:
        m[N // 2] = 0.0
    return m


def diff(u, order=1, length=1.0, axis=0):
    """Spectral derivative of periodic samples along ``axis``.

    Odd derivatives drop the Nyquist mode so real input stays real.
    """
    u = np.asarray(u)
    N = u.shape[axis]
    shape = [1] * u.ndim
    shape[axis] = N
    m = _multiplier(N, order, length).reshape(shape)
    out = np.fft.ifft(m * np.fft.fft(u, axis=axis), axis=axis)
    if np.isrealobj(u):
        return out.real
    return out


def diff_matrix(N, order=1, length=1.0):
    """Dense real matrix of the spectral derivative."""
    return diff(np.eye(N), order=order, length=length, axis=0)


def inner(u, v):
    """<u, v>_{L2(0,1)} = integral of conj(u) . v for samples of shape (N, n)."""
    u = np.asarray(u)
    v = np.asarray(v)
    return np.sum(np.conj(u) * v) / u.shape[0]


def interp_periodic(u, x, length=1.0):
    """Evaluate the trigonometric interpolant of samples ``u`` (axis 0) at ``x``."""
    u = np.asarray(u)
    N = u.shape[0]
    c = np.fft.fft(u, axis=0) / N
    kappa = wavenumbers(N, length)
    if N % 2 == 0:
        # split the Nyquist coefficient symmetrically so the interpolant is real
        kappa = kappa.copy()
        c = c.copy()
        ny = c[N // 2]
        c = np.concatenate([c, ny[None] / 2], axis=0)
        c[N // 2] = ny / 2
        kappa = np.concatenate([kappa, [-kappa[N // 2]]])
    x = np.asarray(x, dtype=float)
    E = np.exp(1j * np.multiply.outer(x, kappa))
    out = np.tensordot(E, c, axes=(-1, 0))
    if np.isrealobj(u):
        return out.real
    return out


def shift_periodic(u, s, length=1.0):
    """Samples of u(. + s) for periodic samples ``u`` (exact for band-limited u)."""
    u = np.asarray(u)
    N = u.shape[0]
    kappa = wavenumbers(N, length)
    m = np.exp(1j * kappa * s)
    if N % 2 == 0:
        m[N // 2] = np.cos(kappa[N // 2] * s)
    shape = [N] + [1] * (u.ndim - 1)
    out = np.fft.ifft(m.reshape(shape) * np.fft.fft(u, axis=0), axis=0)
    if np.isrealobj(u):
        return out.real
    return out
