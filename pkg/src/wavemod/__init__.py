"""Wave trains of reaction-diffusion systems: spectra, modulation coefficients,
semigroup decompositions and phase dynamics."""

__version__ = "0.1.0"
