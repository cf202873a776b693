"""Convergence lab for GAN training dynamics.

Modules: ``objectives`` (loss functions), ``dirac`` (the two-parameter
Dirac-GAN), ``spectral`` (eigenvalues and stability), ``autodiff`` (reverse
mode with double backprop), ``transport`` (empirical W1), ``gan2d`` (small MLP
GANs on 2D data), ``verify`` (self-check suites) and ``cli``.
"""

from . import autodiff, dirac, gan2d, objectives, spectral, transport
from .errors import GanLabError

__version__ = "0.1.0"

__all__ = ["autodiff", "dirac", "gan2d", "objectives", "spectral", "transport", "GanLabError", "__version__"]
