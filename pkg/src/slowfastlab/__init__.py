"""slowfastlab: a numerical laboratory for slow-fast systems with many fast
variables.

Layer-problem spectra and dispersion relations, pseudo-arclength continuation
with bifurcation detection, the finite-dimensional GSPT engine (reduced and
desingularized slow flows, folded singularities, fold normal forms), stiff and
delayed time integration, and quantitative slow-passage / delayed-bifurcation
experiments for five bundled models (FitzHugh-Nagumo, neural field on a ring,
nonlocal reaction-diffusion, Schnakenberg, and a scalar DDE).
"""
from . import continuation, core, discretize, gspt, integrate, models, passage, spectra
from .core import DelaySpec, ParameterPoint, SlowFastSystem, State, eval_rhs, jacobian_u, jacobian_v
from .discretize import Grid, KernelSpectrum, neumann_grid, periodic_grid
from .errors import SlowFastError

__version__ = "0.1.0"

__all__ = [
    "DelaySpec", "ParameterPoint", "SlowFastSystem", "State",
    "eval_rhs", "jacobian_u", "jacobian_v",
    "Grid", "KernelSpectrum", "periodic_grid", "neumann_grid",
    "SlowFastError",
    "core", "discretize", "models", "integrate", "spectra",
    "continuation", "gspt", "passage",
    "__version__",
]
