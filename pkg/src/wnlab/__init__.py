"""Renormalized powers of band-limited Gaussian noise and their white-noise limits."""

__version__ = "0.1.0"

from .grid import SampleGrid, TestFunction
from .kernels import (
    CovarianceKernel,
    intensity_constant,
    power_cov,
    power_scale,
    sinc_cov,
    squared_cov,
)
from .synth import ProcessConfig, SampledPath, make_path, sample_paths
from .transform import (
    BasisProjector,
    PolySpec,
    PolynomialRenormalizer,
    PowerRenormalizer,
    homogeneous_poly,
    make_trig_basis,
    power_renormalize,
)
from .estimators import StatReport, run_replications

__all__ = [
    "SampleGrid",
    "TestFunction",
    "CovarianceKernel",
    "intensity_constant",
    "power_cov",
    "power_scale",
    "sinc_cov",
    "squared_cov",
    "ProcessConfig",
    "SampledPath",
    "make_path",
    "sample_paths",
    "BasisProjector",
    "PolySpec",
    "PolynomialRenormalizer",
    "PowerRenormalizer",
    "homogeneous_poly",
    "make_trig_basis",
    "power_renormalize",
    "StatReport",
    "run_replications",
]
