"""Trawl processes and ambit fields driven by Lévy bases."""

from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import BACKEND
from .ambit import (
    MinimalSliceTable,
    field_autocovariance,
    simulate_general_ambit,
    slice_estimation,
    slice_partition_field,
    slice_partition_field_unbounded,
)
from .cpp import simulate_cpp, simulate_cpp_coupled, simulate_trawl_full, truncation_mse
from .geometry import TrawlFunction, autocorrelation, exponential, long_memory, rectangle, tabulated, triangle
from .grid import GridConfig, included_area, simulate_grid
from .kernel import simulate_kw_gaussian, simulate_kw_jump, simulate_kw_stable, simulate_vm_trawl
from .levy import (
    UNDEFINED,
    Cauchy,
    CustomTriplet,
    Gamma,
    Gaussian,
    InverseGaussian,
    Poisson,
    Skellam,
    Stable,
    sample_set_law,
    set_mean_var,
)
from .rng import RngStream
from .slices import simulate_slice, simulate_slice_bounded, simulate_slice_unbounded
