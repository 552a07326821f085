"""Stieltjes-transform solvers for free sums, free products and CDMA receivers,
with a finite-N Monte Carlo counterpart for each."""

from __future__ import annotations

from ._fixed_point import SolverConfig
from .cdma import (
    CdmaFixedPointState,
    CdmaScenario,
    TransmitterSpec,
    eval_calH,
    eval_calP,
    noise_for_snr,
    sinr,
    sinr_sweep,
    solve_theorem1,
    solve_theorem1_grid,
)
from .errors import *  # noqa: F401,F403
from .free_product import ProductFixedPointState, solve_product, solve_product_chain, solve_product_grid
from .free_sum import SumFixedPointState, solve_sum, solve_sum_grid
from .measures import (
    JointChannelMeasure,
    SpectralMeasure,
    channel_from_json,
    discretize_family,
    from_samples,
    joint_independent,
    measure_from_json,
    point_mass,
)
from .stieltjes import cdf_from_density, invert_density, transform

__version__ = "0.1.0"
