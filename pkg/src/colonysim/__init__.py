"""Two-colony branching particle / SPDE simulator with martingale diagnostics."""

from .measures import (
    DistributionFunction,
    FiniteMeasure,
    Grid,
    TestFunction,
    cdf,
    generalized_inverse,
    integrate,
    pair_l1,
    rho,
    rho_grid,
    weighted_l2_norm,
)
from .migration import ImmigrationTarget, MigrationIntensity, eta_eval, xi_eval
from .params import ColonyBranching, InitialSpec, ModelParams, OffspringLaw
from .records import PathRecord

__version__ = "0.1.0"
