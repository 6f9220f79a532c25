"""Time-fractional reaction-diffusion SIR model: L1 / nonstandard finite
difference solver and trajectory verification tools."""

from fracsir.epidemics import (
    Bilinear,
    EquilibriumPoint,
    ModelParams,
    Saturated,
    disease_free_equilibrium,
    endemic_equilibrium,
    reproduction_number,
)
from fracsir.fracops import caputo_l1, gamma, l1_weights
from fracsir.solver import GridSpec, HistoryBuffer, simulate

__version__ = "0.1.0"

__all__ = [
    "Bilinear",
    "EquilibriumPoint",
    "GridSpec",
    "HistoryBuffer",
    "ModelParams",
    "Saturated",
    "caputo_l1",
    "disease_free_equilibrium",
    "endemic_equilibrium",
    "gamma",
    "l1_weights",
    "reproduction_number",
    "simulate",
]
