"""Boundary behaviour at infinity for simple exchangeable
fragmentation-coalescence processes: rates, Lyapunov functionals,
classification and simulation of the block-counting chain."""

__version__ = "0.1.0"

from .classifier import BoundaryVerdict, RegularVariationSpec, classify_regular, classify_sufficient
from .measures import (CoalescenceMeasure, CompositeSplitting, FiniteSplitting, GeometricSplitting,
                       LogPowerDensity, LogSplitting, PowerDensity, PowerLawSplitting,
                       TableDensity)
from .rates import ell, merge_rates, phi, psi

__all__ = [
    "BoundaryVerdict",
    "CoalescenceMeasure",
    "CompositeSplitting",
    "FiniteSplitting",
    "GeometricSplitting",
    "LogPowerDensity",
    "LogSplitting",
    "PowerDensity",
    "PowerLawSplitting",
    "RegularVariationSpec",
    "TableDensity",
    "classify_regular",
    "classify_sufficient",
    "ell",
    "merge_rates",
    "phi",
    "psi",
]
