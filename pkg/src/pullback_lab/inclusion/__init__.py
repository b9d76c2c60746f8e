"""Galerkin solver, selection ensembles and certificates for the reaction-diffusion inclusion."""

from .certificates import (
    EnergyCertificate,
    FlatteningReport,
    NotAbsorbedError,
    energy_certificate,
    flattening_certificate,
    galerkin_energy_bound,
)
from .ensemble import InclusionProcess, design, inclusion_process
from .galerkin import (
    QuadratureError,
    SolverBlowUp,
    SolverConfig,
    Trajectory,
    galerkin_rhs,
    galerkin_step,
    h_norm,
    solve_ensemble,
    solve_trajectory,
    time_nodes,
    weak_form_residual,
)
from .problem import Forcing, Nonlinearity, make_forcing, make_nonlinearity, mollified_h

__all__ = [
    "EnergyCertificate",
    "FlatteningReport",
    "Forcing",
    "InclusionProcess",
    "Nonlinearity",
    "NotAbsorbedError",
    "QuadratureError",
    "SolverBlowUp",
    "SolverConfig",
    "Trajectory",
    "design",
    "energy_certificate",
    "flattening_certificate",
    "galerkin_energy_bound",
    "galerkin_rhs",
    "galerkin_step",
    "h_norm",
    "inclusion_process",
    "make_forcing",
    "make_nonlinearity",
    "mollified_h",
    "solve_ensemble",
    "solve_trajectory",
    "time_nodes",
    "weak_form_residual",
]
