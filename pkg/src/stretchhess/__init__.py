"""Projected Newton with analytic Hessian eigensystems for principal-stretch energies."""
from .assembly import ConstraintSet, TetMesh, assemble_projected_hessian, precompute, total_energy, total_gradient
from .eigsys import element_hessian, factorize_element, project_spd
from .energy import Arap, CustomEnergy, DomainError, NeoHookean, SymmetricDirichlet, make_model
from .smallmat import signed_svd3, sym_eig3
from .solver import SolverConfig, Status, minimize, newton_step

__all__ = [
    "Arap",
    "ConstraintSet",
    "CustomEnergy",
    "DomainError",
    "NeoHookean",
    "SolverConfig",
    "Status",
    "SymmetricDirichlet",
    "TetMesh",
    "assemble_projected_hessian",
    "element_hessian",
    "factorize_element",
    "make_model",
    "minimize",
    "newton_step",
    "precompute",
    "project_spd",
    "signed_svd3",
    "sym_eig3",
    "total_energy",
    "total_gradient",
]
__version__ = "0.1.0"
