"""Nonconforming virtual elements for the vanishing-moment Monge-Ampere problem."""
from .estimator import MongeAmpereVEM
from .forms import (Discretization, ProblemData, StabilizationSpec, assemble_jacobian,
                    assemble_linearized, assemble_residual, assemble_rhs, cofactor, det2)
from .mesh import (Mesh, MeshError, build_uniform_quad_mesh, build_voronoi_mesh,
                   check_mesh_regularity, read_mesh, write_mesh)
from .problems import manufactured
from .solver import SolverConfig, SolveReport, continuation_solve, newton_solve, solve
from .space import build_dof_layout, element_operators, interpolate
from .study import (ErrorRecord, compute_eoc, compute_errors, run_convergence_study,
                    run_epsilon_study, write_table)

__version__ = "0.1.0"
