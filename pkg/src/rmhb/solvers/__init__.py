"""Residual assembly, nonlinear solvers and root census."""

from .assembly import (
    HDHB,
    MHB_ORACLE,
    MHB_TORUS,
    RMHB_FIRST,
    RMHB_SECOND,
    AssemblyError,
    ResidualSystem,
    assemble_hdhb,
    assemble_mhb_torus,
    assemble_rmhb_first_order,
    assemble_rmhb_second_order,
    hdhb_coefficients,
    hdhb_initial,
)
from .appendix import appendix_cubic_coeffs, mhb_cubic_residual_p1
from .montecarlo import MonteCarloResult, find_branches, monte_carlo_branches
from .nonlinear import (
    GOIA,
    NEWTON,
    SingularJacobianError,
    SolveResult,
    SolverConfig,
    StagnationError,
    fd_jacobian,
    goia_solve,
    newton_solve,
    solve,
)
