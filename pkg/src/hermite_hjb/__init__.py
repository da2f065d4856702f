"""C0 cubic Hermite finite elements for HJB and non-divergence problems
with auxiliary-space preconditioned GMRES."""

__version__ = "0.1.0"

from .assembly import assemble_A, assemble_B, assemble_p1, assemble_rhs  # noqa: E402
from .coefficients import FrozenCoefficients, cordes_quotient, gamma  # noqa: E402
from .fespace import HermiteSpace, P1Space, build_transfer_Pi0  # noqa: E402
from .hjb import exp2, exp3, newton_solve, solve_linear, verify_cordes  # noqa: E402
from .krylov import estimate_condition, gmres  # noqa: E402
from .mesh import Mesh, graded_lineage, uniform_rect_mesh  # noqa: E402
from .precond import AdditivePreconditioner, AuxiliarySetup, MultiplicativePreconditioner  # noqa: E402

__all__ = [
    "AdditivePreconditioner", "AuxiliarySetup", "FrozenCoefficients", "HermiteSpace", "Mesh",
    "MultiplicativePreconditioner", "P1Space", "assemble_A", "assemble_B", "assemble_p1",
    "assemble_rhs", "build_transfer_Pi0", "cordes_quotient", "estimate_condition", "exp2", "exp3",
    "gamma", "gmres", "graded_lineage", "newton_solve", "solve_linear", "uniform_rect_mesh",
    "verify_cordes",
]
