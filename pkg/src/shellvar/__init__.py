"""Shell energies on parametrized midsurfaces: geometry, admissibility, energies,
randomized certification and a barrier minimizer."""

from .admissibility import (
    AdmissibilityReport,
    BoundaryConditions,
    MPoint,
    ShellConfig,
    check_admissible,
    m_membership,
    orientation_margins,
)
from .energy import (
    Affine,
    EnergySpec,
    GammaSpec,
    Helfrich,
    LoadSpec,
    LogBarrier,
    MarginPower,
    Objective,
    PolyFamily,
    PolyTerm,
    QuadOverLin,
    energy_gradient,
    poly_density,
    total_energy,
)
from .errors import *  # noqa: F401,F403
from .geometry import (
    CurvatureData,
    FundamentalForms,
    ParamGrid,
    SurfaceConfiguration,
    build_grid,
    curvatures,
    fundamental_forms,
)
from .minimize import MinimizeResult, SolverConfig, minimize, trajectory_norms
from .surfaces import Cylinder, Plate, SphereCap, Torus, make_surface
from .verify import blowup_probe, coercivity_probe, identity_checks, polyconvexity_probe

__version__ = "0.1.0"
