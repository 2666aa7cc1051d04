"""jointflow: joint spectral flow of commuting operator families, at desk scale.

The workbench tracks joint-eigenvalue branches of parametrized commuting
Hermitian tuples over meshed bases, counts signed transversal zero crossings,
assembles the matching truncated Dirac-type operators, and cross-checks the
resulting integers against independent oracles (ODE decaying-solution
matching, winding numbers, Wiener-Hopf factorization, brute-force zero
enumeration).
"""

from .clifford import CliffordRep, DiracAssembly, assemble_dirac, clifford_generators
from .errors import (
    BoundaryCrossingError,
    DegeneracyError,
    EndpointNotInvertibleError,
    IndeterminateIndexError,
    JointflowError,
    MixedChiralityError,
    NotAdmissibleError,
    NotCommutingError,
    PropagationUnstableError,
    SymbolVanishesError,
    TransversalityError,
    TruncationInsufficientError,
    UnresolvedBranchError,
)
from .jsf import (
    BranchField,
    CrossingRecord,
    JsfOptions,
    JsfResult,
    OperatorFamily,
    build_branch_field,
    classical_spectral_flow,
    count_crossings,
    jsf_closed,
    jsf_open,
    jsf_product,
    product_family,
)
from .mesh import BaseMesh, circle_mesh, interval_mesh, torus_mesh
from .tuples import (
    DEFAULT_SEED,
    CommutingTuple,
    Configuration,
    JointSpectrum,
    diagonal_tuple,
    forget_to_configuration,
    joint_diagonalize,
    normalize_to_sphere,
    validate_tuple,
)

__version__ = "0.1.0"
