"""Exception types shared across the workbench.

Every numerical failure mode gets its own class so callers (and the CLI)
can distinguish "your input is wrong" from "the computation refused to
certify an answer".
"""


class JointflowError(Exception):
    """Base class for all workbench-specific failures."""


class NotCommutingError(JointflowError):
    """A tuple failed pairwise-commutation validation."""

    def __init__(self, i, j, defect, tol):
        self.pair = (i, j)
        self.defect = float(defect)
        self.tol = float(tol)
        super().__init__(
            f"matrices {i} and {j} do not commute: "
            f"||[T_{i},T_{j}]|| = {defect:.3e} > tol = {tol:.3e}"
        )


class DegeneracyError(JointflowError):
    """Joint diagonalization could not resolve a degenerate cluster."""

    def __init__(self, message, cluster=None):
        self.cluster = cluster
        super().__init__(message)


class UnresolvedBranchError(JointflowError):
    """Branch matching stayed ambiguous after exhausting the refinement budget."""

    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class TransversalityError(JointflowError):
    """A joint-eigenvalue crossing has Jacobian margin below the floor."""

    def __init__(self, message, cell=None, margin=None):
        self.cell = cell
        self.margin = margin
        super().__init__(message)


class BoundaryCrossingError(JointflowError):
    """A crossing sits on a cell boundary even after the mesh shift retry."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


class NotAdmissibleError(JointflowError):
    """An open-base family dips below the admissibility bound outside K."""

    def __init__(self, message, witness=None, norm_sq=None):
        self.witness = witness
        self.norm_sq = norm_sq
        super().__init__(message)


class TruncationInsufficientError(JointflowError):
    """Requested cutoffs are too small for the operator being assembled."""


class IndeterminateIndexError(JointflowError):
    """Zero modes cannot be separated from the rest of the spectrum."""

    def __init__(self, message, ladder=None):
        self.ladder = ladder
        super().__init__(message)


class MixedChiralityError(JointflowError):
    """A putative zero mode has chirality expectation in [-0.5, 0.5]."""

    def __init__(self, message, chirality=None):
        self.chirality = chirality
        super().__init__(message)


class SymbolVanishesError(JointflowError):
    """A circle symbol drops below the invertibility floor."""

    def __init__(self, message, location=None, value=None):
        self.location = location
        self.value = value
        super().__init__(message)


class EndpointNotInvertibleError(JointflowError):
    """An open path has an eigenvalue within the floor of 0 at an endpoint."""


class PropagationUnstableError(JointflowError):
    """ODE subspace propagation exceeded its conditioning budget."""

    def __init__(self, message, growth=None):
        self.growth = growth
        super().__init__(message)
