"""Matrix representations of complex Clifford algebras and Dirac assemblies.

The generators are built from the iterated 2x2 tensor construction, so all
entries are exactly 0, +-1 or +-i and the defining relations hold to machine
precision.  For even n this is the irreducible graded module of dimension
2^(n/2); for odd n we restrict the (n+1)-generator module, which keeps a
grading that irreducible odd modules lack.  (The sign condition singling out
one Fredholm component for odd n is vacuous at finite matrix size and is not
enforced.)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# Dense storage below this matrix size, sparse above.
DENSE_LIMIT = 2048


def _kron_chain(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


@dataclass(frozen=True)
class CliffordRep:
    """Graded representation: n Hermitian unitary generators plus grading."""

    n: int
    dim: int
    generators: tuple
    grading: np.ndarray

    def anticommutation_defect(self):
        """Largest deviation from c_i c_j + c_j c_i = 2 delta_ij and the grading relations."""
        eye = np.eye(self.dim)
        worst = 0.0
        for i, ci in enumerate(self.generators):
            worst = max(worst, np.abs(ci - ci.conj().T).max())
            for j, cj in enumerate(self.generators):
                target = 2.0 * eye if i == j else 0.0
                worst = max(worst, np.abs(ci @ cj + cj @ ci - target).max())
            worst = max(worst, np.abs(self.grading @ ci + ci @ self.grading).max())
        worst = max(worst, np.abs(self.grading @ self.grading - eye).max())
        worst = max(worst, np.abs(self.grading - self.grading.conj().T).max())
        return float(worst)


def clifford_generators(n):
    """Return the graded representation with n generators.

    Generators come in (X, Y) pairs along a chain of Z factors; the grading
    is the full Z chain.  dim = 2^ceil(n/2).
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"generator count must be a positive integer, got {n!r}")
    m = (n + 1) // 2
    gens = []
    for j in range(m):
        prefix = [PAULI_Z] * j
        suffix = [np.eye(2, dtype=complex)] * (m - j - 1)
        gens.append(_kron_chain(prefix + [PAULI_X] + suffix))
        gens.append(_kron_chain(prefix + [PAULI_Y] + suffix))
    grading = _kron_chain([PAULI_Z] * m)
    return CliffordRep(n=n, dim=2**m, generators=tuple(gens[:n]), grading=grading)


@dataclass(frozen=True)
class DiracAssembly:
    """Odd Hermitian matrix together with its grading involution.

    `matrix` may be dense or scipy-sparse; `grading` is stored as the diagonal
    vector of the (always diagonal, +-1) involution.
    """

    matrix: object
    grading_diag: np.ndarray
    provenance: str
    check_tol: float = field(default=1e-12, compare=False)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def grading(self):
        """The involution as a matrix (sparse if the operator is sparse)."""
        if sp.issparse(self.matrix):
            return sp.diags(self.grading_diag)
        return np.diag(self.grading_diag)

    def dense(self):
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)

    def validate(self):
        """Check Hermiticity, grading involution, and oddness.

        Cost is one sparse multiply / subtract, fine even for large
        assemblies; raises ValueError on violation.
        """
        g = self.grading_diag
        if not np.all(np.abs(np.abs(g) - 1.0) <= self.check_tol):
            raise ValueError("grading is not an involution (diagonal entries must be +-1)")
        h = self.matrix
        if sp.issparse(h):
            herm_defect = abs(h - h.conj().T).max() if h.nnz else 0.0
            # gamma H + H gamma has entries (g_i + g_j) H_ij
            hc = h.tocoo()
            odd_defect = (
                np.abs((g[hc.row] + g[hc.col]) * hc.data).max() if hc.nnz else 0.0
            )
        else:
            h = np.asarray(h)
            herm_defect = np.abs(h - h.conj().T).max()
            odd_defect = np.abs(h * (g[:, None] + g[None, :])).max()
        scale = max(1.0, _matrix_scale(self.matrix))
        if herm_defect > self.check_tol * scale:
            raise ValueError(f"assembly is not Hermitian: defect {herm_defect:.3e}")
        if odd_defect > self.check_tol * scale:
            raise ValueError(f"assembly is not odd w.r.t. its grading: defect {odd_defect:.3e}")
        return self


def _matrix_scale(h):
    if sp.issparse(h):
        return float(abs(h).max()) if h.nnz else 0.0
    return float(np.abs(h).max()) if h.size else 0.0


def make_assembly(matrix, grading_diag, provenance, check_tol=1e-12):
    """Validated DiracAssembly constructor (densifies small sparse input)."""
    if sp.issparse(matrix) and matrix.shape[0] < DENSE_LIMIT:
        matrix = matrix.toarray()
    asm = DiracAssembly(
        matrix=matrix,
        grading_diag=np.asarray(grading_diag, dtype=float),
        provenance=provenance,
        check_tol=check_tol,
    )
    return asm.validate()


def assemble_dirac(rep, tup):
    """Assemble sum_i c_i (x) T_i for a validated commuting tuple.

    The result is odd with respect to grading (x) identity, and its square
    deviates from I (x) sum T_i^2 by at most a dimension constant times the
    tuple's commutator defect.
    """
    if rep.n != tup.n:
        raise ValueError(f"representation has {rep.n} generators but tuple has arity {tup.n}")
    k = tup.k
    mat = np.zeros((rep.dim * k, rep.dim * k), dtype=complex)
    for ci, ti in zip(rep.generators, tup.matrices):
        mat += np.kron(ci, ti)
    grading_diag = np.repeat(np.real(np.diag(rep.grading)), k)
    return make_assembly(mat, grading_diag, provenance="tuple-assembled")
