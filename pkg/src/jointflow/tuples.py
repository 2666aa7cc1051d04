"""Commuting self-adjoint matrix tuples: validation, joint spectra, configurations.

A validated tuple is the finite-dimensional stand-in for a commuting Fredholm
family; the compactness side conditions are vacuous at finite dimension and
recorded nowhere but here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, NotCommutingError

#: Fixed default seed so CLI runs and doctest-style examples reproduce.
DEFAULT_SEED = 20260810

DEFAULT_CLUSTER_TOL = 1e-8


def operator_norm(a):
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class CommutingTuple:
    """n Hermitian k x k matrices with certified pairwise commutation."""

    matrices: tuple
    tol: float
    hermiticity_defect: float
    commutator_defect: float
    is_diagonal: bool = False   # structural tag; skips detection when known

    @property
    def n(self):
        return len(self.matrices)

    @property
    def k(self):
        return self.matrices[0].shape[0]

    def square_sum(self):
        return sum(t @ t for t in self.matrices)


def validate_tuple(matrices, tol=1e-10):
    """Validate Hermiticity and pairwise commutation in operator norm.

    Raises ValueError for shape problems and NotCommutingError (carrying the
    offending pair and defect) when a commutator exceeds `tol`.
    """
    mats = [np.asarray(m, dtype=complex) for m in matrices]
    if not mats:
        raise ValueError("tuple must contain at least one matrix")
    k = mats[0].shape[0]
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix {i} is not square: shape {m.shape}")
        if m.shape[0] != k:
            raise ValueError(f"matrix {i} has dimension {m.shape[0]}, expected {k}")
    herm = 0.0
    for i, m in enumerate(mats):
        defect = operator_norm(m - m.conj().T)
        herm = max(herm, defect)
        if defect > tol:
            raise ValueError(f"matrix {i} is not Hermitian within tol: defect {defect:.3e}")
    comm = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            defect = operator_norm(mats[i] @ mats[j] - mats[j] @ mats[i])
            comm = max(comm, defect)
            if defect > tol:
                raise NotCommutingError(i, j, defect, tol)
    frozen = tuple(m.copy() for m in mats)
    for m in frozen:
        m.flags.writeable = False
    return CommutingTuple(
        matrices=frozen, tol=float(tol), hermiticity_defect=herm, commutator_defect=comm
    )


def diagonal_tuple(diagonals, tol=1e-12):
    """CommutingTuple from shared-eigenbasis diagonal data.

    Diagonal matrices commute exactly, so the validation defects are
    structural zeros; this skips the O(k^3) norm checks that family
    evaluators would otherwise pay at every mesh vertex.
    """
    diags = [np.asarray(d, dtype=float) for d in diagonals]
    k = diags[0].shape[0]
    if any(d.ndim != 1 or d.shape[0] != k for d in diags):
        raise ValueError("diagonals must be 1-d arrays of equal length")
    mats = tuple(np.diag(d).astype(complex) for d in diags)
    for m in mats:
        m.flags.writeable = False
    return CommutingTuple(
        matrices=mats,
        tol=float(tol),
        hermiticity_defect=0.0,
        commutator_defect=0.0,
        is_diagonal=True,
    )


@dataclass(frozen=True)
class SpectralPoint:
    """One point of a joint spectrum: value in R^n, multiplicity, eigenframe."""

    value: np.ndarray       # shape (n,)
    multiplicity: int
    frame: np.ndarray       # shape (k, multiplicity), orthonormal columns


@dataclass(frozen=True)
class JointSpectrum:
    points: tuple           # of SpectralPoint
    unitary: np.ndarray     # common diagonalizer, columns ordered as the frames
    cluster_tol: float

    @property
    def k(self):
        return self.unitary.shape[0]

    @property
    def n(self):
        return self.points[0].value.shape[0]

    def values(self):
        """(#points, n) array of distinct joint eigenvalues."""
        return np.array([p.value for p in self.points])

    def multiplicities(self):
        return np.array([p.multiplicity for p in self.points], dtype=int)


def _cluster_indices(values, tol):
    """Connected components of the tolerance graph on points in R^d.

    Merge-never-split: two points land in one cluster whenever a tol-chain
    connects them.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    m = values.shape[0]
    if m == 1:
        return [[0]]
    # Candidate pairs from a sliding window over the first coordinate; the
    # full distance decides.  Near-linear when points are spread out.
    order = np.argsort(values[:, 0], kind="stable")
    svals = values[order]
    first = svals[:, 0]
    tol2 = tol * tol
    pairs = []
    for a in range(m - 1):
        end = np.searchsorted(first, first[a] + tol, side="right")
        if end <= a + 1:
            continue
        d2 = np.sum((svals[a + 1 : end] - svals[a]) ** 2, axis=1)
        for off in np.nonzero(d2 <= tol2)[0]:
            pairs.append((order[a], order[a + 1 + off]))
    parent = np.arange(m)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        ra, rb = find(i), find(j)
        if ra != rb:
            parent[rb] = ra
    groups = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(i)
    # Deterministic order: by smallest member index.
    return [groups[r] for r in sorted(groups, key=lambda r: min(groups[r]))]


def _refine_subspace(frame, mats, level, cluster_tol):
    """Split `frame` into joint eigenspaces by diagonalizing compressed mats[level:]."""
    if level == len(mats):
        return [frame]
    comp = frame.conj().T @ mats[level] @ frame
    comp = 0.5 * (comp + comp.conj().T)
    w, v = np.linalg.eigh(comp)
    out = []
    for idx in _cluster_indices(w[:, None], cluster_tol):
        sub = frame @ v[:, idx]
        out.extend(_refine_subspace(sub, mats, level + 1, cluster_tol))
    return out


def joint_diagonalize(tup, seed=DEFAULT_SEED, cluster_tol=DEFAULT_CLUSTER_TOL):
    """Simultaneously diagonalize a validated tuple.

    Strategy: diagonalize a seeded random combination sum r_i T_i, then
    within each eigenvalue cluster recursively diagonalize the compressed
    remaining matrices.  Exact for genuinely commuting tuples; a residual
    off-diagonal block above tolerance raises DegeneracyError.

    Diagonal input is special-cased: the diagonalizer is the identity and
    points are read off the diagonals.
    """
    mats = tup.matrices
    n, k = tup.n, tup.k

    diagonal_input = tup.is_diagonal or all(
        np.abs(m - np.diag(np.diag(m))).max() < 1e-15 for m in mats
    )
    if diagonal_input:
        lam_arr = np.column_stack([np.real(np.diag(m)) for m in mats])
        eye = np.eye(k, dtype=complex)
        points = []
        for idx in _cluster_indices(lam_arr, cluster_tol):
            points.append(
                SpectralPoint(
                    value=lam_arr[idx].mean(axis=0),
                    multiplicity=len(idx),
                    frame=eye[:, idx],
                )
            )
        points.sort(key=lambda p: tuple(p.value))
        unitary = np.hstack([p.frame for p in points])
        js = JointSpectrum(
            points=tuple(points), unitary=unitary, cluster_tol=float(cluster_tol)
        )
        if int(sum(p.multiplicity for p in js.points)) != k:
            raise DegeneracyError("multiplicities do not sum to the matrix dimension")
        return js

    rng = np.random.default_rng(seed)
    r = rng.normal(size=n)
    r /= np.linalg.norm(r)
    combo = sum(ri * m for ri, m in zip(r, mats))
    combo = 0.5 * (combo + combo.conj().T)
    w, v = np.linalg.eigh(combo)
    frames = []
    for idx in _cluster_indices(w[:, None], cluster_tol):
        frames.extend(_refine_subspace(v[:, idx], mats, 0, cluster_tol))
    lambdas = []
    scale = max(1.0, max(operator_norm(m) for m in mats))
    for frame in frames:
        vec = np.empty(n)
        for i, m in enumerate(mats):
            comp = frame.conj().T @ m @ frame
            off = comp - np.mean(np.diag(comp)).real * np.eye(frame.shape[1])
            if np.abs(off).max() > max(100.0 * tup.tol, 1e-9) * scale:
                raise DegeneracyError(
                    "unresolved degenerate cluster: compressed matrix "
                    f"{i} is not scalar (defect {np.abs(off).max():.3e})",
                    cluster=frame,
                )
            vec[i] = np.mean(np.diag(comp)).real
        lambdas.append(vec)

    # Merge subspaces whose joint eigenvalues coincide within cluster_tol.
    points = []
    for idx in _cluster_indices(np.array(lambdas), cluster_tol):
        frame = np.hstack([frames[i] for i in idx])
        value = np.mean([lambdas[i] for i in idx], axis=0)
        points.append(SpectralPoint(value=value, multiplicity=frame.shape[1], frame=frame))
    # Stable order: lexicographic by joint eigenvalue.
    points.sort(key=lambda p: tuple(p.value))
    unitary = np.hstack([p.frame for p in points])

    js = JointSpectrum(points=tuple(points), unitary=unitary, cluster_tol=float(cluster_tol))
    if int(sum(p.multiplicity for p in js.points)) != k:
        raise DegeneracyError("multiplicities do not sum to the matrix dimension")
    _check_joint_spectrum(js, tup)
    return js


def _check_joint_spectrum(js, tup):
    """Unitarity and reconstruction bounds (Frobenius, which dominates the 2-norm)."""
    k = tup.k
    u = js.unitary
    if np.linalg.norm(u.conj().T @ u - np.eye(k)) > 1e-12 * k:
        raise DegeneracyError("common diagonalizer is not unitary within tolerance")
    recon_tol = 10.0 * max(tup.tol, 1e-14) * k
    scale = max(1.0, max(float(np.linalg.norm(m)) for m in tup.matrices))
    for i, m in enumerate(tup.matrices):
        diag = np.concatenate(
            [np.full(p.multiplicity, p.value[i]) for p in js.points]
        )
        defect = float(np.linalg.norm(m - (u * diag) @ u.conj().T))
        if defect > recon_tol * scale:
            raise DegeneracyError(
                f"reconstruction failed for matrix {i}: defect {defect:.3e} "
                f"> {recon_tol * scale:.3e}"
            )


def normalize_to_sphere(lam):
    """Map a joint-spectrum point in R^n to the unit sphere in R^(n+1).

    Composition of the bounded transform b(lam) = lam (1+|lam|^2)^(-1/2)
    with the boundary-collapsing disk-to-sphere map
    s(mu) = (2|mu|^2 - 1, 2 (1-|mu|^2)^(1/2) mu).  0 goes to the south pole
    (-1, 0, ..., 0); the north pole (1, 0, ..., 0) is approached only as
    |lam| -> infinity.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if not np.all(np.isfinite(lam)):
        raise ValueError("point must be finite")
    r2 = float(lam @ lam)
    mu2 = r2 / (1.0 + r2)
    head = 2.0 * mu2 - 1.0
    # 2 sqrt(1-|mu|^2) / sqrt(1+r^2) = 2 / (1+r^2)
    tail = (2.0 / (1.0 + r2)) * lam
    return np.concatenate(([head], tail))


@dataclass(frozen=True)
class Configuration:
    """Labeled points: joint spectrum with eigenframes forgotten."""

    points: tuple           # of (value ndarray, positive int label)
    ambient: str            # "sphere" or "euclidean"

    def label_sum(self):
        return int(sum(lbl for _, lbl in self.points))


def forget_to_configuration(js, cluster_tol=None):
    """Forget eigenframes; merge points within cluster_tol, adding labels."""
    tol = js.cluster_tol if cluster_tol is None else float(cluster_tol)
    values = js.values()
    mults = js.multiplicities()
    merged = []
    for idx in _cluster_indices(values, tol):
        value = np.average(values[idx], axis=0, weights=mults[idx])
        merged.append((value, int(mults[idx].sum())))
    merged.sort(key=lambda p: tuple(p[0]))
    return Configuration(points=tuple(merged), ambient="euclidean")
