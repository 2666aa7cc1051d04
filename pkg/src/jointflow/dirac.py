"""Truncated Dirac-type operators and graded numerical indices.

The graded index of an odd Hermitian truncation is extracted from its zero
modes: ind_0 = #(chirality > +1/2) - #(chirality < -1/2) among eigenvectors
below the zero-mode tolerance, certified by a gap-ratio separation from the
rest of the spectrum.

Square Galerkin truncations always pair kernel with cokernel, so the model
operators here are discretized on offset site/link lattices: a first-order
box scheme for d/dx + A(x) whose degree-d seam is a truncated mode-shift
partial isometry, plus Dirichlet closure rows at truncation edges wherever
the potential points outward.  That makes the chiral block dimensions differ
by exactly the expected index, so the surviving zero modes are rank-forced
and exact; the would-be partners escape through the truncation edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .clifford import DENSE_LIMIT, DiracAssembly, make_assembly
from .errors import (
    IndeterminateIndexError,
    MixedChiralityError,
    PropagationUnstableError,
    TruncationInsufficientError,
)

__all__ = [
    "TruncationSpec",
    "IndexReport",
    "circle_derivative",
    "fiber_connection_operator",
    "total_operator_aps",
    "callias_operator",
    "graded_index",
    "aps_index_report",
    "callias_index_report",
    "callias_index_ode",
    "heat_kernel_supertrace",
]


@dataclass(frozen=True)
class TruncationSpec:
    """Discretization sizes plus the thresholds the index extraction uses."""

    fourier_cutoffs: tuple = (16,)
    grid_resolution: int = 129
    zero_mode_tol: float = 1e-6
    gap_ratio_threshold: float = 100.0

    def __post_init__(self):
        if any(c < 4 for c in self.fourier_cutoffs):
            raise ValueError("Fourier cutoffs must be at least 4")
        if not self.gap_ratio_threshold > 1.0:
            raise ValueError("gap-ratio threshold must exceed 1")

    def as_dict(self):
        return {
            "fourier_cutoffs": list(self.fourier_cutoffs),
            "grid_resolution": int(self.grid_resolution),
            "zero_mode_tol": float(self.zero_mode_tol),
            "gap_ratio_threshold": float(self.gap_ratio_threshold),
        }


@dataclass(frozen=True)
class IndexReport:
    ind0: int
    zero_modes: tuple        # of (eigenvalue magnitude, chirality expectation)
    spectral_gap: float
    truncation: TruncationSpec
    stability: tuple         # ind0 at finer truncations, possibly empty

    def as_dict(self):
        return {
            "ind0": int(self.ind0),
            "zero_modes": [
                [float(m), float(c)] for m, c in self.zero_modes
            ],
            "spectral_gap": float(self.spectral_gap),
            "truncation": self.truncation.as_dict(),
            "stability": [int(v) for v in self.stability],
        }


def circle_derivative(cutoff):
    """-i d/dt on circle Fourier modes -M..M: the diagonal matrix of symbols."""
    if cutoff < 4:
        raise ValueError("cutoff must be at least 4")
    return np.diag(np.arange(-cutoff, cutoff + 1).astype(float))


def fiber_connection_operator(theta, cutoff):
    """Truncated -i d/ds + theta on the fiber circle: diag(k + theta)."""
    if cutoff < 4:
        raise ValueError("cutoff must be at least 4")
    return np.diag(np.arange(-cutoff, cutoff + 1) + float(theta))


def _winding_of(theta, winding):
    jump = theta(1.0) - theta(0.0)
    d = int(np.round(jump)) if winding is None else int(winding)
    if abs(jump - d) > 1e-9:
        raise ValueError(
            f"holonomy profile winds by {jump:.6f}, not an integer (declared {winding})"
        )
    return d


def total_operator_aps(theta, base_cutoff=64, fiber_cutoff=None, winding=None):
    """Truncated total operator of the prequantum model over the base circle.

    `theta` is the fiber holonomy as a function of the lifted base coordinate,
    with theta(1) = theta(0) + d.  The base derivative acts along a grid of
    2*base_cutoff+1 points; the fiber family is diag(k + theta(x)) on modes
    |k| <= K; the degree-d gluing is the truncated mode-shift identification.
    """
    d = _winding_of(theta, winding)
    K = int(fiber_cutoff) if fiber_cutoff is not None else 16 + abs(d)
    sample = np.abs([theta(x) for x in np.linspace(0.0, 1.0, 513)])
    need = float(sample.max()) + abs(d) + 2
    if K <= need:
        raise TruncationInsufficientError(
            f"fiber cutoff {K} too small: need K > max|theta| + |d| + 2 = {need:.2f}"
        )
    n_grid = 2 * int(base_cutoff) + 1
    h = 1.0 / n_grid
    f_dim = 2 * K + 1
    ks = np.arange(-K, K + 1)

    def site(j, kk):
        return j * f_dim + (kk + K)

    rows, cols, data = [], [], []
    n_links = 0

    def add_link(s_from, s_to, a_mid):
        nonlocal n_links
        rows.extend([n_links, n_links])
        cols.extend([s_from, s_to])
        data.extend([-1.0 / h + 0.5 * a_mid, 1.0 / h + 0.5 * a_mid])
        n_links += 1

    def add_closure(s_at, a_val, side):
        nonlocal n_links
        rows.append(n_links)
        cols.append(s_at)
        coeff = (1.0 / h if side == "bottom" else -1.0 / h) + 0.5 * a_val
        data.append(coeff)
        n_links += 1

    for j in range(n_grid - 1):
        x_mid = (j + 0.5) * h
        t_mid = theta(x_mid)
        for kk in ks:
            add_link(site(j, kk), site(j + 1, kk), kk + t_mid)
    t_seam = theta(1.0 - 0.5 * h)
    for kk in ks:
        if abs(kk + d) <= K:
            add_link(site(n_grid - 1, kk), site(0, kk + d), kk + t_seam)
    t0 = theta(0.0)
    t1 = theta((n_grid - 1) * h)
    for kk in ks:
        if abs(kk - d) > K and kk + t0 > 0:
            add_closure(site(0, kk), kk + t0, "bottom")
        if abs(kk + d) > K and kk + t1 < 0:
            add_closure(site(n_grid - 1, kk), kk + t1, "top")

    n_sites = n_grid * f_dim
    lower = sp.coo_matrix((data, (rows, cols)), shape=(n_links, n_sites))
    return _graded_from_block(lower, provenance=f"model operator: aps(d={d}, M={base_cutoff}, K={K})")


def _graded_from_block(lower, provenance):
    """Assemble [[0, L^dag], [L, 0]] with sites even and links odd."""
    n_links, n_sites = lower.shape
    lower = lower.tocsr()
    if lower.nnz and np.abs(lower.data.imag).max() == 0.0:
        lower = lower.real  # real symmetric eigensolves are much cheaper
    h = sp.bmat(
        [[None, lower.conj().T], [lower, None]], format="csr"
    )
    grading = np.concatenate([np.ones(n_sites), -np.ones(n_links)])
    return make_assembly(h, grading, provenance=provenance, check_tol=1e-11)


def callias_operator(path, lam, margin=0.5, resolution=257):
    """Truncated line operator d/dt + A(t) on [-lam-margin, lam+margin].

    Same box scheme as the circle model; at the two truncation edges the
    closure rows kill exactly the eigendirections whose tails would grow,
    i.e. the positive spectral subspace of A at the left end and the negative
    one at the right end.
    """
    a_end = np.asarray(path(lam + margin))
    a_start = np.asarray(path(-lam - margin))
    k_dim = a_start.shape[0]
    n_grid = int(resolution)
    xs = np.linspace(-lam - margin, lam + margin, n_grid)
    h = xs[1] - xs[0]

    rows, cols, data = [], [], []
    n_links = 0
    for j in range(n_grid - 1):
        a_mid = np.asarray(path(0.5 * (xs[j] + xs[j + 1])), dtype=complex)
        a_mid = 0.5 * (a_mid + a_mid.conj().T)
        for p in range(k_dim):
            rows.append(n_links + p)
            cols.append(j * k_dim + p)
            data.append(-1.0 / h)
            rows.append(n_links + p)
            cols.append((j + 1) * k_dim + p)
            data.append(1.0 / h)
        nz = np.nonzero(np.abs(a_mid) > 0)
        for p, q in zip(*nz):
            rows.append(n_links + p)
            cols.append(j * k_dim + q)
            data.append(0.5 * a_mid[p, q])
            rows.append(n_links + p)
            cols.append((j + 1) * k_dim + q)
            data.append(0.5 * a_mid[p, q])
        n_links += k_dim

    w0, v0 = np.linalg.eigh(0.5 * (a_start + a_start.conj().T))
    for mu, vec in zip(w0, v0.T):
        if mu > 0:
            for q in range(k_dim):
                rows.append(n_links)
                cols.append(q)
                data.append((1.0 / h + 0.5 * mu) * np.conj(vec[q]))
            n_links += 1
    w1, v1 = np.linalg.eigh(0.5 * (a_end + a_end.conj().T))
    for mu, vec in zip(w1, v1.T):
        if mu < 0:
            for q in range(k_dim):
                rows.append(n_links)
                cols.append((n_grid - 1) * k_dim + q)
                data.append((-1.0 / h + 0.5 * mu) * np.conj(vec[q]))
            n_links += 1

    lower = sp.coo_matrix((data, (rows, cols)), shape=(n_links, k_dim * n_grid))
    return _graded_from_block(
        lower, provenance=f"model operator: callias(res={n_grid}, window={lam})"
    )


def _eigenpairs_near_zero(assembly, spec):
    """Smallest eigenpairs of the assembly, dense or shift-invert as sized."""
    h = assembly.matrix
    dim = h.shape[0]
    if not sp.issparse(h) or dim <= 4096:
        dense = assembly.dense()
        w, v = np.linalg.eigh(dense)
        return w, v, True
    k_req = 16
    sigma = 1e-7
    while True:
        k_eff = min(k_req, dim - 2)
        w, v = spla.eigsh(h.tocsc(), k=k_eff, sigma=sigma, which="LM")
        order = np.argsort(np.abs(w))
        w, v = w[order], v[:, order]
        if np.max(np.abs(w)) > spec.zero_mode_tol or k_eff == dim - 2:
            return w, v, False
        k_req *= 2


def graded_index(assembly, spec=None, rebuild=None):
    """Zero-mode count with chirality expectations; ind_0 plus diagnostics.

    Zero modes are eigenvalues below `spec.zero_mode_tol` separated from the
    remaining spectrum by the gap-ratio threshold; their chirality is read
    from the grading compressed to the zero cluster (so exactly degenerate
    clusters are split along the grading, not along eigensolver whim).
    `rebuild(level)` re-runs the construction at two finer truncations for the
    stability replicas.
    """
    spec = spec or TruncationSpec()
    g = assembly.grading_diag
    w, v, complete = _eigenpairs_near_zero(assembly, spec)
    absw = np.abs(w)
    zero_mask = absw < spec.zero_mode_tol
    n_zero = int(zero_mask.sum())
    nonzero = absw[~zero_mask]
    if nonzero.size == 0:
        raise IndeterminateIndexError(
            "no spectral gap visible: every computed eigenvalue is below the "
            "zero-mode tolerance",
            ladder=np.sort(absw).tolist(),
        )
    spectral_gap = float(nonzero.min())
    max_zero = float(absw[zero_mask].max()) if n_zero else 0.0
    if n_zero and max_zero > 0.0 and spectral_gap / max_zero < spec.gap_ratio_threshold:
        raise IndeterminateIndexError(
            f"ambiguous zero-mode boundary: gap ratio {spectral_gap / max_zero:.2f} "
            f"below threshold {spec.gap_ratio_threshold}",
            ladder=np.sort(absw)[: min(12, absw.size)].tolist(),
        )

    zero_modes = []
    plus = minus = 0
    if n_zero:
        z = v[:, zero_mask]
        compressed = z.conj().T @ (g[:, None] * z)
        compressed = 0.5 * (compressed + compressed.conj().T)
        chi, _ = np.linalg.eigh(compressed)
        chi = np.sort(chi.real)[::-1]
        mags = np.sort(absw[zero_mask])
        for mag, c in zip(mags, chi):
            if abs(c) <= 0.5:
                raise MixedChiralityError(
                    f"zero mode with chirality expectation {c:.3f} in [-0.5, 0.5]",
                    chirality=float(c),
                )
            zero_modes.append((float(mag), float(c)))
            if c > 0.5:
                plus += 1
            else:
                minus += 1
    ind0 = plus - minus

    stability = []
    if rebuild is not None:
        for level in (1, 2):
            asm_f, spec_f = rebuild(level)
            rep_f = graded_index(asm_f, spec_f, rebuild=None)
            stability.append(rep_f.ind0)
        if any(s != ind0 for s in stability):
            raise IndeterminateIndexError(
                f"index not stable across truncations: {[ind0] + stability}"
            )
    return IndexReport(
        ind0=ind0,
        zero_modes=tuple(zero_modes),
        spectral_gap=spectral_gap,
        truncation=spec,
        stability=tuple(stability),
    )


def aps_index_report(theta, base_cutoff=64, fiber_cutoff=None, winding=None, spec=None):
    """Graded index of the circle model with stability replicas at finer cutoffs."""
    d = _winding_of(theta, winding)
    K = int(fiber_cutoff) if fiber_cutoff is not None else 16 + abs(d)

    def build(level):
        m_l = int(base_cutoff * (1 + 0.5 * level))
        k_l = K + 4 * level
        asm = total_operator_aps(theta, base_cutoff=m_l, fiber_cutoff=k_l, winding=d)
        spec_l = TruncationSpec(
            fourier_cutoffs=(k_l,),
            grid_resolution=2 * m_l + 1,
            zero_mode_tol=(spec.zero_mode_tol if spec else 1e-6),
            gap_ratio_threshold=(spec.gap_ratio_threshold if spec else 100.0),
        )
        return asm, spec_l

    asm0, spec0 = build(0)
    return graded_index(asm0, spec0, rebuild=build)


def callias_index_report(path, lam, margin=0.5, resolution=257, spec=None):
    """Graded index of the truncated line operator with stability replicas."""

    def build(level):
        res_l = int(resolution * (1 + 0.5 * level)) | 1
        asm = callias_operator(path, lam, margin=margin, resolution=res_l)
        spec_l = TruncationSpec(
            fourier_cutoffs=(max(4, res_l // 16),),
            grid_resolution=res_l,
            zero_mode_tol=(spec.zero_mode_tol if spec else 1e-6),
            gap_ratio_threshold=(spec.gap_ratio_threshold if spec else 100.0),
        )
        return asm, spec_l

    asm0, spec0 = build(0)
    return graded_index(asm0, spec0, rebuild=build)


def heat_kernel_supertrace(assembly, t=1.0):
    """Str(gamma exp(-t H^2)) by full eigendecomposition (dense sizes only)."""
    dense = assembly.dense()
    if dense.shape[0] > 6000:
        raise ValueError("supertrace cross-check is for moderate truncations")
    w, v = np.linalg.eigh(dense)
    g = assembly.grading_diag
    chi = np.einsum("ij,i,ij->j", v.conj(), g, v).real
    return float(np.sum(chi * np.exp(-t * w**2)))


def _spectral_subspace(a, positive):
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    cols = v[:, w > 0] if positive else v[:, w < 0]
    return cols


def _propagate_subspace(path, t0, t1, basis, sign, steps, growth_limit):
    """Re-orthonormalized RK4 transport of span(basis) along psi' = sign*A(t) psi."""
    y = np.array(basis, dtype=complex)
    h = (t1 - t0) / steps
    log_growth = 0.0

    def rhs(t, m):
        a = np.asarray(path(t), dtype=complex)
        return sign * (0.5 * (a + a.conj().T) @ m)

    t = t0
    for _ in range(steps):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        y, r = np.linalg.qr(y)
        log_growth += float(np.log(np.abs(np.diag(r)).max() + 1e-300))
        if abs(log_growth) > growth_limit:
            raise PropagationUnstableError(
                "subspace propagation exceeded the conditioning budget; "
                "rescale the path or shrink the window",
                growth=log_growth,
            )
    return y


def callias_index_ode(path, lam, steps=2000, floor=1e-9, angle_tol=1e-6, growth_limit=60.0):
    """Index of d/dt + A(t) by decaying-subspace propagation and intersection.

    ker  = solutions of psi' = -A psi decaying at both ends
         = (negative subspace of A_- propagated forward) meet (positive of A_+);
    coker swaps the signs.  Both limits must be invertible.
    """
    a_minus = np.asarray(path(-lam), dtype=complex)
    a_plus = np.asarray(path(lam), dtype=complex)
    for label, a in (("A_-", a_minus), ("A_+", a_plus)):
        w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
        if np.min(np.abs(w)) <= floor:
            raise ValueError(f"endpoint {label} is not invertible (|eig| <= {floor:.1e})")

    def intersection_dim(p, q):
        if p.shape[1] == 0 or q.shape[1] == 0:
            return 0
        s = np.linalg.svd(p.conj().T @ q, compute_uv=False)
        return int(np.sum(s >= 1.0 - angle_tol))

    ker_basis = _spectral_subspace(a_minus, positive=False)
    if ker_basis.shape[1]:
        transported = _propagate_subspace(
            path, -lam, lam, ker_basis, sign=-1.0, steps=steps, growth_limit=growth_limit
        )
        dim_ker = intersection_dim(transported, _spectral_subspace(a_plus, positive=True))
    else:
        dim_ker = 0

    coker_basis = _spectral_subspace(a_minus, positive=True)
    if coker_basis.shape[1]:
        transported = _propagate_subspace(
            path, -lam, lam, coker_basis, sign=+1.0, steps=steps, growth_limit=growth_limit
        )
        dim_coker = intersection_dim(
            transported, _spectral_subspace(a_plus, positive=False)
        )
    else:
        dim_coker = 0
    return dim_ker - dim_coker


def endpoint_flow_count(a_minus, a_plus):
    """Spectral flow of any path between invertible endpoints, from inertia.

    Each upward crossing lowers the negative-eigenvalue count by one, so the
    flow is #neg(A_-) - #neg(A_+) regardless of the interpolant.
    """
    w_m = np.linalg.eigvalsh(np.asarray(a_minus, dtype=complex))
    w_p = np.linalg.eigvalsh(np.asarray(a_plus, dtype=complex))
    return int(np.sum(w_m < 0) - np.sum(w_p < 0))
