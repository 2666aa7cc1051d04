"""Joint spectral flow by branch tracking over meshed bases.

The flow of a family of commuting tuples is the signed, multiplicity-weighted
count of parameter points where a joint-eigenvalue branch crosses 0 in R^n,
paired with the base orientation.  Branches are matched across mesh edges by
eigenframe overlap (an assignment problem per edge, refined by bisection when
ambiguous); crossings are located by Newton iteration on the multilinear
interpolant and verified against the true family; signs come from the
Jacobian determinant of the branch at the crossing.

Sign convention: the n=1 path diag(t - 1/2) on [0, 1] has flow +1, and S^1 /
T^n carry the counterclockwise/product orientation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    BoundaryCrossingError,
    EndpointNotInvertibleError,
    NotAdmissibleError,
    TransversalityError,
    UnresolvedBranchError,
)
from .mesh import BaseMesh, circle_mesh, interval_mesh, torus_mesh
from .tuples import (
    DEFAULT_SEED,
    CommutingTuple,
    diagonal_tuple,
    joint_diagonalize,
    validate_tuple,
)

__all__ = [
    "JsfOptions",
    "OperatorFamily",
    "BranchField",
    "CrossingRecord",
    "JsfResult",
    "build_branch_field",
    "count_crossings",
    "jsf_closed",
    "jsf_open",
    "classical_spectral_flow",
    "jsf_product",
    "product_family",
]


@dataclass(frozen=True)
class JsfOptions:
    match_threshold: float = 0.7
    refine_max: int = 8
    near_zero_levels: int = 3     # extra cell subdivisions when localizing
    transversality_floor: float = 1e-6
    boundary_margin: float = 1e-4  # in units of the cell spacing
    boundary_shift_scale: float = 1.0  # 0 disables the seeded retry shift
    newton_tol: float = 1e-10
    newton_max_iter: int = 60
    fd_rel_step: float = 1e-5
    seed: int = DEFAULT_SEED
    cluster_tol: float = 1e-8
    dedup_rel: float = 1e-6


@dataclass(frozen=True)
class OperatorFamily:
    """Deterministic evaluator x -> CommutingTuple over a declared base dimension.

    `window` and `kappa` define the admissibility data for open bases: the
    family promises min |joint eigenvalue|^2 >= kappa outside the compact box
    `window` = (lo, hi).
    """

    arity: int
    evaluator: object
    name: str = ""
    window: tuple = None
    kappa: float = None

    def __call__(self, coords):
        tup = self.evaluator(np.atleast_1d(np.asarray(coords, dtype=float)))
        if tup.n != self.arity:
            raise ValueError(
                f"family {self.name!r} evaluated to arity {tup.n}, declared {self.arity}"
            )
        return tup


@dataclass
class _VertexData:
    """Joint spectrum flattened to expanded (per eigenvector column) form."""

    values: np.ndarray      # (k, n) joint eigenvalues, one row per column
    point_of_col: np.ndarray
    mult_of_col: np.ndarray
    unitary: np.ndarray     # (k, k) columns grouped by point
    n_points: int
    coordinate_ids: np.ndarray = None  # set when every column is a basis vector


def _expand(js):
    values = []
    point_of_col = []
    mult_of_col = []
    for p_idx, p in enumerate(js.points):
        for _ in range(p.multiplicity):
            values.append(p.value)
            point_of_col.append(p_idx)
            mult_of_col.append(p.multiplicity)
    u = js.unitary
    coordinate_ids = None
    mags = np.abs(u)
    if np.all(np.max(mags, axis=0) > 1.0 - 1e-14) and np.all(
        np.sum(mags > 1e-14, axis=0) == 1
    ):
        coordinate_ids = np.argmax(mags, axis=0)
    return _VertexData(
        values=np.array(values),
        point_of_col=np.array(point_of_col, dtype=int),
        mult_of_col=np.array(mult_of_col, dtype=int),
        unitary=u,
        n_points=len(js.points),
        coordinate_ids=coordinate_ids,
    )


def _block_overlap(a, b):
    """Subspace overlap per expanded column pair, in [0, 1].

    Basis-independent inside degenerate blocks: each entry is
    ||F_P^dag F_Q||_F^2 / min(m_P, m_Q) for the points P, Q owning the columns.
    """
    s = np.abs(a.unitary.conj().T @ b.unitary) ** 2
    k = s.shape[0]
    pa, pb = a.point_of_col, b.point_of_col
    ind_a = np.zeros((k, a.n_points))
    ind_a[np.arange(k), pa] = 1.0
    ind_b = np.zeros((k, b.n_points))
    ind_b[np.arange(k), pb] = 1.0
    block = ind_a.T @ s @ ind_b
    denom = np.minimum(a.mult_of_col[:, None], b.mult_of_col[None, :]).astype(float)
    return block[pa[:, None], pb[None, :]] / denom


def _match(a, b, threshold):
    """Best expanded-level assignment a -> b; returns (perm, min overlap)."""
    if a.coordinate_ids is not None and b.coordinate_ids is not None:
        # Shared coordinate frames: branches pair by basis vector, exactly.
        lookup = np.empty(len(b.coordinate_ids), dtype=int)
        lookup[b.coordinate_ids] = np.arange(len(b.coordinate_ids))
        return lookup[a.coordinate_ids], 1.0
    overlap = _block_overlap(a, b)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm, float(overlap[rows, cols].min())


class _Evaluator:
    """Caches vertex evaluations; every call site shares one diagonalization."""

    def __init__(self, family, options):
        self.family = family
        self.options = options
        self._cache = {}

    def at(self, coords):
        key = tuple(np.round(np.asarray(coords, dtype=float), 14))
        if key not in self._cache:
            tup = self.family(np.asarray(coords, dtype=float))
            js = joint_diagonalize(
                tup, seed=self.options.seed, cluster_tol=self.options.cluster_tol
            )
            self._cache[key] = _expand(js)
        return self._cache[key]


@dataclass
class BranchField:
    """Per-vertex joint spectra plus per-edge branch matchings."""

    mesh: BaseMesh
    family: OperatorFamily
    vertex_data: dict
    matchings: dict          # (vidx, widx) -> expanded permutation
    min_overlap: float
    refinement_log: list
    face_monodromies: dict   # cell -> point-level permutation (non-identity only)
    loop_monodromies: dict   # axis -> seam diagnostics
    evaluator: _Evaluator

    @property
    def branch_count(self):
        return next(iter(self.vertex_data.values())).values.shape[0]


def _match_edge(ev, xa, xb, da, db, depth, options, log, edge_name):
    perm, quality = _match(da, db, options.match_threshold)
    if quality >= options.match_threshold:
        return perm, quality
    if depth >= options.refine_max:
        raise UnresolvedBranchError(
            f"edge {edge_name} still ambiguous after {depth} refinements "
            f"(best overlap {quality:.3f} < {options.match_threshold})",
            cell=edge_name,
        )
    xm = 0.5 * (np.asarray(xa) + np.asarray(xb))
    dm = ev.at(xm)
    log.append({"edge": edge_name, "depth": depth + 1})
    p1, q1 = _match_edge(ev, xa, xm, da, dm, depth + 1, options, log, edge_name)
    p2, q2 = _match_edge(ev, xm, xb, dm, db, depth + 1, options, log, edge_name)
    return p2[p1], min(q1, q2)


def build_branch_field(family, mesh, options=None):
    """Evaluate, jointly diagonalize, and match branches across every mesh edge."""
    options = options or JsfOptions()
    if family.arity != mesh.dim:
        raise ValueError(
            f"family arity {family.arity} does not match mesh dimension {mesh.dim}"
        )
    ev = _Evaluator(family, options)
    vertex_data = {}
    for vidx in mesh.vertex_indices():
        vertex_data[vidx] = ev.at(mesh.vertex_coord(vidx))
    k0 = next(iter(vertex_data.values())).values.shape[0]
    for vidx, vd in vertex_data.items():
        if vd.values.shape[0] != k0:
            raise UnresolvedBranchError(
                f"vertex {vidx} has {vd.values.shape[0]} branches, expected {k0}"
            )

    matchings = {}
    refinement_log = []
    min_overlap = 1.0
    for vidx, widx, _axis in mesh.edges():
        perm, quality = _match_edge(
            ev,
            mesh.vertex_coord(vidx),
            mesh.vertex_coord(widx),
            vertex_data[vidx],
            vertex_data[widx],
            0,
            options,
            refinement_log,
            (vidx, widx),
        )
        matchings[(vidx, widx)] = perm
        min_overlap = min(min_overlap, quality)

    face_monodromies = _face_monodromies(mesh, vertex_data, matchings)
    loop_monodromies = _loop_monodromies(mesh, vertex_data)
    return BranchField(
        mesh=mesh,
        family=family,
        vertex_data=vertex_data,
        matchings=matchings,
        min_overlap=min_overlap,
        refinement_log=refinement_log,
        face_monodromies=face_monodromies,
        loop_monodromies=loop_monodromies,
        evaluator=ev,
    )


def _face_monodromies(mesh, vertex_data, matchings):
    """Point-level permutation around every 2-face; non-identity ones recorded."""
    out = {}
    if mesh.dim < 2:
        return out
    for cidx in mesh.cell_indices():
        for a, b in itertools.combinations(range(mesh.dim), 2):
            v00 = cidx
            v10 = tuple(c + (1 if i == a else 0) for i, c in enumerate(cidx))
            v01 = tuple(c + (1 if i == b else 0) for i, c in enumerate(cidx))
            v11 = tuple(
                c + (1 if i in (a, b) else 0) for i, c in enumerate(cidx)
            )
            path1 = matchings[(v10, v11)][matchings[(v00, v10)]]
            path2 = matchings[(v01, v11)][matchings[(v00, v01)]]
            pts1 = vertex_data[v11].point_of_col
            if not np.array_equal(pts1[path1], pts1[path2]):
                out[(cidx, (a, b))] = {
                    "via_first_axis": pts1[path1].tolist(),
                    "via_second_axis": pts1[path2].tolist(),
                }
    return out


def _loop_monodromies(mesh, vertex_data):
    """Seam diagnostics per closed axis: value drift between far replica and origin.

    A winding family shows up as a constant integer drift (the shift
    monodromy); an honest periodic family shows drift 0.
    """
    out = {}
    if not mesh.periodic:
        return out
    base = tuple(0 for _ in range(mesh.dim))
    for a in range(mesh.dim):
        far = tuple(mesh.resolution[i] if i == a else 0 for i in range(mesh.dim))
        va, vb = vertex_data[base], vertex_data[far]
        cost = np.linalg.norm(va.values[:, None, :] - vb.values[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        drift = vb.values[cols] - va.values[rows]
        med = np.median(drift, axis=0)
        out[a] = {
            "median_value_drift": [float(np.round(x, 9)) for x in med],
            "max_pair_distance": float(cost[rows, cols].max()),
        }
    return out


@dataclass(frozen=True)
class CrossingRecord:
    cell: tuple
    location: tuple          # coordinates, reduced to the fundamental domain
    branch: int              # expanded branch index at the cell's base corner
    multiplicity: int
    sign: int
    margin: float            # |det J| after Lipschitz rescaling
    det_jacobian: float


@dataclass(frozen=True)
class JsfResult:
    jsf: int
    crossings: tuple
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        total = sum(c.sign * c.multiplicity for c in self.crossings)
        total *= self.diagnostics.get("orientation", 1)
        if total != self.jsf:
            raise ValueError(
                f"inconsistent result: jsf={self.jsf} but signed crossing sum gives {total}"
            )


class _BoundaryFlag(Exception):
    def __init__(self, location):
        self.location = location
        super().__init__(f"crossing at {location} lies on a cell boundary")


def _cell_corner_branches(bf, cidx):
    """Expanded branch permutations from the base corner to every cell corner.

    Walks axis edges in increasing-axis order; a disagreement with another
    walk order would be a face monodromy, recorded during the build.
    """
    mesh = bf.mesh
    corners = {}
    base = cidx
    corners[tuple(0 for _ in range(mesh.dim))] = np.arange(
        bf.vertex_data[base].values.shape[0]
    )
    for off in itertools.product(*([(0, 1)] * mesh.dim)):
        if all(o == 0 for o in off):
            continue
        perm = corners[tuple(0 for _ in range(mesh.dim))]
        cur = base
        for a in range(mesh.dim):
            if off[a]:
                nxt = tuple(c + (1 if i == a else 0) for i, c in enumerate(cur))
                perm = bf.matchings[(cur, nxt)][perm]
                cur = nxt
        corners[off] = perm
    return corners


def _corner_values(bf, cidx, corners, branch):
    vals = {}
    for off, perm in corners.items():
        vidx = tuple(c + o for c, o in zip(cidx, off))
        vals[off] = bf.vertex_data[vidx].values[perm[branch]]
    return vals


def _box_contains_zero(vals, slack=0.3):
    arr = np.array(list(vals.values()))
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    pad = slack * (hi - lo) + 1e-300
    return bool(np.all(lo - pad <= 0.0) and np.all(0.0 <= hi + pad))


def _quad_winding(v00, v10, v11, v01):
    """Winding of the (piecewise linear) cell boundary image around 0 in R^2."""
    loop = [v00, v10, v11, v01, v00]
    total = 0.0
    for p, q in zip(loop[:-1], loop[1:]):
        cross = p[0] * q[1] - p[1] * q[0]
        dot = p[0] * q[0] + p[1] * q[1]
        total += np.arctan2(cross, dot)
    return int(np.round(total / (2.0 * np.pi)))


def _definite_crossing(vals):
    arr = np.array(list(vals.values()))
    n = arr.shape[1]
    if n == 1:
        return arr[:, 0].min() < 0.0 < arr[:, 0].max()
    if n == 2:
        order = [(0, 0), (1, 0), (1, 1), (0, 1)]
        quad = [np.array(v) for v in (vals[o] for o in order)]
        if any(np.linalg.norm(v) == 0.0 for v in quad):
            return True
        return _quad_winding(*quad) != 0
    raise NotImplementedError("crossing detection implemented for n <= 2")


class _BranchTracker:
    """Follows one branch through fresh evaluations near a cell."""

    def __init__(self, bf, frame_hint_value, options):
        self.ev = bf.evaluator
        self.options = options
        self.value_hint = np.asarray(frame_hint_value, dtype=float)

    def value_at(self, coords, hint=None):
        """Joint eigenvalue of the tracked branch at coords (nearest to hint)."""
        hint = self.value_hint if hint is None else hint
        vd = self.ev.at(coords)
        d = np.linalg.norm(vd.values - hint[None, :], axis=1)
        idx = int(np.argmin(d))
        return vd.values[idx], vd.mult_of_col[idx]


def _newton_polish(tracker, x0, lo, hi, options):
    """Newton on the true branch with centered finite-difference Jacobian."""
    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    span = hi - lo
    val, mult = tracker.value_at(x, hint=np.zeros(n))
    scale = max(1.0, float(np.max(np.abs(span))))
    for _ in range(options.newton_max_iter):
        if np.linalg.norm(val) <= options.newton_tol:
            break
        jac = np.empty((n, n))
        for a in range(n):
            h = max(options.fd_rel_step * span[a], 1e-9)
            e = np.zeros(n)
            e[a] = h
            vp, _ = tracker.value_at(x + e, hint=val)
            vm, _ = tracker.value_at(x - e, hint=val)
            jac[:, a] = (vp - vm) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, val)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, val, rcond=None)[0]
        limit = 0.75 * np.max(span)
        if np.linalg.norm(step) > limit:
            step *= limit / np.linalg.norm(step)
        x = x - step
        x = np.clip(x, lo - 0.5 * span, hi + 0.5 * span)
        val, mult = tracker.value_at(x, hint=np.zeros(n))
        if np.linalg.norm(step) < 1e-15 * scale:
            break
    return x, val, mult


def _branch_jacobian(tracker, x, span, options):
    n = x.shape[0]
    jac = np.empty((n, n))
    v0, _ = tracker.value_at(x, hint=np.zeros(n))
    for a in range(n):
        h = max(options.fd_rel_step * span[a], 1e-9)
        e = np.zeros(n)
        e[a] = h
        vp, _ = tracker.value_at(x + e, hint=v0)
        vm, _ = tracker.value_at(x - e, hint=v0)
        jac[:, a] = (vp - vm) / (2.0 * h)
    return jac


def _localize(bf, cidx, branch, corner_vals, lo, hi, level, options, found):
    """Recursively subdivide the box until crossings are isolated, then polish."""
    n = len(lo)
    if not _box_contains_zero(corner_vals):
        return
    definite = _definite_crossing(corner_vals)
    if level < options.near_zero_levels:
        mids = {}
        tracker = _BranchTracker(bf, np.zeros(n), options)
        hint = np.mean(np.array(list(corner_vals.values())), axis=0)
        for off in itertools.product(*([(0, 1, 2)] * n)):
            if all(o in (0, 2) for o in off):
                continue
            coords = np.array(
                [lo[a] + 0.5 * off[a] * (hi[a] - lo[a]) for a in range(n)]
            )
            mids[off], _ = tracker.value_at(coords, hint=hint)
        full = dict(mids)
        for off, v in corner_vals.items():
            full[tuple(2 * o for o in off)] = v
        for sub in itertools.product(*([(0, 1)] * n)):
            sub_lo = np.array(
                [lo[a] + 0.5 * sub[a] * (hi[a] - lo[a]) for a in range(n)]
            )
            sub_hi = sub_lo + 0.5 * (hi - lo)
            sub_vals = {}
            for off in itertools.product(*([(0, 1)] * n)):
                key = tuple(s + o for s, o in zip(sub, off))
                sub_vals[off] = full[key]
            _localize(bf, cidx, branch, sub_vals, sub_lo, sub_hi, level + 1, options, found)
        return
    # Bottom level: polish with Newton on the true family.
    hint = np.mean(np.array(list(corner_vals.values())), axis=0)
    tracker = _BranchTracker(bf, hint, options)
    x0 = 0.5 * (lo + hi)
    x, val, mult = _newton_polish(tracker, x0, lo, hi, options)
    residual = float(np.linalg.norm(val))
    span = hi - lo
    accept_tol = max(options.newton_tol, 1e-9)
    if residual > accept_tol:
        if definite:
            # A sign change is certain but Newton could not pin it down.
            raise UnresolvedBranchError(
                f"cell {cidx}: crossing of branch {branch} detected but Newton "
                f"stalled at residual {residual:.2e}",
                cell=cidx,
            )
        return
    # Inside (or on the face of) the original cell only; neighbors find their own.
    full_lo, full_hi = bf.mesh.cell_bounds(cidx)
    eps = 1e-9 * np.max(full_hi - full_lo)
    if np.any(x < full_lo - eps) or np.any(x > full_hi + eps):
        return
    found.append({"x": x, "branch": branch, "multiplicity": int(mult), "cell": cidx})


def count_crossings(bf, mesh=None, options=None):
    """Locate and sign every transversal crossing; assemble the flow."""
    options = options or JsfOptions()
    mesh = mesh or bf.mesh
    return _count(bf, mesh, options, restrict=None)


def _count(bf, mesh, options, restrict):
    found = []
    min_gap = np.inf
    for cidx in mesh.cell_indices():
        corners = _cell_corner_branches(bf, cidx)
        lo, hi = mesh.cell_bounds(cidx)
        base_vd = bf.vertex_data[cidx]
        seen_points = set()
        for branch in range(base_vd.values.shape[0]):
            # One representative per degenerate point: multiplicities are
            # carried on the record, not by duplicate tracking.
            p = int(base_vd.point_of_col[branch])
            if p in seen_points:
                continue
            seen_points.add(p)
            vals = _corner_values(bf, cidx, corners, branch)
            if _box_contains_zero(vals):
                _localize(bf, cidx, branch, vals, lo, hi, 0, options, found)
            else:
                min_gap = min(
                    min_gap, float(np.min(np.linalg.norm(list(vals.values()), axis=1)))
                )

    records = _dedup_and_sign(bf, mesh, options, found, restrict)
    total = sum(r.sign * r.multiplicity for r in records)
    diagnostics = {
        "orientation": mesh.orientation,
        "min_offcrossing_norm": None if not np.isfinite(min_gap) else float(min_gap),
        "refinements": len(bf.refinement_log),
        "min_match_overlap": float(bf.min_overlap),
        "face_monodromies": len(bf.face_monodromies),
        "loop_monodromies": bf.loop_monodromies,
    }
    return JsfResult(
        jsf=mesh.orientation * total, crossings=tuple(records), diagnostics=diagnostics
    )


def _dedup_and_sign(bf, mesh, options, found, restrict):
    if not found:
        return []
    spacing = np.array([mesh.spacing(a) for a in range(mesh.dim)])
    dedup_r = options.dedup_rel * float(np.max(spacing))
    # Merge hits at the same location (same point hit from adjacent cells or
    # degenerate partners); keep the largest multiplicity seen.
    merged = []
    for hit in sorted(found, key=lambda h: tuple(np.round(h["x"], 12))):
        x_wrapped = mesh.wrap(hit["x"])
        if mesh.periodic:
            for a in range(mesh.dim):
                if mesh.lengths[a] - x_wrapped[a] < 1e-9 * mesh.lengths[a]:
                    x_wrapped[a] = 0.0
        dup = None
        for m in merged:
            delta = np.abs(x_wrapped - m["x"])
            if mesh.periodic:
                delta = np.minimum(delta, np.array(mesh.lengths) - delta)
            if np.linalg.norm(delta) <= max(dedup_r, 1e-12):
                dup = m
                break
        if dup is None:
            merged.append(
                {
                    "x": x_wrapped,
                    "x_raw": hit["x"],
                    "branch": hit["branch"],
                    "multiplicity": hit["multiplicity"],
                    "cell": hit["cell"],
                }
            )
        else:
            dup["multiplicity"] = max(dup["multiplicity"], hit["multiplicity"])

    records = []
    for m in merged:
        if restrict is not None and not restrict(m["x_raw"]):
            continue
        x = m["x_raw"]
        # Boundary proximity check against the top-level mesh planes.
        for a in range(mesh.dim):
            coords_a = mesh.axis_coords(a)
            if np.min(np.abs(coords_a - x[a])) < options.boundary_margin * mesh.spacing(a):
                raise _BoundaryFlag(tuple(float(v) for v in m["x"]))
        tracker = _BranchTracker(bf, np.zeros(mesh.dim), options)
        jac = _branch_jacobian(tracker, x, spacing, options)
        det = float(np.linalg.det(jac))
        lipschitz = _lipschitz_estimate(bf, mesh, m["cell"], options)
        margin = abs(det) / lipschitz
        if margin < options.transversality_floor:
            raise TransversalityError(
                f"non-transversal crossing at {tuple(np.round(m['x'], 6))}: "
                f"scaled margin {margin:.3e} below floor {options.transversality_floor:.1e}",
                cell=m["cell"],
                margin=margin,
            )
        records.append(
            CrossingRecord(
                cell=m["cell"],
                location=tuple(float(v) for v in m["x"]),
                branch=int(m["branch"]),
                multiplicity=int(m["multiplicity"]),
                sign=int(np.sign(det)),
                margin=float(margin),
                det_jacobian=det,
            )
        )
    records.sort(key=lambda r: r.location)
    return records


def _lipschitz_estimate(bf, mesh, cidx, options):
    """Product of per-axis branch slope bounds over the cell, floored at 1."""
    corners = _cell_corner_branches(bf, cidx)
    est = 1.0
    for a in range(mesh.dim):
        h = mesh.spacing(a)
        best = 0.0
        for off, perm in corners.items():
            if off[a] == 1:
                continue
            off2 = tuple(o + (1 if i == a else 0) for i, o in enumerate(off))
            v1 = bf.vertex_data[tuple(c + o for c, o in zip(cidx, off))].values[perm]
            v2 = bf.vertex_data[tuple(c + o for c, o in zip(cidx, off2))].values[
                corners[off2]
            ]
            best = max(best, float(np.max(np.abs(v2 - v1))) / h)
        est *= max(best, 1.0)
    return est


def _run_with_boundary_retry(family, mesh, options, restrict_builder):
    rng = np.random.default_rng(options.seed ^ 0x5EED)
    current = mesh
    for attempt in range(2):
        bf = build_branch_field(family, current, options)
        try:
            return _count(bf, current, options, restrict_builder(current))
        except _BoundaryFlag as flag:
            if attempt == 1 or options.boundary_shift_scale == 0.0:
                raise BoundaryCrossingError(
                    f"crossing at {flag.location} persists on a cell boundary "
                    "after the mesh shift retry",
                    location=flag.location,
                ) from None
            fractions = options.boundary_shift_scale * rng.uniform(
                0.3, 0.7, size=mesh.dim
            )
            current = current.shifted(fractions)
    raise AssertionError("unreachable")


def jsf_closed(family, mesh, options=None):
    """Joint spectral flow over a closed base (circle or torus mesh)."""
    options = options or JsfOptions()
    if not mesh.periodic:
        raise ValueError("jsf_closed needs a circle or torus mesh")
    return _run_with_boundary_retry(family, mesh, options, lambda m: None)


def jsf_open(family, mesh, kappa=None, window=None, options=None):
    """Joint spectral flow over an interval base with an admissibility barrier.

    Crossings are counted inside the compact window K only; every sampled
    vertex outside K must satisfy min |joint eigenvalue|^2 >= kappa.
    For n = 1 this is the classical spectral flow of a path with invertible
    endpoints.
    """
    options = options or JsfOptions()
    if mesh.kind != "interval":
        raise ValueError("jsf_open needs an interval mesh")
    kappa = family.kappa if kappa is None else kappa
    window = family.window if window is None else window
    if kappa is None or window is None:
        raise ValueError("open-base flow needs an admissibility window and kappa")
    w_lo, w_hi = (np.atleast_1d(np.asarray(w, dtype=float)) for w in window)

    def check_admissible(bf, mesh_now):
        for vidx in mesh_now.vertex_indices():
            x = mesh_now.vertex_coord(vidx)
            if np.all(x >= w_lo) and np.all(x <= w_hi):
                continue
            norm_sq = float(np.min(np.sum(bf.vertex_data[vidx].values ** 2, axis=1)))
            if norm_sq < kappa:
                raise NotAdmissibleError(
                    f"family is not admissible: at x={tuple(np.round(x, 6))} outside K "
                    f"the joint-eigenvalue norm^2 is {norm_sq:.3e} < kappa={kappa:.3e}",
                    witness=tuple(float(v) for v in x),
                    norm_sq=norm_sq,
                )

    def restrict_builder(mesh_now):
        return lambda x: bool(np.all(x >= w_lo) and np.all(x <= w_hi))

    rng = np.random.default_rng(options.seed ^ 0x5EED)
    current = mesh
    for attempt in range(2):
        bf = build_branch_field(family, current, options)
        check_admissible(bf, current)
        try:
            return _count(bf, current, options, restrict_builder(current))
        except _BoundaryFlag as flag:
            if attempt == 1 or options.boundary_shift_scale == 0.0:
                raise BoundaryCrossingError(
                    f"crossing at {flag.location} persists on a cell boundary "
                    "after the mesh shift retry",
                    location=flag.location,
                ) from None
            # Interval meshes shrink slightly instead of translating, so the
            # admissibility window stays covered.
            frac = options.boundary_shift_scale * rng.uniform(0.3, 0.7)
            current = BaseMesh(
                kind="interval",
                resolution=current.resolution,
                orientation=current.orientation,
                origin=(current.origin[0] + frac * current.spacing(0),),
                lengths=(current.lengths[0] - frac * current.spacing(0),),
            )
    raise AssertionError("unreachable")


def classical_spectral_flow(path, steps=800, closed=False, floor=1e-10):
    """Ordinary spectral flow of a path of Hermitian matrices.

    Dense eigenvalue sorting at a fine step plus sign bookkeeping: sorted
    branches pair consecutive samples, and each strict sign change through 0
    counts with its sign.  Serves as the independent n=1 oracle.
    """
    ts = np.linspace(0.0, 1.0, int(steps) + 1)
    eigs = []
    for t in ts:
        a = np.asarray(path(float(t)))
        a = 0.5 * (a + a.conj().T)
        eigs.append(np.sort(np.linalg.eigvalsh(a)))
    eigs = np.array(eigs)
    scale = max(1.0, float(np.abs(eigs).max()))
    if closed:
        if not np.allclose(eigs[0], eigs[-1], atol=1e-9 * scale):
            raise ValueError("path declared closed but endpoint spectra differ")
    else:
        for label, row in (("start", eigs[0]), ("end", eigs[-1])):
            if np.min(np.abs(row)) <= floor * scale:
                raise EndpointNotInvertibleError(
                    f"eigenvalue within {floor:.1e} of 0 at the {label} of an open path"
                )
    pos = eigs > 0.0
    up = np.sum(~pos[:-1] & pos[1:])
    down = np.sum(pos[:-1] & ~pos[1:])
    return int(up - down)


def jsf_product(a, b):
    """Flow of a product family is the product of the factor flows."""
    return int(a.jsf) * int(b.jsf)


def product_family(fam_a, fam_b, name=None):
    """Explicit product family (T_i (x) 1, 1 (x) S_j) over the product base."""

    na, nb = fam_a.arity, fam_b.arity

    def evaluator(coords):
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        ta = fam_a(coords[:na])
        tb = fam_b(coords[na:])
        if ta.is_diagonal and tb.is_diagonal:
            das = [np.real(np.diag(m)) for m in ta.matrices]
            dbs = [np.real(np.diag(m)) for m in tb.matrices]
            diags = [np.repeat(d, tb.k) for d in das] + [np.tile(d, ta.k) for d in dbs]
            return diagonal_tuple(diags, tol=max(ta.tol, tb.tol))
        eye_a = np.eye(ta.k)
        eye_b = np.eye(tb.k)
        mats = [np.kron(m, eye_b) for m in ta.matrices]
        mats += [np.kron(eye_a, m) for m in tb.matrices]
        # Commutation is structural: mixed pairs commute exactly, same-factor
        # pairs inherit the factor defects.
        return CommutingTuple(
            matrices=tuple(mats),
            tol=max(ta.tol, tb.tol),
            hermiticity_defect=max(ta.hermiticity_defect, tb.hermiticity_defect),
            commutator_defect=max(ta.commutator_defect, tb.commutator_defect),
        )

    return OperatorFamily(
        arity=na + nb,
        evaluator=evaluator,
        name=name or f"product({fam_a.name},{fam_b.name})",
    )
