"""Named verification experiments: each pairs a family with an independent oracle.

A scenario bundles (a) an operator family plus mesh for the branch-tracking
flow, (b) an oracle computed by entirely different means (ODE matching,
winding counts, Wiener-Hopf dimensions, brute-force zero enumeration), and
(c) where a truncated model operator exists, its graded index with stability
replicas.  run_scenario executes all available legs and passes only on exact
integer agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dirac, toeplitz
from .errors import JointflowError
from .jsf import JsfOptions, OperatorFamily, jsf_closed, jsf_open, product_family
from .mesh import circle_mesh, interval_mesh, torus_mesh
from .tuples import DEFAULT_SEED, diagonal_tuple, validate_tuple

#: Winding-3 holonomy with exactly five transversal integer crossings,
#: signs (+, +, -, +, +); coefficients chosen so every crossing slope
#: exceeds 4 and the interior extrema stay 0.2 away from the integers.
FIVE_CROSSING_COEFFS = (0.5, 0.45)


class ScenarioError(JointflowError):
    """A component failed while running a scenario."""

    def __init__(self, scenario, cause):
        self.scenario = scenario
        self.cause = cause
        super().__init__(f"scenario {scenario!r}: {cause}")


@dataclass(frozen=True)
class Scenario:
    name: str
    parameters: dict
    expected: int
    provenance: str              # "paper" | "derived" | "trivial"
    oracle: object               # () -> int, independent of the jsf module
    oracle_description: str
    family: OperatorFamily = None
    mesh: object = None
    open_base: bool = False
    dirac_builder: object = None  # () -> IndexReport
    extra_checks: object = None   # (record, jsf_result) -> dict of named bools
    seed: int = DEFAULT_SEED
    options: JsfOptions = field(default_factory=JsfOptions)

    def with_expected(self, value):
        """Variant with an injected expected value (harness self-test)."""
        return replace(self, expected=int(value))


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def scenario_callias(a_minus, a_plus, interpolant=None, lam=1.0, seed=DEFAULT_SEED, name=None):
    """Interval family with constant invertible tails A_- and A_+.

    Expected value: the endpoint eigenvalue-count formula (the inertia
    difference #neg(A_-) - #neg(A_+)); oracle: decaying-solution matching for
    d/dt + A(t); model operator: the truncated line assembly.
    """
    a_minus = np.asarray(a_minus, dtype=complex)
    a_plus = np.asarray(a_plus, dtype=complex)
    for label, a in (("A_-", a_minus), ("A_+", a_plus)):
        w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
        if np.min(np.abs(w)) < 1e-9:
            raise ValueError(f"endpoint {label} is not invertible")

    if interpolant is None:
        def interpolant(t):
            s = _smoothstep((t + lam) / (2.0 * lam))
            return (1.0 - s) * a_minus + s * a_plus

    def path(t):
        if t <= -lam:
            return a_minus
        if t >= lam:
            return a_plus
        return interpolant(t)

    def evaluator(x):
        return validate_tuple([path(float(x[0]))], tol=1e-9)

    kappa = 0.5 * min(
        float(np.min(np.linalg.eigvalsh(a_minus @ a_minus.conj().T))),
        float(np.min(np.linalg.eigvalsh(a_plus @ a_plus.conj().T))),
    )
    family = OperatorFamily(
        arity=1,
        evaluator=evaluator,
        name=name or "callias",
        window=((-lam,), (lam,)),
        kappa=kappa,
    )
    expected = dirac.endpoint_flow_count(a_minus, a_plus)

    def oracle():
        return dirac.callias_index_ode(path, lam)

    def dirac_builder():
        return dirac.callias_index_report(path, lam, resolution=161)

    return Scenario(
        name=name or "callias",
        parameters={
            "dim": int(a_minus.shape[0]),
            "lam": float(lam),
            "neg_minus": int(np.sum(np.linalg.eigvalsh(a_minus) < 0)),
            "neg_plus": int(np.sum(np.linalg.eigvalsh(a_plus) < 0)),
        },
        expected=expected,
        provenance="paper",
        oracle=oracle,
        oracle_description="decaying-subspace ODE matching for d/dt + A(t)",
        family=family,
        mesh=interval_mesh(-lam - 0.4, lam + 0.4, 48),
        open_base=True,
        dirac_builder=dirac_builder,
        seed=seed,
    )


def _default_holonomy(d, seed, perturbation=0.15):
    """d x plus a seeded smooth perturbation vanishing at 0 (constant 1/2 for d=0)."""
    if d == 0:
        return lambda x: 0.5 + 0.0 * np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    amps = perturbation * rng.uniform(-1.0, 1.0, size=3)

    def theta(x):
        x = np.asarray(x, dtype=float)
        val = d * x
        for m, a in enumerate(amps, start=1):
            val = val + a * np.sin(2.0 * np.pi * m * x)
        return val

    return theta


def bohr_sommerfeld_points(theta, grid=200001):
    """Solutions of theta(x) in Z over [0, 1), each with the slope sign."""
    xs = np.linspace(0.0, 1.0, grid)
    th = np.asarray(theta(xs), dtype=float)
    out = []
    for m in range(int(np.floor(th.min())) - 1, int(np.ceil(th.max())) + 2):
        g = th - m
        hits = np.where(g[:-1] * g[1:] < 0)[0]
        for j in hits:
            x = xs[j] - g[j] * (xs[j + 1] - xs[j]) / (g[j + 1] - g[j])
            if 0.0 <= x < 1.0 - 1e-12:
                out.append((float(x), int(np.sign(g[j + 1] - g[j]))))
        exact = np.where(np.abs(g) < 1e-13)[0]
        for j in exact:
            if xs[j] < 1.0 - 1e-9:
                slope = th[min(j + 1, grid - 1)] - th[max(j - 1, 0)]
                out.append((float(xs[j]), int(np.sign(slope))))
    return sorted(set(out))


def scenario_prequantum_torus(
    d,
    fiber_cutoff=None,
    seed=DEFAULT_SEED,
    theta=None,
    base_resolution=96,
    base_cutoff=64,
    perturbation=0.15,
    name=None,
):
    """Holonomy family diag(k + theta(x)) over the base circle, winding d.

    Expected flow: d, the signed count of points where the fiber connection
    is trivially flat; oracle: the winding of theta via summed increments
    together with that signed point count; model operator: the truncated
    total assembly with the degree-d seam.
    """
    d = int(d)
    if theta is None:
        theta = _default_holonomy(d, seed, perturbation)
    cutoff = int(fiber_cutoff) if fiber_cutoff is not None else 16 + abs(d)
    if cutoff <= abs(d) + 4:
        raise ValueError(f"fiber cutoff {cutoff} too small for winding {d}")
    ks = np.arange(-cutoff, cutoff + 1).astype(float)

    def evaluator(x):
        return diagonal_tuple([ks + float(theta(float(x[0])))])

    family = OperatorFamily(arity=1, evaluator=evaluator, name=name or f"prequantum-d{d}")

    def oracle():
        xs = np.linspace(0.0, 1.0, 4097)
        th = np.asarray(theta(xs), dtype=float)
        winding = int(np.round(np.sum(np.diff(th))))
        points = bohr_sommerfeld_points(theta)
        signed = int(sum(s for _, s in points))
        if winding != signed:
            raise JointflowError(
                f"winding {winding} disagrees with signed flat-point count {signed}"
            )
        return winding

    def dirac_builder():
        return dirac.aps_index_report(
            theta, base_cutoff=base_cutoff, fiber_cutoff=cutoff, winding=d
        )

    def extra_checks(record, result):
        points = bohr_sommerfeld_points(theta)
        tol = 2.0 / base_resolution
        located = [c.location[0] for c in result.crossings]
        targets = [x for x, _ in points]
        matched = len(located) == len(targets)
        if matched:
            remaining = list(located)
            for t in targets:
                dists = [min(abs(t - x), 1.0 - abs(t - x)) for x in remaining]
                j = int(np.argmin(dists)) if dists else -1
                if j < 0 or dists[j] >= tol:
                    matched = False
                    break
                remaining.pop(j)
        return {
            "crossings_at_flat_points": matched,
            "all_multiplicities_one": all(c.multiplicity == 1 for c in result.crossings),
            "flat_point_count": len(targets),
        }

    return Scenario(
        name=name or f"prequantum-d{d}",
        parameters={"winding": d, "fiber_cutoff": cutoff, "base_cutoff": base_cutoff},
        expected=d,
        provenance="trivial" if d == 0 else "derived",
        oracle=oracle,
        oracle_description="holonomy winding by summed increments + signed flat-point count",
        family=family,
        mesh=circle_mesh(base_resolution),
        dirac_builder=dirac_builder,
        extra_checks=extra_checks,
        seed=seed,
    )


def five_crossing_holonomy():
    a, b = FIVE_CROSSING_COEFFS

    def theta(x):
        x = np.asarray(x, dtype=float)
        return 3.0 * x + a * np.sin(2.0 * np.pi * x) + b * (np.cos(4.0 * np.pi * x) - 1.0)

    return theta


def scenario_product(d1, d2, fiber_cutoff=None, seed=DEFAULT_SEED, base_resolution=12, name=None):
    """Explicit product family (T (x) 1, 1 (x) S) of two winding factors over T^2."""
    d1, d2 = int(d1), int(d2)
    cutoffs = []
    factors = []
    for i, d in enumerate((d1, d2)):
        cut = int(fiber_cutoff) if fiber_cutoff is not None else abs(d) + 6
        cutoffs.append(cut)
        factors.append(
            scenario_prequantum_torus(
                d, fiber_cutoff=cut, seed=seed + i, base_resolution=base_resolution
            )
        )
    fam = product_family(factors[0].family, factors[1].family)

    def oracle():
        # Product of the factors' independently verified values.
        return factors[0].oracle() * factors[1].oracle()

    return Scenario(
        name=name or f"product-{d1}x{d2}",
        parameters={"d1": d1, "d2": d2, "fiber_cutoffs": cutoffs},
        expected=d1 * d2,
        provenance="trivial" if d1 * d2 == 0 else "derived",
        oracle=oracle,
        oracle_description="product of the factor scenarios' verified windings",
        family=fam,
        mesh=torus_mesh((base_resolution, base_resolution)),
        seed=seed,
    )


def scenario_toeplitz(coeffs, seed=DEFAULT_SEED, grid=toeplitz.DEFAULT_GRID, name=None):
    """Classical circle symbol: index = -winding, checked three ways.

    The flow leg runs the holonomy family of the symbol's phase, so all of
    flow, Wiener-Hopf index, and truncated-operator index equal -winding.
    """
    coeffs = {int(k): complex(c) for k, c in coeffs.items()}
    report = toeplitz.wiener_hopf(coeffs, grid=grid)
    w = report.winding
    theta, w2 = toeplitz.holonomy_from_symbol(coeffs, grid=grid)
    if w2 != w:
        raise JointflowError("winding disagreement between factorization and lift")
    cutoff = 16 + abs(w)
    ks = np.arange(-cutoff, cutoff + 1).astype(float)

    def evaluator(x):
        return diagonal_tuple([ks + float(theta(float(x[0])))])

    family = OperatorFamily(arity=1, evaluator=evaluator, name=name or "toeplitz")

    def oracle():
        rep = toeplitz.wiener_hopf(coeffs, grid=grid)
        if rep.dim_ker != max(-rep.winding, 0) or rep.dim_coker != max(rep.winding, 0):
            raise JointflowError(
                f"kernel dimensions ({rep.dim_ker}, {rep.dim_coker}) do not match "
                f"winding {rep.winding}"
            )
        return rep.index

    def dirac_builder():
        return dirac.aps_index_report(theta, base_cutoff=64, fiber_cutoff=cutoff, winding=-w)

    def extra_checks(record, result):
        return {
            "ker_dim_matches": report.dim_ker == max(-w, 0),
            "coker_dim_matches": report.dim_coker == max(w, 0),
            "winding": w,
            "factorization_residual": report.factorization_residual,
        }

    return Scenario(
        name=name or "toeplitz",
        parameters={
            "coefficients": {str(k): [c.real, c.imag] for k, c in sorted(coeffs.items())},
            "winding": w,
        },
        expected=-w,
        provenance="paper" if coeffs == {1: (1 + 0j)} else ("trivial" if w == 0 else "derived"),
        oracle=oracle,
        oracle_description="Wiener-Hopf kernel/cokernel dimensions",
        family=family,
        mesh=circle_mesh(96),
        dirac_builder=dirac_builder,
        extra_checks=extra_checks,
        seed=seed,
    )


def enumerate_field_zeros(field, grid=384, newton_steps=30):
    """Brute-force zero census of a doubly periodic plane field on [0,1)^2.

    Fine-grid sign boxes seed Newton iterations on the actual field; zeros
    are deduplicated modulo the periods and signed by their Jacobian.
    """
    xs = np.linspace(0.0, 1.0, grid, endpoint=False)
    x1g, x2g = np.meshgrid(xs, xs, indexing="ij")
    f1, f2 = field(x1g, x2g)
    zeros = []

    def fvec(p):
        a, b = field(np.array([p[0]]), np.array([p[1]]))
        return np.array([float(a[0]), float(b[0])])

    h = 1.0 / grid
    for i in range(grid):
        i2 = (i + 1) % grid
        for j in range(grid):
            j2 = (j + 1) % grid
            c1 = np.array([f1[i, j], f1[i2, j], f1[i, j2], f1[i2, j2]])
            c2 = np.array([f2[i, j], f2[i2, j], f2[i, j2], f2[i2, j2]])
            if c1.min() > 0 or c1.max() < 0 or c2.min() > 0 or c2.max() < 0:
                continue
            p = np.array([xs[i] + 0.5 * h, xs[j] + 0.5 * h])
            for _ in range(newton_steps):
                v = fvec(p)
                if np.linalg.norm(v) < 1e-12:
                    break
                d = 1e-6
                jac = np.column_stack(
                    [
                        (fvec(p + [d, 0]) - fvec(p - [d, 0])) / (2 * d),
                        (fvec(p + [0, d]) - fvec(p - [0, d])) / (2 * d),
                    ]
                )
                try:
                    p = p - np.linalg.solve(jac, v)
                except np.linalg.LinAlgError:
                    break
            else:
                continue
            p_mod = p % 1.0
            if np.linalg.norm(fvec(p_mod)) > 1e-10:
                continue
            if any(
                np.linalg.norm(np.minimum(np.abs(p_mod - q), 1.0 - np.abs(p_mod - q))) < 1e-6
                for q, _ in zeros
            ):
                continue
            d = 1e-6
            jac = np.column_stack(
                [
                    (fvec(p_mod + [d, 0]) - fvec(p_mod - [d, 0])) / (2 * d),
                    (fvec(p_mod + [0, d]) - fvec(p_mod - [0, d])) / (2 * d),
                ]
            )
            zeros.append((p_mod, int(np.sign(np.linalg.det(jac)))))
    return zeros


def scenario_poincare_hopf(field, name, seed=DEFAULT_SEED, base_resolution=24):
    """Scalar pair family <e_i, X> of a doubly periodic vector field on T^2.

    The flow enumerates the field's transversal zeros with their local
    degrees; the total must be the torus Euler characteristic, 0.
    """

    def evaluator(x):
        a, b = field(np.array([x[0]]), np.array([x[1]]))
        return diagonal_tuple([[float(a[0])], [float(b[0])]])

    family = OperatorFamily(arity=2, evaluator=evaluator, name=name)

    def oracle():
        zeros = enumerate_field_zeros(field)
        return int(sum(s for _, s in zeros))

    def extra_checks(record, result):
        zeros = enumerate_field_zeros(field)
        return {
            "zero_count_matches": len(zeros) == len(result.crossings),
            "enumerated_zero_count": len(zeros),
        }

    return Scenario(
        name=name,
        parameters={"base_resolution": base_resolution},
        expected=0,
        provenance="derived",
        oracle=oracle,
        oracle_description="brute-force fine-grid zero enumeration with Jacobian signs",
        family=family,
        mesh=torus_mesh((base_resolution, base_resolution)),
        extra_checks=extra_checks,
        seed=seed,
    )


def field_constant():
    def field(x1, x2):
        return np.ones_like(x1), np.zeros_like(x2)

    return field


def field_four_zeros():
    def field(x1, x2):
        return np.sin(2 * np.pi * x1), np.sin(2 * np.pi * x2)

    return field


def field_random_trig(seed=DEFAULT_SEED, min_zeros=6, max_tries=64):
    """Seeded low-order trig field with at least `min_zeros` transversal zeros."""
    for trial in range(max_tries):
        rng = np.random.default_rng(seed + trial)
        c = rng.normal(scale=1.0, size=(2, 2, 3))

        def field(x1, x2, c=c):
            u = 2 * np.pi * x1
            v = 2 * np.pi * x2
            f1 = (
                np.sin(u + c[0, 0, 0])
                + c[0, 0, 1] * np.sin(v + c[0, 0, 2])
                + 0.4 * c[0, 1, 0] * np.sin(2 * u + c[0, 1, 1])
            )
            f2 = (
                np.sin(v + c[1, 0, 0])
                + c[1, 0, 1] * np.sin(u + c[1, 0, 2])
                + 0.4 * c[1, 1, 0] * np.sin(2 * v + c[1, 1, 1])
            )
            return f1, f2

        zeros = enumerate_field_zeros(field, grid=192)
        if len(zeros) >= min_zeros and all(
            s != 0 for _, s in zeros
        ) and sum(s for _, s in zeros) == 0:
            return field, trial
    raise JointflowError(f"no {min_zeros}-zero field found in {max_tries} seeds")


def run_scenario(scenario, options=None):
    """Execute flow, oracle, and model-operator legs; pass iff all integers agree."""
    options = options or scenario.options
    record = {
        "name": scenario.name,
        "parameters": scenario.parameters,
        "seed": int(scenario.seed),
        "expected": int(scenario.expected),
        "provenance": scenario.provenance,
        "oracle_description": scenario.oracle_description,
        "values": {},
        "checks": {},
        "diagnostics": {},
    }
    result = None
    try:
        if scenario.family is not None and scenario.mesh is not None:
            if scenario.open_base:
                result = jsf_open(scenario.family, scenario.mesh, options=options)
            else:
                result = jsf_closed(scenario.family, scenario.mesh, options=options)
            record["values"]["jsf"] = int(result.jsf)
            record["diagnostics"]["crossings"] = len(result.crossings)
            record["diagnostics"]["min_offcrossing_norm"] = result.diagnostics.get(
                "min_offcrossing_norm"
            )
            record["diagnostics"]["loop_monodromies"] = result.diagnostics.get(
                "loop_monodromies"
            )
        record["values"]["oracle"] = int(scenario.oracle())
        if scenario.dirac_builder is not None:
            report = scenario.dirac_builder()
            record["values"]["ind0"] = int(report.ind0)
            record["diagnostics"]["index_report"] = report.as_dict()
        if scenario.extra_checks is not None and result is not None:
            record["checks"].update(scenario.extra_checks(record, result))
    except JointflowError as exc:
        raise ScenarioError(scenario.name, exc) from exc

    agree = {
        key: (value == scenario.expected) for key, value in record["values"].items()
    }
    record["agree"] = agree
    bool_checks = [v for v in record["checks"].values() if isinstance(v, bool)]
    record["pass"] = bool(all(agree.values()) and all(bool_checks))
    return record


def crossings_table(result):
    """Rows for the crossings CSV: cell, x*, branch, multiplicity, sign, margin."""
    rows = []
    for c in result.crossings:
        rows.append(
            {
                "cell": ";".join(str(i) for i in c.cell),
                "x*": ";".join(f"{v:.12g}" for v in c.location),
                "branch": c.branch,
                "multiplicity": c.multiplicity,
                "sign": c.sign,
                "margin": f"{c.margin:.6g}",
            }
        )
    return rows


def builtin_scenarios(seed=DEFAULT_SEED, overrides=None):
    """The shipped scenario registry, name -> zero-argument builder."""
    overrides = overrides or {}

    def preq(d, **kw):
        kw.setdefault("seed", seed)
        if "fiber_cutoff" in overrides:
            kw.setdefault("fiber_cutoff", overrides["fiber_cutoff"])
        if "base_cutoff" in overrides:
            kw.setdefault("base_cutoff", overrides["base_cutoff"])
        if "mesh_resolution" in overrides:
            kw.setdefault("base_resolution", overrides["mesh_resolution"])
        return scenario_prequantum_torus(d, **kw)

    rng = np.random.default_rng(seed)

    def callias_random():
        dim = 5
        q = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))[0]
        w_m = np.array([-2.0, -1.2, 0.8, 1.5, 2.2])
        q2 = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))[0]
        w_p = np.array([-1.6, 0.7, 1.1, 1.9, 2.5])
        a_m = (q * w_m) @ q.conj().T
        a_p = (q2 * w_p) @ q2.conj().T
        return scenario_callias(a_m, a_p, seed=seed, name="callias-random")

    def toeplitz_random():
        rng2 = np.random.default_rng(seed + 17)
        w = int(rng2.integers(-3, 4))
        base = {0: 2.0 + 0j}
        for k in range(-2, 3):
            if k != 0:
                base[k] = complex(*rng2.normal(scale=0.35, size=2))
        coeffs = {k + w: c for k, c in base.items()}
        return scenario_toeplitz(coeffs, seed=seed, name="toeplitz-random")

    registry = {
        "callias-paper": lambda: scenario_callias(
            np.diag([-1.0, -1.0, 1.0]), np.eye(3), seed=seed, name="callias-paper"
        ),
        "callias-constant": lambda: scenario_callias(
            np.diag([1.0, -2.0]), np.diag([1.0, -2.0]), seed=seed, name="callias-constant"
        ),
        "callias-random": callias_random,
        "prequantum-d0": lambda: preq(0, name="prequantum-d0"),
        "prequantum-d1": lambda: preq(1, name="prequantum-d1"),
        "prequantum-d2": lambda: preq(2, name="prequantum-d2"),
        "prequantum-d3": lambda: preq(3, name="prequantum-d3"),
        "prequantum-d5": lambda: preq(5, name="prequantum-d5"),
        "prequantum-nonmonotone-d3": lambda: preq(
            3, theta=five_crossing_holonomy(), name="prequantum-nonmonotone-d3"
        ),
        "product-1x1": lambda: scenario_product(1, 1, seed=seed),
        "product-2x1": lambda: scenario_product(2, 1, seed=seed),
        "product-2x3": lambda: scenario_product(2, 3, seed=seed),
        "toeplitz-generator": lambda: scenario_toeplitz(
            {1: 1.0}, seed=seed, name="toeplitz-generator"
        ),
        "toeplitz-constant": lambda: scenario_toeplitz(
            {0: 1.0}, seed=seed, name="toeplitz-constant"
        ),
        "toeplitz-laurent": lambda: scenario_toeplitz(
            {-2: 2.0, -1: 1.0}, seed=seed, name="toeplitz-laurent"
        ),
        "toeplitz-random": toeplitz_random,
        "poincare-hopf-constant": lambda: scenario_poincare_hopf(
            field_constant(), "poincare-hopf-constant", seed=seed
        ),
        "poincare-hopf-four-zeros": lambda: scenario_poincare_hopf(
            field_four_zeros(), "poincare-hopf-four-zeros", seed=seed
        ),
        "poincare-hopf-random": lambda: scenario_poincare_hopf(
            field_random_trig(seed)[0], "poincare-hopf-random", seed=seed
        ),
    }
    return registry
