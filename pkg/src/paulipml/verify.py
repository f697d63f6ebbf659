"""Identity and estimate checks packaged as repeatable experiments.

Each check draws deterministic random test fields (trigonometric
polynomials with bounded wavenumber, so finite-difference truncation is
under control), measures the residual of an analytic identity or the
constant of an estimate, and emits a CheckReport.  Identities are
accepted by observed convergence order under step refinement, not by a
single small number, and every identity check carries a negative
control: a deliberately wrong expression must not converge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (BoxDomain, RoundedBox, BoundaryPoint,
                       rounded_box_point, sample_boundary, singular_distance)
from .stretching import AbsorptionProfile, StretchContext, principal_sqrt
from .timedomain import (Grid, SimConfig, gaussian_source, run,
                         laplace_of_trace)
from . import algebra, freqdomain, timedomain

__all__ = [
    "CheckReport",
    "TrigField",
    "fit_order",
    "check_helmholtz_identity",
    "check_neumann_identity",
    "check_transverse_identity",
    "check_coercivity",
    "check_m_bounds",
    "reflection_experiment",
    "laplace_consistency",
    "stretched_estimate",
    "check_stability",
]


# -- report ------------------------------------------------------------

@dataclass
class CheckReport:
    """Outcome of one named check.

    Serializes to a text document: ``key: value`` lines for scalars
    (sections check/verdict/param/measured/constant/order/tolerance/
    note) followed by CSV tables, each opened by ``table: <name>`` and
    closed by ``end-table``.
    """

    name: str
    params: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    passed: bool = False

    def to_text(self) -> str:
        lines = [f"check: {self.name}",
                 f"verdict: {'pass' if self.passed else 'fail'}"]
        for prefix, d in (("param", self.params),
                          ("measured", self.measured),
                          ("constant", self.constants),
                          ("order", self.orders),
                          ("tolerance", self.tolerances)):
            for k in sorted(d):
                lines.append(f"{prefix}.{k}: {d[k]}")
        for n in self.notes:
            lines.append(f"note: {n}")
        for tname, (header, rows) in self.tables.items():
            lines.append(f"table: {tname}")
            lines.append(",".join(header))
            for row in rows:
                lines.append(",".join(str(v) for v in row))
            lines.append("end-table")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @staticmethod
    def from_text(text: str) -> "CheckReport":
        rep = CheckReport(name="")
        it = iter(text.splitlines())
        for line in it:
            if line.startswith("table: "):
                tname = line[len("table: "):]
                header = next(it).split(",")
                rows = []
                for row in it:
                    if row == "end-table":
                        break
                    rows.append(row.split(","))
                rep.tables[tname] = (header, rows)
                continue
            if ": " not in line:
                continue
            key, val = line.split(": ", 1)
            if key == "check":
                rep.name = val
            elif key == "verdict":
                rep.passed = val == "pass"
            elif key == "note":
                rep.notes.append(val)
            elif "." in key:
                prefix, k = key.split(".", 1)
                target = {"param": rep.params, "measured": rep.measured,
                          "constant": rep.constants, "order": rep.orders,
                          "tolerance": rep.tolerances}.get(prefix)
                if target is not None:
                    target[k] = val
        return rep


def fit_order(values, factor: float = 2.0) -> float:
    """Observed convergence order from residuals at steps decreasing by
    ``factor``; the mean of the pairwise rates."""
    values = np.asarray(values, dtype=float)
    values = np.maximum(values, 1e-300)
    rates = np.log(values[:-1] / values[1:]) / np.log(factor)
    return float(np.mean(rates))


# -- test fields -------------------------------------------------------

class TrigField:
    """Random spinor-valued trigonometric polynomial, entire in all
    three variables so it can be evaluated at complex points."""

    def __init__(self, seed: int = 0, n_modes: int = 4, kmax: int = 2,
                 scale: float = 1.0):
        rng = np.random.default_rng(seed)
        self.k = rng.integers(-kmax, kmax + 1, size=(n_modes, 3)).astype(float)
        self.c = scale * (rng.standard_normal((n_modes, 2))
                          + 1j * rng.standard_normal((n_modes, 2)))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        phase = np.exp(1j * (y @ self.k.T))
        return phase @ self.c

    def partial(self, j: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        phase = 1j * self.k[:, j] * np.exp(1j * (y @ self.k.T))
        return phase @ self.c

    def partial2(self, j: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        phase = -self.k[:, j] ** 2 * np.exp(1j * (y @ self.k.T))
        return phase @ self.c


def _fd_partial(fun, x, j, h):
    """4th-order central derivative of fun: R^3 -> C^m along axis j."""
    e = np.zeros(3)
    e[j] = h
    return (fun(x - 2 * e) - 8 * fun(x - e)
            + 8 * fun(x + e) - fun(x + 2 * e)) / (12 * h)


def _projector_c(sign, xi):
    lam = principal_sqrt(algebra.quadratic(np.asarray(xi, dtype=complex)))
    return 0.5 * (sign * algebra.symbol(xi) / lam
                  + np.eye(2, dtype=complex))


# -- stretched Helmholtz identity --------------------------------------

def check_helmholtz_identity(ctx: StretchContext, n_samples: int = 10,
                             seed: int = 0,
                             steps=(0.02, 0.01, 0.005)) -> CheckReport:
    """Compare Pi L(-tau, d~) L(tau, d~) w against (p - tau^2 Pi) w at
    random interior points.

    The product side is evaluated by nested 4th-order finite
    differences; the divergence-form side analytically (the test field
    is a trigonometric polynomial and the coefficient derivatives have
    closed forms), so the two sides are computed through genuinely
    independent code paths and the discrepancy is pure FD truncation.
    Sample points keep a safety margin from the profile seams (where a
    polynomial bump is only finitely smooth) and from the faces.
    """
    rng = np.random.default_rng(seed)
    w = TrigField(seed=seed + 1)
    A = algebra.pauli_matrices()
    tau = ctx.tau
    margin = 4.0 * max(steps) + 0.02

    def admissible(x):
        for j, p in enumerate(ctx.profiles):
            if abs(abs(x[j]) - p.a) < margin or abs(x[j]) > p.b - margin:
                return False
        return True

    pts = []
    while len(pts) < n_samples:
        x = np.array([rng.uniform(-p.b, p.b) for p in ctx.profiles])
        if admissible(x):
            pts.append(x)

    def ratios(x):
        return np.array([tau / (tau + ctx.profiles[j](x[j]))
                         for j in range(3)])

    def apply_L(sgn, fun, x, h):
        val = sgn * tau * fun(x)
        r = ratios(x)
        for j in range(3):
            val = val + r[j] * (A[j] @ _fd_partial(fun, x, j, h))
        return val

    def divergence_side(x, fudge):
        """(p - tau^2 Pi) w analytically; dc_j/dx_j has the closed form
        -sigma_j' c_j / (tau + sigma_j)."""
        c = ctx.p_coefficients(x)
        val = -tau ** 2 * complex(ctx.Pi(x)) * w(x)
        for j in range(3):
            dcj = -ctx.profiles[j].derivative(x[j]) * c[j] \
                / (tau + ctx.profiles[j](x[j]))
            val = val + fudge * (dcj * w.partial(j, x)
                                 + c[j] * w.partial2(j, x))
        return val

    def discrepancy(h, fudge=1.0):
        worst = 0.0
        for x in pts:
            inner = lambda y: apply_L(+1, w, y, h)
            lhs = complex(ctx.Pi(x)) * apply_L(-1, inner, x, h)
            rhs = divergence_side(x, fudge)
            scale = max(np.max(np.abs(rhs)), 1.0)
            worst = max(worst, float(np.max(np.abs(lhs - rhs)) / scale))
        return worst

    vals = [discrepancy(h) for h in steps]
    order = fit_order(vals)
    control = discrepancy(steps[-1], fudge=1.01)
    rep = CheckReport(
        "helmholtz_identity",
        params={"tau": tau, "n_samples": n_samples, "seed": seed,
                "steps": list(steps)},
        measured={"discrepancy": vals[-1], "per_step": vals,
                  "negative_control": control},
        orders={"observed": order},
        tolerances={"order_min": 3.5},
    )
    rep.passed = order >= 3.5 and control > 10 * vals[-1]
    return rep


# -- Neumann identity ---------------------------------------------------

def _seam_clear(bp: BoundaryPoint, q: RoundedBox, margin: float) -> bool:
    """True when bp sits well inside its smooth boundary patch."""
    kind = bp.patch[0]
    if kind == "face":
        axis = (bp.patch[1] - 1) % 3
        others = [i for i in range(3) if i != axis]
        return all(abs(bp.x[i]) < q.core_h[i] - margin for i in others)
    d = bp.x - np.clip(bp.x, -q.core_h, q.core_h)
    if kind == "edge":
        i, j = bp.patch[1]
        k = 3 - i - j
        ang_ok = min(abs(d[i]), abs(d[j])) > margin * q.radius
        return ang_ok and abs(bp.x[k]) < q.core_h[k] - margin
    comps = np.abs(d) / q.radius
    return bool(np.min(comps) > margin)


def _sample_patch_points(q: RoundedBox, n: int, seed: int,
                         margin: float = 0.2):
    samples = [bp for bp, _ in sample_boundary(q, density=60.0)
               if _seam_clear(bp, q, margin)]
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(samples), size=min(n, len(samples)), replace=False)
    return [samples[i] for i in idx]


def check_neumann_identity(surface: str = "sphere", n_points: int = 15,
                           seed: int = 0, radius: float = 1.0,
                           delta: float = 0.3,
                           steps=(0.02, 0.01)) -> CheckReport:
    """On a sphere or rounded box, fields u = pi^+(nu(x)) w(x) with the
    normal extended constant along normal lines satisfy

        pi^+(nu) sum_j A_j d_j u = pi^+(nu) (nu . grad + H) u

    on the surface, H the mean curvature (positive for these convex
    surfaces, outward normal).  The curvature coefficient H, half the
    trace of the Weingarten map, is forced by the perturbation formula:
    each principal direction contributes kappa_i/2.  Checked by
    4th-order finite differences; the negative control doubles the
    curvature term and must not converge.
    """
    rng = np.random.default_rng(seed)
    w = TrigField(seed=seed + 1)
    A = algebra.pauli_matrices()

    if surface == "sphere":
        dirs = rng.standard_normal((n_points, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        points = [(radius * d, 1.0 / radius) for d in dirs]

        def nu_ext(y):
            return y / np.linalg.norm(y)
    elif surface == "rounded_box":
        box = BoxDomain((1.0, 1.0, 1.0))
        q = RoundedBox(box, delta)
        bps = _sample_patch_points(q, n_points, seed)
        points = [(bp.x, bp.mean_curvature) for bp in bps]

        def nu_ext(y, q=q):
            d = y - np.clip(y, -q.core_h, q.core_h)
            n = np.linalg.norm(d)
            if n < 1e-12:
                gaps = q.core_h - np.abs(y)
                axis = int(np.argmin(gaps))
                e = np.zeros(3)
                e[axis] = 1.0 if y[axis] >= 0 else -1.0
                return e
            return d / n
    else:
        raise ValueError(f"unknown surface {surface!r}")

    def u_field(y):
        return algebra.projector(+1, nu_ext(y)) @ w(y)

    def discrepancy(h, curv_factor=1.0):
        worst = 0.0
        for x0, H in points:
            nu0 = nu_ext(x0)
            pip = algebra.projector(+1, nu0)
            grads = [_fd_partial(u_field, x0, j, h) for j in range(3)]
            lhs = pip @ sum(A[j] @ grads[j] for j in range(3))
            normal_d = sum(nu0[j] * grads[j] for j in range(3))
            rhs = pip @ (normal_d + curv_factor * H * u_field(x0))
            scale = max(np.linalg.norm(u_field(x0)), 1.0)
            worst = max(worst, float(np.linalg.norm(lhs - rhs) / scale))
        return worst

    vals = [discrepancy(h) for h in steps]
    order = fit_order(vals, factor=steps[0] / steps[1])
    control = discrepancy(steps[-1], curv_factor=2.0)
    rep = CheckReport(
        "neumann_identity",
        params={"surface": surface, "n_points": len(points), "seed": seed,
                "radius": radius, "delta": delta, "steps": list(steps)},
        measured={"discrepancy": vals[-1], "per_step": vals,
                  "negative_control": control},
        orders={"observed": order},
        tolerances={"order_min": 1.8},
    )
    rep.passed = order >= 1.8 and control > 10 * vals[-1]
    return rep


# -- transverse identities ----------------------------------------------

def check_transverse_identity(profiles, delta: float, tau_set,
                              box: BoxDomain | None = None,
                              n_points: int = 8, seed: int = 0,
                              steps=(0.02, 0.01)) -> CheckReport:
    """Stretched version of the Neumann identity on the rounded box:

        pi^+(nu~) sum_j A_j d~_j u = pi^+(nu~) (V + H_img) u,

    with H_img the mean curvature of the stretched image surface.  The
    test field is u(x) = pi^+(m(X(x))) w(X(x)), where m is the linear
    extension of the image-surface normal built from the frame jet (so
    the first-order behavior matches the normal field that is constant
    along normal lines).  Real and complex tau are run with the same
    tolerance; holomorphy in tau makes the complex case a continuation
    of the real one.
    """
    box = box or BoxDomain((1.0, 1.0, 1.0))
    q = RoundedBox(box, delta)
    bps = _sample_patch_points(q, n_points, seed)
    w = TrigField(seed=seed + 1, kmax=1)
    A = algebra.pauli_matrices()
    rows = []
    worst_order = np.inf
    worst_ctrl = np.inf
    worst_disc = 0.0
    for tau in tau_set:
        ctx = StretchContext(complex(tau), tuple(profiles))

        def setup(bp):
            nu_y, H, T, dn = ctx.stretched_jet(bp)
            y0 = np.array([ctx.stretch_map(j, bp.x[j]) for j in range(3)])
            M = np.column_stack([T, nu_y])
            B = np.column_stack([dn, np.zeros(3)]) @ np.linalg.inv(M)
            vcoef = ctx.V_coefficients(bp)
            return nu_y, H, y0, B, vcoef

        def u_factory(bp, nu_y, y0, B):
            def u(x):
                y = np.array([ctx.stretch_map(j, x[j]) for j in range(3)])
                m = nu_y + B @ (y - y0)
                return _projector_c(+1, m) @ w(y)
            return u

        def discrepancy(h, curv_factor=1.0):
            worst = 0.0
            for bp in bps:
                nu_y, H, y0, B, vcoef = setup(bp)
                u = u_factory(bp, nu_y, y0, B)
                pip = _projector_c(+1, nu_y)
                r = ctx.ratios(bp.x)
                grads = [_fd_partial(u, bp.x, j, h) for j in range(3)]
                lhs = pip @ sum(r[j] * (A[j] @ grads[j]) for j in range(3))
                Vu = sum(vcoef[j] * grads[j] for j in range(3))
                rhs = pip @ (Vu + curv_factor * H * u(bp.x))
                scale = max(np.linalg.norm(u(bp.x)), 1.0)
                worst = max(worst,
                            float(np.linalg.norm(lhs - rhs) / scale))
            return worst

        vals = [discrepancy(h) for h in steps]
        order = fit_order(vals, factor=steps[0] / steps[1])
        ctrl = discrepancy(steps[-1], curv_factor=0.0)
        rows.append([tau, vals[-1], order, ctrl])
        worst_order = min(worst_order, order)
        worst_disc = max(worst_disc, vals[-1])
        worst_ctrl = min(worst_ctrl, ctrl / max(vals[-1], 1e-300))
    rep = CheckReport(
        "transverse_identity",
        params={"delta": delta, "tau_set": [complex(t) for t in tau_set],
                "n_points": len(bps), "seed": seed, "steps": list(steps)},
        measured={"max_discrepancy": worst_disc},
        orders={"min_observed": worst_order},
        tolerances={"order_min": 1.8},
        tables={"per_tau": (["tau", "discrepancy", "order", "control"],
                            rows)},
    )
    rep.passed = worst_order >= 1.8 and worst_ctrl > 10
    return rep


# -- coercivity ----------------------------------------------------------

def _unit_assembly(grid: Grid) -> freqdomain.HelmholtzAssembly:
    zero = tuple(AbsorptionProfile.zero(b) for b in grid.box.h)
    return freqdomain.assemble_helmholtz(StretchContext(1.0, zero), grid)


def _random_trial_fields(asm, n_fields, seed, grid):
    """Random smooth fields projected into the constrained trial space,
    plus a boundary-concentrated family."""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    out = []
    for i in range(n_fields):
        w = TrigField(seed=int(rng.integers(1 << 30)), kmax=2)
        pts = np.moveaxis(mesh, 0, -1)
        vals = np.moveaxis(w(pts), -1, 0)
        if i % 3 == 2:
            # boundary-concentrated profile
            gap = np.min(grid.box.h[:, None, None, None] - np.abs(mesh),
                         axis=0)
            vals = vals * np.exp(-gap / 0.1)[None]
        u = asm.project_trial(vals)
        if np.max(np.abs(u)) < 1e-12:
            continue
        out.append(u)
    return out


def check_coercivity(profiles, grid: Grid, tau_list, n_fields: int = 100,
                     seed: int = 0) -> CheckReport:
    """Minimal ratio |A(u, conj u)| over the norm bundle

        |tau| Re(tau) ||u||^2 + (Re tau/|tau|)(|| |beta|^{1/2} u ||^2_bd
                                               + ||grad u||^2)

    over random constrained trial fields, per tau.  Norms are measured
    with the same finite-element quadrature as the form itself.
    """
    asm0 = _unit_assembly(grid)
    rows = []
    global_min = np.inf
    for tau in tau_list:
        tau = complex(tau)
        ctx = StretchContext(tau, tuple(profiles))
        asm = freqdomain.assemble_helmholtz(ctx, grid)
        fields = _random_trial_fields(asm, n_fields, seed, grid)
        if not fields:
            raise ValueError("no nonzero trial fields; check the seed")
        rmin = np.inf
        for u in fields:
            uc = np.conj(u)
            aval = abs(asm.form(u, uc))
            k0, m0, b0 = (z.real for z in asm0.form_parts(u, uc))
            bundle = (abs(tau) * tau.real * m0
                      + (tau.real / abs(tau)) * (abs(tau) * b0 + k0))
            if bundle <= 0:
                continue
            rmin = min(rmin, aval / bundle)
        rows.append([tau, rmin, len(fields)])
        global_min = min(global_min, rmin)
    rep = CheckReport(
        "coercivity",
        params={"grid": list(grid.shape),
                "tau_list": [complex(t) for t in tau_list],
                "n_fields": n_fields, "seed": seed},
        measured={"min_ratio": global_min},
        tolerances={"ratio_min": 0.0},
        tables={"per_tau": (["tau", "min_ratio", "n_fields"], rows)},
    )
    rep.passed = global_min > 0
    return rep


# -- m-matrix bounds -----------------------------------------------------

def check_m_bounds(box: BoxDomain, profiles, delta_set, tau_set,
                   density: float = 40.0, seed: int = 0) -> CheckReport:
    """Support, sup-norm, and gradient bounds of the boundary defect
    matrix m over a (delta, tau) product set.

    (i) on face samples farther than delta from the box edges, ||m|| is
    zero to roundoff; (ii) the fitted constant sup ||m|| is stable in
    tau; (iii) the surface gradient satisfies ||grad m|| <= C |beta|.
    """
    rows = []
    face_far_max = 0.0
    sup_by_tau = {complex(t): 0.0 for t in tau_set}
    grad_const = 0.0
    h = 1e-4
    for delta in delta_set:
        q = RoundedBox(box, delta)
        samples = sample_boundary(q, density=density)
        for tau in tau_set:
            ctx = StretchContext(complex(tau), tuple(profiles))
            sup_m = 0.0
            far = 0.0
            c3 = 0.0
            for bp, _wt in samples:
                mval = ctx.m_matrix(bp)
                nrm = float(np.linalg.norm(mval, 2))
                sup_m = max(sup_m, nrm)
                if bp.patch[0] == "face" and \
                        singular_distance(box, bp.x) > delta:
                    far = max(far, nrm)
                if bp.patch[0] != "face" and _seam_clear(bp, q, 0.15):
                    acc = 0.0
                    for i in range(2):
                        e = np.zeros(2)
                        e[i] = h
                        mp = ctx.m_matrix(rounded_box_point(q, bp.chart(e)))
                        mm = ctx.m_matrix(rounded_box_point(q, bp.chart(-e)))
                        acc += np.linalg.norm((mp - mm) / (2 * h), 2) ** 2
                    _, beta = ctx.Phi_beta(bp)
                    c3 = max(c3, float(np.sqrt(acc) / abs(beta)))
            rows.append([delta, complex(tau), sup_m, far, c3])
            face_far_max = max(face_far_max, far)
            sup_by_tau[complex(tau)] = max(sup_by_tau[complex(tau)], sup_m)
            grad_const = max(grad_const, c3)
    sups = np.array(list(sup_by_tau.values()))
    variation = float((sups.max() - sups.min()) / max(sups.max(), 1e-300))
    rep = CheckReport(
        "m_bounds",
        params={"delta_set": list(delta_set),
                "tau_set": [complex(t) for t in tau_set],
                "density": density},
        measured={"face_far_max": face_far_max,
                  "sup_variation": variation},
        constants={"sup_norm": float(sups.max()),
                   "grad_over_beta": grad_const},
        tolerances={"face_far": 1e-12, "sup_variation": 0.10},
        notes=["fractional-Sobolev interpolation bounds are not checked;"
               " only support, sup-norm and gradient bounds are"],
    )
    rep.passed = (face_far_max <= 1e-12 and variation <= 0.10
                  and np.isfinite(grad_const))
    rep.tables["per_case"] = (
        ["delta", "tau", "sup_m", "face_far", "grad_over_beta"], rows)
    return rep


# -- reflection experiment -----------------------------------------------

def _inner_mask(grid: Grid, a: float) -> np.ndarray:
    masks = [np.abs(ax) <= a + 1e-9 for ax in grid.axes]
    return (masks[0][:, None, None] & masks[1][None, :, None]
            & masks[2][None, None, :])


def _reflection_metric(rec, rec_ref, a: float) -> float:
    """max_t ||u - u_ref||_{L2(inner)} / max_t ||u_ref||_{L2(inner)}."""
    m_run = _inner_mask(rec.grid, a)
    m_ref = _inner_mask(rec_ref.grid, a)
    vol = float(np.prod(rec.grid.spacing))
    worst = 0.0
    peak = 0.0
    nt = min(len(rec.times), len(rec_ref.times))
    for i in range(nt):
        u = rec.traces[i][:, m_run]
        ur = rec_ref.traces[i][:, m_ref]
        diff = np.sqrt(np.sum(np.abs(u - ur) ** 2) * vol)
        nref = np.sqrt(np.sum(np.abs(ur) ** 2) * vol)
        worst = max(worst, diff)
        peak = max(peak, nref)
    return worst / max(peak, 1e-300)


def reflection_experiment(h: float = 1.0 / 16.0, a: float = 0.5,
                          widths=(0.25, 0.5), sigma0: float = 25.0,
                          T: float = 2.0, cfl: float = 0.5,
                          ref_half: float = 1.75) -> CheckReport:
    """Pulse runs with and without absorbing layers against an enlarged
    reference domain that the wave cannot traverse within T.

    The metric compares the trace on the common inner region |x_j| <= a.
    Asserted: every layered run reflects less than the bare run, and the
    metric decreases as the layer widens.  No quantitative rate is
    claimed.
    """
    def make_grid(half):
        n = int(round(2 * half / h)) + 1
        box = BoxDomain((half, half, half), inner_fraction=a / half)
        return Grid(box, (n, n, n))

    def make_source(grid):
        return gaussian_source(grid, width=0.08, t_off=0.5,
                               polarization=(1.0, 0.5j))

    stride = 2
    g_ref = make_grid(ref_half)
    zero_ref = tuple(AbsorptionProfile.zero(ref_half) for _ in range(3))
    rec_ref = run(SimConfig(g_ref, cfl=cfl, T=T, stride=stride),
                  zero_ref, make_source(g_ref))

    results = {}
    for width in widths:
        half = a + width
        g = make_grid(half)
        pml = tuple(AbsorptionProfile(a=a, b=half, sigma0=sigma0)
                    for _ in range(3))
        rec = run(SimConfig(g, cfl=cfl, T=T, stride=stride), pml,
                  make_source(g))
        results[("pml", width)] = _reflection_metric(rec, rec_ref, a)
        bare = tuple(AbsorptionProfile.zero(half) for _ in range(3))
        rec_b = run(SimConfig(g, cfl=cfl, T=T, stride=stride), bare,
                    make_source(g))
        results[("bare", width)] = _reflection_metric(rec_b, rec_ref, a)

    self_metric = _reflection_metric(rec_ref, rec_ref, a)
    pml_vals = [results[("pml", w)] for w in widths]
    bare_vals = [results[("bare", w)] for w in widths]
    ordered = all(p < b for p, b in zip(pml_vals, bare_vals))
    monotone = all(pml_vals[i + 1] < pml_vals[i]
                   for i in range(len(widths) - 1))
    rows = [[w, results[("pml", w)], results[("bare", w)]] for w in widths]
    rep = CheckReport(
        "reflection",
        params={"h": h, "a": a, "widths": list(widths), "sigma0": sigma0,
                "T": T, "cfl": cfl, "ref_half": ref_half},
        measured={"self_metric": self_metric,
                  "pml": pml_vals, "bare": bare_vals},
        tables={"per_width": (["width", "pml_metric", "bare_metric"], rows)},
    )
    rep.passed = ordered and monotone and self_metric == 0.0
    return rep


# -- Laplace consistency ---------------------------------------------------

def _raised_cosine_hat(tau: complex, period: float) -> complex:
    """Laplace transform of sin^2(pi t / P) on [0, P]."""
    om = 2.0 * np.pi / period
    return (1.0 - np.exp(-tau * period)) * om ** 2 \
        / (2.0 * tau * (tau ** 2 + om ** 2))


def laplace_consistency(grid: Grid, profiles, tau_set, T: float = 10.0,
                        cfl: float = 0.5, source_width: float = 0.12,
                        t_off: float = 1.0) -> CheckReport:
    """Cross-validate the two solver paths through the Laplace transform.

    A time-domain run is transformed at each tau and compared with the
    frequency-domain solve whose source is F = sum_j tau f_j / (tau +
    sigma_j).  The split components V^j = (f_j - A_j d_j v)/(tau +
    sigma_j) are also reconstructed and summed back to v.
    """
    src = gaussian_source(grid, width=source_width, t_off=t_off)
    rec = run(SimConfig(grid, cfl=cfl, T=T, stride=1), tuple(profiles), src)
    A = algebra.pauli_matrices()
    axes = grid.axes
    hsp = grid.spacing
    rows = []
    worst_rel = 0.0
    worst_split = 0.0
    for tau in tau_set:
        tau = complex(tau)
        ctx = StretchContext(tau, tuple(profiles))
        uhat = laplace_of_trace(rec, tau)
        fhat = src.spatial * _raised_cosine_hat(tau, t_off)
        F = np.zeros_like(fhat)
        for j in range(3):
            r = tau / (tau + profiles[j](axes[j]))
            shape = [1, 1, 1, 1]
            shape[j + 1] = len(axes[j])
            F += src.weights[j] * r.reshape(shape) * fhat
        op = freqdomain.assemble_stretched(ctx, grid, F)
        v = freqdomain.solve(op)
        rel = grid.norm(uhat - v) / max(grid.norm(v), 1e-300)
        # split reconstruction
        vsum = np.zeros_like(v)
        for j in range(3):
            dv = freqdomain._centered(v, j + 1, hsp[j])
            sig = profiles[j](axes[j])
            shape = [1, 1, 1, 1]
            shape[j + 1] = len(axes[j])
            Vj = (src.weights[j] * fhat
                  - np.einsum("ab,b...->a...", A[j], dv)) \
                / (tau + sig.reshape(shape))
            vsum += Vj
        inner = (slice(None), slice(1, -1), slice(1, -1), slice(1, -1))
        split_res = (np.max(np.abs((vsum - v)[inner]))
                     / max(np.max(np.abs(v[inner])), 1e-300))
        rows.append([tau, rel, split_res])
        worst_rel = max(worst_rel, rel)
        worst_split = max(worst_split, split_res)
    rep = CheckReport(
        "laplace_consistency",
        params={"grid": list(grid.shape),
                "tau_set": [complex(t) for t in tau_set],
                "T": T, "cfl": cfl},
        measured={"max_rel_difference": worst_rel,
                  "max_split_residual": worst_split},
        tolerances={"rel_difference": 0.05, "split_residual": 1e-6},
        tables={"per_tau": (["tau", "rel_difference", "split_residual"],
                            rows)},
    )
    rep.passed = worst_rel <= 0.05 and worst_split <= 1e-6
    return rep


# -- stretched-system estimate sampling ------------------------------------

def _grad_norm(grid: Grid, u: np.ndarray) -> float:
    h = grid.spacing
    acc = 0.0
    for j in range(3):
        acc += grid.norm(freqdomain._centered(u, j + 1, h[j])) ** 2
    return float(np.sqrt(acc))


def stretched_estimate(profiles, grid_sizes=(17, 25), M: float = 2.0,
                       half: float = 1.0,
                       source_width: float = 0.12) -> CheckReport:
    """Fitted constant of the resolvent-type estimate for the stretched
    system over a tau grid, per mesh.

    For a fixed compactly supported source F, the three quantities
    (Re tau)||u||, (Re tau)^{1/2}||u||_bd and (Re tau/|tau|)||grad u||
    are each measured against ||F|| over {Re tau in [M, 4M],
    |Im tau| <= 4M}; the fitted constant is the largest ratio seen.  The
    check passes when the constant moves by no more than 25% between the
    two meshes (the bound exists at the continuous level, so it must
    stabilize under refinement).
    """
    box = BoxDomain((half,) * 3, inner_fraction=0.5)
    tau_grid = [complex(M), complex(4 * M), complex(M, 4 * M),
                complex(4 * M, 4 * M), complex(2 * M, -2 * M)]
    rows = []
    fitted = []
    for n in grid_sizes:
        grid = Grid(box, (int(n),) * 3)
        F = gaussian_source(grid, width=source_width).spatial.astype(complex)
        nF = grid.norm(F)
        c_mesh = 0.0
        for tau in tau_grid:
            ctx = StretchContext(tau, tuple(profiles))
            u = freqdomain.solve(freqdomain.assemble_stretched(ctx, grid, F))
            q1 = tau.real * grid.norm(u) / nF
            q2 = np.sqrt(tau.real) \
                * np.sqrt(timedomain._boundary_norm_sq(grid, u)) / nF
            q3 = (tau.real / abs(tau)) * _grad_norm(grid, u) / nF
            rows.append([int(n), tau, q1, q2, q3])
            c_mesh = max(c_mesh, q1, q2, q3)
        fitted.append(c_mesh)
    stability = abs(fitted[0] - fitted[-1]) / max(fitted[-1], 1e-300)
    rep = CheckReport(
        "stretched_estimate",
        params={"grid_sizes": list(grid_sizes), "M": M,
                "tau_grid": tau_grid},
        measured={"stability": stability},
        constants={f"C_n{n}": c for n, c in zip(grid_sizes, fitted)},
        tolerances={"c_stability": 0.25},
        tables={"per_tau": (["n", "tau", "vol_ratio", "bdry_ratio",
                             "grad_ratio"], rows)},
    )
    rep.passed = stability <= 0.25 and all(np.isfinite(fitted))
    return rep


# -- time-domain stability property ----------------------------------------

def check_stability(profiles, grid_sizes=(17, 25),
                    lam_set=(1.0, 2.0, 4.0, 8.0), T: float = 4.0,
                    transit_factor: float = 10.0, cfl: float = 0.5,
                    half: float = 1.0) -> CheckReport:
    """Exponentially weighted norm ratio of the split solver and the
    long-run boundedness of the field.

    For each mesh and each weight lam, measures
    lam ||e^{-lam t} u|| / ||e^{-lam t} f|| over [0, T] (space-time
    norms, u the trace).  The dissipative energy estimate bounds this
    ratio by the constant 1, uniformly in lam; the pointwise ratio
    climbs toward that sharp constant as lam grows, so the check
    asserts (a) the lam-uniform bound, including at twice the largest
    lam of the grid, (b) the ratio does not grow under grid refinement
    at fixed lam, and (c) a long run over ``transit_factor``
    box-crossing times never exceeds its source switch-off maximum by
    more than 0.1%.
    """
    box = BoxDomain((half,) * 3, inner_fraction=0.5)
    t_off = 1.0
    lams = list(lam_set) + [2.0 * max(lam_set)]
    ratios = {}
    rows = []
    for n in grid_sizes:
        grid = Grid(box, (int(n),) * 3)
        src = gaussian_source(grid, width=0.12, t_off=t_off)
        rec = run(SimConfig(grid, cfl=cfl, T=T, stride=2),
                  tuple(profiles), src)
        times = np.asarray(rec.times)
        wt = timedomain._time_weights(times)
        nspat = grid.norm(src.spatial)
        for lam in lams:
            u2 = sum(w * np.exp(-2 * lam * t) * grid.norm(s) ** 2
                     for w, t, s in zip(wt, times, rec.traces))
            tq = np.linspace(0.0, t_off, 401)
            f2 = np.trapezoid(np.exp(-2 * lam * tq)
                              * src.envelope(tq) ** 2, tq) * nspat ** 2
            ratio = lam * np.sqrt(u2) / np.sqrt(f2)
            ratios[(int(n), lam)] = float(ratio)
            rows.append([int(n), lam, float(ratio)])

    fitted_c = max(ratios.values())
    refine_growth = max(
        ratios[(grid_sizes[-1], lam)] / ratios[(grid_sizes[0], lam)]
        for lam in lams)

    # long-run boundedness on the coarse mesh
    grid = Grid(box, (int(grid_sizes[0]),) * 3)
    src = gaussian_source(grid, width=0.12, t_off=t_off)
    T_long = transit_factor * 2.0 * half
    rec = run(SimConfig(grid, cfl=cfl, T=T_long, stride=4),
              tuple(profiles), src)
    times = np.asarray(rec.times)
    maxima = np.array([np.max(np.abs(s)) for s in rec.traces])
    i_off = int(np.searchsorted(times, t_off))
    m_off = float(np.max(maxima[:i_off + 1]))
    m_after = float(np.max(maxima[i_off:]))
    blowup_ratio = m_after / max(m_off, 1e-300)

    rep = CheckReport(
        "stability",
        params={"grid_sizes": list(grid_sizes), "lam_set": list(lam_set),
                "T": T, "T_long": T_long, "cfl": cfl},
        measured={"fitted_c": fitted_c,
                  "refine_growth": refine_growth,
                  "blowup_ratio": blowup_ratio},
        constants={"dissipative_bound": 1.0},
        tolerances={"fitted_c": 1.02, "refine_growth": 1.10,
                    "blowup_ratio": 1.001},
        tables={"ratios": (["n", "lambda", "ratio"], rows)},
    )
    rep.passed = (fitted_c <= 1.02 and refine_growth <= 1.10
                  and blowup_ratio <= 1.001)
    return rep
