"""Sparse frequency-domain solvers for the stretched system.

Primary path: the first-order stretched system

    tau u + sum_j A_j (tau/(tau+sigma_j)) d_j u = F   on the box,
    pi^-(nu) u = 0                                    on each face,

discretized with 2nd-order centered stencils (one-sided closures at the
faces).  Boundary rows use the replace-the-row strategy: at a face node
the two scalar equations are pi^-(nu) u = 0 together with the
pi^+(nu)-projection of the interior equation; at nodes shared by
several faces the projections pi^-(nu_k) are summed, which pins the
value to the intersection of the outgoing eigenspaces (the zero vector
for distinct faces).

Secondary path: Petrov-Galerkin assembly of the divergence-form
Helmholtz bilinear form

    A(u, v) = sum_j int c_j d_j u . d_j v + int tau^2 Pi u . v
              + int_boundary Phi beta u . v,

with trilinear tensor-product elements and the bilinear (unconjugated)
dot product; used for coercivity evaluation and cross-validation, not
as the production solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (AssemblyError, NonConvergenceError,
                     SingularOperatorError)
from .geometry import face_axis_sign, face_normal
from .stretching import StretchContext, principal_sqrt
from .timedomain import Grid
from . import algebra

__all__ = [
    "SparseComplexOperator",
    "HelmholtzAssembly",
    "assemble_stretched",
    "solve",
    "assemble_helmholtz",
    "second_bc_residual",
    "helmholtz_vs_stretched",
    "export_matrix",
]

_DIRECT_LIMIT = 600_000  # unknowns; beyond this use the iterative path


def _deriv1d(n: int, h: float) -> sp.csr_matrix:
    """2nd-order d/dx: centered interior, one-sided at the two ends."""
    d = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        d[i, i - 1] = -0.5
        d[i, i + 1] = 0.5
    d[0, 0], d[0, 1], d[0, 2] = -1.5, 2.0, -0.5
    d[n - 1, n - 1], d[n - 1, n - 2], d[n - 1, n - 3] = 1.5, -2.0, 0.5
    return (d / h).tocsr()


def _axis_operator(grid: Grid, j: int, ratio_1d: np.ndarray) -> sp.csr_matrix:
    """Tensor placement of diag(ratio) @ D_j on the scalar grid."""
    n1, n2, n3 = grid.shape
    d = sp.diags(ratio_1d) @ _deriv1d(grid.shape[j], grid.spacing[j])
    eyes = [sp.identity(n) for n in (n1, n2, n3)]
    facs = [eyes[0], eyes[1], eyes[2]]
    facs[j] = d
    return sp.kron(sp.kron(facs[0], facs[1]), facs[2], format="csr")


def _node_flags(shape) -> np.ndarray:
    """Per node, bitmask of the faces it lies on (bit k-1 for face k)."""
    n1, n2, n3 = shape
    flags = np.zeros(shape, dtype=np.int8)
    for k in range(1, 7):
        axis, sign = face_axis_sign(k)
        idx = [slice(None)] * 3
        idx[axis] = -1 if sign > 0 else 0
        flags[tuple(idx)] |= 1 << (k - 1)
    return flags.ravel()


@dataclass
class SparseComplexOperator:
    """Assembled square complex system with its right-hand side."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    grid: Grid
    ctx: StretchContext

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data


def assemble_stretched(ctx: StretchContext, grid: Grid,
                       F: np.ndarray) -> SparseComplexOperator:
    """Discretize the stretched first-order system with boundary rows.

    F has shape (2, n1, n2, n3).  Unknown ordering is node-major with
    the spinor component fastest.
    """
    F = np.asarray(F, dtype=complex)
    if F.shape != (2,) + tuple(grid.shape):
        raise AssemblyError(
            f"source shape {F.shape} does not match grid {grid.shape}")
    for j, p in enumerate(ctx.profiles):
        if p.b < grid.box.h[j] - 1e-12:
            raise AssemblyError(
                f"profile {j} ends at {p.b} inside the half length "
                f"{grid.box.h[j]}")

    A = algebra.pauli_matrices()
    nscalar = int(np.prod(grid.shape))
    axes = grid.axes

    op = sp.csr_matrix((2 * nscalar, 2 * nscalar), dtype=complex)
    for j in range(3):
        ratio = ctx.tau / (ctx.tau + ctx.profiles[j](axes[j]))
        op = op + sp.kron(_axis_operator(grid, j, ratio), A[j], format="csr")
    op = op + ctx.tau * sp.identity(2 * nscalar, dtype=complex)

    # row replacement at boundary nodes: S @ op + P, rhs = S @ F
    flags = _node_flags(grid.shape)
    s_blocks = np.zeros((nscalar, 2, 2), dtype=complex)
    p_blocks = np.zeros((nscalar, 2, 2), dtype=complex)
    eye2 = np.eye(2, dtype=complex)
    interior = flags == 0
    s_blocks[interior] = eye2
    single = {}
    for k in range(1, 7):
        nu = face_normal(k)
        single[k] = (algebra.projector(+1, nu), algebra.projector(-1, nu))
    for node in np.nonzero(flags)[0]:
        faces = [k for k in range(1, 7) if flags[node] & (1 << (k - 1))]
        if len(faces) == 1:
            pip, pim = single[faces[0]]
            s_blocks[node] = pip
            p_blocks[node] = pim
        else:
            for k in faces:
                p_blocks[node] += single[k][1]

    def block_diag(blocks):
        return sp.bsr_matrix(
            (blocks, np.arange(nscalar), np.arange(nscalar + 1)),
            shape=(2 * nscalar, 2 * nscalar)).tocsr()

    S = block_diag(s_blocks)
    P = block_diag(p_blocks)
    matrix = (S @ op + P).tocsc()
    rhs = S @ F.transpose(1, 2, 3, 0).ravel()
    return SparseComplexOperator(matrix, rhs, grid, ctx)


def solve(op: SparseComplexOperator, rtol: float = 1e-8) -> np.ndarray:
    """Solve the assembled system; direct at desk scale, GMRES with an
    incomplete-LU preconditioner above the size threshold.  The residual
    is always checked."""
    A, b = op.matrix, op.rhs
    if op.dimension <= _DIRECT_LIMIT:
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularOperatorError(str(exc)) from exc
        x = lu.solve(b)
    else:
        try:
            ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise SingularOperatorError(str(exc)) from exc
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=M, rtol=rtol, restart=60, maxiter=400)
        if info != 0:
            raise NonConvergenceError(f"GMRES stopped with info={info}")
    bn = np.linalg.norm(b)
    if bn > 0:
        res = np.linalg.norm(A @ x - b) / bn
        if res > max(rtol, 1e-8) * 100:
            raise SingularOperatorError(
                f"post-solve residual {res:.2e} too large")
    n1, n2, n3 = op.grid.shape
    return x.reshape(n1, n2, n3, 2).transpose(3, 0, 1, 2)


# -- residual diagnostics ---------------------------------------------

def _centered(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered d/dx on the full array (one-sided 2nd order at ends)."""
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / 2.0
    out[0] = (-1.5 * u[0] + 2.0 * u[1] - 0.5 * u[2])
    out[-1] = (1.5 * u[-1] - 2.0 * u[-2] + 0.5 * u[-3])
    return np.moveaxis(out / h, 0, axis)


def helmholtz_vs_stretched(u: np.ndarray, ctx: StretchContext, grid: Grid,
                           F: np.ndarray) -> np.ndarray:
    """Interior residual of the divergence-form Helmholtz equation

        (p - tau^2 Pi) u = Pi (sum_j A_j d~_j - tau) F,

    where p = sum_j d_j(c_j d_j .) and d~_j is the stretched
    derivative.  p is applied with conservative flux differencing
    (coefficients at midpoints); the returned field lives on the nodes
    two layers away from the faces and is zero elsewhere.
    """
    x = grid.mesh()
    h = grid.spacing
    A = algebra.pauli_matrices()
    pts = np.moveaxis(x, 0, -1)
    tau = ctx.tau

    ratios = ctx.ratios(pts)  # (n1, n2, n3, 3)
    Pi = ctx.Pi(pts)

    pu = np.zeros_like(u)
    for j in range(3):
        # coefficient on the half grid along axis j
        ax = grid.axes[j]
        mid = 0.5 * (ax[1:] + ax[:-1])
        c_axis = []
        for m in range(3):
            coord = mid if m == j else grid.axes[m]
            c_axis.append(ctx.tau + ctx.profiles[m](coord))
        # c_j = (tau+s_{j+1})(tau+s_{j+2}) / (tau (tau+s_j)) separable
        jp, jq = (j + 1) % 3, (j + 2) % 3
        fac = [None, None, None]
        fac[j] = 1.0 / c_axis[j]
        fac[jp] = c_axis[jp]
        fac[jq] = c_axis[jq]
        c_mid = (fac[0][:, None, None] * fac[1][None, :, None]
                 * fac[2][None, None, :]) / tau

        um = np.moveaxis(u, j + 1, 1)  # (2, nj, ., .)
        cm = np.moveaxis(c_mid, j, 0)  # (nj-1, ., .)
        flux = cm[None] * (um[:, 1:] - um[:, :-1]) / h[j]
        div = np.zeros_like(um)
        div[:, 1:-1] = (flux[:, 1:] - flux[:, :-1]) / h[j]
        pu += np.moveaxis(div, 1, j + 1)

    rhs = np.zeros_like(u)
    for j in range(3):
        dF = _centered(F, j + 1, h[j])
        rhs += np.einsum("ab,b...->a...", A[j], ratios[None, ..., j] * dF)
    rhs = Pi[None] * (rhs - tau * F)

    res = pu - tau ** 2 * Pi[None] * u - rhs
    mask = np.zeros(grid.shape, dtype=bool)
    mask[2:-2, 2:-2, 2:-2] = True
    return np.where(mask[None], res, 0.0)


def _probe_deriv(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    """d/dx with 4th-order centered interior and 3rd-order one-sided
    closures.  Deliberately different stencils from _deriv1d, so that
    residuals measured with it are independent of the assembled rows
    (a residual built from the solver's own stencils is an exact
    combination of the imposed constraints and says nothing)."""
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / 12.0
    c = np.array([-11.0, 18.0, -9.0, 2.0]) / 6.0
    for r in range(2):
        out[r] = sum(ci * u[r + i] for i, ci in enumerate(c))
        out[-1 - r] = -sum(ci * u[-1 - r - i] for i, ci in enumerate(c))
    return np.moveaxis(out / h, 0, axis)


def second_bc_residual(u: np.ndarray, ctx: StretchContext, grid: Grid,
                       margin: float = 0.25) -> tuple[dict, float]:
    """Residual of the second boundary condition on the six faces.

    At face nodes, evaluates || pi^+(nu~) (V u + tau u) || with the
    transverse operator V discretized by one-sided 3rd-order stencils
    along the normal and 4th-order centered stencils tangentially,
    independent of the stencils the solver imposed.  Nodes within
    ``margin`` (fraction of the half length) of a face edge are skipped
    because the corner rows of the solver pin the solution there.
    Returns ({face: residual array}, max).
    """
    h = grid.spacing
    x = grid.mesh()
    grads = [_probe_deriv(u, j + 1, h[j]) for j in range(3)]
    out = {}
    worst = 0.0
    for k in range(1, 7):
        axis, sign = face_axis_sign(k)
        nu = face_normal(k)
        idx = [slice(None)] * 3
        idx[axis] = -1 if sign > 0 else 0
        sl = (slice(None),) + tuple(idx)
        uf = u[sl]
        xf = np.moveaxis(np.stack([x[m][tuple(idx)] for m in range(3)]),
                         0, -1)
        r = ctx.ratios(xf)
        nt = nu * r
        q = np.einsum("...j,...j->...", nt, nt)
        norm = np.sqrt(q)  # principal branch; Re tau > 0 keeps it off the cut
        if np.any(q.real <= 0) and np.any(np.abs(q.imag) < 1e-13):
            raise ArithmeticError("transverse normalizer on the branch cut")
        vcoef = nu * r ** 2 / norm[..., None]
        Vu = sum(vcoef[None, ..., m] * grads[m][sl] for m in range(3))
        expr = Vu + ctx.tau * uf
        # project with pi^+(nu~) pointwise
        lam = norm
        a_nt = np.zeros(uf.shape[1:] + (2, 2), dtype=complex)
        a_nt[..., 0, 0] = nt[..., 0]
        a_nt[..., 0, 1] = nt[..., 1] + 1j * nt[..., 2]
        a_nt[..., 1, 0] = nt[..., 1] - 1j * nt[..., 2]
        a_nt[..., 1, 1] = -nt[..., 0]
        pip = 0.5 * (a_nt / lam[..., None, None]
                     + np.eye(2)[None, None])
        proj = np.einsum("...ab,b...->a...", pip, expr)
        resid = np.sqrt(np.sum(np.abs(proj) ** 2, axis=0))
        i1, i2 = [i for i in range(3) if i != axis]
        m1 = max(2, int(np.ceil(margin * grid.shape[i1])))
        m2 = max(2, int(np.ceil(margin * grid.shape[i2])))
        interior = resid[m1:-m1, m2:-m2]
        out[k] = resid
        if interior.size:
            worst = max(worst, float(np.max(np.abs(interior))))
    return out, worst


# -- Helmholtz Petrov-Galerkin ----------------------------------------

_GP = np.array([-1.0, 1.0]) / np.sqrt(3.0)  # 2-point Gauss on [-1, 1]


def _shape1d(t):
    """Linear shape functions and derivatives on [0, 1]."""
    t = np.asarray(t)
    return np.stack([1 - t, t]), np.stack([-np.ones_like(t),
                                           np.ones_like(t)])


@dataclass
class HelmholtzAssembly:
    """Trilinear finite-element matrices of the Helmholtz form.

    ``stiffness`` carries the c_j-weighted gradient term, ``mass`` the
    tau^2 Pi term, ``boundary`` the Phi beta face term, all on the
    scalar grid (the form acts componentwise on spinors).  The bilinear
    form uses the unconjugated dot product: form(u, v) = v^T K u summed
    over components.
    """

    grid: Grid
    ctx: StretchContext
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    boundary: sp.csr_matrix

    @property
    def operator(self) -> sp.csr_matrix:
        return self.stiffness + self.mass + self.boundary

    def form(self, u: np.ndarray, v: np.ndarray) -> complex:
        """A(u, v) with the bilinear dot; pass v = conj(u) for the
        Hermitian quadratic form."""
        K = self.operator
        total = 0.0 + 0.0j
        for c in range(2):
            total += v[c].ravel() @ (K @ u[c].ravel())
        return complex(total)

    def form_parts(self, u: np.ndarray, v: np.ndarray):
        parts = []
        for K in (self.stiffness, self.mass, self.boundary):
            total = sum(v[c].ravel() @ (K @ u[c].ravel()) for c in range(2))
            parts.append(complex(total))
        return tuple(parts)

    def project_trial(self, u: np.ndarray) -> np.ndarray:
        """Constrain face nodes to the outgoing eigenspace E+(nu) and
        zero multi-face nodes."""
        out = u.copy()
        for k in range(1, 7):
            nu = face_normal(k)
            pip = algebra.projector(+1, nu)
            axis, sign = face_axis_sign(k)
            idx = [slice(None)] * 3
            idx[axis] = -1 if sign > 0 else 0
            sl = (slice(None),) + tuple(idx)
            out[sl] = np.einsum("ab,b...->a...", pip, out[sl])
        flags = _node_flags(self.grid.shape)
        nbits = sum((flags >> b) & 1 for b in range(6))
        out[:, (nbits > 1).reshape(self.grid.shape)] = 0.0
        return out

    def project_test(self, v: np.ndarray) -> np.ndarray:
        """Constrain face nodes of the test field to ker pi^+(nu)^T."""
        out = v.copy()
        for k in range(1, 7):
            nu = face_normal(k)
            pim_t = algebra.projector(-1, nu).T
            axis, sign = face_axis_sign(k)
            idx = [slice(None)] * 3
            idx[axis] = -1 if sign > 0 else 0
            sl = (slice(None),) + tuple(idx)
            out[sl] = np.einsum("ab,b...->a...", pim_t, out[sl])
        return out


def assemble_helmholtz(ctx: StretchContext, grid: Grid) -> HelmholtzAssembly:
    """Assemble the trilinear-element matrices of the Helmholtz form
    with 2x2x2 Gauss quadrature per cell (2x2 on boundary faces)."""
    n1, n2, n3 = grid.shape
    h = grid.spacing
    nscalar = n1 * n2 * n3

    # reference data: 8 nodes x 8 Gauss points
    t = 0.5 * (_GP + 1.0)
    N1, dN1 = _shape1d(t)  # (2, 2)
    gw = 0.5  # Gauss weight on [0, 1]

    # tabulate phi_a(g) and grad phi_a(g) on the reference cell
    nodes = [(a, b, c) for a in range(2) for b in range(2) for c in range(2)]
    gps = [(p, q, r) for p in range(2) for q in range(2) for r in range(2)]
    phi = np.zeros((8, 8))
    dphi = np.zeros((8, 8, 3))
    for ia, (a, b, c) in enumerate(nodes):
        for ig, (p, q, r) in enumerate(gps):
            phi[ia, ig] = N1[a, p] * N1[b, q] * N1[c, r]
            dphi[ia, ig, 0] = dN1[a, p] * N1[b, q] * N1[c, r] / h[0]
            dphi[ia, ig, 1] = N1[a, p] * dN1[b, q] * N1[c, r] / h[1]
            dphi[ia, ig, 2] = N1[a, p] * N1[b, q] * dN1[c, r] / h[2]
    wvol = gw ** 3 * float(np.prod(h))

    # Gauss point coordinates for every cell, axis by axis
    def gauss_axis(j):
        ax = grid.axes[j]
        return ax[:-1, None] + h[j] * t[None, :]  # (ncell_j, 2)

    gx = [gauss_axis(j) for j in range(3)]
    e1, e2, e3 = n1 - 1, n2 - 1, n3 - 1
    ncell = e1 * e2 * e3

    # coefficients at all Gauss points: build from separable 1D factors
    sig = [ctx.profiles[j](gx[j]) for j in range(3)]  # (ecount, 2)
    tau = ctx.tau

    def cell_coeff(fac1, fac2, fac3):
        """Outer product over (cells x gauss) per axis -> (ncell, 8)."""
        a = fac1[:, None, None, :, None, None]
        b = fac2[None, :, None, None, :, None]
        c = fac3[None, None, :, None, None, :]
        return (a * b * c).reshape(ncell, 8)

    tp = [tau + s for s in sig]  # (e_j, 2) each
    Pi_g = cell_coeff(tp[0], tp[1], tp[2]) / tau ** 3
    c_g = []
    for j in range(3):
        facs = [tp[0].copy(), tp[1].copy(), tp[2].copy()]
        facs[j] = 1.0 / facs[j]
        c_g.append(cell_coeff(*facs) / tau)

    # element matrices, vectorized over cells
    K_loc = np.zeros((ncell, 8, 8), dtype=complex)
    for j in range(3):
        K_loc += np.einsum("cg,ag,bg->cab", c_g[j],
                           dphi[:, :, j], dphi[:, :, j]) * wvol
    M_loc = np.einsum("cg,ag,bg->cab", tau ** 2 * Pi_g, phi, phi) * wvol

    # global scatter
    strides = np.array([n2 * n3, n3, 1])
    ci, cj, ck = np.meshgrid(np.arange(e1), np.arange(e2), np.arange(e3),
                             indexing="ij")
    base = (ci * strides[0] + cj * strides[1] + ck).ravel()
    offsets = np.array([a * strides[0] + b * strides[1] + c
                        for (a, b, c) in nodes])
    conn = base[:, None] + offsets[None, :]  # (ncell, 8)

    rows = np.repeat(conn, 8, axis=1).ravel()
    cols = np.tile(conn, (1, 8)).ravel()

    def scatter(loc):
        vals = loc.reshape(ncell, 64).ravel()
        return sp.coo_matrix((vals, (rows, cols)),
                             shape=(nscalar, nscalar)).tocsr()

    K = scatter(K_loc)
    M = scatter(M_loc)

    # boundary term: bilinear elements on each face, coefficient Phi*tau
    # (mean curvature vanishes on the flat faces, so beta = tau)
    Brows, Bcols, Bvals = [], [], []
    for k in range(1, 7):
        axis, sign = face_axis_sign(k)
        nu = face_normal(k)
        i1, i2 = [i for i in range(3) if i != axis]
        fixed = grid.shape[axis] - 1 if sign > 0 else 0
        fe1, fe2 = grid.shape[i1] - 1, grid.shape[i2] - 1
        area_w = gw ** 2 * h[i1] * h[i2]
        # 2D tabulation
        fnodes = [(a, b) for a in range(2) for b in range(2)]
        fphi = np.zeros((4, 4))
        for ia, (a, b) in enumerate(fnodes):
            ig = 0
            for p in range(2):
                for q in range(2):
                    fphi[ia, ig] = N1[a, p] * N1[b, q]
                    ig += 1
        # Phi * tau at the face Gauss points; sigma_axis at the face
        sfix = tau + ctx.profiles[axis](sign * grid.box.h[axis])
        g1 = tau + ctx.profiles[i1](gauss_axis(i1))
        g2 = tau + ctx.profiles[i2](gauss_axis(i2))
        prod = (g1[:, None, :, None] * g2[None, :, None, :]
                ).reshape(fe1 * fe2, 4)
        Pi_f = prod * sfix / tau ** 3
        rr = tau / sfix  # stretching ratio along the normal
        norm_f = principal_sqrt(rr * rr)
        coef = Pi_f * norm_f * tau  # Phi * beta with beta = tau
        floc = np.einsum("cg,ag,bg->cab", coef, fphi, fphi) * area_w

        fi, fj = np.meshgrid(np.arange(fe1), np.arange(fe2), indexing="ij")
        fbase = np.zeros(3, dtype=int)
        idx0 = np.zeros((fe1 * fe2,), dtype=int)
        coords = np.zeros((fe1 * fe2, 3), dtype=int)
        coords[:, axis] = fixed
        coords[:, i1] = fi.ravel()
        coords[:, i2] = fj.ravel()
        idx0 = coords @ strides
        foff = np.array([a * strides[i1] + b * strides[i2]
                         for (a, b) in fnodes])
        fconn = idx0[:, None] + foff[None, :]
        Brows.append(np.repeat(fconn, 4, axis=1).ravel())
        Bcols.append(np.tile(fconn, (1, 4)).ravel())
        Bvals.append(floc.reshape(-1))
    B = sp.coo_matrix((np.concatenate(Bvals),
                       (np.concatenate(Brows), np.concatenate(Bcols))),
                      shape=(nscalar, nscalar)).tocsr()

    return HelmholtzAssembly(grid, ctx, K, M, B)


def export_matrix(path, op: SparseComplexOperator) -> None:
    """Coordinate-format text dump: one 'row col re im' line per
    nonzero."""
    r, c, v = op.triplets()
    with open(path, "w") as fh:
        for ri, ci, vi in zip(r, c, v):
            fh.write(f"{ri} {ci} {vi.real:.17g} {vi.imag:.17g}\n")
