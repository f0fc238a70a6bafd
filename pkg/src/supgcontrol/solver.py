"""Direct and reduced-space solvers for the coupled systems."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class SolutionTriple:
    """Solution split into its state, control, and adjoint parts."""

    def __init__(self, y, u, lam, residual, nnz, fill):
        self.y = y
        self.u = u
        self.lam = lam
        self.residual = residual
        self.nnz = nnz
        self.fill = fill

    @property
    def vector(self):
        return np.concatenate([self.y, self.u, self.lam])

    def to_csv(self, stream):
        stream.write("dof,y,u,lam\n")
        n = max(len(self.y), len(self.u), len(self.lam))
        for i in range(n):
            cells = [str(i)]
            for part in (self.y, self.u, self.lam):
                cells.append("%.17g" % part[i] if i < len(part) else "")
            stream.write(",".join(cells) + "\n")


def _block_name(system, row):
    ny, nu, _ = system.dims
    if row < ny:
        return "state", row
    if row < ny + nu:
        return "control", row - ny
    return "adjoint", row - ny - nu


def _check_structure(system):
    op = system.operator.tocsr()
    empty_rows = np.flatnonzero(np.diff(op.indptr) == 0)
    if len(empty_rows):
        block, local = _block_name(system, empty_rows[0])
        raise SolverError(
            "singular operator: row %d (%s DOF %d) has no entries"
            % (empty_rows[0], block, local))
    empty_cols = np.flatnonzero(np.diff(op.tocsc().indptr) == 0)
    if len(empty_cols):
        block, local = _block_name(system, empty_cols[0])
        raise SolverError(
            "singular operator: column %d (%s DOF %d) has no entries"
            % (empty_cols[0], block, local))


def _split(system, x):
    ny, nu, nl = system.dims
    return x[:ny], x[ny:ny + nu], x[ny + nu:]


def solve_direct(system):
    """Sparse LU solve of the full coupled system.

    Raises SolverError when the operator is structurally or numerically
    singular, naming the offending location, and when the final
    residual fails the backward-error bound
    1e-10 * (||b||_2 + ||K||_inf * ||x||_2).
    """
    _check_structure(system)
    op = system.operator.tocsc()
    try:
        lu = spla.splu(op)
    except RuntimeError as exc:
        raise SolverError("sparse LU factorization failed: %s" % exc)
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() <= 1e-12 * udiag.max():
        # a rank-deficient operator can still factor with a tiny pivot
        # and then "solve" with an enormous, backward-stable x
        raise SolverError(
            "operator is numerically singular: pivot ratio %.3e"
            % (udiag.min() / udiag.max()))
    x = lu.solve(system.rhs)
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        block, local = _block_name(system, bad)
        raise SolverError(
            "non-finite solution entry at row %d (%s DOF %d); "
            "zero pivot during factorization" % (bad, block, local))
    residual = np.linalg.norm(system.operator @ x - system.rhs)
    norm_inf = np.abs(system.operator).sum(axis=1).max()
    bound = 1e-10 * (np.linalg.norm(system.rhs)
                     + norm_inf * np.linalg.norm(x))
    if residual > bound:
        raise SolverError(
            "direct solve residual %.3e exceeds bound %.3e"
            % (residual, bound))
    y, u, lam = _split(system, x)
    return SolutionTriple(y, u, lam, residual, system.operator.nnz,
                          lu.nnz / max(system.operator.nnz, 1))


def _reduced_pieces(system):
    ny, nu, nl = system.dims
    op = system.operator.tocsr()
    k11 = op[:ny, :ny].tocsc()
    k13 = op[:ny, ny + nu:].tocsc()
    k22 = op[ny:ny + nu, ny:ny + nu].tocsc()
    k31 = op[ny + nu:, :ny].tocsc()
    k32 = op[ny + nu:, ny:ny + nu].tocsc()
    b1 = system.rhs[:ny]
    b2 = system.rhs[ny:ny + nu]
    b3 = system.rhs[ny + nu:]
    return k11, k13, k22, k31, k32, b1, b2, b3


class _Reduction:
    """Elimination of state and adjoint onto the control unknowns."""

    def __init__(self, system):
        if system.approach != "dto":
            raise ValueError(
                "reduced oracle requires the symmetric coupling")
        if not system.bc_applied:
            raise ValueError("apply boundary conditions before reducing")
        ny, nu, nl = system.dims
        if ny != nl:
            raise ValueError(
                "reduction expects matching state/adjoint spaces")
        self.system = system
        self.nu = nu
        (self.k11, self.k13, self.k22, self.k31, self.k32,
         self.b1, self.b2, self.b3) = _reduced_pieces(system)
        self.dirichlet = system.spaces[0].dirichlet_dofs
        # The state rows carry identity entries for the pinned adjoint
        # DOFs and the pinned state values live in b1; merge both into
        # one invertible state operator A y = c - B u.
        pinned = sp.csr_matrix(
            (np.ones(len(self.dirichlet)),
             (self.dirichlet, self.dirichlet)), shape=(ny, ny))
        a_op = (self.k31 + pinned).tocsc()
        self.c = self.b3.copy()
        self.c[self.dirichlet] = self.b1[self.dirichlet]
        try:
            self.lu = spla.splu(a_op)
        except RuntimeError as exc:
            raise SolverError(
                "state operator factorization failed: %s" % exc)

    def state_solve(self, rhs):
        return self.lu.solve(rhs)

    def adjoint_solve(self, rhs):
        return self.lu.solve(rhs, trans="T")

    def lam_of(self, yvec):
        rhs = self.b1 - self.k11 @ yvec
        rhs[self.dirichlet] = 0.0
        return self.adjoint_solve(rhs)

    def gradient_at_zero(self):
        y0 = self.state_solve(self.c)
        return self.k32.T @ self.lam_of(y0) - self.b2

    def hessian_apply(self, w):
        yw = self.state_solve(-(self.k32 @ w))
        rhs = -(self.k11 @ yw)
        rhs[self.dirichlet] = 0.0
        lw = self.adjoint_solve(rhs)
        return self.k22 @ w + self.k32.T @ lw

    def hessian_dense(self):
        v = self.state_solve(-self.k32.toarray())
        wmat = self.k11 @ v
        wmat[self.dirichlet, :] = 0.0
        lmat = self.adjoint_solve(-wmat)
        hess = self.k22.toarray() + self.k32.T @ lmat
        return 0.5 * (hess + hess.T)


def reduced_hessian(system):
    """LinearOperator applying the reduced control-space operator."""
    red = _Reduction(system)
    return spla.LinearOperator((red.nu, red.nu), matvec=red.hessian_apply)


def solve_reduced_oracle(system, dense_limit=5000, cg_rtol=1e-12):
    """Independent solve by elimination onto the control unknowns.

    Only the symmetric coupling qualifies: its gradient row couples the
    control to the adjoint through the same bilinear form as the state
    row, so eliminating y and lam leaves a symmetric positive definite
    reduced operator omega*M_u + B^T A^{-T} M A^{-1} B. Small control
    spaces form it densely; larger ones apply it matrix-free inside
    conjugate gradients.
    """
    red = _Reduction(system)
    g0 = red.gradient_at_zero()
    if red.nu <= dense_limit:
        u = np.linalg.solve(red.hessian_dense(), -g0)
    else:
        hop = spla.LinearOperator((red.nu, red.nu),
                                  matvec=red.hessian_apply)
        u, info = spla.cg(hop, -g0, rtol=cg_rtol, atol=0.0,
                          maxiter=10 * red.nu)
        if info != 0:
            raise SolverError(
                "conjugate gradient on the reduced system did not "
                "converge (info=%d)" % info)
    y = red.state_solve(red.c - red.k32 @ u)
    lam = red.lam_of(y)
    x = np.concatenate([y, u, lam])
    residual = np.linalg.norm(system.operator @ x - system.rhs)
    return SolutionTriple(y, u, lam, residual, system.operator.nnz,
                          red.lu.nnz / max(system.operator.nnz, 1))
