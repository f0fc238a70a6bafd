"""Stabilization parameters and sparse assembly of all discrete forms.

The state operator uses the streamline-upwind form

    a_h(y, v) = a(y, v)
        + sum_e tau_e < -eps*lap(y) + c.grad(y) + r*y, c.grad(v) >_e,

and the separately discretized adjoint operator reverses the advection
in both the residual and the test direction,

    a_h^adj(psi, lam) = a(psi, lam)
        + sum_e tau_e < -eps*lap(lam) - c.grad(lam) + (r - div c)*lam,
                        -c.grad(psi) >_e.

For P1 elements the two stabilized operators are exact transposes of
each other; for P2 the element Laplacian terms enter with opposite
signs, which is the root of the adjoint-accuracy gap between the two
coupling orders.

Quadrature: assembly uses a 5-point Gauss rule per interval (degree 9)
and a 12-point degree-6 triangle rule, which meets the 2k+2 exactness
floor for both degrees and resolves the layered load functions at the
level the convergence studies assume.

All element loops are vectorized; triplets are accumulated in ascending
element order, so repeated assembly of the same system is bitwise
reproducible.
"""

import math

import numpy as np
import scipy.sparse as sp

from . import fem
from .mesh import NEUMANN, element_geometry, edge_outward_normal

STANDARD = "standard"
GENERAL = "general"
COTH = "coth"
ZERO = "zero"

_POLICIES = (STANDARD, GENERAL, COTH, ZERO)


class StabilizationConfig:
    """Stabilization policy, equation role, and P2 rescaling flag.

    policy:
      standard      tau = h^2/(4 eps) while Pe <= 1, then h/(2 c_sup)
      general       tau = tau1 * h^2/eps while Pe <= 1, then tau2 * h
      coth          tau = (h/(2 c_sup)) * (coth(Pe) + 1/Pe); 1D only
      zero          tau = 0 (plain Galerkin)

    role is "state" or "adjoint"; the same formulas apply to both since
    |c| = |-c|, but the role is tracked so error norms can select the
    tau actually used by each equation. With rescale_quadratic (the
    default) every policy reads h/2 in place of h for P2 elements.
    """

    def __init__(self, policy=STANDARD, role=fem.STATE, tau1=None,
                 tau2=None, rescale_quadratic=True):
        if policy not in _POLICIES:
            raise ValueError(f"unknown stabilization policy {policy!r}")
        if policy == GENERAL and (tau1 is None or tau2 is None):
            raise ValueError("general policy needs tau1 and tau2")
        if role not in (fem.STATE, fem.ADJOINT):
            raise ValueError(f"stabilization role must be state or adjoint,"
                             f" got {role!r}")
        self.policy = policy
        self.role = role
        self.tau1 = tau1
        self.tau2 = tau2
        self.rescale_quadratic = rescale_quadratic


def peclet(eps, c_sup, h_e):
    """Mesh Peclet number c_sup * h_e / (2 eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return np.asarray(c_sup) * np.asarray(h_e) / (2.0 * eps)


def tau(config, eps, c_sup, h_e, degree, dim=1):
    """Elementwise stabilization parameter for one equation.

    c_sup and h_e may be scalars or per-element arrays. For quadratic
    elements the size parameter is halved when the config's
    rescale_quadratic flag is set.
    """
    if config.policy == ZERO:
        return np.zeros_like(np.asarray(c_sup, dtype=float) * h_e)
    h_eff = np.asarray(h_e, dtype=float)
    if degree == 2 and config.rescale_quadratic:
        h_eff = h_eff / 2.0
    c_sup = np.asarray(c_sup, dtype=float)
    pe = peclet(eps, c_sup, h_eff)
    if config.policy == STANDARD:
        safe = np.maximum(c_sup, 1e-300)
        return np.where(pe <= 1.0, h_eff * h_eff / (4.0 * eps),
                        h_eff / (2.0 * safe))
    if config.policy == GENERAL:
        return np.where(pe <= 1.0, config.tau1 * h_eff * h_eff / eps,
                        config.tau2 * h_eff)
    # coth policy
    if dim != 1:
        raise ValueError("coth stabilization is only defined on intervals")
    if np.any(pe == 0.0):
        raise ValueError("coth stabilization undefined at Peclet 0")
    safe = np.maximum(c_sup, 1e-300)
    return (h_eff / (2.0 * safe)) * (1.0 / np.tanh(pe) + 1.0 / pe)


def _assembly_rule(space):
    if space.family == "interval":
        return fem.quadrature_rule("interval", 9)
    return fem.quadrature_rule("triangle", 6)


def element_velocity_bound(c, mesh, e, rule=None):
    """Max |c| over the quadrature points and corners of element e."""
    geo = element_geometry(mesh, e)
    if rule is None:
        rule = fem.quadrature_rule(
            "interval" if mesh.dim == 1 else "triangle",
            9 if mesh.dim == 1 else 6)
    pts = geo.origin[None, :] + rule.points @ geo.jac.T
    if mesh.dim == 1:
        corners = mesh.nodes[mesh.elements[e]].reshape(-1, 1)
    else:
        corners = mesh.vertices[mesh.triangles[e]]
    samples = np.vstack([pts, corners])
    return float(np.linalg.norm(c(samples), axis=-1).max())


def _velocity_bounds_batch(c, space, basis):
    # per-element max |c| over quadrature points and corners
    cq = np.linalg.norm(c(basis.x), axis=-1).max(axis=1)
    mesh = space.mesh
    if mesh.dim == 1:
        corners = mesh.nodes[mesh.elements][:, :, None]
    else:
        corners = mesh.vertices[mesh.triangles]
    cv = np.linalg.norm(c(corners), axis=-1).max(axis=1)
    return np.maximum(cq, cv)


def element_taus(problem, space, stab):
    """Per-element tau array for a problem/space/config triple."""
    rule = _assembly_rule(space)
    basis = fem.mapped_basis_all(space, rule)
    c_sup = _velocity_bounds_batch(problem.c, space, basis)
    h_e = np.full(space.mesh.num_elements, space.mesh.h)
    return tau(stab, problem.eps, c_sup, h_e, space.degree,
               dim=space.mesh.dim)


def _coefficients(problem, basis):
    cq = problem.c(basis.x)
    rq = problem.r(basis.x)
    if np.ndim(rq) == 0:
        rq = np.full(basis.x.shape[:2], float(rq))
    return cq, rq


def _scatter(rows_dofs, cols_dofs, local, shape):
    nloc_r = rows_dofs.shape[1]
    nloc_c = cols_dofs.shape[1]
    rows = np.repeat(rows_dofs, nloc_c, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, nloc_r)).ravel()
    mat = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=shape)
    return mat.tocsr()


def assemble_state_supg(spaces, problem, stab):
    """Assemble the stabilized state equation blocks.

    Parameters
    ----------
    spaces : (FeSpace, FeSpace)
        State space and control space on the same mesh.
    problem : ProblemData
    stab : StabilizationConfig with role "state".

    Returns
    -------
    (A_s, B_s, F_s, N_g)
        Operator matrix, control coupling (carrying the minus sign of
        the moved control term), load vector, Neumann boundary load.
    """
    yspace, uspace = spaces
    if stab.role != fem.STATE:
        raise ValueError("state assembly needs a state-role config")
    if yspace.mesh is not uspace.mesh:
        raise ValueError("state and control spaces live on different meshes")
    rule = _assembly_rule(yspace)
    yb = fem.mapped_basis_all(yspace, rule)
    ub = yb if uspace.degree == yspace.degree else \
        fem.mapped_basis_all(uspace, rule)
    cq, rq = _coefficients(problem, yb)
    c_sup = _velocity_bounds_batch(problem.c, yspace, yb)
    h_e = np.full(yspace.mesh.num_elements, yspace.mesh.h)
    taus = tau(stab, problem.eps, c_sup, h_e, yspace.degree,
               dim=yspace.mesh.dim)

    w = yb.w
    cg = np.einsum("tqkd,tqd->tqk", yb.grad, cq)
    ny, nu = yspace.ndof, uspace.ndof
    nl_y = yb.val.shape[1]
    nl_u = ub.val.shape[1]
    nt = yspace.mesh.num_elements
    eps = problem.eps

    a_loc = np.empty((nt, nl_y, nl_y))
    b_loc = np.empty((nt, nl_y, nl_u))
    for i in range(nl_y):
        wcg_i = w * cg[:, :, i]
        for j in range(nl_y):
            gal = np.sum(w * (eps * np.einsum("tqd,tqd->tq",
                                              yb.grad[:, :, i],
                                              yb.grad[:, :, j])
                              + cg[:, :, j] * yb.val[None, :, i]
                              + rq * yb.val[None, :, j]
                              * yb.val[None, :, i]), axis=1)
            res_j = np.sum(wcg_i * (cg[:, :, j]
                                    + rq * yb.val[None, :, j]), axis=1) \
                - eps * yb.lap[:, j] * np.sum(wcg_i, axis=1)
            a_loc[:, i, j] = gal + taus * res_j
        for j in range(nl_u):
            m_ij = np.sum(w * ub.val[None, :, j] * yb.val[None, :, i],
                          axis=1)
            s_ij = np.sum(wcg_i * ub.val[None, :, j], axis=1)
            b_loc[:, i, j] = -(m_ij + taus * s_ij)

    fq = problem.f(yb.x)
    f_loc = np.empty((nt, nl_y))
    for i in range(nl_y):
        f_loc[:, i] = np.sum(w * fq * yb.val[None, :, i], axis=1) \
            + taus * np.sum(w * fq * cg[:, :, i], axis=1)

    A_s = _scatter(yspace.element_dofs, yspace.element_dofs, a_loc, (ny, ny))
    B_s = _scatter(yspace.element_dofs, uspace.element_dofs, b_loc, (ny, nu))
    F_s = np.zeros(ny)
    np.add.at(F_s, yspace.element_dofs.ravel(), f_loc.ravel())
    N_g = assemble_neumann_load(yspace, problem)
    return A_s, B_s, F_s, N_g


def assemble_adjoint_supg_otd(spaces, problem, stab):
    """Assemble the separately stabilized adjoint blocks.

    spaces is (state space, adjoint space); rows test with the state
    basis, A_a columns are adjoint DOFs, M_ya columns are state DOFs.
    The discrete adjoint equation reads A_a * lam = -M_ya * (y - yhat).
    """
    yspace, lspace = spaces
    if stab.role != fem.ADJOINT:
        raise ValueError("adjoint assembly needs an adjoint-role config")
    if yspace.mesh is not lspace.mesh:
        raise ValueError("state and adjoint spaces live on different meshes")
    rule = _assembly_rule(yspace)
    yb = fem.mapped_basis_all(yspace, rule)
    lb = yb if lspace.degree == yspace.degree else \
        fem.mapped_basis_all(lspace, rule)
    cq, rq = _coefficients(problem, yb)
    divq = problem.div_c(yb.x)
    if np.ndim(divq) == 0:
        divq = np.full(yb.x.shape[:2], float(divq))
    c_sup = _velocity_bounds_batch(problem.c, yspace, yb)
    h_e = np.full(yspace.mesh.num_elements, yspace.mesh.h)
    taus = tau(stab, problem.eps, c_sup, h_e, lspace.degree,
               dim=yspace.mesh.dim)

    w = yb.w
    cg_test = np.einsum("tqkd,tqd->tqk", yb.grad, cq)
    cg_trial = cg_test if lb is yb else \
        np.einsum("tqkd,tqd->tqk", lb.grad, cq)
    ny, nl = yspace.ndof, lspace.ndof
    nl_y = yb.val.shape[1]
    nl_l = lb.val.shape[1]
    nt = yspace.mesh.num_elements
    eps = problem.eps

    a_loc = np.empty((nt, nl_y, nl_l))
    m_loc = np.empty((nt, nl_y, nl_y))
    for i in range(nl_y):
        wcg_i = w * cg_test[:, :, i]
        for j in range(nl_l):
            gal = np.sum(w * (eps * np.einsum("tqd,tqd->tq",
                                              yb.grad[:, :, i],
                                              lb.grad[:, :, j])
                              + cg_test[:, :, i] * lb.val[None, :, j]
                              + rq * lb.val[None, :, j]
                              * yb.val[None, :, i]), axis=1)
            # residual of the adjoint strong form against -c.grad(psi_i)
            res_j = np.sum(wcg_i * (cg_trial[:, :, j]
                                    - (rq - divq) * lb.val[None, :, j]),
                           axis=1) \
                + eps * lb.lap[:, j] * np.sum(wcg_i, axis=1)
            a_loc[:, i, j] = gal + taus * res_j
        for j in range(nl_y):
            m_ij = np.sum(w * yb.val[None, :, j] * yb.val[None, :, i],
                          axis=1)
            s_ij = np.sum(wcg_i * yb.val[None, :, j], axis=1)
            m_loc[:, i, j] = m_ij - taus * s_ij

    A_a = _scatter(yspace.element_dofs, lspace.element_dofs, a_loc, (ny, nl))
    M_ya = _scatter(yspace.element_dofs, yspace.element_dofs, m_loc,
                    (ny, ny))
    return A_a, M_ya


def assemble_mass(space_row, space_col):
    """Plain mass matrix <phi_j, phi_i> between two spaces."""
    if space_row.mesh is not space_col.mesh:
        raise ValueError("mass matrix spaces live on different meshes")
    rule = _assembly_rule(space_row)
    rb = fem.mapped_basis_all(space_row, rule)
    cb = rb if space_col.degree == space_row.degree else \
        fem.mapped_basis_all(space_col, rule)
    nt = space_row.mesh.num_elements
    nl_r = rb.val.shape[1]
    nl_c = cb.val.shape[1]
    local = np.empty((nt, nl_r, nl_c))
    for i in range(nl_r):
        for j in range(nl_c):
            local[:, i, j] = np.sum(rb.w * cb.val[None, :, j]
                                    * rb.val[None, :, i], axis=1)
    return _scatter(space_row.element_dofs, space_col.element_dofs, local,
                    (space_row.ndof, space_col.ndof))


def assemble_load(space, fn, problem=None, stab=None, direction=1.0):
    """Load vector <fn, phi_i> + direction * sum_e tau_e <fn, c.grad phi_i>.

    With stab None (or the zero policy) this is the plain L2 pairing.
    direction +1 matches the state-equation weighting, -1 the adjoint
    one.
    """
    rule = _assembly_rule(space)
    basis = fem.mapped_basis_all(space, rule)
    fq = fn(basis.x)
    nt = space.mesh.num_elements
    nloc = basis.val.shape[1]
    local = np.empty((nt, nloc))
    if stab is None or stab.policy == ZERO:
        for i in range(nloc):
            local[:, i] = np.sum(basis.w * fq * basis.val[None, :, i],
                                 axis=1)
    else:
        cq = problem.c(basis.x)
        cg = np.einsum("tqkd,tqd->tqk", basis.grad, cq)
        c_sup = _velocity_bounds_batch(problem.c, space, basis)
        h_e = np.full(nt, space.mesh.h)
        taus = tau(stab, problem.eps, c_sup, h_e, space.degree,
                   dim=space.mesh.dim)
        for i in range(nloc):
            local[:, i] = np.sum(basis.w * fq * basis.val[None, :, i],
                                 axis=1) \
                + direction * taus * np.sum(basis.w * fq * cg[:, :, i],
                                            axis=1)
    out = np.zeros(space.ndof)
    np.add.at(out, space.element_dofs.ravel(), local.ravel())
    return out


def _edge_dofs(space, edge):
    # DOFs of a boundary edge in 1D-reference order (v0, v1[, midpoint])
    if space.degree == 1:
        return np.array([edge.v0, edge.v1])
    tri = space.mesh.triangles[edge.triangle]
    key = (min(edge.v0, edge.v1), max(edge.v0, edge.v1))
    locpairs = ((0, 1), (1, 2), (0, 2))
    for s, (a, b) in enumerate(locpairs):
        if (min(tri[a], tri[b]), max(tri[a], tri[b])) == key:
            mid = space.element_dofs[edge.triangle, 3 + s]
            return np.array([edge.v0, edge.v1, mid])
    raise ValueError(f"edge ({edge.v0}, {edge.v1}) not found on its triangle")


def assemble_neumann_load(space, problem):
    """Boundary load <g, phi_i> over the Neumann-tagged edges."""
    out = np.zeros(space.ndof)
    if space.mesh.dim == 1:
        return out
    rule = fem.quadrature_rule("interval", 9)
    ref = fem.ReferenceElement("interval", space.degree)
    N, _, _ = ref.eval(rule.points)
    t = rule.points[:, 0]
    for edge in space.mesh.boundary_edges:
        if edge.tag != NEUMANN:
            continue
        p0 = space.mesh.vertices[edge.v0]
        p1 = space.mesh.vertices[edge.v1]
        length = np.linalg.norm(p1 - p0)
        pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
        normal = edge_outward_normal(space.mesh, edge)
        gq = problem.g(pts, normal[None, :])
        dofs = _edge_dofs(space, edge)
        vals = rule.weights * length * gq
        for k, dof in enumerate(dofs):
            out[dof] += np.sum(vals * N[:, k])
    return out


def dump_matrix(matrix, stream):
    """Write a sparse matrix as `row col value` rows, 17 significant
    digits, ordered by row then column."""
    coo = sp.csr_matrix(matrix).tocoo()
    stream.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for r, c, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{r} {c} {v:.17g}\n")
