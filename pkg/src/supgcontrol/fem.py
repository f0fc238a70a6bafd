"""Lagrange P1/P2 elements, quadrature rules, DOF maps, interpolation.

Scalar fields are callables taking one ndarray of points with shape
(..., dim) and returning values of shape (...); vector fields return
shape (..., dim). This convention is used throughout the package.
"""

import numpy as np
from scipy import special

from . import mesh as meshmod

STATE = "state"
ADJOINT = "adjoint"
CONTROL = "control"


class ReferenceElement:
    """Basis values and derivatives on the reference element.

    eval(points) returns (N, dN, d2N):
      N   (q, nloc)            basis values,
      dN  (q, nloc, dim)       reference gradients,
      d2N (nloc, dim, dim)     reference Hessians (constant for P2,
                               zero for P1).
    """

    def __init__(self, family, degree):
        if degree not in (1, 2):
            raise ValueError(f"unsupported degree {degree}")
        if family not in ("interval", "triangle"):
            raise ValueError(f"unsupported element family {family!r}")
        self.family = family
        self.degree = degree
        self.dim = 1 if family == "interval" else 2
        self.nloc = {("interval", 1): 2, ("interval", 2): 3,
                     ("triangle", 1): 3, ("triangle", 2): 6}[family, degree]

    def eval(self, points):
        points = np.asarray(points, dtype=float)
        if self.family == "interval":
            return self._eval_interval(points[:, 0])
        return self._eval_triangle(points)

    def _eval_interval(self, x):
        q = len(x)
        if self.degree == 1:
            N = np.column_stack([1 - x, x])
            dN = np.empty((q, 2, 1))
            dN[:, 0, 0] = -1.0
            dN[:, 1, 0] = 1.0
            d2N = np.zeros((2, 1, 1))
        else:
            # local order: left vertex, right vertex, midpoint
            N = np.column_stack([(1 - x) * (1 - 2 * x), x * (2 * x - 1),
                                 4 * x * (1 - x)])
            dN = np.empty((q, 3, 1))
            dN[:, 0, 0] = 4 * x - 3
            dN[:, 1, 0] = 4 * x - 1
            dN[:, 2, 0] = 4 - 8 * x
            d2N = np.array([4.0, 4.0, -8.0]).reshape(3, 1, 1)
        return N, dN, d2N

    def _eval_triangle(self, pts):
        xi, et = pts[:, 0], pts[:, 1]
        L0, L1, L2 = 1 - xi - et, xi, et
        g0 = np.array([-1.0, -1.0])
        g1 = np.array([1.0, 0.0])
        g2 = np.array([0.0, 1.0])
        q = len(pts)
        if self.degree == 1:
            N = np.column_stack([L0, L1, L2])
            dN = np.broadcast_to(np.stack([g0, g1, g2]), (q, 3, 2)).copy()
            d2N = np.zeros((3, 2, 2))
            return N, dN, d2N
        # local order: 3 vertices, then midpoints of edges (0,1), (1,2), (0,2)
        N = np.column_stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1),
                             L2 * (2 * L2 - 1),
                             4 * L0 * L1, 4 * L1 * L2, 4 * L0 * L2])
        dN = np.zeros((q, 6, 2))
        dN[:, 0] = (4 * L0 - 1)[:, None] * g0
        dN[:, 1] = (4 * L1 - 1)[:, None] * g1
        dN[:, 2] = (4 * L2 - 1)[:, None] * g2
        dN[:, 3] = 4 * (L1[:, None] * g0 + L0[:, None] * g1)
        dN[:, 4] = 4 * (L2[:, None] * g1 + L1[:, None] * g2)
        dN[:, 5] = 4 * (L2[:, None] * g0 + L0[:, None] * g2)
        d2N = 4.0 * np.array([
            [[1, 1], [1, 1]], [[1, 0], [0, 0]], [[0, 0], [0, 1]],
            [[-2, -1], [-1, 0]], [[0, 1], [1, 0]], [[0, -1], [-1, -2]]],
            dtype=float)
        return N, dN, d2N


class QuadratureRule:
    __slots__ = ("family", "points", "weights", "exactness", "subdivision")

    def __init__(self, family, points, weights, exactness, subdivision):
        self.family = family
        self.points = points
        self.weights = weights
        self.exactness = exactness
        self.subdivision = subdivision


# Symmetric triangle rules on the unit right triangle, by polynomial
# degree. Generators are barycentric; weights normalized to sum 1 and
# scaled by the reference area 1/2 on expansion.
_TRI_RULES = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    5: [((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115),
         0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456),
         0.125939180544827)],
    6: [((0.873821971016996, 0.063089014491502, 0.063089014491502),
         0.050844906370207),
        ((0.501426509658179, 0.249286745170910, 0.249286745170910),
         0.116786275726379),
        ((0.053145049844817, 0.310352451033784, 0.636502499121399),
         0.082851075618374)],
}


def _conical_tri_rule(exactness):
    # Duffy-style product of Gauss-Legendre in one direction and
    # Gauss-Jacobi (weight 1-t) in the other; exact through odd degree
    # 2n-1 with n*n points and no tabulated constants.
    npts = max(1, (exactness + 2) // 2)
    gx, gw = np.polynomial.legendre.leggauss(npts)
    u = 0.5 * (gx + 1.0)
    wu = 0.5 * gw
    tj, wj = special.roots_jacobi(npts, 1, 0)
    v = 0.5 * (tj + 1.0)
    wv = 0.25 * wj
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([(uu * (1.0 - vv)).ravel(), vv.ravel()])
    wts = np.outer(wu, wv).ravel()
    return pts, wts, 2 * npts - 1


def _expand_tri_rule(generators):
    pts, wts = [], []
    for bary, w in generators:
        a, b, c = bary
        if abs(a - b) < 1e-14 and abs(b - c) < 1e-14:
            perms = [(a, b, c)]
        elif abs(b - c) < 1e-14:
            perms = [(a, b, b), (b, a, b), (b, b, a)]
        else:
            perms = [(a, b, c), (a, c, b), (b, a, c),
                     (b, c, a), (c, a, b), (c, b, a)]
        for l0, l1, l2 in perms:
            pts.append((l1, l2))
            wts.append(w)
    return np.array(pts), 0.5 * np.array(wts)


def _subdivide_triangle_rule(pts, wts, s):
    # Uniform s-refinement: s*s congruent children of the reference
    # triangle, upright and inverted.
    sub_pts, sub_wts = [], []
    inv2 = 1.0 / (s * s)
    for j in range(s):
        for i in range(s - j):
            o = np.array([i, j]) / s
            sub_pts.append(o + pts / s)
            sub_wts.append(wts * inv2)
            if i + j < s - 1:
                # inverted child: corners (i+1,j), (i+1,j+1), (i,j+1)
                o = np.array([i + 1, j]) / s
                e1 = np.array([0.0, 1.0]) / s
                e2 = np.array([-1.0, 1.0]) / s
                sub_pts.append(o + np.outer(pts[:, 0], e1)
                               + np.outer(pts[:, 1], e2))
                sub_wts.append(wts * inv2)
    return np.vstack(sub_pts), np.concatenate(sub_wts)


def quadrature_rule(family, exactness, subdivision=1):
    """Build a quadrature rule on the reference interval or triangle.

    Parameters
    ----------
    family : {"interval", "triangle"}
    exactness : int
        Polynomial degree integrated exactly by the base rule.
    subdivision : int
        Composite refinement: each reference element is split into
        `subdivision` segments (1D) or subdivision**2 congruent
        triangles (2D) and the base rule is mapped onto each piece.

    Raises
    ------
    ValueError
        If no rule of the requested exactness is available.
    """
    if subdivision < 1:
        raise ValueError(f"subdivision must be >= 1, got {subdivision}")
    if family == "interval":
        npts = max(1, (exactness + 2) // 2)
        gx, gw = np.polynomial.legendre.leggauss(npts)
        pts = 0.5 * (gx + 1.0)
        wts = 0.5 * gw
        if subdivision > 1:
            s = subdivision
            pts = ((pts[None, :] + np.arange(s)[:, None]) / s).ravel()
            wts = np.tile(wts / s, s)
        return QuadratureRule(family, pts.reshape(-1, 1), wts,
                              2 * npts - 1, subdivision)
    if family == "triangle":
        table = [d for d in sorted(_TRI_RULES) if d >= exactness]
        if table:
            deg = table[0]
            pts, wts = _expand_tri_rule(_TRI_RULES[deg])
        else:
            pts, wts, deg = _conical_tri_rule(exactness)
        if subdivision > 1:
            pts, wts = _subdivide_triangle_rule(pts, wts, subdivision)
        return QuadratureRule(family, pts, wts, deg, subdivision)
    raise ValueError(f"unsupported element family {family!r}")


class FeSpace:
    """Continuous Lagrange space on a mesh.

    Attributes
    ----------
    mesh : Mesh1D or TriMesh
    degree : int
    role : {"state", "adjoint", "control"}
    ndof : int
    element_dofs : ndarray (num_elements, nloc)
        Global DOF indices per element, local ordering per
        ReferenceElement.
    dirichlet_dofs : ndarray
        Sorted global indices of DOFs on the Dirichlet boundary
        (empty for the control role).
    dof_coords : ndarray (ndof, dim)
        Lagrange node coordinates.
    """

    def __init__(self, mesh, degree, role, ndof, element_dofs,
                 dirichlet_dofs, dof_coords):
        self.mesh = mesh
        self.degree = degree
        self.role = role
        self.ndof = ndof
        self.element_dofs = element_dofs
        self.dirichlet_dofs = dirichlet_dofs
        self.dof_coords = dof_coords
        self.reference = ReferenceElement(
            "interval" if mesh.dim == 1 else "triangle", degree)

    @property
    def family(self):
        return self.reference.family


def make_space(mesh, degree, role=STATE):
    """Build a P1 or P2 Lagrange space with role-dependent constraints.

    State and adjoint spaces carry Dirichlet DOFs on the tagged
    Dirichlet boundary; the control space is unconstrained.
    """
    if degree not in (1, 2):
        raise ValueError(f"unsupported degree {degree}")
    if role not in (STATE, ADJOINT, CONTROL):
        raise ValueError(f"unknown role {role!r}")
    if mesh.dim == 1:
        return _make_space_1d(mesh, degree, role)
    return _make_space_2d(mesh, degree, role)


def _make_space_1d(mesh, degree, role):
    n = mesh.num_elements
    if degree == 1:
        ndof = n + 1
        eldofs = mesh.elements.copy()
        coords = mesh.nodes.reshape(-1, 1)
    else:
        ndof = 2 * n + 1
        eldofs = np.column_stack([mesh.elements, n + 1 + np.arange(n)])
        mids = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
        coords = np.concatenate([mesh.nodes, mids]).reshape(-1, 1)
    if role == CONTROL:
        dirichlet = np.array([], dtype=np.int64)
    else:
        dirichlet = np.array(sorted(i for i, tag in mesh.boundary_nodes
                                    if tag == meshmod.DIRICHLET),
                             dtype=np.int64)
    return FeSpace(mesh, degree, role, ndof, eldofs, dirichlet, coords)


def _make_space_2d(mesh, degree, role):
    nv = len(mesh.vertices)
    tris = mesh.triangles
    if degree == 1:
        ndof = nv
        eldofs = tris.copy()
        coords = mesh.vertices.copy()
        edge_ids = None
    else:
        edge_ids = {}
        mids = []
        eldofs = np.empty((len(tris), 6), dtype=np.int64)
        eldofs[:, :3] = tris
        locpairs = ((0, 1), (1, 2), (0, 2))
        for t, tri in enumerate(tris):
            for s, (a, b) in enumerate(locpairs):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                dof = edge_ids.get(key)
                if dof is None:
                    dof = nv + len(mids)
                    edge_ids[key] = dof
                    mids.append(0.5 * (mesh.vertices[key[0]]
                                       + mesh.vertices[key[1]]))
                eldofs[t, 3 + s] = dof
        ndof = nv + len(mids)
        coords = np.vstack([mesh.vertices, np.array(mids)])
    if role == CONTROL:
        dirichlet = np.array([], dtype=np.int64)
    else:
        dset = set()
        for edge in mesh.boundary_edges:
            if edge.tag != meshmod.DIRICHLET:
                continue
            dset.add(edge.v0)
            dset.add(edge.v1)
            if degree == 2:
                key = (min(edge.v0, edge.v1), max(edge.v0, edge.v1))
                dset.add(edge_ids[key])
        dirichlet = np.array(sorted(dset), dtype=np.int64)
    return FeSpace(mesh, degree, role, ndof, eldofs, dirichlet, coords)


def _geometry_batch(mesh):
    # (origin, jac, det, inv_jac) arrays over all elements; det scales
    # reference weights to physical ones in both dimensions.
    if mesh.dim == 1:
        xa = mesh.nodes[mesh.elements[:, 0]]
        xb = mesh.nodes[mesh.elements[:, 1]]
        length = xb - xa
        origin = xa.reshape(-1, 1)
        jac = length.reshape(-1, 1, 1)
        inv = (1.0 / length).reshape(-1, 1, 1)
        return origin, jac, length, inv
    p, jac, det, inv = meshmod.geometry_arrays(mesh)
    return p[:, 0, :], jac, det, inv


class MappedBasis:
    """Basis data at quadrature points of every element.

    Fields: x (ne, q, dim) physical points; w (ne, q) physical weights;
    val (q, nloc) basis values; grad (ne, q, nloc, dim) physical
    gradients; lap (ne, nloc) physical Laplacians (constant per
    element under affine maps).
    """

    __slots__ = ("x", "w", "val", "grad", "lap")

    def __init__(self, x, w, val, grad, lap):
        self.x = x
        self.w = w
        self.val = val
        self.grad = grad
        self.lap = lap


def mapped_basis_all(space, rule):
    """Evaluate the mapped basis on all elements at once."""
    ref = space.reference
    N, dN, d2N = ref.eval(rule.points)
    origin, jac, det, inv = _geometry_batch(space.mesh)
    x = origin[:, None, :] + np.einsum("qd,ted->tqe", rule.points, jac)
    w = np.abs(det)[:, None] * rule.weights[None, :]
    grad = np.einsum("qkd,tde->tqke", dN, inv)
    g2 = np.einsum("tde,tfe->tdf", inv, inv)
    lap = np.einsum("kdf,tdf->tk", d2N, g2)
    return MappedBasis(x, w, N, grad, lap)


def eval_mapped_basis(space, e, rule):
    """Basis values, physical gradients, and physical Laplacians on
    element e at the rule's points.

    Returns (values (q, nloc), gradients (q, nloc, dim),
    laplacians (q, nloc)).
    """
    geo = meshmod.element_geometry(space.mesh, e)
    ref = space.reference
    N, dN, d2N = ref.eval(rule.points)
    grad = np.einsum("qkd,de->qke", dN, geo.inv_jac)
    g2 = geo.inv_jac @ geo.inv_jac.T
    lap = np.einsum("kdf,df->k", d2N, g2)
    q = len(rule.points)
    return N, grad, np.broadcast_to(lap, (q, ref.nloc)).copy()


def interpolate(space, fn):
    """Coefficients of the Lagrange interpolant of fn."""
    return np.asarray(fn(space.dof_coords), dtype=float)
