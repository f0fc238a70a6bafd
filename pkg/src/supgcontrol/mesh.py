"""Interval meshes and structured triangulations with boundary tagging.

Two mesh families are supported: uniform partitions of an interval and
structured triangulations of an axis-aligned rectangle obtained by
splitting each grid square along its lower-left to upper-right diagonal.
Boundary parts are tagged Dirichlet or Neumann through a user-supplied
predicate evaluated at edge midpoints.
"""

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class Mesh1D:
    """Uniform partition of an interval [a, b] into n elements.

    Attributes
    ----------
    nodes : ndarray, shape (n+1,)
        Strictly increasing node coordinates.
    elements : ndarray, shape (n, 2)
        Node index pairs, left to right.
    h : float
        Uniform element length (b - a)/n.
    boundary_nodes : list of (int, str)
        Endpoint node indices with their tags; both Dirichlet.
    """

    dim = 1

    def __init__(self, nodes, elements, h, boundary_nodes):
        self.nodes = nodes
        self.elements = elements
        self.h = h
        self.boundary_nodes = boundary_nodes

    @property
    def num_elements(self):
        return len(self.elements)


class BoundaryEdge:
    """One tagged boundary edge, oriented with the domain on its left."""

    __slots__ = ("v0", "v1", "tag", "triangle")

    def __init__(self, v0, v1, tag, triangle):
        self.v0 = v0
        self.v1 = v1
        self.tag = tag
        self.triangle = triangle


class TriMesh:
    """Structured triangulation of a rectangle.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    triangles : ndarray, shape (nt, 3)
        Vertex index triples, counter-clockwise.
    boundary_edges : list of BoundaryEdge
        Ordered lexicographically by (min vertex, max vertex).
    h : float
        Grid parameter: the side length of the subdivided squares
        (the larger of the two if hx != hy). Used as the element size
        h_e in stabilization formulas; the circumscribed-circle radius
        is available from element_geometry as an alternative.
    """

    dim = 2

    def __init__(self, vertices, triangles, boundary_edges, h):
        self.vertices = vertices
        self.triangles = triangles
        self.boundary_edges = boundary_edges
        self.h = h

    @property
    def num_elements(self):
        return len(self.triangles)


class ElementGeometry:
    """Affine map data for one element.

    The map is x = origin + jac @ xhat with xhat in the reference
    element ([0,1] or the unit right triangle).
    """

    __slots__ = ("origin", "jac", "inv_jac", "measure", "h_e", "circumradius")

    def __init__(self, origin, jac, inv_jac, measure, h_e, circumradius):
        self.origin = origin
        self.jac = jac
        self.inv_jac = inv_jac
        self.measure = measure
        self.h_e = h_e
        self.circumradius = circumradius


def build_interval_mesh(a, b, n):
    """Build a uniform mesh of [a, b] with n elements.

    Endpoint nodes are tagged Dirichlet.
    """
    if n < 1:
        raise ValueError(f"need at least one element, got n={n}")
    if not a < b:
        raise ValueError(f"empty interval: a={a}, b={b}")
    nodes = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    h = (b - a) / n
    boundary = [(0, DIRICHLET), (n, DIRICHLET)]
    return Mesh1D(nodes, elements, h, boundary)


def tag_all_dirichlet(midpoint):
    """Boundary tagger marking every edge Dirichlet."""
    return DIRICHLET


def build_structured_tri_mesh(rect, nx, ny, tagger):
    """Triangulate rect = (x0, x1, y0, y1) into 2*nx*ny triangles.

    The rectangle is divided into nx-by-ny squares; each square is
    split along its lower-left to upper-right diagonal into the two
    counter-clockwise triangles (v00, v10, v11) and (v00, v11, v01).
    Vertex ids are row-major: vid(i, j) = j*(nx+1) + i.

    Parameters
    ----------
    rect : tuple (x0, x1, y0, y1)
    nx, ny : int
        Squares per direction, both >= 1.
    tagger : callable
        Maps an edge midpoint (ndarray of shape (2,)) to DIRICHLET or
        NEUMANN. Must classify every boundary edge.
    """
    x0, x1, y0, y1 = rect
    if nx < 1 or ny < 1:
        raise ValueError(f"need positive cell counts, got nx={nx}, ny={ny}")
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate rectangle {rect}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    t = 0
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris[t] = (v00, v10, v11)
            tris[t + 1] = (v00, v11, v01)
            t += 2

    boundary_edges = _tag_boundary_edges(vertices, tris, tagger)
    h = max((x1 - x0) / nx, (y1 - y0) / ny)
    return TriMesh(vertices, tris, boundary_edges, h)


def _tag_boundary_edges(vertices, tris, tagger):
    # Edges seen once belong to the boundary; keep the orientation of
    # the owning triangle's traversal so the domain lies on the left.
    seen = {}
    for t, tri in enumerate(tris):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            if key in seen:
                seen[key] = None
            else:
                seen[key] = (int(a), int(b), t)
    edges = []
    for key in sorted(k for k, v in seen.items() if v is not None):
        a, b, t = seen[key]
        mid = 0.5 * (vertices[a] + vertices[b])
        tag = tagger(mid)
        if tag not in (DIRICHLET, NEUMANN):
            raise ValueError(f"edge ({a}, {b}) untagged: tagger returned {tag!r}")
        edges.append(BoundaryEdge(a, b, tag, t))
    return edges


def edge_outward_normal(mesh, edge):
    """Unit outward normal of a boundary edge (2D)."""
    t = mesh.vertices[edge.v1] - mesh.vertices[edge.v0]
    n = np.array([t[1], -t[0]])
    return n / np.linalg.norm(n)


def element_geometry(mesh, e):
    """Affine geometry of element e; raises IndexError when out of range."""
    if mesh.dim == 1:
        if not 0 <= e < len(mesh.elements):
            raise IndexError(f"element index {e} out of range")
        ia, ib = mesh.elements[e]
        xa, xb = mesh.nodes[ia], mesh.nodes[ib]
        length = xb - xa
        return ElementGeometry(
            origin=np.array([xa]),
            jac=np.array([[length]]),
            inv_jac=np.array([[1.0 / length]]),
            measure=length,
            h_e=length,
            circumradius=0.5 * length,
        )
    if not 0 <= e < len(mesh.triangles):
        raise IndexError(f"element index {e} out of range")
    p = mesh.vertices[mesh.triangles[e]]
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    inv_jac = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    a = np.linalg.norm(p[1] - p[0])
    b = np.linalg.norm(p[2] - p[1])
    c = np.linalg.norm(p[0] - p[2])
    circum = a * b * c / (2.0 * abs(det))
    return ElementGeometry(
        origin=p[0].copy(),
        jac=jac,
        inv_jac=inv_jac,
        measure=0.5 * abs(det),
        h_e=mesh.h,
        circumradius=circum,
    )


def geometry_arrays(mesh):
    """Vectorized geometry for all triangles of a TriMesh.

    Returns (corners, jac, det, inv_jac) with shapes (nt, 3, 2),
    (nt, 2, 2), (nt,), (nt, 2, 2). jac columns are the edge vectors
    from the first corner; det is twice the signed area.
    """
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1] / det
    inv[:, 0, 1] = -jac[:, 0, 1] / det
    inv[:, 1, 0] = -jac[:, 1, 0] / det
    inv[:, 1, 1] = jac[:, 0, 0] / det
    return p, jac, det, inv


def dump_mesh(mesh, stream):
    """Write a plain-text mesh dump.

    Format (2D): a `dim` line, then a `vertices <count>` section with
    `index x y` rows, a `triangles <count>` section with
    `index v0 v1 v2` rows, and a `boundary_edges <count>` section with
    `v0 v1 tag` rows. 1D uses `nodes`, `elements`, `boundary_nodes`
    sections. All sections are ordered by index; coordinates carry 17
    significant digits.
    """
    w = stream.write
    if mesh.dim == 1:
        w("dim 1\n")
        w(f"nodes {len(mesh.nodes)}\n")
        for i, x in enumerate(mesh.nodes):
            w(f"{i} {x:.17g}\n")
        w(f"elements {len(mesh.elements)}\n")
        for i, (a, b) in enumerate(mesh.elements):
            w(f"{i} {a} {b}\n")
        w(f"boundary_nodes {len(mesh.boundary_nodes)}\n")
        for i, tag in mesh.boundary_nodes:
            w(f"{i} {tag}\n")
        return
    w("dim 2\n")
    w(f"vertices {len(mesh.vertices)}\n")
    for i, (x, y) in enumerate(mesh.vertices):
        w(f"{i} {x:.17g} {y:.17g}\n")
    w(f"triangles {len(mesh.triangles)}\n")
    for i, (a, b, c) in enumerate(mesh.triangles):
        w(f"{i} {a} {b} {c}\n")
    w(f"boundary_edges {len(mesh.boundary_edges)}\n")
    for edge in mesh.boundary_edges:
        w(f"{edge.v0} {edge.v1} {edge.tag}\n")
