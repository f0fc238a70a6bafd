"""Optimal-control problem instances and manufactured solutions.

A problem couples the state equation

    -eps * lap(y) + c . grad(y) + r * y = f + u   in Omega,
    y = d on the Dirichlet boundary,  eps * dy/dn = g on the Neumann part,

with the tracking objective 0.5*||y - yhat||^2 + 0.5*omega*||u||^2.
The adjoint equation reverses the advection:

    -eps * lap(lam) - c . grad(lam) + (r - div c) * lam = -(y - yhat),

with lam = 0 on the Dirichlet boundary, and the optimal control satisfies
lam = omega * u. manufacture() closes the data (f, yhat, d, g) around a
prescribed exact pair (y, lam) so the whole optimality system holds.

All scalar fields take points of shape (..., dim); the velocity c
returns shape (..., dim).
"""

import numpy as np

from .mesh import (DIRICHLET, NEUMANN, build_interval_mesh,
                   build_structured_tri_mesh)


class ScalarField:
    """A scalar function bundled with its gradient and Laplacian."""

    __slots__ = ("value", "gradient", "laplacian")

    def __init__(self, value, gradient, laplacian):
        self.value = value
        self.gradient = gradient
        self.laplacian = laplacian

    def __call__(self, x):
        return self.value(x)


class ExactTriple:
    """Exact optimal (y, u, lam) with derivatives for error norms."""

    __slots__ = ("y", "lam", "u", "omega")

    def __init__(self, y, lam, omega):
        self.y = y
        self.lam = lam
        self.omega = omega
        self.u = lambda x: lam.value(x) / omega


class Domain:
    """Interval (a, b) or axis-aligned rectangle (x0, x1, y0, y1)."""

    def __init__(self, kind, bounds):
        if kind not in ("interval", "rectangle"):
            raise ValueError(f"unknown domain kind {kind!r}")
        self.kind = kind
        self.bounds = tuple(float(v) for v in bounds)

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    def measure(self):
        if self.kind == "interval":
            a, b = self.bounds
            return b - a
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    def boundary_samples(self, per_side=100):
        """Sample points and unit outward normals along the boundary."""
        if self.kind == "interval":
            a, b = self.bounds
            pts = np.array([[a], [b]])
            normals = np.array([[-1.0], [1.0]])
            return pts, normals
        x0, x1, y0, y1 = self.bounds
        tx = np.linspace(x0, x1, per_side)
        ty = np.linspace(y0, y1, per_side)
        pts, normals = [], []
        for xs, ys, n in (
                (tx, np.full_like(tx, y0), (0.0, -1.0)),
                (tx, np.full_like(tx, y1), (0.0, 1.0)),
                (np.full_like(ty, x0), ty, (-1.0, 0.0)),
                (np.full_like(ty, x1), ty, (1.0, 0.0))):
            pts.append(np.column_stack([xs, ys]))
            normals.append(np.tile(n, (per_side, 1)))
        return np.vstack(pts), np.vstack(normals)

    def interior_samples(self, count, seed=1234):
        rng = np.random.default_rng(seed)
        if self.kind == "interval":
            a, b = self.bounds
            return (a + (b - a) * rng.random(count)).reshape(-1, 1)
        x0, x1, y0, y1 = self.bounds
        return np.column_stack([x0 + (x1 - x0) * rng.random(count),
                                y0 + (y1 - y0) * rng.random(count)])


class ProblemData:
    """Coefficients, data, and boundary partition of one problem.

    Fields f, yhat, d are scalar fields of points; g takes (points,
    normals). boundary_tagger classifies edge midpoints (2D); 1D
    problems have Dirichlet endpoints. r0 is the reaction lower bound
    used in the stability norm (zero for all built-in examples).
    """

    def __init__(self, eps, omega, c, div_c, r, f, yhat, d, g,
                 domain, boundary_tagger, r0=0.0):
        if eps <= 0 or omega <= 0:
            raise ValueError("eps and omega must be positive")
        self.eps = eps
        self.omega = omega
        self.c = c
        self.div_c = div_c
        self.r = r
        self.f = f
        self.yhat = yhat
        self.d = d
        self.g = g
        self.domain = domain
        self.boundary_tagger = boundary_tagger
        self.r0 = r0

    def mesh_at(self, h):
        """Build the mesh for grid parameter h (must divide the sides)."""
        if self.domain.kind == "interval":
            a, b = self.domain.bounds
            n = round((b - a) / h)
            if abs(n * h - (b - a)) > 1e-9 * (b - a):
                raise ValueError(f"h={h} does not divide the interval")
            return build_interval_mesh(a, b, n)
        x0, x1, y0, y1 = self.domain.bounds
        nx = round((x1 - x0) / h)
        ny = round((y1 - y0) / h)
        if (abs(nx * h - (x1 - x0)) > 1e-9 * (x1 - x0)
                or abs(ny * h - (y1 - y0)) > 1e-9 * (y1 - y0)):
            raise ValueError(f"h={h} does not divide the rectangle sides")
        return build_structured_tri_mesh((x0, x1, y0, y1), nx, ny,
                                         self.boundary_tagger)


def manufacture(y_field, lam_field, eps, omega, c, div_c, r,
                domain, boundary_tagger, r0=0.0):
    """Close the problem data around a prescribed exact pair.

    Generates f from the state equation, yhat from the adjoint
    equation, d = y on the Dirichlet part, and g = eps * dy/dn on the
    Neumann part. The exact control is u = lam/omega.

    Raises
    ------
    ValueError
        If lam violates its homogeneous Dirichlet condition beyond
        1e-10 at boundary samples.
    """
    pts, normals = domain.boundary_samples()
    if domain.dim == 1:
        on_dirichlet = np.ones(len(pts), dtype=bool)
    else:
        tags = np.array([boundary_tagger(p) for p in pts])
        on_dirichlet = tags == DIRICHLET
    lam_bnd = np.abs(np.asarray(lam_field.value(pts[on_dirichlet])))
    if lam_bnd.size and lam_bnd.max() > 1e-10:
        raise ValueError(
            "adjoint exact solution is nonzero on the Dirichlet boundary "
            f"(max {lam_bnd.max():.3e})")

    def u_ex(x):
        return lam_field.value(x) / omega

    def f(x):
        adv = np.sum(c(x) * y_field.gradient(x), axis=-1)
        return (-eps * y_field.laplacian(x) + adv
                + r(x) * y_field.value(x) - u_ex(x))

    def yhat(x):
        adv = np.sum(c(x) * lam_field.gradient(x), axis=-1)
        return (y_field.value(x) - eps * lam_field.laplacian(x) - adv
                + (r(x) - div_c(x)) * lam_field.value(x))

    def g(x, n):
        return eps * np.sum(y_field.gradient(x) * n, axis=-1)

    data = ProblemData(eps, omega, c, div_c, r, f, yhat,
                       d=y_field.value, g=g, domain=domain,
                       boundary_tagger=boundary_tagger, r0=r0)
    exact = ExactTriple(y_field, lam_field, omega)
    return data, exact


def strong_residuals(problem, exact, points):
    """Pointwise residuals of the state and adjoint strong forms."""
    c = problem.c(points)
    y, lam = exact.y, exact.lam
    state = (-problem.eps * y.laplacian(points)
             + np.sum(c * y.gradient(points), axis=-1)
             + problem.r(points) * y.value(points)
             - problem.f(points) - exact.u(points))
    adjoint = (-problem.eps * lam.laplacian(points)
               - np.sum(c * lam.gradient(points), axis=-1)
               + (problem.r(points) - problem.div_c(points))
               * lam.value(points)
               + (y.value(points) - problem.yhat(points)))
    return state, adjoint


def _zero(x):
    return np.zeros(np.asarray(x).shape[:-1])


def _layer_pair(eps):
    # The two 1D profiles with outflow boundary layers of width eps:
    # eta for the state (layer at z=1), mu for the adjoint (layer at
    # z=0). Exponential arguments stay <= 0 so nothing overflows.
    den = 1.0 - np.exp(-1.0 / eps)

    def eta(z):
        return z - (np.exp((z - 1.0) / eps) - np.exp(-1.0 / eps)) / den

    def deta(z):
        return 1.0 - np.exp((z - 1.0) / eps) / (eps * den)

    def d2eta(z):
        return -np.exp((z - 1.0) / eps) / (eps * eps * den)

    def mu(z):
        return 1.0 - z - (np.exp(-z / eps) - np.exp(-1.0 / eps)) / den

    def dmu(z):
        return -1.0 + np.exp(-z / eps) / (eps * den)

    def d2mu(z):
        return -np.exp(-z / eps) / (eps * eps * den)

    return (eta, deta, d2eta), (mu, dmu, d2mu)


def example1(eps=0.0025, omega=1.0):
    """1D problem on (0,1) with c = 1, r = 0, Dirichlet endpoints.

    The exact state has a boundary layer at x = 1, the exact adjoint
    at x = 0 (the adjoint advection runs backwards).
    """
    if eps <= 0 or omega <= 0:
        raise ValueError("eps and omega must be positive")
    (eta, deta, d2eta), (mu, dmu, d2mu) = _layer_pair(eps)
    y_field = ScalarField(
        value=lambda x: eta(x[..., 0]),
        gradient=lambda x: deta(x[..., 0])[..., None],
        laplacian=lambda x: d2eta(x[..., 0]))
    lam_field = ScalarField(
        value=lambda x: mu(x[..., 0]),
        gradient=lambda x: dmu(x[..., 0])[..., None],
        laplacian=lambda x: d2mu(x[..., 0]))

    def c(x):
        return np.ones(np.asarray(x).shape[:-1] + (1,))

    domain = Domain("interval", (0.0, 1.0))
    return manufacture(y_field, lam_field, eps, omega, c, _zero, _zero,
                       domain, boundary_tagger=None)


def _example2_tagger(mid):
    if abs(mid[1]) < 1e-12 and 0.0 < mid[0] < 1.0:
        return NEUMANN
    return DIRICHLET


def example2():
    """2D problem on (-1,1) x (0,1) with a rotating velocity field.

    eps = 1e-5, omega = 1e-2, c = (2*x2*(1-x1^2), -2*x1*(1-x2^2)),
    r = 0. The outflow segment (0,1) x {0} is Neumann; the rest of the
    boundary is Dirichlet with the (nonzero) trace of the exact state.
    The exact state is a steep circular front at radius 1/2,
    y = 1 + tanh(10*(1 - 2*rho)); the exact adjoint is the polynomial
    (x1^2 - 1) * x2^2 * (x2 - 1), which vanishes on the whole boundary.
    """
    eps, omega = 1e-5, 1e-2
    amp = 10.0

    def y_val(x):
        rho = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)
        return 1.0 + np.tanh(amp * (1.0 - 2.0 * rho))

    def y_grad(x):
        rho = np.maximum(np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2), 1e-300)
        s = 1.0 / np.cosh(amp * (1.0 - 2.0 * rho)) ** 2
        fac = -2.0 * amp * s / rho
        return np.stack([fac * x[..., 0], fac * x[..., 1]], axis=-1)

    def y_lap(x):
        # radial: y'' + y'/rho; the 1/rho singularity at the origin is
        # integrable and never hits a quadrature point exactly
        rho = np.maximum(np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2), 1e-300)
        t = np.tanh(amp * (1.0 - 2.0 * rho))
        s = 1.0 - t * t
        return -8.0 * amp * amp * s * t - 2.0 * amp * s / rho

    def lam_val(x):
        x1, x2 = x[..., 0], x[..., 1]
        return (x1 * x1 - 1.0) * x2 * x2 * (x2 - 1.0)

    def lam_grad(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([2.0 * x1 * x2 * x2 * (x2 - 1.0),
                         (x1 * x1 - 1.0) * (3.0 * x2 * x2 - 2.0 * x2)],
                        axis=-1)

    def lam_lap(x):
        x1, x2 = x[..., 0], x[..., 1]
        return 2.0 * x2 * x2 * (x2 - 1.0) + (x1 * x1 - 1.0) * (6.0 * x2 - 2.0)

    def c(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([2.0 * x2 * (1.0 - x1 * x1),
                         -2.0 * x1 * (1.0 - x2 * x2)], axis=-1)

    y_field = ScalarField(y_val, y_grad, y_lap)
    lam_field = ScalarField(lam_val, lam_grad, lam_lap)
    domain = Domain("rectangle", (-1.0, 1.0, 0.0, 1.0))
    return manufacture(y_field, lam_field, eps, omega, c, _zero, _zero,
                       domain, boundary_tagger=_example2_tagger)


def example3():
    """2D problem on the unit square with diagonal constant advection.

    eps = 1e-2, omega = 1, c = (cos 45deg, sin 45deg), r = 0, Dirichlet
    everywhere. Exact state and adjoint are tensor products of the 1D
    layer profiles, with layers along the outflow and inflow corners.
    """
    eps, omega = 1e-2, 1.0
    (eta, deta, d2eta), (mu, dmu, d2mu) = _layer_pair(eps)

    def y_val(x):
        return eta(x[..., 0]) * eta(x[..., 1])

    def y_grad(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([deta(x1) * eta(x2), eta(x1) * deta(x2)], axis=-1)

    def y_lap(x):
        x1, x2 = x[..., 0], x[..., 1]
        return d2eta(x1) * eta(x2) + eta(x1) * d2eta(x2)

    def lam_val(x):
        return mu(x[..., 0]) * mu(x[..., 1])

    def lam_grad(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([dmu(x1) * mu(x2), mu(x1) * dmu(x2)], axis=-1)

    def lam_lap(x):
        x1, x2 = x[..., 0], x[..., 1]
        return d2mu(x1) * mu(x2) + mu(x1) * d2mu(x2)

    cvec = np.array([np.cos(np.pi / 4), np.sin(np.pi / 4)])

    def c(x):
        return np.broadcast_to(cvec, np.asarray(x).shape[:-1] + (2,)).copy()

    y_field = ScalarField(y_val, y_grad, y_lap)
    lam_field = ScalarField(lam_val, lam_grad, lam_lap)
    domain = Domain("rectangle", (0.0, 1.0, 0.0, 1.0))

    def tagger(mid):
        return DIRICHLET

    return manufacture(y_field, lam_field, eps, omega, c, _zero, _zero,
                       domain, boundary_tagger=tagger)


EXAMPLES = {1: example1, 2: example2, 3: example3}
