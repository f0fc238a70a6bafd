import numpy as np
import pytest
import scipy.sparse as sp

from supgcontrol import assembly, fem, kkt, mesh, problem


def diffusion_problem_1d(eps=1.0):
    """Pure diffusion on (0,1): c = 0, r = 0."""
    domain = problem.Domain("interval", (0.0, 1.0))
    zero_vec = lambda x: np.zeros_like(x)
    return problem.ProblemData(
        eps=eps, omega=1.0, c=zero_vec, div_c=problem._zero,
        r=problem._zero, f=problem._zero, yhat=problem._zero,
        d=problem._zero, g=None, domain=domain, boundary_tagger=None)


def advection_problem_1d(eps=1e-8):
    domain = problem.Domain("interval", (0.0, 1.0))
    return problem.ProblemData(
        eps=eps, omega=1.0, c=lambda x: np.ones_like(x),
        div_c=problem._zero, r=problem._zero, f=problem._zero,
        yhat=problem._zero, d=problem._zero, g=None, domain=domain,
        boundary_tagger=None)


def spaces_1d(data, n, degree=1):
    m = data.mesh_at(1.0 / n)
    y = fem.make_space(m, degree, role=fem.STATE)
    u = fem.make_space(m, degree, role=fem.CONTROL)
    return y, u


ZERO_STAB = assembly.StabilizationConfig(assembly.ZERO)


def test_1d_stiffness_matrix():
    data = diffusion_problem_1d()
    y, u = spaces_1d(data, 4)
    a_s, b_s, f_s, n_g = assembly.assemble_state_supg((y, u), data,
                                                      ZERO_STAB)
    expected = 4.0 * (np.diag(2.0 * np.ones(5)) - np.diag(np.ones(4), 1)
                      - np.diag(np.ones(4), -1))
    expected[0, 0] = expected[4, 4] = 4.0
    np.testing.assert_allclose(a_s.toarray(), expected, atol=1e-12)


def test_1d_mass_matrix():
    data = diffusion_problem_1d()
    y, u = spaces_1d(data, 1)
    m = assembly.assemble_mass(y, y).toarray()
    h = 1.0
    np.testing.assert_allclose(m, h / 6.0 * np.array([[2.0, 1.0],
                                                      [1.0, 2.0]]),
                               atol=1e-14)


def test_control_coupling_is_negative_mass():
    data = diffusion_problem_1d()
    y, u = spaces_1d(data, 3)
    _, b_s, _, _ = assembly.assemble_state_supg((y, u), data, ZERO_STAB)
    m = assembly.assemble_mass(y, u)
    np.testing.assert_allclose(b_s.toarray(), -m.toarray(), atol=1e-14)


def test_single_element_supg_block():
    # pure advection, one P1 element: the streamline term adds
    # tau * c^2 * int y' v' = (tau/h) [[1,-1],[-1,1]]
    data = advection_problem_1d()
    y, u = spaces_1d(data, 1)
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    a_plain, _, _, _ = assembly.assemble_state_supg((y, u), data, ZERO_STAB)
    a_supg, _, _, _ = assembly.assemble_state_supg((y, u), data, stab)
    taus = assembly.element_taus(data, y, stab)
    extra = (a_supg - a_plain).toarray()
    np.testing.assert_allclose(
        extra, taus[0] * np.array([[1.0, -1.0], [-1.0, 1.0]]), rtol=1e-12)


def test_tau_standard_branches():
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    # advective regime: Pe = 20 at h=0.1, c=1, eps=0.0025
    assert assembly.tau(stab, 0.0025, 1.0, 0.1, 1) == pytest.approx(0.05)
    # diffusive regime: Pe = 0.2 at h=0.001
    assert assembly.tau(stab, 0.0025, 1.0, 0.001, 1) == pytest.approx(
        1e-6 / 0.01)
    # switch point is Pe = 1 exactly
    h_star = 2 * 0.0025
    assert assembly.tau(stab, 0.0025, 1.0, h_star, 1) == pytest.approx(
        h_star ** 2 / (4 * 0.0025))


def test_tau_quadratic_rescale():
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    t1 = assembly.tau(stab, 0.0025, 1.0, 0.1, 2)
    assert t1 == pytest.approx(0.025)  # h -> h/2
    keep = assembly.StabilizationConfig(assembly.STANDARD,
                                        rescale_quadratic=False)
    assert assembly.tau(keep, 0.0025, 1.0, 0.1, 2) == pytest.approx(0.05)


def test_tau_general_policy():
    stab = assembly.StabilizationConfig(assembly.GENERAL, tau1=0.5,
                                        tau2=0.25)
    assert assembly.tau(stab, 0.0025, 1.0, 0.1, 1) == pytest.approx(0.025)
    assert assembly.tau(stab, 1.0, 1.0, 0.1, 1) == pytest.approx(
        0.5 * 0.01 / 1.0)
    with pytest.raises(ValueError):
        assembly.StabilizationConfig(assembly.GENERAL, tau1=0.5)


def test_tau_coth_policy():
    stab = assembly.StabilizationConfig(assembly.COTH)
    got = assembly.tau(stab, 0.0025, 1.0, 0.1, 1)
    pe = 20.0
    assert got == pytest.approx(0.05 * (1.0 / np.tanh(pe) + 1.0 / pe))
    with pytest.raises(ValueError):
        assembly.tau(stab, 0.0025, 1.0, 0.1, 1, dim=2)
    with pytest.raises(ValueError):
        assembly.tau(stab, 0.0025, 0.0, 0.1, 1)


def test_tau_zero_policy_is_exact_zero():
    taus = assembly.tau(ZERO_STAB, 0.0025, np.ones(5), np.full(5, 0.1), 1)
    assert np.all(taus == 0.0)


def test_stab_config_validation():
    with pytest.raises(ValueError):
        assembly.StabilizationConfig("upwind")
    with pytest.raises(ValueError):
        assembly.StabilizationConfig(assembly.STANDARD, role="control")


def sd_norm_squared(data, space, coefs, taus):
    rule = fem.quadrature_rule(space.family, 8)
    basis = fem.mapped_basis_all(space, rule)
    el = coefs[space.element_dofs]
    grads = np.einsum("tqkd,tk->tqd", basis.grad, el)
    vals = np.einsum("qk,tk->tq", basis.val, el)
    cq = data.c(basis.x)
    stream = np.einsum("tqd,tqd->tq", cq, grads)
    return (data.eps * np.sum(basis.w * np.sum(grads ** 2, axis=-1))
            + data.r0 * np.sum(basis.w * vals ** 2)
            + np.sum(taus * np.sum(basis.w * stream ** 2, axis=1)))


@pytest.mark.parametrize("example_id,degree", [(1, 1), (1, 2), (3, 1),
                                               (3, 2)])
def test_supg_coercivity_on_free_dofs(example_id, degree):
    # v^T A_s v >= 1/2 ||v||_SD^2 for functions vanishing on the
    # Dirichlet boundary (the boundary advection term drops out there)
    data, _ = problem.EXAMPLES[example_id]()
    m = data.mesh_at(0.1)
    y = fem.make_space(m, degree, role=fem.STATE)
    u = fem.make_space(m, degree, role=fem.CONTROL)
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    a_s, _, _, _ = assembly.assemble_state_supg((y, u), data, stab)
    taus = assembly.element_taus(data, y, stab)
    free = np.setdiff1d(np.arange(y.ndof), y.dirichlet_dofs)
    rng = np.random.default_rng(42)
    for _ in range(100):
        v = np.zeros(y.ndof)
        v[free] = rng.standard_normal(len(free))
        quad = v @ (a_s @ v)
        sd2 = sd_norm_squared(data, y, v, taus)
        assert quad >= 0.5 * sd2 - 1e-10 * abs(quad)


@pytest.mark.parametrize("example_id", [1, 2, 3])
def test_zero_stab_adjoint_is_exact_transpose(example_id):
    data, _ = problem.EXAMPLES[example_id]()
    m = data.mesh_at(0.1)
    y = fem.make_space(m, 1, role=fem.STATE)
    u = fem.make_space(m, 1, role=fem.CONTROL)
    l = fem.make_space(m, 1, role=fem.ADJOINT)
    zero_adj = assembly.StabilizationConfig(assembly.ZERO, role=fem.ADJOINT)
    a_s, _, _, _ = assembly.assemble_state_supg((y, u), data, ZERO_STAB)
    a_a, _ = assembly.assemble_adjoint_supg_otd((l, y), data, zero_adj)
    diff = (a_a - a_s.T).toarray()
    scale = np.abs(a_s.toarray()).max()
    assert np.abs(diff).max() <= 1e-14 * scale


@pytest.mark.parametrize("example_id", [1, 3])
def test_p1_supg_adjoint_is_transpose(example_id):
    # with r = 0 and div c = 0 the P1 streamline terms coincide and the
    # discrete adjoint equals the transposed state operator exactly
    data, _ = problem.EXAMPLES[example_id]()
    m = data.mesh_at(0.1)
    y = fem.make_space(m, 1, role=fem.STATE)
    u = fem.make_space(m, 1, role=fem.CONTROL)
    l = fem.make_space(m, 1, role=fem.ADJOINT)
    stab_s = assembly.StabilizationConfig(assembly.STANDARD)
    stab_a = assembly.StabilizationConfig(assembly.STANDARD,
                                          role=fem.ADJOINT)
    a_s, _, _, _ = assembly.assemble_state_supg((y, u), data, stab_s)
    a_a, _ = assembly.assemble_adjoint_supg_otd((l, y), data, stab_a)
    diff = np.abs((a_a - a_s.T).toarray()).max()
    scale = np.abs(a_s.toarray()).max()
    assert diff <= 1e-13 * scale


def test_p2_supg_adjoint_differs_from_transpose():
    # the second-derivative stabilization terms enter the two forms
    # with opposite signs, so quadratics expose a genuine gap
    data, _ = problem.example1()
    m = data.mesh_at(0.1)
    y = fem.make_space(m, 2, role=fem.STATE)
    u = fem.make_space(m, 2, role=fem.CONTROL)
    l = fem.make_space(m, 2, role=fem.ADJOINT)
    stab_s = assembly.StabilizationConfig(assembly.STANDARD)
    stab_a = assembly.StabilizationConfig(assembly.STANDARD,
                                          role=fem.ADJOINT)
    a_s, _, _, _ = assembly.assemble_state_supg((y, u), data, stab_s)
    a_a, _ = assembly.assemble_adjoint_supg_otd((l, y), data, stab_a)
    assert np.abs((a_a - a_s.T).toarray()).max() > 1e-8


def test_supg_strong_consistency():
    # for a polynomial state the stabilized bilinear form equals the
    # strongly-weighted load on interior test functions
    data, _ = problem.example3()
    m = data.mesh_at(0.25)
    y = fem.make_space(m, 2, role=fem.STATE)
    u = fem.make_space(m, 2, role=fem.CONTROL)
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    a_s, _, _, _ = assembly.assemble_state_supg((y, u), data, stab)

    def y_poly(x):
        x1, x2 = x[..., 0], x[..., 1]
        return 1.0 + 2 * x1 - x2 + 0.5 * x1 * x2 + x1 ** 2

    def f_strong(x):
        x1, x2 = x[..., 0], x[..., 1]
        lap = 2.0
        gx = 2.0 + 0.5 * x2 + 2 * x1
        gy = -1.0 + 0.5 * x1
        c = np.sqrt(0.5)
        return -data.eps * lap + c * gx + c * gy

    coefs = fem.interpolate(y, y_poly)
    rhs = assembly.assemble_load(y, f_strong, data, stab, direction=1.0)
    free = np.setdiff1d(np.arange(y.ndof), y.dirichlet_dofs)
    resid = (a_s @ coefs - rhs)[free]
    assert np.abs(resid).max() <= 1e-10


def test_velocity_bound_dominates_dense_sampling():
    data, _ = problem.example2()
    m = data.mesh_at(0.25)
    rng = np.random.default_rng(3)
    for e in (0, 7, m.num_elements - 1):
        bound = assembly.element_velocity_bound(data.c, m, e)
        corners = m.vertices[m.triangles[e]]
        bary = rng.dirichlet(np.ones(3), size=2000)
        pts = bary @ corners
        dense = np.linalg.norm(data.c(pts), axis=-1).max()
        assert bound >= dense - 1e-3 * max(dense, 1.0)


def test_element_taus_shape_and_branch():
    data, _ = problem.example1()
    m = data.mesh_at(0.1)
    y = fem.make_space(m, 1)
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    taus = assembly.element_taus(data, y, stab)
    assert taus.shape == (10,)
    np.testing.assert_allclose(taus, 0.05)


def test_example2_neumann_flux_vanishes():
    # the exact state's normal derivative is identically zero on the
    # outflow segment (the gradient carries an x2 factor), so the
    # boundary load must be exactly zero
    data, exact = problem.example2()
    m = data.mesh_at(0.2)
    y = fem.make_space(m, 1)
    n_g = assembly.assemble_neumann_load(y, data)
    assert np.all(n_g == 0.0)


def synthetic_neumann_problem():
    data, _ = problem.example2()
    return problem.ProblemData(
        eps=data.eps, omega=data.omega, c=data.c, div_c=data.div_c,
        r=data.r, f=data.f, yhat=data.yhat, d=data.d,
        g=lambda x, n: x[..., 0] ** 2, domain=data.domain,
        boundary_tagger=data.boundary_tagger)


@pytest.mark.parametrize("degree", [1, 2])
def test_neumann_load_supported_on_neumann_dofs(degree):
    data = synthetic_neumann_problem()
    m = data.mesh_at(0.2)
    y = fem.make_space(m, degree)
    n_g = assembly.assemble_neumann_load(y, data)
    assert np.any(n_g != 0.0)
    for dof in np.nonzero(n_g)[0]:
        x1, x2 = y.dof_coords[dof]
        assert x2 == 0.0 and 0.0 <= x1 <= 1.0


def test_neumann_load_integrates_boundary_data():
    # summing the load entries integrates g over the tagged segment
    data = synthetic_neumann_problem()
    m = data.mesh_at(0.05)
    y = fem.make_space(m, 1)
    n_g = assembly.assemble_neumann_load(y, data)
    assert n_g.sum() == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_mass_matrix_rectangular_shapes():
    data, _ = problem.example1()
    m = data.mesh_at(0.25)
    y2 = fem.make_space(m, 2, role=fem.STATE)
    u1 = fem.make_space(m, 1, role=fem.CONTROL)
    muy = assembly.assemble_mass(u1, y2)
    assert muy.shape == (u1.ndof, y2.ndof)
    # row sums integrate the P1 hats: total mass is the domain length
    assert muy.sum() == pytest.approx(1.0)


def test_load_direction_flips_stabilized_term():
    data, _ = problem.example1()
    m = data.mesh_at(0.1)
    y = fem.make_space(m, 1)
    stab = assembly.StabilizationConfig(assembly.STANDARD)
    f = lambda x: np.sin(np.pi * x[..., 0])
    plain = assembly.assemble_load(y, f)
    fwd = assembly.assemble_load(y, f, data, stab, direction=1.0)
    bwd = assembly.assemble_load(y, f, data, stab, direction=-1.0)
    np.testing.assert_allclose(fwd + bwd, 2 * plain, atol=1e-14)
    assert np.abs(fwd - plain).max() > 1e-4
