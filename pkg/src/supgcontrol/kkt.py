"""Coupled optimality systems for both coupling orders.

Unknown ordering is (all state DOFs, all control DOFs, all adjoint
DOFs), ascending within each block.

The discretize-then-optimize operator is symmetric,

    [ M      0          A_s^T ] [ y  ]   [ <yhat, phi>  ]
    [ 0      omega*M_u  B_s^T ] [ u  ] = [ 0            ]
    [ A_s    B_s        0     ] [ lam]   [ F_s + N_g    ],

while optimize-then-discretize stabilizes the adjoint equation
separately and is nonsymmetric,

    [ M_ya   0          A_a   ] [ y  ]   [ <yhat, psi>_adj ]
    [ 0      omega*M_u  -M_ul ] [ u  ] = [ 0               ]
    [ A_s    B_s        0     ] [ lam]   [ F_s + N_g       ].

Both share the state rows entrywise. Dirichlet conditions are imposed
as identity rows with the coupling columns folded into the right-hand
side, preserving the full 3-block dimension and, for the symmetric
system, symmetry: the constraint on a state DOF replaces the
corresponding first-block row and the constraint on an adjoint DOF the
corresponding third-block row, so the unit entries sit on the diagonal.
"""

import numpy as np
import scipy.sparse as sp

from . import assembly, fem

DTO = "dto"
OTD = "otd"


class KktSystem:
    """Assembled 3x3 block system plus everything needed downstream.

    Attributes
    ----------
    operator : csr_matrix
    rhs : ndarray
    approach : {"dto", "otd"}
    spaces : (state, control, adjoint) FeSpace triple
    stab_state, stab_adjoint : StabilizationConfig
        For DTO the adjoint block is the transposed state block, so
        stab_adjoint records the same tau as the state config.
    bc_applied : bool
    """

    def __init__(self, operator, rhs, approach, spaces, problem,
                 stab_state, stab_adjoint, bc_applied=False):
        self.operator = operator
        self.rhs = rhs
        self.approach = approach
        self.spaces = spaces
        self.problem = problem
        self.stab_state = stab_state
        self.stab_adjoint = stab_adjoint
        self.bc_applied = bc_applied

    @property
    def dims(self):
        y, u, lam = self.spaces
        return (y.ndof, u.ndof, lam.ndof)

    @property
    def dim(self):
        return sum(self.dims)


def build_dto(problem, mesh, degrees, stab_state):
    """Assemble the symmetric coupled system.

    degrees is (k, m): state/adjoint degree and control degree. The
    adjoint space always equals the state space here (the adjoint
    operator is the transpose of the state operator).
    """
    k, m = degrees
    if stab_state.role != fem.STATE:
        raise ValueError("build_dto expects a state-role stabilization")
    yspace = fem.make_space(mesh, k, fem.STATE)
    uspace = fem.make_space(mesh, m, fem.CONTROL)
    lspace = fem.make_space(mesh, k, fem.ADJOINT)
    a_s, b_s, f_s, n_g = assembly.assemble_state_supg(
        (yspace, uspace), problem, stab_state)
    m_yy = assembly.assemble_mass(yspace, yspace)
    m_uu = assembly.assemble_mass(uspace, uspace)
    yhat_load = assembly.assemble_load(yspace, problem.yhat)
    operator = sp.bmat(
        [[m_yy, None, a_s.T.tocsr()],
         [None, problem.omega * m_uu, b_s.T.tocsr()],
         [a_s, b_s, None]], format="csr")
    rhs = np.concatenate([yhat_load, np.zeros(uspace.ndof), f_s + n_g])
    stab_adj = assembly.StabilizationConfig(
        stab_state.policy, fem.ADJOINT, stab_state.tau1, stab_state.tau2,
        stab_state.rescale_quadratic)
    return KktSystem(operator, rhs, DTO, (yspace, uspace, lspace),
                     problem, stab_state, stab_adj)


def build_otd(problem, mesh, degrees, stab_state, stab_adjoint):
    """Assemble the nonsymmetric system with a separately stabilized
    adjoint equation.

    degrees is (k, m, l): state, control, and adjoint degree.
    """
    k, m, ell = degrees
    if stab_state.role != fem.STATE:
        raise ValueError("build_otd expects a state-role stabilization")
    if stab_adjoint.role != fem.ADJOINT:
        raise ValueError("build_otd expects an adjoint-role stabilization")
    yspace = fem.make_space(mesh, k, fem.STATE)
    uspace = fem.make_space(mesh, m, fem.CONTROL)
    lspace = fem.make_space(mesh, ell, fem.ADJOINT)
    a_s, b_s, f_s, n_g = assembly.assemble_state_supg(
        (yspace, uspace), problem, stab_state)
    a_a, m_ya = assembly.assemble_adjoint_supg_otd(
        (yspace, lspace), problem, stab_adjoint)
    m_uu = assembly.assemble_mass(uspace, uspace)
    m_ul = assembly.assemble_mass(uspace, lspace)
    yhat_load = assembly.assemble_load(yspace, problem.yhat, problem,
                                       stab_adjoint, direction=-1.0)
    operator = sp.bmat(
        [[m_ya, None, a_a],
         [None, problem.omega * m_uu, -m_ul],
         [a_s, b_s, None]], format="csr")
    rhs = np.concatenate([yhat_load, np.zeros(uspace.ndof), f_s + n_g])
    return KktSystem(operator, rhs, OTD, (yspace, uspace, lspace),
                     problem, stab_state, stab_adjoint)


def apply_boundary_conditions(system, problem):
    """Impose Dirichlet conditions as identity rows, folding columns.

    State DOFs on the Dirichlet boundary are pinned to the interpolated
    data d; adjoint DOFs there are pinned to zero; controls are never
    constrained. Returns a new KktSystem of unchanged dimension.
    """
    yspace, uspace, lspace = system.spaces
    ny, nu = yspace.ndof, uspace.ndof
    n = system.dim
    dir_y = yspace.dirichlet_dofs
    dir_l = lspace.dirichlet_dofs
    if len(dir_y) and problem.d is None:
        raise ValueError("Dirichlet boundary present but no data d")
    constrained = np.concatenate([dir_y, ny + nu + dir_l])
    values = np.concatenate([
        np.asarray(problem.d(yspace.dof_coords[dir_y]), dtype=float)
        if len(dir_y) else np.array([]),
        np.zeros(len(dir_l))])
    if len(constrained) == 0:
        return KktSystem(system.operator, system.rhs.copy(),
                         system.approach, system.spaces, problem,
                         system.stab_state, system.stab_adjoint,
                         bc_applied=True)
    x_fix = np.zeros(n)
    x_fix[constrained] = values
    rhs = system.rhs - system.operator @ x_fix
    free = np.ones(n)
    free[constrained] = 0.0
    mask = sp.diags(free)
    pinned = sp.csr_matrix(
        (np.ones(len(constrained)), (constrained, constrained)),
        shape=(n, n))
    operator = (mask @ system.operator @ mask + pinned).tocsr()
    rhs = free * rhs
    rhs[constrained] = values
    return KktSystem(operator, rhs, system.approach, system.spaces,
                     problem, system.stab_state, system.stab_adjoint,
                     bc_applied=True)


def dump_system(system, matrix_stream, header_stream, h=None):
    """Write the operator in coordinate form plus a sidecar header."""
    ny, nu, nl = system.dims
    header_stream.write(f"approach {system.approach}\n")
    header_stream.write(f"dim {system.dim}\n")
    header_stream.write(f"blocks {ny} {nu} {nl}\n")
    header_stream.write(f"tau_policy {system.stab_state.policy}\n")
    if h is not None:
        header_stream.write(f"h {h:.17g}\n")
    header_stream.write(
        "bc_applied %s\n" % ("true" if system.bc_applied else "false"))
    assembly.dump_matrix(system.operator, matrix_stream)
