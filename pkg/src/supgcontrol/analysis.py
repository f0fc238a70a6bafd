"""Error norms, convergence studies, and report emission.

The streamline-diffusion norm used throughout is

    ||v||_SD^2 = eps |v|_1^2 + r0 ||v||_0^2 + sum_e tau_e ||c.grad v||_{0,e}^2,

evaluated with the tau of whichever equation the field solves: the
state tau for y, the adjoint tau for lam (identical values under the
symmetric coupling, where the adjoint operator is the transposed state
operator).

Error quadrature defaults to a fixed 3-point Gauss rule per interval
element and a degree-5 rule per triangle, without subdivision. Every
study re-evaluates each norm on a once-subdivided rule and flags
entries that move by 0.1% or more; flags are reported, not fatal, since
boundary-layer integrands at coarse h legitimately trip them.
"""

import numpy as np

from . import assembly, fem, kkt, solver

L2_EXACTNESS = {"interval": 5, "triangle": 5}
STABILITY_REL = 1e-3

CSV_COLUMNS = ("h", "l2_y", "order_l2_y", "sd_y", "order_sd_y",
               "l2_u", "order_l2_u", "l2_lam", "order_l2_lam",
               "sd_lam", "order_sd_lam")


def _default_rule(space, subdivision=1):
    family = space.family
    return fem.quadrature_rule(family, L2_EXACTNESS[family], subdivision)


def _eval_discrete(space, coefs, rule):
    basis = fem.mapped_basis_all(space, rule)
    el = np.asarray(coefs)[space.element_dofs]
    uh = np.einsum("qk,tk->tq", basis.val, el)
    guh = np.einsum("tqkd,tk->tqd", basis.grad, el)
    return basis.x, basis.w, uh, guh


def l2_error(space, coefs, exact_value, quad=None):
    """L2 norm of u_h - u_ex over the mesh."""
    rule = quad if quad is not None else _default_rule(space)
    x, w, uh, _ = _eval_discrete(space, coefs, rule)
    diff = uh - exact_value(x)
    return float(np.sqrt(np.sum(w * diff ** 2)))


def sd_error(space, coefs, exact_field, problem, taus, quad=None):
    """Streamline-diffusion norm of the error against a ScalarField.

    taus holds one stabilization parameter per element, matching the
    equation the coefficient vector solves.
    """
    rule = quad if quad is not None else _default_rule(space)
    x, w, uh, guh = _eval_discrete(space, coefs, rule)
    diff = uh - exact_field.value(x)
    gdiff = guh - exact_field.gradient(x)
    cvals = problem.c(x)
    stream = np.sum(cvals * gdiff, axis=-1)
    grad_sq = np.sum(w[:, :, None] * gdiff ** 2, axis=(1, 2))
    mass_sq = np.sum(w * diff ** 2, axis=1)
    stream_sq = np.sum(w * stream ** 2, axis=1)
    taus = np.asarray(taus, dtype=float)
    total = (problem.eps * grad_sq.sum() + problem.r0 * mass_sq.sum()
             + np.sum(taus * stream_sq))
    return float(np.sqrt(total))


def convergence_orders(errors):
    """log2 quotients of successive errors on meshes halved each step."""
    errors = [float(e) for e in errors]
    for e in errors:
        if e <= 0.0:
            raise ValueError("orders need positive errors, got %g" % e)
    return [np.log2(errors[i] / errors[i + 1])
            for i in range(len(errors) - 1)]


class StudyRow:
    __slots__ = ("h", "errors", "otd_identity", "kkt_dim", "flags")

    def __init__(self, h, errors, otd_identity, kkt_dim, flags):
        self.h = h
        self.errors = errors
        self.otd_identity = otd_identity
        self.kkt_dim = kkt_dim
        self.flags = flags


ERROR_KEYS = ("l2_y", "sd_y", "l2_u", "l2_lam", "sd_lam")


class ErrorReport:
    """Rows of a refinement study plus derived orders and flags."""

    def __init__(self, approach, degrees, rows, metadata=None):
        self.approach = approach
        self.degrees = degrees
        self.rows = rows
        self.metadata = dict(metadata or {})

    def errors(self, key):
        return [row.errors[key] for row in self.rows]

    def orders(self, key):
        return convergence_orders(self.errors(key))

    @property
    def flags(self):
        out = []
        for row in self.rows:
            out.extend(row.flags)
        return out

    def _cells(self):
        rows = []
        order_cols = {key: self.orders(key) if len(self.rows) > 1 else []
                      for key in ERROR_KEYS}
        for i, row in enumerate(self.rows):
            cells = ["%.6g" % row.h]
            for key in ERROR_KEYS:
                cells.append("%.2e" % row.errors[key])
                if i == 0:
                    cells.append("")
                else:
                    cells.append("%.2f" % order_cols[key][i - 1])
            rows.append(cells)
        return rows

    def to_csv(self, stream):
        stream.write(",".join(CSV_COLUMNS) + "\n")
        for cells in self._cells():
            stream.write(",".join(cells) + "\n")
        for flag in self.flags:
            stream.write("# flag: %s\n" % flag)

    def to_markdown(self, stream):
        header = "| " + " | ".join(CSV_COLUMNS) + " |\n"
        stream.write(header)
        stream.write("|" + "---|" * len(CSV_COLUMNS) + "\n")
        for cells in self._cells():
            stream.write("| " + " | ".join(c if c else "-" for c in cells)
                         + " |\n")
        if self.flags:
            stream.write("\nQuadrature stability flags:\n")
            for flag in self.flags:
                stream.write("- %s\n" % flag)


def _normalize_degrees(approach, degrees):
    if isinstance(degrees, int):
        degrees = (degrees,)
    degrees = tuple(degrees)
    if len(degrees) == 1:
        k, m, ell = degrees[0], degrees[0], degrees[0]
    elif len(degrees) == 2:
        k, m = degrees
        ell = k
    else:
        k, m, ell = degrees
    if approach == kkt.DTO and ell != k:
        raise ValueError(
            "the symmetric coupling determines the adjoint space from "
            "the state space; adjoint degree %d != state degree %d"
            % (ell, k))
    return k, m, ell


def build_system(problem, mesh, approach, degrees, stab_state,
                 stab_adjoint=None):
    """Assemble, constrain, and return the system for one mesh."""
    k, m, ell = _normalize_degrees(approach, degrees)
    if approach == kkt.DTO:
        raw = kkt.build_dto(problem, mesh, (k, m), stab_state)
    elif approach == kkt.OTD:
        if stab_adjoint is None:
            stab_adjoint = assembly.StabilizationConfig(
                stab_state.policy, fem.ADJOINT, stab_state.tau1,
                stab_state.tau2, stab_state.rescale_quadratic)
        raw = kkt.build_otd(problem, mesh, (k, m, ell), stab_state,
                            stab_adjoint)
    else:
        raise ValueError("unknown approach %r" % (approach,))
    return kkt.apply_boundary_conditions(raw, problem)


def _checked_errors(problem, system, sol, exact, check_quadrature):
    yspace, uspace, lspace = system.spaces
    tau_y = assembly.element_taus(problem, yspace, system.stab_state)
    tau_l = assembly.element_taus(problem, lspace, system.stab_adjoint)

    def all_errors(subdivision):
        qy = _default_rule(yspace, subdivision)
        qu = _default_rule(uspace, subdivision)
        ql = _default_rule(lspace, subdivision)
        return {
            "l2_y": l2_error(yspace, sol.y, exact.y.value, qy),
            "sd_y": sd_error(yspace, sol.y, exact.y, problem, tau_y, qy),
            "l2_u": l2_error(uspace, sol.u, exact.u, qu),
            "l2_lam": l2_error(lspace, sol.lam, exact.lam.value, ql),
            "sd_lam": sd_error(lspace, sol.lam, exact.lam, problem,
                               tau_l, ql),
        }

    errors = all_errors(1)
    flags = []
    if check_quadrature:
        refined = all_errors(2)
        for key in ERROR_KEYS:
            base, fine = errors[key], refined[key]
            if base == 0.0 and fine == 0.0:
                continue
            rel = abs(fine - base) / max(abs(base), abs(fine))
            if rel >= STABILITY_REL:
                flags.append("%s changes by %.2e%% under quadrature "
                             "refinement" % (key, 100.0 * rel))
    return errors, flags


def run_study(problem, exact, approach, degrees, h_list, stab_state=None,
              stab_adjoint=None, check_quadrature=True):
    """Solve on each mesh in h_list and collect error norms.

    Returns an ErrorReport whose rows are ordered like h_list; the
    caller supplies h values halving level to level when convergence
    orders are wanted.
    """
    if stab_state is None:
        stab_state = assembly.StabilizationConfig()
    degrees = _normalize_degrees(approach, degrees)
    rows = []
    for h in h_list:
        mesh = problem.mesh_at(h)
        system = build_system(problem, mesh, approach, degrees,
                              stab_state, stab_adjoint)
        try:
            sol = solver.solve_direct(system)
        except solver.SolverError as exc:
            raise solver.SolverError(
                "at level h=%.6g: %s" % (h, exc)) from None
        errors, flags = _checked_errors(problem, system, sol, exact,
                                        check_quadrature)
        identity = None
        if approach == kkt.OTD:
            scale = max(np.abs(sol.u).max(), 1e-300)
            identity = float(
                np.abs(sol.u - sol.lam / problem.omega).max() / scale)
        flags = ["h=%.6g: %s" % (h, f) for f in flags]
        rows.append(StudyRow(h, errors, identity, system.dim, flags))
    meta = {"approach": approach, "degrees": degrees,
            "tau_policy": stab_state.policy}
    return ErrorReport(approach, degrees, rows, meta)


def oscillation_count(space, coefs, rel_threshold=0.05, min_run=5):
    """Count node-to-node sign flips of second differences along
    horizontal gridlines.

    DOF values are grouped by their vertical coordinate and sorted by
    the horizontal one; second differences are taken along each line. A
    sign change between consecutive second differences is significant
    when both sides exceed rel_threshold times the largest coefficient
    magnitude, and significant flips count only in runs of at least
    min_run consecutive flips. The run requirement separates sustained
    node-to-node zigzag from the short decaying overshoot every
    under-resolved boundary layer produces, and the amplitude floor
    ignores micro-wiggles far below the solution scale.
    """
    coords = space.dof_coords
    if coords.shape[1] != 2:
        raise ValueError("oscillation metric is defined on 2D meshes")
    vals = np.asarray(coefs, dtype=float)
    ys = coords[:, 1]
    span = max(ys.max() - ys.min(), 1e-300)
    thresh = rel_threshold * max(np.abs(vals).max(), 1e-300)
    count = 0
    for level in np.unique(np.round(ys / span * 1e12)):
        mask = np.abs(ys / span * 1e12 - level) < 0.5
        if mask.sum() < 4:
            continue
        order = np.argsort(coords[mask, 0])
        line = vals[mask][order]
        d2 = line[2:] - 2.0 * line[1:-1] + line[:-2]
        sig = np.abs(d2) > thresh
        flips = (d2[1:] * d2[:-1] < 0.0) & sig[1:] & sig[:-1]
        run = 0
        for f in np.append(flips, False):
            if f:
                run += 1
            else:
                if run >= min_run:
                    count += run
                run = 0
    return count
