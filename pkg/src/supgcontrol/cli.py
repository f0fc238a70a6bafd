"""Command-line front end: convergence studies, approach comparison,
and solution profiles.

Exit codes: 0 success, 1 numerical failure, 2 usage or config error.
Output is deterministic; repeated runs with the same configuration
produce byte-identical files.
"""

import argparse
import sys
from pathlib import Path

from . import analysis, assembly, fem, kkt, problem, solver

CI_MIN_H_2D = 1.25e-2
DEFAULT_COARSEST = {1: 0.1, 2: 0.2, 3: 0.2}

TAU_CHOICES = "{standard, general:T1:T2, coth, zero}"


class UsageError(Exception):
    pass


def _parse_tau(token):
    """Split a tau policy token into (policy, tau1, tau2)."""
    if token in (assembly.STANDARD, assembly.COTH, assembly.ZERO):
        return token, None, None
    if token.startswith(assembly.GENERAL + ":"):
        parts = token.split(":")
        if len(parts) != 3:
            raise UsageError(
                "tau policy %r needs two constants, e.g. general:1:0.5"
                % token)
        try:
            return assembly.GENERAL, float(parts[1]), float(parts[2])
        except ValueError:
            raise UsageError("non-numeric constants in tau policy %r"
                             % token)
    raise UsageError("unknown tau policy %r; choose from %s"
                     % (token, TAU_CHOICES))


def _stab_pair(token):
    policy, t1, t2 = _parse_tau(token)
    state = assembly.StabilizationConfig(policy, fem.STATE, t1, t2)
    adj = assembly.StabilizationConfig(policy, fem.ADJOINT, t1, t2)
    return state, adj


_CONFIG_KEYS = {
    "example": int, "approach": str, "degree": int,
    "control_degree": int, "adjoint_degree": int, "levels": int,
    "coarsest": float, "tau": str, "format": str, "out": str,
    "ci": bool, "dump_system": bool,
}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError("expected a boolean, got %r" % text)


def load_config(path):
    """Read a flat key=value config file; # starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError("cannot read config file: %s" % exc)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("%s:%d: expected key=value, got %r"
                             % (path, lineno, raw.strip()))
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError("%s:%d: unknown config key %r"
                             % (path, lineno, key))
        caster = _CONFIG_KEYS[key]
        try:
            values[key] = _parse_bool(val) if caster is bool \
                else caster(val)
        except ValueError:
            raise UsageError("%s:%d: bad value %r for key %r"
                             % (path, lineno, val, key))
    return values


class RunConfig:
    """Validated settings for one CLI invocation."""

    def __init__(self, args):
        merged = {}
        if args.config:
            merged.update(load_config(args.config))
        for key in _CONFIG_KEYS:
            flag = getattr(args, key, None)
            if flag is not None:
                merged[key] = flag
        example = merged.get("example")
        if example is None:
            raise UsageError(
                "an example id is required (--example or a config file "
                "with example=...)")
        if example not in problem.EXAMPLES:
            raise UsageError("unknown example %r; choose 1, 2 or 3"
                             % example)
        self.example = example
        self.approach = merged.get("approach", "both")
        if self.approach not in (kkt.DTO, kkt.OTD, "both"):
            raise UsageError("approach must be dto, otd or both")
        self.degree = merged.get("degree", 1)
        self.control_degree = merged.get("control_degree", self.degree)
        self.adjoint_degree = merged.get("adjoint_degree", self.degree)
        for name in ("degree", "control_degree", "adjoint_degree"):
            if getattr(self, name) not in (1, 2):
                raise UsageError("%s must be 1 or 2" % name)
        if self.approach in (kkt.DTO, "both") \
                and self.adjoint_degree != self.degree:
            raise UsageError(
                "the dto coupling ties the adjoint space to the state "
                "space; --adjoint-degree must equal --degree")
        self.levels = merged.get("levels", 4)
        if self.levels < 1:
            raise UsageError("levels must be >= 1")
        self.coarsest = merged.get("coarsest",
                                   DEFAULT_COARSEST[self.example])
        if self.coarsest <= 0:
            raise UsageError("coarsest mesh size must be positive")
        self.tau = merged.get("tau", assembly.STANDARD)
        self.stab_state, self.stab_adjoint = _stab_pair(self.tau)
        self.format = merged.get("format", "csv")
        if self.format not in ("csv", "markdown"):
            raise UsageError("format must be csv or markdown")
        self.out = merged.get("out")
        self.ci = merged.get("ci", False)
        self.dump_system = merged.get("dump_system", False)
        self.data, self.exact = problem.EXAMPLES[self.example]()

    @property
    def degrees(self):
        return (self.degree, self.control_degree, self.adjoint_degree)

    def approaches(self):
        if self.approach == "both":
            return [kkt.DTO, kkt.OTD]
        return [self.approach]

    def h_list(self):
        hs = [self.coarsest / 2 ** i for i in range(self.levels)]
        if self.ci and self.example in (2, 3):
            kept = [h for h in hs if h >= CI_MIN_H_2D * (1 - 1e-12)]
            if len(kept) < len(hs):
                print("ci mode: dropping %d level(s) finer than h=%g"
                      % (len(hs) - len(kept), CI_MIN_H_2D),
                      file=sys.stderr)
            hs = kept
            if not hs:
                raise UsageError(
                    "ci mode removed every level; raise --coarsest")
        return hs

    def extension(self):
        return "csv" if self.format == "csv" else "md"


def _write_report(report, config, path):
    with open(path, "w") as stream:
        if config.format == "csv":
            report.to_csv(stream)
        else:
            report.to_markdown(stream)


def _dump_path(prefix, level):
    return (Path("%s-system-L%d.txt" % (prefix, level)),
            Path("%s-system-L%d-header.txt" % (prefix, level)))


def _dump_systems(config, approach, prefix):
    for i, h in enumerate(config.h_list()):
        mesh = config.data.mesh_at(h)
        system = analysis.build_system(
            config.data, mesh, approach, config.degrees,
            config.stab_state, config.stab_adjoint)
        mat_path, head_path = _dump_path(prefix, i)
        with open(mat_path, "w") as mstream, \
                open(head_path, "w") as hstream:
            kkt.dump_system(system, mstream, hstream, h=h)
        print("wrote %s" % mat_path)


def _out_path(config, approach):
    if config.out:
        base = Path(config.out)
        if config.approach == "both":
            return base.with_name(
                "%s-%s%s" % (base.stem, approach, base.suffix))
        return base
    return Path("study-example%d-%s.%s"
                % (config.example, approach, config.extension()))


def cmd_study(config):
    for approach in config.approaches():
        report = analysis.run_study(
            config.data, config.exact, approach, config.degrees,
            config.h_list(), config.stab_state, config.stab_adjoint)
        path = _out_path(config, approach)
        _write_report(report, config, path)
        print("# example %d, %s, k=%d" % (config.example, approach,
                                          config.degree))
        report.to_markdown(sys.stdout)
        print("wrote %s" % path)
        if config.dump_system:
            _dump_systems(config, approach, Path(path).stem)
    return 0


def _merged_compare_rows(rep_dto, rep_otd):
    cols = ("h", "dto_sd_lam", "order", "otd_sd_lam", "order",
            "dto_l2_u", "order", "otd_l2_u", "order")
    rows = []
    orders = {
        "dto_sd": rep_dto.orders("sd_lam"), "otd_sd": rep_otd.orders("sd_lam"),
        "dto_u": rep_dto.orders("l2_u"), "otd_u": rep_otd.orders("l2_u"),
    } if len(rep_dto.rows) > 1 else {k: [] for k in
                                     ("dto_sd", "otd_sd", "dto_u", "otd_u")}
    for i, (rd, ro) in enumerate(zip(rep_dto.rows, rep_otd.rows)):
        cells = ["%.6g" % rd.h]
        for err, key in ((rd.errors["sd_lam"], "dto_sd"),
                         (ro.errors["sd_lam"], "otd_sd"),
                         (rd.errors["l2_u"], "dto_u"),
                         (ro.errors["l2_u"], "otd_u")):
            cells.append("%.2e" % err)
            cells.append("" if i == 0 else "%.2f" % orders[key][i - 1])
        rows.append(cells)
    return cols, rows


def cmd_compare(config):
    if config.approach != "both":
        raise UsageError("compare needs --approach both")
    reports = {}
    for approach in (kkt.DTO, kkt.OTD):
        reports[approach] = analysis.run_study(
            config.data, config.exact, approach, config.degrees,
            config.h_list(), config.stab_state, config.stab_adjoint)
    cols, rows = _merged_compare_rows(reports[kkt.DTO], reports[kkt.OTD])
    path = Path(config.out) if config.out else Path(
        "compare-example%d.%s" % (config.example, config.extension()))
    with open(path, "w") as stream:
        if config.format == "csv":
            stream.write(",".join(cols) + "\n")
            for cells in rows:
                stream.write(",".join(cells) + "\n")
        else:
            stream.write("| " + " | ".join(cols) + " |\n")
            stream.write("|" + "---|" * len(cols) + "\n")
            for cells in rows:
                stream.write("| " + " | ".join(c if c else "-"
                                               for c in cells) + " |\n")
    gap_line = None
    if len(rows) > 1:
        dto_final = reports[kkt.DTO].orders("sd_lam")[-1]
        otd_final = reports[kkt.OTD].orders("sd_lam")[-1]
        gap_line = ("final SD(lam) orders: dto %.2f, otd %.2f, gap %.2f"
                    % (dto_final, otd_final, otd_final - dto_final))
    print("# example %d compare, k=%d" % (config.example, config.degree))
    for cells in [list(cols)] + rows:
        print("  ".join("%12s" % c for c in cells))
    if gap_line:
        print(gap_line)
    print("wrote %s" % path)
    if config.dump_system:
        for approach in (kkt.DTO, kkt.OTD):
            _dump_systems(config, approach,
                          "%s-%s" % (path.stem, approach))
    return 0


def cmd_profile(config):
    h = config.coarsest
    approaches = config.approaches()
    for approach in approaches:
        mesh = config.data.mesh_at(h)
        system = analysis.build_system(
            config.data, mesh, approach, config.degrees,
            config.stab_state, config.stab_adjoint)
        try:
            sol = solver.solve_direct(system)
        except solver.SolverError as exc:
            raise solver.SolverError("at level h=%.6g: %s" % (h, exc)) \
                from None
        path = Path(config.out) if config.out and len(approaches) == 1 \
            else Path("profile-example%d-%s.csv"
                      % (config.example, approach))
        if mesh.dim == 2:
            coords = mesh.vertices
            nv = len(coords)
            x1, x2 = coords[:, 0], coords[:, 1]
        else:
            nv = len(mesh.nodes)
            x1 = mesh.nodes
            x2 = [0.0] * nv
        with open(path, "w") as stream:
            stream.write("x1,x2,y,u,lam\n")
            for i in range(nv):
                stream.write("%.17g,%.17g,%.17g,%.17g,%.17g\n"
                             % (x1[i], x2[i], sol.y[i], sol.u[i],
                                sol.lam[i]))
        print("wrote %s" % path)
        if mesh.dim == 2:
            count = analysis.oscillation_count(system.spaces[1], sol.u)
            print("oscillation count (%s): %d" % (approach, count))
        if config.dump_system:
            mat_path, head_path = _dump_path(path.stem, 0)
            with open(mat_path, "w") as mstream, \
                    open(head_path, "w") as hstream:
                kkt.dump_system(system, mstream, hstream, h=h)
            print("wrote %s" % mat_path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="supgcontrol",
        description="Stabilized finite element studies for "
                    "advection-diffusion optimal control")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("study", cmd_study), ("compare", cmd_compare),
                     ("profile", cmd_profile)):
        p = sub.add_parser(name)
        p.set_defaults(handler=fn)
        p.add_argument("--example", type=int, choices=(1, 2, 3))
        p.add_argument("--config", type=str,
                       help="flat key=value config file; flags override")
        p.add_argument("--approach", choices=("dto", "otd", "both"))
        p.add_argument("--degree", type=int)
        p.add_argument("--control-degree", type=int, dest="control_degree")
        p.add_argument("--adjoint-degree", type=int, dest="adjoint_degree")
        p.add_argument("--levels", type=int)
        p.add_argument("--coarsest", type=float)
        p.add_argument("--tau", type=str,
                       help="stabilization policy " + TAU_CHOICES)
        p.add_argument("--format", choices=("csv", "markdown"))
        p.add_argument("--out", type=str)
        p.add_argument("--dump-system", action="store_const", const=True,
                       default=None, dest="dump_system")
        p.add_argument("--ci", action="store_const", const=True,
                       default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig(args)
        return args.handler(config)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except solver.SolverError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
