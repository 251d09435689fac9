"""Batch driver: single adaptive solves, convergence sweeps, and the
boundary-approximation study, with CSV/VTK/mesh exports.

Runs are configured by an INI-style file ([run], [adapt], [sweep],
[export] sections, key = value lines); unknown keys are rejected so typos
fail loudly.  Command-line flags override file keys.  All outputs are
deterministic for a fixed config and seed.
"""

import argparse
import configparser
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adapt, problems
from .adapt import AdaptConfig
from .errors import ConfigError, SolveError
from .mesh import read_mesh_text, write_mesh_text, write_vtk
from .metric import quality

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_ADAPT_KEYS = {
    "k": int, "n_target": int, "max_outer_iterations": int,
    "eigenvalue_stall_tol": float, "alpha": float, "metric_mode": str,
    "geometry_mode": str, "eig_tol": float, "n_boundary": int,
}
_RUN_KEYS = {"problem": str, "image": str, "out": str, "seed": int}
_SWEEP_KEYS = {"n_targets": "intlist", "modes": "strlist",
               "n_boundary": "intlist", "plateau_n_boundary": int}
_EXPORT_KEYS = {"vtk": bool, "csv": bool, "mesh": bool, "metric": bool}


@dataclass
class RunConfig:
    problem: str = ""
    image: str = ""
    out: str = "out"
    seed: int = 0
    adapt: dict = field(default_factory=dict)
    sweep_n_targets: list = field(default_factory=list)
    sweep_modes: list = field(default_factory=list)
    sweep_n_boundary: list = field(default_factory=list)
    plateau_n_boundary: int = 30
    export_vtk: bool = True
    export_csv: bool = True
    export_mesh: bool = True
    export_metric: bool = False
    jobs: int = 1


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError("not a boolean: %r" % text)


def load_config(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError("cannot read config file %s" % path)
    cfg = RunConfig()
    known = {"run": _RUN_KEYS, "adapt": _ADAPT_KEYS, "sweep": _SWEEP_KEYS,
             "export": _EXPORT_KEYS}
    for section in parser.sections():
        if section not in known:
            raise ConfigError("unknown config section [%s]" % section)
        for key, raw in parser.items(section):
            if key not in known[section]:
                raise ConfigError("unknown key %r in section [%s]"
                                  % (key, section))
            kind = known[section][key]
            try:
                if kind is int:
                    value = int(raw)
                elif kind is float:
                    value = float(raw)
                elif kind is bool:
                    value = _parse_bool(raw)
                elif kind == "intlist":
                    value = [int(tok) for tok in raw.split()]
                elif kind == "strlist":
                    value = raw.split()
                else:
                    value = raw.strip()
            except ValueError as exc:
                raise ConfigError("bad value for %s.%s: %s"
                                  % (section, key, exc))
            if section == "run":
                setattr(cfg, key, value)
            elif section == "adapt":
                cfg.adapt[key] = value
            elif section == "sweep":
                if key == "n_targets":
                    cfg.sweep_n_targets = value
                elif key == "modes":
                    cfg.sweep_modes = value
                elif key == "n_boundary":
                    cfg.sweep_n_boundary = value
                else:
                    cfg.plateau_n_boundary = value
            else:
                setattr(cfg, "export_" + key, value)
    return cfg


def _adapt_config(cfg, **overrides):
    kwargs = dict(cfg.adapt)
    kwargs.update(overrides)
    kwargs.setdefault("n_target", 4000)
    kwargs["seed"] = cfg.seed
    try:
        return AdaptConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad adapt configuration: %s" % exc)


def _load_problem(cfg):
    if not cfg.problem:
        raise ConfigError("no problem selected")
    try:
        return problems.get_problem(cfg.problem, cfg.image or None)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]))


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _fmt(x):
    return "%.12g" % x


def _trace_rows(trace, k):
    rows = []
    for r in trace.records:
        row = [str(r.iteration), str(r.n_elements)]
        row += [_fmt(v) for v in r.eigenvalues[:k]]
        row += [_fmt(r.c_eq), _fmt(r.c_ali), _fmt(r.sigma_h),
                "%.3f" % r.seconds]
        rows.append(row)
    return rows


def _trace_header(k):
    lam = ",".join("lambda_%d" % (j + 1) for j in range(k))
    return "iteration,n_elements,%s,c_eq,c_ali,sigma_h,seconds" % lam


def cmd_solve(cfg):
    problem = _load_problem(cfg)
    aconf = _adapt_config(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    mesh, solution, trace = adapt.adapt_loop(problem, aconf)
    fld = adapt.metric_for(mesh, solution, problem, aconf)
    report = quality(mesh, fld)

    if cfg.export_csv:
        _write_csv(out / "trace.csv", _trace_header(aconf.k),
                   _trace_rows(trace, aconf.k))
    if cfg.export_mesh:
        write_mesh_text(mesh, out / "mesh.txt")
    if cfg.export_vtk:
        funcs = adapt.expand_interior(mesh, solution.eigenvectors)
        data = {"eigfun_%d" % (j + 1): funcs[:, j] for j in range(aconf.k)}
        write_vtk(mesh, out / "mesh.vtk", point_data=data)
    if cfg.export_metric:
        with open(out / "metric.txt", "w") as fh:
            for kdx, t in enumerate(fld.tensors):
                fh.write("%d %.17g %.17g %.17g\n" % (kdx, t[0], t[1], t[2]))

    lam = " ".join(_fmt(v) for v in solution.eigenvalues)
    print("lambda = %s | N = %d | C_eq = %.4g | C_ali = %.4g"
          % (lam, mesh.num_triangles, report.c_eq, report.c_ali))
    return EXIT_OK


def _single_converge_run(args):
    """One sweep entry; module-level so worker processes can import it."""
    (problem_name, image, adapt_kwargs, seed, mode, n_target) = args
    cfg = RunConfig(problem=problem_name, image=image, seed=seed)
    cfg.adapt = dict(adapt_kwargs)
    problem = _load_problem(cfg)
    aconf = _adapt_config(cfg, metric_mode=mode, n_target=n_target)
    mesh, solution, trace = adapt.adapt_loop(problem, aconf)
    return mesh.num_triangles, solution.eigenvalues.tolist()


def _run_sweep(cfg, runs):
    """Execute sweep entries (worker processes when jobs > 1), preserving
    the sweep order in the output."""
    args = [(cfg.problem, cfg.image, cfg.adapt, cfg.seed, mode, n)
            for mode, n in runs]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(_single_converge_run, args))
    return [_single_converge_run(a) for a in args]


def _loglog_slope(x, y):
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def cmd_converge(cfg):
    problem = _load_problem(cfg)
    if problem.reference is None:
        raise ConfigError("problem %r has no reference spectrum for a "
                          "convergence study" % cfg.problem)
    if not cfg.sweep_n_targets:
        raise ConfigError("converge needs a [sweep] n_targets list")
    modes = cfg.sweep_modes or [cfg.adapt.get("metric_mode", "anisotropic")]
    k = cfg.adapt.get("k", 4)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    runs = [(mode, n) for mode in modes for n in cfg.sweep_n_targets]
    results = _run_sweep(cfg, runs)

    ref = problem.reference_eigenvalues(k)
    rows = []
    errors = {}
    for (mode, n_target), (n_elem, lam) in zip(runs, results):
        for j in range(1, k + 1):
            rel = (lam[j - 1] - ref[j - 1]) / lam[j - 1]
            rows.append([mode, str(n_target), str(n_elem), str(j),
                         _fmt(lam[j - 1]), _fmt(rel)])
            errors.setdefault((mode, j), []).append((n_elem, rel))
    _write_csv(out / "errors.csv",
               "mode,n_target,n_elements,j,lambda_j,rel_error", rows)

    slope_rows = []
    for (mode, j), pts in sorted(errors.items()):
        ns = [p[0] for p in pts]
        es = [max(p[1], 1e-16) for p in pts]
        slope_rows.append([mode, str(j), _fmt(_loglog_slope(ns, es))])
    _write_csv(out / "slopes.csv", "mode,j,slope", slope_rows)
    print("converge: %d runs -> %s" % (len(runs), out / "errors.csv"))
    return EXIT_OK


def _single_boundary_run(args):
    (problem_name, adapt_kwargs, seed, n_boundary, n_target, frozen) = args
    cfg = RunConfig(problem=problem_name, seed=seed)
    cfg.adapt = dict(adapt_kwargs)
    problem = _load_problem(cfg)
    gmode = "frozen-polygon" if frozen else "exact-curve"
    aconf = _adapt_config(cfg, n_target=n_target, geometry_mode=gmode,
                          n_boundary=n_boundary)
    mesh, solution, trace = adapt.adapt_loop(problem, aconf)
    return mesh.num_triangles, solution.eigenvalues.tolist()


def cmd_boundary_study(cfg):
    problem = _load_problem(cfg)
    if problem.reference is None:
        raise ConfigError("boundary study needs a reference spectrum")
    if not cfg.sweep_n_boundary:
        raise ConfigError("boundary-study needs a [sweep] n_boundary list")
    ncorner = len(problem.geometry.corners)
    for nb in cfg.sweep_n_boundary:
        if nb < ncorner + 3:
            raise ConfigError("n_boundary %d below corner count + 3" % nb)
    k = cfg.adapt.get("k", 4)
    n_target = cfg.adapt.get("n_target", 30000)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ref = problem.reference_eigenvalues(k)

    args = [(cfg.problem, cfg.adapt, cfg.seed, nb, n_target, True)
            for nb in cfg.sweep_n_boundary]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_single_boundary_run, args))
    else:
        results = [_single_boundary_run(a) for a in args]

    rows = []
    for nb, (n_elem, lam) in zip(cfg.sweep_n_boundary, results):
        for j in range(1, k + 1):
            rel = (lam[j - 1] - ref[j - 1]) / lam[j - 1]
            rows.append([str(nb), str(n_elem), str(j), _fmt(lam[j - 1]),
                         _fmt(rel)])
    _write_csv(out / "boundary.csv",
               "n_boundary,n_elements,j,lambda_j,rel_error", rows)

    # plateau table: fixed n_boundary, growing N, frozen vs exact geometry
    if cfg.sweep_n_targets:
        prows = []
        for frozen in (True, False):
            label = "frozen-polygon" if frozen else "exact-curve"
            pargs = [(cfg.problem, cfg.adapt, cfg.seed,
                      cfg.plateau_n_boundary, n, frozen)
                     for n in cfg.sweep_n_targets]
            if cfg.jobs > 1:
                with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                    presults = list(pool.map(_single_boundary_run, pargs))
            else:
                presults = [_single_boundary_run(a) for a in pargs]
            for n, (n_elem, lam) in zip(cfg.sweep_n_targets, presults):
                for j in range(1, k + 1):
                    rel = (lam[j - 1] - ref[j - 1]) / lam[j - 1]
                    prows.append([label, str(n), str(n_elem), str(j),
                                  _fmt(rel)])
        _write_csv(out / "plateau.csv",
                   "geometry_mode,n_target,n_elements,j,rel_error", prows)
    print("boundary-study: %d boundary counts -> %s"
          % (len(cfg.sweep_n_boundary), out / "boundary.csv"))
    return EXIT_OK


def cmd_export_mesh(input_path, output_path):
    mesh = read_mesh_text(input_path)
    write_vtk(mesh, output_path)
    print("wrote %s (%d vertices, %d triangles)"
          % (output_path, mesh.num_vertices, mesh.num_triangles))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eigadapt",
        description="Anisotropic adaptive eigenvalue solver driver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "converge", "boundary-study"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
    p = sub.add_parser("export-mesh")
    p.add_argument("input")
    p.add_argument("output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-mesh":
            return cmd_export_mesh(args.input, args.output)
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.jobs = args.jobs
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "converge":
            return cmd_converge(cfg)
        return cmd_boundary_study(cfg)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except SolveError as exc:
        print("numeric error: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:                      # noqa: BLE001
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
