"""Command-line front end.

    cefis run      --config cfg.json [--seed S] [--method M] [--out result.json]
    cefis study    --config cfg.json [--runs R] [--out study.csv]
    cefis spectrum --config cfg.json [--out spectrum.csv]

The config is one JSON document::

    {"problem": {"name": "linear", "d": 358, "beta": 3.5},
     "method": "icered",
     "solver": {"n_per_level": 250, "seed": 1},
     "runs": 20,
     "output": "out.json"}

Exit codes: 0 converged, 1 estimate produced but not converged (or a run
failed), 2 usage or configuration error.
"""
import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import problems, randfield
from .errors import CefisError, ConfigError, MissingGradient
from .estimators import SolverConfig, run_icered, run_method

log = logging.getLogger("cefis")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE = 0, 1, 2
METHOD_NAMES = ("mc", "ce", "ice", "icered")

# accepted parameters per problem, with defaults
PROBLEM_PARAMS = {
    "linear": {"d": 2, "beta": 3.5},
    "quadratic": {"d": 2, "beta": 4.0, "kappa": 5.0},
    "bar": {"n_elem": 100, "K": 50, "ell": 0.1, "u_max_scale": 1.19, "n_gp": None},
    "constant": {"d": 1, "value": -1.0},
}


@dataclass
class RunConfig:
    problem: dict
    method: str = "icered"
    solver: SolverConfig = field(default_factory=SolverConfig)
    runs: int = 1
    output: str = None


# --------------------------------------------------------------------------
# config parsing


def _field_error(path, msg):
    return ConfigError(f"config field '{path}': {msg}")


def _check_number(path, value, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _field_error(path, f"expected a number, got {type(value).__name__}")
    if integer and not float(value).is_integer():
        raise _field_error(path, f"expected an integer, got {value}")
    return int(value) if integer else float(value)


def _parse_problem(raw):
    if not isinstance(raw, dict):
        raise _field_error("problem", "expected an object with a 'name' key")
    name = raw.get("name")
    if name not in PROBLEM_PARAMS:
        raise _field_error("problem.name",
                           f"unknown problem {name!r}; choose from {sorted(PROBLEM_PARAMS)}")
    params = {"name": name, **PROBLEM_PARAMS[name]}
    for key, value in raw.items():
        if key == "name":
            continue
        if key not in PROBLEM_PARAMS[name]:
            raise _field_error(f"problem.{key}", f"unknown parameter for problem '{name}'")
        integer = key in ("d", "n_elem", "K", "n_gp")
        if value is not None:
            value = _check_number(f"problem.{key}", value, integer)
        params[key] = value
    return params


def _parse_solver(raw):
    if raw is None:
        return SolverConfig()
    if not isinstance(raw, dict):
        raise _field_error("solver", "expected an object")
    known = {f.name: f for f in fields(SolverConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise _field_error(f"solver.{key}", "unknown solver option")
        if key == "kind":
            if not isinstance(value, str):
                raise _field_error("solver.kind", "expected a string")
        elif key == "refine":
            if not isinstance(value, bool):
                raise _field_error("solver.refine", "expected true or false")
        elif key == "n_grad" and value is None:
            pass
        else:
            integer = key in ("n_per_level", "m_check", "m_increment", "t_max", "seed",
                              "n_grad", "mc_samples")
            value = _check_number(f"solver.{key}", value, integer)
        kwargs[key] = value
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise _field_error("solver", str(exc)) from None


def parse_config(text, source="<config>"):
    """Parse a JSON config document into a :class:`RunConfig`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    unknown = set(raw) - {"problem", "method", "solver", "runs", "output"}
    if unknown:
        raise _field_error(sorted(unknown)[0], "unknown top-level key")
    if "problem" not in raw:
        raise _field_error("problem", "missing")
    cfg = RunConfig(problem=_parse_problem(raw["problem"]),
                    solver=_parse_solver(raw.get("solver")))
    method = raw.get("method", "icered")
    if method not in METHOD_NAMES:
        raise _field_error("method", f"unknown method {method!r}; choose from {METHOD_NAMES}")
    cfg.method = method
    if "runs" in raw:
        cfg.runs = _check_number("runs", raw["runs"], integer=True)
        if cfg.runs < 1:
            raise _field_error("runs", "must be >= 1")
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise _field_error("output", "expected a path string")
    cfg.output = out
    return cfg


def build_problem(params):
    name = params["name"]
    if name == "linear":
        return problems.linear_problem(params["d"], params["beta"])
    if name == "quadratic":
        return problems.quadratic_problem(params["d"], params["beta"], params["kappa"])
    if name == "constant":
        return problems.constant_problem(params["d"], params["value"])
    bar = randfield.default_bar(n_elem=params["n_elem"], K=params["K"], ell=params["ell"],
                                u_max_scale=params["u_max_scale"], n_gp=params["n_gp"])
    return randfield.bar_problem(bar)


# --------------------------------------------------------------------------
# output


def fmt_float(x):
    """17 significant digits, which round-trips any double."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def to_json(obj, indent=0):
    """JSON text with floats written by :func:`fmt_float`; keys keep their
    insertion order so output is byte-stable."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{to_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def result_document(result, cfg, seed):
    doc = {"problem": cfg.problem, "seed": seed}
    doc.update(result.to_dict())
    return doc


STUDY_COLUMNS = ["run", "seed", "p_hat", "cv_hat", "n_levels", "lsf_calls", "grad_calls",
                 "converged"]


def study_summary(rows):
    """Mean estimate, empirical cv across runs and mean call counts. A single
    run has no spread, so its own cv_hat is reported instead."""
    ok = [r for r in rows if r["p_hat"] is not None and math.isfinite(r["p_hat"])]
    ps = np.array([r["p_hat"] for r in ok], dtype=float)
    mean_p = float(ps.mean()) if ps.size else math.nan
    if len(rows) == 1:
        cv = rows[0]["cv_hat"]
    elif ps.size >= 2 and mean_p > 0:
        cv = float(ps.std(ddof=1) / mean_p)
    else:
        cv = math.nan

    def mean_of(key):
        vals = [r[key] for r in ok]
        return float(np.mean(vals)) if vals else math.nan

    return {"run": "summary", "seed": "", "p_hat": mean_p, "cv_hat": cv,
            "n_levels": mean_of("n_levels"), "lsf_calls": mean_of("lsf_calls"),
            "grad_calls": mean_of("grad_calls"),
            "converged": all(r["converged"] for r in rows)}


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v)
    return "" if v is None else str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(row[c]) if isinstance(row, dict) else _csv_cell(row[i])
                    for i, c in enumerate(header)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def _one_run(cfg, problem, seed):
    solver = SolverConfig(**{**cfg.solver.__dict__, "seed": seed})
    return run_method(cfg.method, problem, solver, np.random.default_rng(seed))


def cmd_run(cfg):
    problem = build_problem(cfg.problem)
    seed = cfg.solver.seed
    result = _one_run(cfg, problem, seed)
    text = to_json(result_document(result, cfg, seed)) + "\n"
    if cfg.output is None:
        _write_text(None, text)
    else:
        _write_text(cfg.output, text)
        print(f"p_hat={fmt_float(result.p_hat)} cv_hat={fmt_float(result.cv_hat)} "
              f"lsf_calls={result.lsf_calls} grad_calls={result.grad_calls} "
              f"converged={str(result.converged).lower()}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_study(cfg):
    problem = build_problem(cfg.problem)
    rows = []
    for i in range(cfg.runs):
        seed = cfg.solver.seed + i
        try:
            res = _one_run(cfg, problem, seed)
            rows.append({"run": i, "seed": seed, "p_hat": res.p_hat, "cv_hat": res.cv_hat,
                         "n_levels": res.n_levels, "lsf_calls": res.lsf_calls,
                         "grad_calls": res.grad_calls, "converged": res.converged})
        except MissingGradient:
            raise
        except CefisError as exc:
            log.warning("run %d (seed %d) failed: %s", i, seed, exc)
            rows.append({"run": i, "seed": seed, "p_hat": math.nan, "cv_hat": math.nan,
                         "n_levels": 0, "lsf_calls": 0, "grad_calls": 0, "converged": False})
    summary = study_summary(rows)
    _write_text(cfg.output, _csv_text(STUDY_COLUMNS, rows + [summary]))
    if cfg.output is not None:
        print(f"runs={cfg.runs} mean_p_hat={fmt_float(summary['p_hat'])} "
              f"cv={fmt_float(summary['cv_hat'])}")
    return EXIT_OK if summary["converged"] else EXIT_NOT_CONVERGED


def _sibling(path, suffix):
    p = Path(path)
    return str(p.with_name(p.stem + suffix + p.suffix))


def cmd_spectrum(cfg):
    if cfg.method != "icered":
        raise ConfigError("config field 'method': spectrum needs method 'icered'")
    problem = build_problem(cfg.problem)
    seed = cfg.solver.seed
    solver = SolverConfig(**{**cfg.solver.__dict__, "seed": seed})
    result = run_icered(problem, solver, np.random.default_rng(seed))
    rows = []
    for level, eigvals, rank in result.spectra:
        for k, lam in enumerate(eigvals, start=1):
            rows.append([level, k, float(lam), rank, float(solver.eps)])
    out = cfg.output
    _write_text(out, _csv_text(["level", "index", "eigenvalue", "rank", "eps"], rows))
    basis = result.final_basis
    if out is not None and basis is not None:
        V = basis.eigvecs[:, :2]
        vec_rows = [[i + 1] + [float(v) for v in V[i]] for i in range(V.shape[0])]
        header = ["component"] + [f"phi_{k + 1}" for k in range(V.shape[1])]
        _write_text(_sibling(out, "_eigvecs"), _csv_text(header, vec_rows))
    if out is not None and cfg.problem["name"] == "bar":
        kl = randfield.default_bar(n_elem=cfg.problem["n_elem"], K=cfg.problem["K"],
                                   ell=cfg.problem["ell"], n_gp=cfg.problem["n_gp"]).kl
        ratio = kl.captured_variance()
        kl_rows = [[k + 1, float(lam), float(r)] for k, (lam, r) in enumerate(zip(kl.eigvals, ratio))]
        _write_text(_sibling(out, "_kl"), _csv_text(["index", "eigenvalue", "captured_variance_ratio"], kl_rows))
    if out is not None:
        ranks = [r for _, _, r in result.spectra]
        print(f"levels={result.n_levels} ranks={ranks} p_hat={fmt_float(result.p_hat)}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


COMMANDS = {"run": cmd_run, "study": cmd_study, "spectrum": cmd_spectrum}


def build_parser():
    parser = argparse.ArgumentParser(prog="cefis", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--method", choices=METHOD_NAMES)
        p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--runs", type=int, help="repetitions for study")
    return parser


def load_config(args):
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text, source=str(path))
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.solver.seed = args.seed
    if args.method is not None:
        cfg.method = args.method
    if args.out is not None:
        cfg.output = args.out
    if args.runs is not None:
        if args.runs < 1:
            raise ConfigError("--runs must be >= 1")
        cfg.runs = args.runs
    return cfg


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, MissingGradient) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CefisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
