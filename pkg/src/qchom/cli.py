"""Command-line front end: config-driven homogenisation runs and the verification studies.

Exit codes
----------
0   success
2   the projection violates R^T k != 0 for some scanned k
3   a cell solver did not converge
4   file could not be read or written
64  usage error (bad flag, malformed or schema-invalid config)
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import materials
from .cellsolve import MaterialField, SolverConfig, solve_cell
from .cutproj import (
    BUILTIN_PROJECTIONS,
    ProjectionMatrix,
    check_criterion,
    cut_sequence,
    fibonacci_projection,
    fibonacci_word,
    hyperplane_projection,
    TAU,
)
from .effective import homogenize
from .errors import ConvergenceError, QchomError, StructuralError
from .fourier import Grid, PeriodicField, load_field, save_field
from .serialize import csv_text, dumps, fmt, write_json
from .verify import convergence_ladder, ergodic_csv, ergodic_mean, gap_bound, ladder_csv

EXIT_OK = 0
EXIT_CRITERION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4
EXIT_USAGE = 64

PROBLEM_KIND = {
    "conductivity": "conductivity",
    "elasticity": "elasticity",
    "quasistatic_magnetic": "inverse_permittivity",
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qchom run configuration",
    "type": "object",
    "required": ["problem", "projection", "material", "grid_N"],
    "additionalProperties": False,
    "properties": {
        "problem": {"enum": sorted(PROBLEM_KIND)},
        "projection": {
            "oneOf": [
                {"enum": sorted(BUILTIN_PROJECTIONS)},
                {
                    "type": "object",
                    "properties": {
                        "builtin": {"enum": sorted(BUILTIN_PROJECTIONS)},
                        "path": {"type": "string"},
                        "normal": {"type": "array", "items": _NUM, "minItems": 2},
                        "m": {"type": "integer"},
                        "n": {"type": "integer"},
                        "entries": {"type": "array"},
                    },
                    "minProperties": 1,
                },
            ]
        },
        "material": {
            "type": "object",
            "properties": {
                "builtin": {"enum": ["constant", "laminate", "cosine_sum", "two_phase"]},
                "path": {"type": "string"},
                "value": _POS,
                "lame": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "mean": _NUM,
                "amplitude": _NUM,
                "axis": {"type": "integer", "minimum": 0},
                "geometry": {"enum": ["checkerboard", "smooth", "random", "laminate"]},
                "a": {},
                "b": {},
                "ratio": _POS,
                "sharpness": _NUM,
                "max_mode": {"type": "integer", "minimum": 1},
            },
            "oneOf": [{"required": ["builtin"]}, {"required": ["path"]}],
        },
        "grid_N": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "reference": _POS,
                "tol": _POS,
                "max_iter": {"type": "integer", "minimum": 1},
                "acceleration": {"enum": ["none", "conjugate-gradient", "cg"]},
                "alpha": {"type": "number", "minimum": 0},
            },
        },
        "outputs": {"type": "string"},
        "seed": {"type": "integer"},
        "criterion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k_max": {"type": "integer", "minimum": 1}},
        },
        "dump_fields": {"type": "boolean"},
    },
}

log = logging.getLogger("qchom")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config

def read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def load_config(path) -> dict:
    cfg = read_json(path)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"config {path}: {where}: {exc.message}") from exc
    cfg = dict(cfg)
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def _resolve(base, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(base) / p


def build_projection(desc, base=".") -> ProjectionMatrix:
    if isinstance(desc, str):
        return BUILTIN_PROJECTIONS[desc]()
    if "builtin" in desc:
        return BUILTIN_PROJECTIONS[desc["builtin"]]()
    if "path" in desc:
        return ProjectionMatrix.from_json(read_json(_resolve(base, desc["path"])))
    if "normal" in desc:
        return hyperplane_projection(desc["normal"])
    return ProjectionMatrix.from_json(desc)


def _profile(grid: Grid, desc: dict) -> np.ndarray:
    b = desc["builtin"]
    if b == "constant":
        return np.full(grid.shape, float(desc.get("value", 1.0)))
    if b == "laminate":
        return materials.laminate(grid, desc.get("mean", 2.0), desc.get("amplitude", 1.0), desc.get("axis", 0))
    return materials.cosine_sum(grid, desc.get("mean", float(grid.m) + 1.0), desc.get("amplitude", 1.0))


def build_material(cfg: dict, R: ProjectionMatrix) -> MaterialField:
    kind = PROBLEM_KIND[cfg["problem"]]
    grid = Grid(R.m, int(cfg["grid_N"]))
    desc = cfg["material"]
    n = R.n
    if "path" in desc:
        field = load_field(_resolve(cfg.get("_base", "."), desc["path"]))
        if field.grid != grid:
            raise UsageError(f"material dump lives on m={field.grid.m}, N={field.grid.N}; config wants m={grid.m}, N={grid.N}")
        if field.rank == "scalar":
            if kind == "elasticity":
                lam, mu = desc.get("lame", (1.0, 1.0))
                return MaterialField.isotropic_elastic(grid, lam * field.samples, mu * field.samples, n)
            return MaterialField.isotropic(kind, grid, field.samples, n)
        return MaterialField(kind, field)
    if desc["builtin"] == "two_phase":
        geom = dict(desc)
        geom["seed"] = cfg.get("seed", 0)
        phase = materials.phase_field(grid, geom)
        a, b = desc.get("a", 1.0), desc.get("b", 5.0)
        if kind == "elasticity":
            a = tuple(a) if isinstance(a, (list, tuple)) else (a, a)
            b = tuple(b) if isinstance(b, (list, tuple)) else (b, b)
        return materials.two_phase(kind, grid, n, phase, a, b)
    prof = _profile(grid, desc)
    if kind == "elasticity":
        lam, mu = desc.get("lame", (1.0, 1.0))
        return MaterialField.isotropic_elastic(grid, lam * prof, mu * prof, n)
    return MaterialField.isotropic(kind, grid, prof, n)


def build_solver(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg.get("solver", {}))


def public_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# ---------------------------------------------------------------- pipeline

def _dir_label(d) -> str:
    return "_".join(str(i) for i in d) if isinstance(d, tuple) else str(d)


def pipeline(cfg: dict, out: Path | None, *, dump_fields: bool | None = None):
    """Criterion check, cell solves and assembly; returns (exit code, report dict)."""
    R = build_projection(cfg["projection"], cfg.get("_base", "."))
    kind = PROBLEM_KIND[cfg["problem"]]
    if kind == "inverse_permittivity" and R.n != 3:
        raise UsageError(f"quasistatic_magnetic needs n = 3, the projection has n = {R.n}")
    N = int(cfg["grid_N"])
    k_max = int(cfg.get("criterion", {}).get("k_max", N // 2 - 1))
    log.info("projection m=%d n=%d, criterion scan k_max=%d", R.m, R.n, k_max)
    crit = check_criterion(R, k_max)
    report = {
        "problem": cfg["problem"],
        "config": public_config(cfg),
        "projection": R.to_json(),
        "grid": {"m": R.m, "N": N},
        "criterion": crit.to_json(),
    }
    if not crit.satisfied:
        log.error("criterion violated: R^T k = 0 for k = %s", list(crit.violations[0]))
        report["status"] = "criterion_violation"
        return EXIT_CRITERION, report, None
    material = build_material(cfg, R)
    solver = build_solver(cfg)
    log.info("material %s on N=%d, bounds %s", material.kind, N, [fmt(b) for b in material.bounds])
    tensor, solutions = homogenize(material, R, solver)
    for sol in solutions:
        log.info("load %s: %d iterations, residual %s", sol.direction, sol.iterations, fmt(sol.residual_history[-1]))
    report["status"] = "ok"
    report["effective"] = tensor.to_json()
    if out is not None:
        if dump_fields if dump_fields is not None else cfg.get("dump_fields", True):
            fields = out / "fields"
            save_field(material.values, fields / "material.f64")
            for sol in solutions:
                save_field(sol.corrector, fields / f"corrector_{_dir_label(sol.direction)}.f64")
        write_json(report, out / "report.json")
        (out / "tensors.csv").write_text(tensor.to_csv())
    return EXIT_OK, report, tensor


# ---------------------------------------------------------------- logging

def _setup_logging(out: Path | None, quiet: bool):
    log.handlers.clear()
    log.setLevel(logging.INFO)
    log.propagate = False
    if not quiet:
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        h.setLevel(logging.WARNING)
        log.addHandler(h)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out / "run.log", mode="w")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(fh)


def _close_logging():
    for h in list(log.handlers):
        h.close()
        log.removeHandler(h)


def _emit(args, text: str):
    if not args.quiet:
        sys.stdout.write(text)


def _out_dir(args, cfg=None):
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.get("outputs"):
        return _resolve(cfg.get("_base", "."), cfg["outputs"])
    return None


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    if not args.config:
        raise UsageError("run needs --config")
    cfg = load_config(args.config)
    out = _out_dir(args, cfg) or Path("qchom-out")
    _setup_logging(out, args.quiet)
    code, report, tensor = pipeline(cfg, out)
    if code == EXIT_OK:
        _emit(args, tensor.to_csv() if args.format == "csv" else dumps(report["effective"]))
    else:
        write_json(report, out / "report.json")
        _emit(args, dumps(report["criterion"]))
    return code


def cmd_effective(args) -> int:
    if not args.config:
        raise UsageError("effective needs --config")
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else None
    _setup_logging(out, args.quiet)
    code, report, tensor = pipeline(cfg, out, dump_fields=False)
    if code == EXIT_OK:
        _emit(args, tensor.to_csv() if args.format == "csv" else dumps(tensor.to_json()))
    else:
        _emit(args, dumps(report["criterion"]))
    return code


def cmd_cell(args) -> int:
    if not args.config:
        raise UsageError("cell needs --config")
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else None
    _setup_logging(out, args.quiet)
    R = build_projection(cfg["projection"], cfg["_base"])
    material = build_material(cfg, R)
    try:
        direction = tuple(int(x) for x in args.direction.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --direction {args.direction!r}") from exc
    d = direction if material.kind == "elasticity" else direction[0]
    if material.kind == "elasticity" and len(direction) != 2:
        raise UsageError("elastic loads are given as k,l")
    sol = solve_cell(material, d, R, build_solver(cfg))
    diag = sol.diagnostics()
    if out is not None:
        save_field(sol.corrector, out / "fields" / f"corrector_{_dir_label(d)}.f64")
        write_json(diag, out / "cell.json")
    if args.format == "csv":
        rows = [(i, r) for i, r in enumerate(diag["residual_history"])]
        _emit(args, csv_text(["iteration", "residual"], rows))
    else:
        _emit(args, dumps(diag))
    return EXIT_OK


def cmd_criterion(args) -> int:
    if args.matrix:
        R = ProjectionMatrix.from_json(read_json(args.matrix))
    elif args.builtin:
        R = BUILTIN_PROJECTIONS[args.builtin]()
    elif args.config:
        cfg = load_config(args.config)
        R = build_projection(cfg["projection"], cfg["_base"])
    else:
        raise UsageError("criterion needs --matrix, --builtin or --config")
    rep = check_criterion(R, args.kmax)
    if args.format == "csv":
        _emit(args, csv_text(["k_max", "violations", "min_norm", "certified_exact"],
                             [(rep.k_max, len(rep.violations), rep.min_norm, str(rep.certified_exact).lower())]))
    else:
        _emit(args, dumps(rep.to_json()))
    return EXIT_OK if rep.satisfied else EXIT_CRITERION


def cmd_fibonacci(args) -> int:
    if args.length < 0:
        raise UsageError("--length must be >= 0")
    word = fibonacci_word(args.length) if args.method == "substitution" else cut_sequence(TAU, args.length)
    if args.format == "json":
        _emit(args, dumps({"length": args.length, "word": word}))
    else:
        _emit(args, word + "\n")
    return EXIT_OK


def _float_list(text: str, what: str) -> list:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad {what} list {text!r}") from exc
    if not vals:
        raise UsageError(f"empty {what} list")
    return vals


def cmd_converge(args) -> int:
    etas = _float_list(args.etas, "--etas")
    if any(e <= 0 for e in etas):
        raise UsageError("--etas must be positive")
    grid = Grid(2, args.N)
    sigma = MaterialField.isotropic("conductivity", grid, materials.cosine_sum(grid), 1)
    runs, sigma_h, _ = convergence_ladder(sigma, fibonacci_projection(), etas, M=args.M,
                                          cfg=SolverConfig(tol=1e-12, acceleration="cg"))
    text = ladder_csv(runs)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "ladder.csv").write_text(text)
    if args.format == "json":
        _emit(args, dumps({"sigma_h": sigma_h, "runs": [dict(zip(
            ["eta", "M", "l2_error", "h1_error", "corrector_error"], r.row())) for r in runs]}))
    else:
        _emit(args, text)
    return EXIT_OK


def _trig_polynomial(grid: Grid, seed: int, max_mode: int = 2) -> PeriodicField:
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.shape, dtype=np.complex128)
    side = range(-max_mode, max_mode + 1)
    for k in np.ndindex(*([2 * max_mode + 1] * grid.m)):
        kk = tuple(int(side[i]) for i in k)
        c[kk] = complex(rng.standard_normal(), rng.standard_normal()) / (1.0 + sum(x * x for x in kk))
    # hermitian symmetrise so the polynomial is real
    flip = np.conj(np.roll(np.flip(c, axis=tuple(range(grid.m))), 1, axis=tuple(range(grid.m))))
    c = 0.5 * (c + flip)
    return PeriodicField.from_coefficients(grid, c, real=True)


def cmd_ergodic(args) -> int:
    A_values = _float_list(args.A, "--A")
    if any(a <= 0 for a in A_values):
        raise UsageError("--A values must be positive")
    if args.samples < 1000:
        raise UsageError("--samples must be >= 1000")
    g = _trig_polynomial(Grid(2, 8), args.seed)
    R = fibonacci_projection()
    ests = [ergodic_mean(g, R, A, samples=args.samples, rule=args.rule) for A in A_values]
    text = ergodic_csv(ests)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "ergodic.csv").write_text(text)
    if args.format == "json":
        _emit(args, dumps([{"A": e.A, "value": float(np.real(e.value)), "cell_mean": float(e.cell_mean.real),
                            "gap": e.gap, "bound": gap_bound(g, R, e.A)} for e in ests]))
    else:
        _emit(args, text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--quiet", action="store_true", help="suppress stdout and warnings")

    p = _Parser(prog="qchom", description="Homogenisation of quasiperiodic media by cut-and-projection.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("run", parents=[common], help="full pipeline from a config file")
    s.set_defaults(func=cmd_run, default_format="json")

    s = sub.add_parser("effective", parents=[common], help="print the effective tensor")
    s.set_defaults(func=cmd_effective, default_format="json")

    s = sub.add_parser("cell", parents=[common], help="solve one cell problem")
    s.add_argument("--direction", default="0", help="load index, or k,l for elasticity (0-based)")
    s.set_defaults(func=cmd_cell, default_format="json")

    s = sub.add_parser("criterion", parents=[common], help="scan R^T k != 0 over a k box")
    s.add_argument("--matrix", help="projection matrix JSON")
    s.add_argument("--builtin", choices=sorted(BUILTIN_PROJECTIONS))
    s.add_argument("--kmax", type=int, default=50)
    s.set_defaults(func=cmd_criterion, default_format="json")

    s = sub.add_parser("fibonacci", parents=[common], help="print the Fibonacci word")
    s.add_argument("--length", type=int, required=True)
    s.add_argument("--method", choices=("substitution", "cut"), default="substitution")
    s.set_defaults(func=cmd_fibonacci, default_format="text")

    s = sub.add_parser("converge", parents=[common], help="1D fine-scale eta ladder")
    s.add_argument("--etas", default="0.1,0.05,0.025")
    s.add_argument("--M", type=int, default=4096, help="fine mesh cells")
    s.add_argument("--N", type=int, default=64, help="cell grid points per axis")
    s.set_defaults(func=cmd_converge, default_format="csv")

    s = sub.add_parser("ergodic", parents=[common], help="box averages of a trig polynomial")
    s.add_argument("--A", default="10,100,1000")
    s.add_argument("--samples", type=int, default=10**5)
    s.add_argument("--rule", choices=("uniform", "gauss"), default="uniform")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ergodic, default_format="csv")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qchom: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        log.error("no convergence after %d iterations: %s", exc.iterations, exc)
        print(f"qchom: {exc}", file=sys.stderr)
        hist = exc.residual_history[-5:] if exc.residual_history else []
        print(f"qchom: iterations={exc.iterations} last residuals={[fmt(r) for r in hist]}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"qchom: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (StructuralError, QchomError, ValueError, NotImplementedError) as exc:
        print(f"qchom: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        _close_logging()


if __name__ == "__main__":
    sys.exit(main())
