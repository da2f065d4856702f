"""Command-line experiment runner.

Verbs ``cond``, ``linear``, ``hjb`` and ``mesh`` each write a CSV table and
a Markdown report (tables generated from the same rows, plus a config
echo) into ``--out``.  A config file holds ``key = value`` lines; list
values are comma separated and command-line flags override the file.
"""
import argparse
import configparser
import csv
import logging
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .fespace import HermiteSpace
from .hjb import NewtonError, error_norms, exp2, exp3, newton_solve, solve_linear, verify_cordes
from .krylov import LANCZOS_SEED, estimate_condition
from .mesh import Mesh, graded_lineage, uniform_rect_mesh
from .precond import AuxiliarySetup

log = logging.getLogger("hermite_hjb")

LAMBDAS = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
DEFAULT_LEVELS = {"cond": [4, 5, 6, 7, 8], "linear": [0, 1, 2], "hjb": [0, 1, 2, 3], "mesh": [3, 5, 7]}
# uniform refinement levels reachable without --full
DESK_CAP = {"linear": 2, "hjb": 3}


@dataclass
class ExperimentConfig:
    experiment: str
    lambdas: list = field(default_factory=lambda: list(LAMBDAS))
    levels: list = field(default_factory=list)
    omega: float = 0.1
    precond: str = "both"
    tol: float = 0.0
    rhs_mode: str = "l_lambda"
    out: str = ""
    seed: int = LANCZOS_SEED
    full: bool = False
    ordering: str = "bubble_first"
    formulation: str = "full"
    n_theta: int = 17
    n_rot: int = 64

    def __post_init__(self):
        if self.experiment not in DEFAULT_LEVELS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.levels:
            self.levels = list(DEFAULT_LEVELS[self.experiment])
        if not self.tol:
            self.tol = {"cond": 1e-4, "linear": 1e-6, "hjb": 1e-4, "mesh": 1e-4}[self.experiment]
        if not self.out:
            self.out = f"results/{self.experiment}"
        if any(not lam > 0 for lam in self.lambdas):
            raise ValueError("lambda values must be positive")
        if not 0 < self.tol < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.precond not in ("add", "mul", "both"):
            raise ValueError("precond must be add, mul or both")
        if self.rhs_mode not in ("l_lambda", "delta"):
            raise ValueError("rhs-mode must be l_lambda or delta")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if any(lv < 0 for lv in self.levels):
            raise ValueError("levels must be nonnegative")
        cap = DESK_CAP.get(self.experiment)
        if cap is not None and not self.full and max(self.levels) > cap:
            raise ValueError(f"levels above {cap} need --full")

    @property
    def variants(self):
        return ["add", "mul"] if self.precond == "both" else [self.precond]


def _parse_list(text, cast):
    return [cast(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _convert(name, value):
    if name == "lambdas":
        return _parse_list(value, float)
    if name == "levels":
        return _parse_list(value, int)
    if name in ("omega", "tol"):
        return float(value)
    if name in ("seed", "n_theta", "n_rot"):
        return int(value)
    if name == "full":
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    return str(value).strip()


ALIASES = {"lambda": "lambdas", "rhs-mode": "rhs_mode", "n-theta": "n_theta", "n-rot": "n_rot"}


def read_config(path):
    """Parse a ``key = value`` file (``#`` comments, optional section headers)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string("[run]\n" + text)
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = ALIASES.get(key, key.replace("-", "_"))
            if name not in known or name == "experiment":
                raise ValueError(f"unknown config key {key!r} in {path}")
            out[name] = _convert(name, value)
    return out


def build_config(experiment, args):
    values = read_config(args.config) if args.config else {}
    for name in ("lambdas", "levels", "omega", "precond", "tol", "rhs_mode", "out", "seed",
                 "ordering", "formulation"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if args.full:
        values["full"] = True
    return ExperimentConfig(experiment, **values)


def _revision():
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0:
            return rev.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


# -- experiments -----------------------------------------------------------

def run_cond(cfg):
    """Condition numbers of the preconditioned ``A_{lam,h}`` on the graded lineage."""
    meshes = graded_lineage(max(cfg.levels))
    rows = []
    for level in cfg.levels:
        space = HermiteSpace(meshes[level])
        setup = AuxiliarySetup(space)
        for lam in cfg.lambdas:
            A = setup.A(lam)
            for variant in cfg.variants:
                row = {"level": level, "dof": space.n_free, "lambda": lam, "variant": variant}
                try:
                    P = setup.preconditioner(lam, variant, omega=cfg.omega, ordering=cfg.ordering, A=A)
                    est = estimate_condition(A, P, seed=cfg.seed)
                    row.update(kappa=est.kappa, lam_min=est.lam_min, lam_max=est.lam_max,
                               method=est.method, iterations=est.iterations, status="ok")
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    log.error("cond cell failed: %s", exc)
                    row.update(status=f"failed: {exc}")
                rows.append(row)
                log.info("cond level=%d lambda=%g %s kappa=%s", level, lam, variant, row.get("kappa"))
    return rows


def linear_mesh(level):
    """Uniform mesh of ``(-1, 1)^2`` with ``32 * 2^level`` cells per side."""
    return uniform_rect_mesh((-1.0, 1.0, -1.0, 1.0), 1.0 / (16 * 2**level))


def run_linear(cfg):
    """PGMRES iteration counts for the linear non-divergence problem with ``lam = theta``."""
    rows = []
    for level in cfg.levels:
        space = HermiteSpace(linear_mesh(level))
        setup = AuxiliarySetup(space)
        for lam in cfg.lambdas:
            problem = exp2(lam)
            for variant in cfg.variants:
                row = {"level": level, "dof": space.n_free, "lambda": lam, "variant": variant}
                try:
                    res = solve_linear(problem, space, precond=variant, omega=cfg.omega, tol=cfg.tol,
                                       rhs_mode=cfg.rhs_mode, ordering=cfg.ordering, setup=setup)
                    err = error_norms(space, res.u, problem.exact, lam=lam)
                    row.update(iterations=res.iterations, err_L2=err["L2"], err_H2=err["H2"], status="ok")
                except Exception as exc:  # noqa: BLE001
                    log.error("linear cell failed: %s", exc)
                    row.update(status=f"failed: {exc}")
                rows.append(row)
                log.info("linear level=%d lambda=%g %s its=%s", level, lam, variant, row.get("iterations"))
    return rows


def hjb_mesh(level):
    """Uniform mesh of ``(0, 1)^2`` with ``h = 2^-(level + 2)``."""
    return uniform_rect_mesh((0.0, 1.0, 0.0, 1.0), 1.0 / 2 ** (level + 2))


def run_hjb(cfg):
    """Semi-smooth Newton on the HJB test problem."""
    problem = exp3(cfg.n_theta, cfg.n_rot)
    rng = np.random.default_rng(cfg.seed)
    report = verify_cordes(problem, rng.random((200, 2)))
    rows = []
    variant = "mul" if cfg.precond == "both" else cfg.precond
    for level in cfg.levels:
        space = HermiteSpace(hjb_mesh(level))
        h = 1.0 / 2 ** (level + 2)
        row = {"level": level, "dof": space.n_free, "h": h, "lambda": problem.lam, "eps": problem.eps,
               "cordes_ok": report.ok}
        try:
            state = newton_solve(problem, space, precond=variant, omega=cfg.omega, tol=cfg.tol,
                                 rhs_mode=cfg.rhs_mode, formulation=cfg.formulation,
                                 ordering=cfg.ordering)
            err = error_norms(space, state.u, problem.exact, lam=problem.lam)
            row.update(newton_steps=state.steps, avg_gmres=state.average_inner_iterations,
                       gmres_per_step=" ".join(map(str, state.inner_iterations)),
                       err_L2=err["L2"], err_H2=err["H2"], status="ok")
        except NewtonError as exc:
            row.update(newton_steps=exc.state.steps, status=f"failed: {exc}")
        except Exception as exc:  # noqa: BLE001
            row.update(status=f"failed: {exc}")
        log.info("hjb h=%g %s", h, row.get("status"))
        rows.append(row)
    return rows


def run_mesh(cfg):
    """Write the graded meshes as VTK files and check they reload intact."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meshes = graded_lineage(max(cfg.levels))
    rows = []
    for level in cfg.levels:
        mesh = meshes[level]
        dof = HermiteSpace(mesh).n_free
        stem = out / f"graded_level{level}_dof{dof}"
        row = {"level": level, "dof": dof, "triangles": mesh.n_triangles,
               "min_angle_deg": float(np.degrees(mesh.min_angles.min()))}
        try:
            mesh.to_vtk(stem.with_suffix(".vtk"))
            mesh.save(stem.with_suffix(".mesh"))
            Mesh.load(stem.with_suffix(".mesh")).validate()
            row.update(file=stem.with_suffix(".vtk").name, status="ok")
        except Exception as exc:  # noqa: BLE001
            row.update(status=f"failed: {exc}")
        rows.append(row)
    return rows


RUNNERS = {"cond": run_cond, "linear": run_linear, "hjb": run_hjb, "mesh": run_mesh}


# -- output ----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _pivot(rows, value, variant=None):
    sel = [r for r in rows if variant is None or r.get("variant") == variant]
    dofs = sorted({r["dof"] for r in sel})
    lams = sorted({r["lambda"] for r in sel})
    head = "| DOF | " + " | ".join(f"lambda={lam:g}" for lam in lams) + " |"
    lines = [head, "|" + "---|" * (len(lams) + 1)]
    for d in dofs:
        cells = []
        for lam in lams:
            hit = [r for r in sel if r["dof"] == d and r["lambda"] == lam]
            cells.append(_fmt(hit[0].get(value, "n/a")) if hit else "")
        lines.append(f"| {d:,} | " + " | ".join(cells) + " |")
    return lines


def _plain_table(rows):
    keys = list(dict.fromkeys(k for r in rows for k in r))
    lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(r.get(k, "")) for k in keys) + " |")
    return lines


def write_outputs(cfg, rows, elapsed):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.experiment}.csv"
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
    md = [f"# {cfg.experiment} results", ""]
    if cfg.experiment in ("cond", "linear"):
        value = "kappa" if cfg.experiment == "cond" else "iterations"
        for variant in cfg.variants:
            name = "additive" if variant == "add" else "multiplicative"
            extra = f", omega={cfg.omega:g}" if variant == "add" else ""
            md += [f"## {value} ({name}{extra})", ""] + _pivot(rows, value, variant) + [""]
    md += ["## All cells", ""] + _plain_table(rows) + [""]
    md += ["## Configuration", "", "```"]
    md += [f"{k} = {v}" for k, v in asdict(cfg).items()]
    md += [f"revision = {_revision()}", f"version = {__version__}", f"elapsed_seconds = {elapsed:.1f}", "```", ""]
    md_path = out / f"{cfg.experiment}.md"
    md_path.write_text("\n".join(md))
    return csv_path, md_path


# -- entry point -------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="hermite-hjb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, help_text in [("cond", "condition numbers on graded meshes"),
                            ("linear", "PGMRES iterations for the linear problem"),
                            ("hjb", "semi-smooth Newton for the HJB problem"),
                            ("mesh", "export graded meshes")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--lambda", dest="lambdas", type=lambda s: _parse_list(s, float),
                       help="comma-separated lambda values")
        p.add_argument("--levels", type=lambda s: _parse_list(s, int), help="comma-separated levels")
        p.add_argument("--omega", type=float, help="additive coarse-space weight")
        p.add_argument("--precond", choices=["add", "mul", "both"])
        p.add_argument("--tol", type=float)
        p.add_argument("--rhs-mode", dest="rhs_mode", choices=["l_lambda", "delta"])
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--full", action="store_true", help="allow the largest meshes")
        p.add_argument("--ordering", choices=["bubble_first", "natural"], help="Gauss-Seidel sweep order")
        p.add_argument("--formulation", choices=["full", "increment"], help="Newton linear solve")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args.experiment, args)
    except (ValueError, OSError, configparser.Error) as exc:
        parser.error(str(exc))
    start = time.perf_counter()
    rows = RUNNERS[cfg.experiment](cfg)
    csv_path, md_path = write_outputs(cfg, rows, time.perf_counter() - start)
    failed = [r for r in rows if r.get("status") != "ok"]
    print(f"wrote {csv_path} and {md_path}; {len(rows) - len(failed)}/{len(rows)} cells completed")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
