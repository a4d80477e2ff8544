"""Convergence experiments: configuration, level loops and CSV output."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .assembly import (SOLVER_RTOL, assemble_fosls, assemble_mixed,
                       fosls_functional, solve_fosls, solve_mixed,
                       write_system)
from .clement import clement_interpolate, make_weights, regularize
from .elements import P1Field, RT0Field
from .loads import get_case
from .mesh import (make_interval_mesh, make_square_mesh, refine_newest_vertex,
                   refine_uniform, write_mesh)
from .postprocess import (ERROR_DEGREE, ConvergenceRecord, eoc, error_h1,
                          error_l2, postprocess)

log = logging.getLogger(__name__)

METHODS = ("mixed", "fosls")
PROJECTORS = ("none", "clement", "weighted-clement")
BASES = ("criss-cross", "single")
REFINEMENTS = ("nvb", "red")

DIV_TOL = 1e-9
N_PERTURB = 20


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Flat, text-serializable description of one convergence run."""
    case: str = "l2-rough"
    method: str = "mixed"
    projector: str = "weighted-clement"
    base: str = "criss-cross"
    cells: int = 1
    levels: int = 8
    refinement: str = "nvb"
    quad_degree: Optional[int] = None
    error_degree: int = ERROR_DEGREE
    out: str = "."
    mesh_out: str = ""
    dump_system: str = ""

    def validate(self):
        try:
            case = get_case(self.case)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        for name, allowed in (("method", METHODS), ("projector", PROJECTORS),
                              ("base", BASES), ("refinement", REFINEMENTS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, "
                                  f"got {getattr(self, name)!r}")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.cells < 1:
            raise ConfigError("cells must be >= 1")
        for name in ("quad_degree", "error_degree"):
            d = getattr(self, name)
            if d is not None and not 1 <= d <= 20:
                raise ConfigError(f"{name} must lie in [1, 20]")
        if self.projector == "none" and not case.load.has_l2:
            raise ConfigError(f"case {self.case!r} has no L^2 load; "
                              "projector 'none' is undefined")
        return self

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"line {num}: unknown key {key!r}")
            values[key] = _coerce(key, kinds[key], val)
        return cls(**values)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def override(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def digest(self):
        """Hash of the result-determining fields (output paths excluded)."""
        clean = replace(self, out=".", mesh_out="", dump_system="")
        return hashlib.sha256(clean.to_text().encode()).hexdigest()[:16]


def _coerce(key, kind, val):
    kind = str(kind)
    if "int" in kind:
        if val == "" and "Optional" in kind:
            return None
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {val!r}") from None
    return val


# -- meshes -------------------------------------------------------------------

def base_mesh(case, config):
    if case.dim == 1:
        return make_interval_mesh(case.lo[0], case.hi[0],
                                  np.linspace(case.lo[0], case.hi[0],
                                              config.cells + 1)[1:-1])
    return make_square_mesh(case.lo, case.hi, config.cells, config.base)


def mesh_ladder(mesh, levels, refinement="nvb"):
    step = refine_newest_vertex if refinement == "nvb" else refine_uniform
    for k in range(levels):
        if k:
            mesh = step(mesh)
        yield mesh


# -- generic level loop ----------------------------------------------------------

@dataclass
class LevelResult:
    record: ConvergenceRecord
    checks: dict = field(default_factory=dict)


def _perturbation_check(mesh, sol, rhs, rng):
    """Functional at the solution vs. at random perturbed candidates."""
    j0 = fosls_functional(mesh, sol.u, sol.sigma, rhs)
    iv = mesh.interior_vertices
    scale = 1e-3 * max(np.abs(sol.sigma.values).max(initial=0.0), 1.0)
    worst = math.inf
    for _ in range(N_PERTURB):
        du = np.zeros(mesh.n_vertices)
        du[iv] = rng.standard_normal(len(iv)) * scale
        ds = rng.standard_normal(mesh.n_facets) * scale
        u = P1Field(sol.u.values + du, homogeneous_bc=True)
        s = RT0Field(sol.sigma.values + ds)
        worst = min(worst, fosls_functional(mesh, u, s, rhs) - j0)
    return j0, worst


def solve_level(mesh, case, method, projector, quad_degree=None,
                error_degree=ERROR_DEGREE, rng=None):
    """Solve one mesh and measure errors plus structural identities."""
    sing = case.singular_lines
    res = case.resolution
    rhs = regularize(case.load, mesh, projector, quad_degree)
    errors, checks = {}, {}
    if method == "mixed":
        sol = solve_mixed(mesh, rhs)
        div = sol.sigma.divergence(mesh)
        checks["div_residual"] = float(np.max(np.abs(div + rhs.values)))
        ustar = postprocess(sol, mesh)
        checks["mean_exact"] = bool(np.array_equal(ustar.means, sol.u.values))
        errors["errSigmaL2"] = error_l2(case.exact_grad_u, sol.sigma, mesh,
                                        error_degree, sing, res)
        errors["errUL2"] = error_l2(case.exact_u, sol.u, mesh, error_degree,
                                    sing, res)
        errors["errUstar"] = error_l2(case.exact_u, ustar, mesh, error_degree,
                                      sing, res)
        dofs = mesh.n_facets + mesh.n_elements
    else:
        sol = solve_fosls(mesh, rhs)
        rng = np.random.default_rng(0) if rng is None else rng
        j0, gain = _perturbation_check(mesh, sol, rhs, rng)
        checks["functional"] = j0
        checks["min_perturbation_gain"] = gain
        errors["errSigmaL2"] = error_l2(case.exact_grad_u, sol.sigma, mesh,
                                        error_degree, sing, res)
        errors["errUL2"] = error_l2(case.exact_u, sol.u, mesh, error_degree,
                                    sing, res)
        errors["errUH1"] = error_h1(case.exact_grad_u, sol.u, mesh,
                                    error_degree, sing, res)
        dofs = mesh.n_facets + len(mesh.interior_vertices)
    return sol, rhs, errors, checks, dofs


def check_identities(checks):
    """Raise if a structural identity of a solve is violated."""
    if checks.get("div_residual", 0.0) > DIV_TOL:
        raise RuntimeError(f"divergence identity violated: "
                           f"{checks['div_residual']:.3e}")
    if checks.get("mean_exact") is False:
        raise RuntimeError("postprocessed means differ from u_T")
    gain = checks.get("min_perturbation_gain")
    if gain is not None and gain < -1e-12 * max(1.0, checks["functional"]):
        raise RuntimeError(f"FOSLS solution is not minimal (gain {gain:.3e})")


def run_case(config):
    """All levels of one configuration; returns ``LevelResult`` list."""
    config.validate()
    case = get_case(config.case)
    rng = np.random.default_rng(12345)
    results = []
    mesh = None
    for level, mesh in enumerate(
            mesh_ladder(base_mesh(case, config), config.levels,
                        config.refinement), start=1):
        _, rhs, errors, checks, dofs = solve_level(
            mesh, case, config.method, config.projector, config.quad_degree,
            config.error_degree, rng)
        check_identities(checks)
        log.info("level %d  #T=%d  %s", level, mesh.n_elements,
                 "  ".join(f"{k}={v:.3e}" for k, v in errors.items()))
        results.append(LevelResult(
            ConvergenceRecord(level, mesh.n_elements, dofs, errors), checks))
    eoc([r.record for r in results], case.dim)
    _dump_artifacts(config, case, mesh, rhs)
    return results


def _dump_artifacts(config, case, mesh, rhs):
    if config.mesh_out:
        write_mesh(mesh, config.mesh_out)
    if config.dump_system:
        if config.method == "mixed":
            system = assemble_mixed(mesh, rhs)[2]
        else:
            system = assemble_fosls(mesh, rhs)
        write_system(config.dump_system, system.matrix)


# -- 1D quasi-interpolation --------------------------------------------------------

def alternating_breakpoints(pairs):
    """Interior points of the h/2h mesh of (0, 1) with ``2 * pairs`` cells."""
    h = 1.0 / (3 * pairs)
    steps = np.tile([h, 2 * h], pairs)
    return np.cumsum(steps)[:-1]


def clement1d_errors(mesh, case=None, degree=ERROR_DEGREE):
    """``||u - J u||`` for the uniform and weighted quasi-interpolators."""
    case = get_case("clement1d") if case is None else case
    out = {}
    for key, proj in (("errVL2", "clement"), ("errVL2w", "weighted-clement")):
        w = make_weights(mesh, proj)
        ju = clement_interpolate(w, case.exact_u, mesh, degree)
        out[key] = error_l2(case.exact_u, ju, mesh, degree)
    return out


def run_clement1d(levels=8):
    """Records for the uniform and the alternating mesh families."""
    if levels < 4:
        raise ConfigError("clement1d needs at least 4 levels")
    fams = {}
    for name in ("uniform", "alternating"):
        recs = []
        for k in range(1, levels + 1):
            if name == "uniform":
                mesh = make_interval_mesh(0.0, 1.0,
                                          np.linspace(0, 1, 2 ** k + 1)[1:-1])
            else:
                mesh = make_interval_mesh(0.0, 1.0,
                                          alternating_breakpoints(2 ** (k - 1)))
            recs.append(ConvergenceRecord(k, mesh.n_elements, mesh.n_vertices,
                                          clement1d_errors(mesh)))
        fams[name] = eoc(recs, 1)
    return fams


# -- table layouts -----------------------------------------------------------------

EOC_NAMES = {"errSigmaL2": "eocSigma", "errUL2": "eocU",
             "errUstar": "eocUstar", "errUH1": "eocUH1",
             "errVL2": "eocVL2", "errVL2w": "eocVL2w"}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_rows(blocks, count="nT"):
    """Merge per-method record lists into rows of named columns.

    ``blocks`` maps a column suffix (may be empty) to a record list; all lists
    must share the mesh ladder.
    """
    first = next(iter(blocks.values()))
    header = [count, "dofs"]
    rows = []
    for i, rec in enumerate(first):
        row = {count: rec.n_elements, "dofs": rec.dofs}
        for suffix, recs in blocks.items():
            r = recs[i]
            if r.n_elements != rec.n_elements:
                raise ValueError("record lists are not aligned")
            for key, val in r.errors.items():
                row[key + suffix] = val
                row[EOC_NAMES.get(key, "eoc" + key) + suffix] = r.eoc.get(key)
        rows.append(row)
    for key in rows[0]:
        if key not in header:
            header.append(key)
    return header, rows


def provenance(name, config=None, **extra):
    items = {"experiment": name}
    if config is not None:
        items["config_sha256"] = config.digest
        items["load_quad_degree"] = (config.quad_degree if config.quad_degree
                                     else get_case(config.case).load.degree)
        items["error_quad_degree"] = config.error_degree
        items["refinement"] = config.refinement
        items["base"] = config.base
    items["solver_rtol"] = SOLVER_RTOL
    items.update(extra)
    return "# clementfem " + " ".join(f"{k}={v}" for k, v in items.items())


def write_csv(path, header, rows, comment):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in header])
    return path


def format_table(header, rows):
    """Plain-text rendering with 3 significant digits."""
    def cell(k, v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.2f}" if k.startswith(("eoc", "ratio")) else f"{v:.2e}"
        return str(v)
    body = [[cell(k, r.get(k)) for k in header] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body))
              for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


# -- named experiments -----------------------------------------------------------

def hms_config(levels=7, **kw):
    return ExperimentConfig(case="hms-quarter", method="mixed",
                            projector="weighted-clement", levels=levels,
                            **kw).validate()


def compare_configs(case, method, levels, **kw):
    std = ExperimentConfig(case=case, method=method, projector="none",
                           levels=levels, **kw).validate()
    return std, replace(std, projector="weighted-clement").validate()


def run_compare(case, method, levels, order=("std", "reg"), **kw):
    std, reg = compare_configs(case, method, levels, **kw)
    res = {"std": run_case(std), "reg": run_case(reg)}
    blocks = {"_" + k: [r.record for r in res[k]] for k in order}
    header, rows = table_rows(blocks)
    return std, header, rows


def run_mixed_l2_compare(levels=8, **kw):
    """Standard vs. weighted-projector mixed FEM on the ``l2-rough`` case."""
    return run_compare("l2-rough", "mixed", levels, ("std", "reg"), **kw)


def run_fosls_waterfall(levels=8, **kw):
    """Weighted-projector vs. standard FOSLS on the waterfall case, with the
    ratio of the two ``u`` errors."""
    cfg, header, rows = run_compare("waterfall", "fosls", levels,
                                    ("reg", "std"), **kw)
    for row in rows:
        row["ratioU"] = row["errUL2_std"] / row["errUL2_reg"]
    return cfg, header + ["ratioU"], rows


def run_generic(config):
    results = run_case(config)
    header, rows = table_rows({"": [r.record for r in results]})
    return header, rows
