"""Convergence studies, report emission and the ``verify`` driver."""
from __future__ import annotations

import csv
import io
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .ife import IFESpace, check_unisolvence_precondition
from .mesh import build_mesh, classify_elements, validate_mesh_size
from .problems import CircleProblem
from .quadrature import error_norms
from .solver import PenaltyParams, solve_interface_problem

EXACT_TOL = 1e-11
CSV_HEADER = ["n", "h", "L2", "L2_rate", "H1", "H1_rate"]


class StageError(RuntimeError):
    def __init__(self, n: int, stage: str, cause: BaseException):
        self.n = n
        self.stage = stage
        self.cause = cause
        super().__init__(f"n={n}: {stage} failed: {type(cause).__name__}: {cause}")


class MeshSizeWarning(UserWarning):
    pass


@dataclass
class ReportRow:
    n: int
    h: float
    L2: float
    H1: float
    L2_minus: float = float("nan")
    L2_plus: float = float("nan")
    H1_minus: float = float("nan")
    H1_plus: float = float("nan")
    L2_rate: float | None = None
    H1_rate: float | None = None
    iterations: int | None = None

    @property
    def exact(self) -> bool:
        return self.L2 <= EXACT_TOL and self.H1 <= EXACT_TOL


@dataclass
class ConvergenceReport:
    rows: list[ReportRow]
    config: dict
    warnings: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def L2_rates(self) -> list[float]:
        return [r.L2_rate for r in self.rows[1:]]

    @property
    def H1_rates(self) -> list[float]:
        return [r.H1_rate for r in self.rows[1:]]


def convergence_rate(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float | None:
    if e_coarse <= EXACT_TOL and e_fine <= EXACT_TOL:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def fill_rates(rows: list[ReportRow]) -> None:
    for prev, row in zip(rows, rows[1:]):
        row.L2_rate = convergence_rate(prev.L2, row.L2, prev.h, row.h)
        row.H1_rate = convergence_rate(prev.H1, row.H1, prev.h, row.h)


def build_space(config: RunConfig, n: int, curve=None) -> IFESpace:
    tag = config.tag
    mesh = build_mesh(config.domain, n, tag.kind)
    cls = classify_elements(mesh, curve or config.make_curve(), tag)
    kb = config.kappa_bar if config.check_preconditions else None
    return IFESpace(cls, config.beta_minus, config.beta_plus, kappa_bar=kb, lam=config.lam)


def problem_for(config: RunConfig) -> CircleProblem:
    if config.curve != "circle":
        raise ValueError("the manufactured solution needs a circular interface")
    return CircleProblem(config.beta_minus, config.beta_plus, r0=config.r, alpha=config.alpha, cx=config.cx, cy=config.cy)


def run_convergence(config: RunConfig) -> ConvergenceReport:
    if config.mode not in ("interp", "solve"):
        raise ValueError("run_convergence handles the interp and solve modes")
    if not config.mesh_sizes:
        raise ValueError("mesh_sizes is empty")
    if config.check_preconditions:
        check_unisolvence_precondition(config.tag, config.beta_minus, config.beta_plus, config.kappa_bar, config.lam)
    problem = problem_for(config)
    curve = problem.curve
    notes: list[str] = []
    rows: list[ReportRow] = []
    start = time.perf_counter()
    for n in config.mesh_sizes:
        stage = "mesh"
        try:
            mesh = build_mesh(config.domain, n, config.tag.kind)
            verdict = validate_mesh_size(mesh.h, curve.kappa, config.epsilon, config.kappa_bar)
            if not verdict.ok:
                msg = f"n={n}: h={mesh.h:.4g} exceeds the mesh-size bound {verdict.h_required:.4g}"
                notes.append(msg)
                warnings.warn(msg, MeshSizeWarning, stacklevel=2)
            stage = "classify"
            cls = classify_elements(mesh, curve, config.tag)
            stage = "basis"
            space = IFESpace(cls, config.beta_minus, config.beta_plus, kappa_bar=None, lam=config.lam)
            iterations = None
            if config.mode == "interp":
                stage = "interpolate"
                u = space.interpolate(*problem.u)
                stage = "norms"
                norms = error_norms(problem.u, problem.grad, u, space, config.quad_degree)
            else:
                stage = "solve"
                penalty = PenaltyParams(config.penalty_sigma(), config.symmetry)
                res = solve_interface_problem(space, problem, penalty, config.quad_degree, config.cg_tol)
                norms, iterations = res.norms, res.iterations
        except Exception as exc:  # noqa: BLE001 - re-raised with the failing stage
            raise StageError(n, stage, exc) from exc
        rows.append(ReportRow(n, mesh.spacing, norms.L2, norms.H1, norms.L2_minus, norms.L2_plus,
                              norms.H1_minus, norms.H1_plus, iterations=iterations))
    fill_rates(rows)
    return ConvergenceReport(rows, config.to_dict(), notes, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# report files


def fmt_e(x: float) -> str:
    """Five significant digits, compact exponent: ``9.0663E-3``."""
    if x == 0.0:
        return "0.0000E0"
    if not math.isfinite(x):
        return str(x)
    mant, exp = f"{x:.4E}".split("E")
    return f"{mant}E{int(exp)}"


def fmt_rate(r: float | None, exact: bool) -> str:
    if r is None:
        return "exact" if exact else ""
    return f"{r:#.5g}"


def round_sig(x: float, digits: int = 5) -> float:
    return float(f"{x:.{digits - 1}E}")


def report_table(report: ConvergenceReport) -> list[list[str]]:
    out = []
    for i, r in enumerate(report.rows):
        out.append([
            str(r.n),
            fmt_e(r.h),
            fmt_e(r.L2),
            "" if i == 0 else fmt_rate(r.L2_rate, r.exact),
            fmt_e(r.H1),
            "" if i == 0 else fmt_rate(r.H1_rate, r.exact),
        ])
    return out


def render_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(report_table(report))
    return buf.getvalue()


def render_md(report: ConvergenceReport) -> str:
    head = ["n", "h", "L2 error", "rate", "H1 error", "rate"]
    body = report_table(report)
    widths = [max(len(head[j]), *(len(row[j]) for row in body)) for j in range(len(head))]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    lines = [line(head), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [line(r) for r in body]
    lines.append("")
    sub_head = ["n", "L2 (minus)", "L2 (plus)", "H1 (minus)", "H1 (plus)"]
    sub = [[str(r.n), fmt_e(r.L2_minus), fmt_e(r.L2_plus), fmt_e(r.H1_minus), fmt_e(r.H1_plus)] for r in report.rows]
    widths = [max(len(sub_head[j]), *(len(row[j]) for row in sub)) for j in range(len(sub_head))]
    lines += [line(sub_head), "|" + "|".join("-" * (w + 2) for w in widths) + "|"] + [line(r) for r in sub]
    lines.append("")
    cfg = report.config
    lines.append(
        f"mode={cfg['mode']} element={cfg['element']} beta-={cfg['beta_minus']:g} beta+={cfg['beta_plus']:g} "
        f"quad_degree={cfg['quad_degree']}"
    )
    for note in report.warnings:
        lines.append(f"warning: {note}")
    return "\n".join(lines) + "\n"


def emit_report(report: ConvergenceReport, path: str | Path | None = None, fmt: str = "csv") -> str:
    """Render the report; write it to ``path`` when given.  Wall time is left out so reruns are byte-identical."""
    if not report.rows:
        raise ValueError("empty report")
    if fmt == "csv":
        text = render_csv(report)
    elif fmt == "md":
        text = render_md(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    return text


def read_report_csv(source: str | Path) -> list[dict]:
    """Parse an emitted CSV report (path or text) back into numbers; empty rate cells become None."""
    if isinstance(source, str) and "\n" in source:
        text = source
    else:
        text = Path(source).read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        rec = {"n": int(r["n"])}
        for key in ("h", "L2", "H1"):
            rec[key] = float(r[key])
        for key in ("L2_rate", "H1_rate"):
            rec[key] = None if r[key] in ("", "exact") else float(r[key])
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# verify mode


@dataclass
class VerifySummary:
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def text(self) -> str:
        lines = [r.line() for r in self.results]
        worst = max((r.worst for r in self.results if r.count), default=float("nan"))
        ok = sum(r.passed for r in self.results)
        lines.append(f"{ok}/{len(self.results)} suites passed; worst residual {worst:.3e}")
        return "\n".join(lines) + "\n"


def run_verify(config: RunConfig) -> VerifySummary:
    from .geometry import GeometryError
    from .ife import ConfigurationError, UnisolvenceMargin
    from .verification import (
        ALL_TAGS,
        SuiteResult,
        check_geometry_bounds,
        check_gradient_jump,
        check_identities,
        check_jump_matrices,
        check_sherman_morrison,
        rho_one_gap,
    )

    rng = np.random.default_rng(config.seed)
    rho = min(config.beta_minus, config.beta_plus) / max(config.beta_minus, config.beta_plus)
    m = config.verify_samples
    results = []

    try:
        check_unisolvence_precondition(config.tag, config.beta_minus, config.beta_plus, config.kappa_bar, config.lam)
        results.append(SuiteResult(f"precondition[{config.tag.name}]", 1, 0.0, 0.0))
    except ConfigurationError as exc:
        results.append(SuiteResult(f"precondition[{config.tag.name}]", 1, math.inf, 0.0, f"refused: {exc}"))

    jm = check_jump_matrices(rng, samples=10 * m, rho_min=rho, kappa_bar=config.kappa_bar)
    results.append(SuiteResult("jump_matrix_identities", 10 * m, max(jm.values()), 1e-12,
                               "worst of " + ", ".join(f"{k}={v:.1e}" for k, v in jm.items())))

    sm_worst, sm_count, refused = check_sherman_morrison(rng, samples=m, rho_min=rho)
    results.append(SuiteResult("sherman_morrison_vs_dense", sm_count, sm_worst, 1e-11,
                               f"{refused} refused" if refused else ""))

    ident, count = check_identities(rng, elements=m, rho_min=rho)
    results.append(SuiteResult("ife_identities", count, max(ident.values()) if ident else math.inf, 1e-9,
                               "worst of " + ", ".join(f"{k}={v:.1e}" for k, v in ident.items())))

    curve = config.make_curve()
    n0 = config.mesh_sizes[0] if config.mesh_sizes else 40
    try:
        gap_worst, gap_count = 0.0, 0
        for tag in ALL_TAGS:
            mesh = build_mesh(config.domain, n0, tag.kind)
            cls = classify_elements(mesh, curve, tag)
            g, c = rho_one_gap(cls)
            gap_worst, gap_count = max(gap_worst, g), gap_count + c
        results.append(SuiteResult("equal_coefficients_vs_standard", gap_count, gap_worst, 1e-12))
        wp, wn, cnt = check_geometry_bounds(cls, config.epsilon)
        results.append(SuiteResult("arc_to_chord_bound", cnt, wp, 1.0, "ratio to the bound"))
        results.append(SuiteResult("normal_variation_bound", cnt, wn, 1.0, "ratio to the bound"))
    except (GeometryError, UnisolvenceMargin) as exc:
        results.append(SuiteResult("mesh_suites", 0, math.inf, 0.0, str(exc)))

    if config.curve == "circle":
        gj = check_gradient_jump(problem_for(config))
        results.append(SuiteResult("gradient_jump_on_circle", 200, gj, 1e-10))
    return VerifySummary(results)
