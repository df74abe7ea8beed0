"""Batch harness: run specs in, machine-readable reports and CSV dumps out.

A run spec names one subject (model, surface, family or embedding; builtin
or inline schema), a parameter grid, and a list of checks.  ``run`` executes
every check, captures per-check errors without aborting siblings, and
returns a deterministic report (identical specs and seeds give identical
reports up to the timestamp field).

The ``igeo`` command exposes four subcommands over the same spec document:
``verify`` (checks + report), ``compute`` (adds tensor CSV dumps),
``geodesic`` (path CSV) and ``classify`` (surface flags).  Exit code 0 when
every check passes, 1 when any fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__, dualflat, immersion, infogeo, models, submanifold
from .errors import DegenerateH, IgeoError, SchemaError, SingularFrame

DEFAULT_TOLERANCES = {
    "validate": None,              # model's own profile
    "flatness": 1e-3,
    "alpha-duality": 1e-4,
    "codazzi": 1e-4,
    "cubic-symmetry": 1e-4,
    "exponential-form": 1e-4,
    "structural": 1e-6,
    "classify": 1e-6,
    "volume-transport": 1e-6,
    "statistical-structure": 1e-5,
    "legendre-roundtrip": 1e-8,
    "hessian-vs-fisher": 1e-4,
    "graph-realization": 1e-5,
    "centro-affine-lift": 1e-6,
    "autoparallel": 1e-5,
    "embedding-curvature": 1e-5,
    "geodesic": 1e-8,
}

_SUBJECT_KINDS = ("model", "surface", "family", "embedding")


@dataclass(frozen=True, eq=False)
class RunSpec:
    """Validated run description."""

    kind: str
    subject_doc: object
    grid_doc: Optional[dict]
    checks: tuple
    alphas: tuple
    tolerances: dict
    expect: dict
    seed: Optional[int]
    geodesic_doc: Optional[dict]
    label: str
    raw: dict

    @classmethod
    def from_dict(cls, doc: dict, seed_override: Optional[int] = None,
                  tol_overrides: Optional[dict] = None) -> "RunSpec":
        if not isinstance(doc, dict):
            raise SchemaError("run spec must be a mapping")
        subject = doc.get("subject")
        if not isinstance(subject, dict) or len(subject) != 1:
            raise SchemaError('spec needs "subject": {kind: reference-or-schema}')
        kind, subject_doc = next(iter(subject.items()))
        if kind not in _SUBJECT_KINDS:
            raise SchemaError(f"unknown subject kind {kind!r}")
        checks = doc.get("checks")
        if not isinstance(checks, list) or not checks:
            raise SchemaError("spec needs a non-empty list of checks")
        for c in checks:
            if c not in CHECKS:
                raise SchemaError(f"unknown check {c!r}")
            if kind not in CHECKS[c].kinds:
                raise SchemaError(f"check {c!r} does not apply to a {kind}")
        grid_doc = doc.get("grid")
        if grid_doc is not None:
            for key in ("lo", "hi", "counts"):
                if key not in grid_doc:
                    raise SchemaError(f'grid needs "{key}"')
            if any(int(c) < 1 for c in grid_doc["counts"]):
                raise SchemaError("grid counts must be >= 1")
        alphas = tuple(float(a) for a in doc.get("alpha", [1.0]))
        tolerances = dict(doc.get("tolerances", {}))
        for name in tolerances:
            if name not in DEFAULT_TOLERANCES:
                raise SchemaError(f"tolerance override for unknown check {name!r}")
        if tol_overrides:
            tolerances.update(tol_overrides)
        expect = doc.get("expect", {})
        if not isinstance(expect, dict):
            raise SchemaError("expect must be a mapping")
        seed = doc.get("seed")
        if seed_override is not None:
            seed = seed_override
        geodesic_doc = doc.get("geodesic")
        if "geodesic" in checks and geodesic_doc is None:
            raise SchemaError('the geodesic check needs a "geodesic" block '
                              '(theta0, v0, t_final, steps)')
        return cls(kind=kind, subject_doc=subject_doc, grid_doc=grid_doc,
                   checks=tuple(checks), alphas=alphas, tolerances=tolerances,
                   expect=expect, seed=None if seed is None else int(seed),
                   geodesic_doc=geodesic_doc,
                   label=str(doc.get("label", kind)), raw=doc)

    def tol(self, check: str, fallback: Optional[float] = None) -> Optional[float]:
        if check in self.tolerances:
            return float(self.tolerances[check])
        default = DEFAULT_TOLERANCES.get(check)
        return default if default is not None else fallback


def _load_subject(spec: RunSpec):
    doc = spec.subject_doc
    if isinstance(doc, str):
        doc = {"builtin": doc}
    if spec.kind == "model":
        return models.load_model(doc)
    if spec.kind == "surface":
        return immersion.load_surface(doc)
    if spec.kind == "family":
        return dualflat.load_family(doc)
    return submanifold.load_embedding(doc)


def _domain_of(spec: RunSpec, subject):
    return subject.domain


def _grid_points(spec: RunSpec, subject) -> list:
    if spec.grid_doc is None:
        # default: 3 points per coordinate over the middle half of the domain
        box = _domain_of(spec, subject)
        lo = np.asarray(box.lo)
        hi = np.asarray(box.hi)
        quarter = (hi - lo) / 4.0
        inner = models.Box(tuple(lo + quarter), tuple(hi - quarter))
        return inner.grid([3] * box.dim)
    g = spec.grid_doc
    axes = [np.linspace(float(a), float(b), int(c))
            for a, b, c in zip(g["lo"], g["hi"], g["counts"])]
    mesh = np.meshgrid(*axes, indexing="ij")
    return [np.array(p) for p in zip(*(m.ravel() for m in mesh))]


# ---------------------------------------------------------------------------
# Check implementations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckDef:
    kinds: tuple
    runner: Callable


@dataclass
class CheckResult:
    status: str                  # pass | fail | untestable | error
    residuals: dict = field(default_factory=dict)
    tolerance: object = None
    provenance: str = ""
    detail: str = ""


def _expected_flag(spec: RunSpec, check: str, default=True, alpha=None):
    raw = spec.expect.get(check, default)
    if isinstance(raw, dict):
        if alpha is None:
            return default
        for key, val in raw.items():
            if abs(float(key) - alpha) < 1e-12:
                return bool(val)
        return default
    return bool(raw)


def _assert_status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _check_validate(spec, subject, grid):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    report = models.validate_model(model, grid)
    override = spec.tol("validate")
    passed = report.passed if override is None else \
        report.max_normalization_residual < override
    return CheckResult(
        status=_assert_status(passed),
        residuals={
            "max_normalization_residual": report.max_normalization_residual,
            "max_score_gram_condition": max(e.score_gram_condition
                                            for e in report.entries),
            "all_smooth": all(e.smooth for e in report.entries),
        },
        tolerance=override if override is not None else report.tolerance,
        provenance="normalization by the space's expectation rule")


def _check_flatness(spec, subject, grid):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    tol = spec.tol("flatness")
    residuals = {}
    ok = True
    for alpha in spec.alphas:
        rep = infogeo.flatness_check(model, grid, alpha, tol=tol)
        residuals[f"alpha={alpha:g}"] = {"flat": rep.flat, "max_R": rep.max_R,
                                         "max_torsion": rep.max_torsion}
        ok = ok and (rep.flat == _expected_flag(spec, "flatness", True, alpha))
    return CheckResult(status=_assert_status(ok), residuals=residuals,
                       tolerance=tol,
                       provenance="curvature of the alpha-connection field")


def _check_alpha_duality(spec, subject, grid):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    tol = spec.tol("alpha-duality")
    gf = infogeo.fisher_field(model)
    worst = 0.0
    for alpha in spec.alphas:
        conn = infogeo.alpha_field(model, alpha)
        for theta in grid:
            conj = infogeo.conjugate_connection(gf, conn, theta)
            direct = infogeo.alpha_connection(model, theta, -alpha)
            worst = max(worst, float(np.abs(conj - direct).max()))
    return CheckResult(status=_assert_status(worst < tol),
                       residuals={"max_difference": worst}, tolerance=tol,
                       provenance="conjugate via dg identity vs direct "
                                  "evaluation at -alpha")


def _check_codazzi(spec, subject, grid):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    tol = spec.tol("codazzi")
    gf = infogeo.fisher_field(model)
    residuals = {}
    worst = 0.0
    for alpha in spec.alphas:
        conn = infogeo.alpha_field(model, alpha)
        r = max(infogeo.codazzi_check(gf, conn, theta) for theta in grid)
        residuals[f"alpha={alpha:g}"] = r
        worst = max(worst, r)
    return CheckResult(status=_assert_status(worst < tol),
                       residuals=residuals, tolerance=tol,
                       provenance="max |(nabla_i h)_jk - (nabla_k h)_ji|")


def _check_cubic_symmetry(spec, subject, grid):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    tol = spec.tol("cubic-symmetry")
    alphas = [a for a in spec.alphas if a != 0.0] or [1.0]
    worst_sym = 0.0
    worst_spread = 0.0
    base = None
    for alpha in alphas:
        C = infogeo.cubic_tensor(model, grid[0], alpha)
        for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
            worst_sym = max(worst_sym,
                            float(np.abs(C - np.transpose(C, perm)).max()))
        if base is None:
            base = C
        else:
            worst_spread = max(worst_spread, float(np.abs(C - base).max()))
    ok = worst_sym < tol and worst_spread < tol
    return CheckResult(status=_assert_status(ok),
                       residuals={"max_asymmetry": worst_sym,
                                  "max_alpha_spread": worst_spread},
                       tolerance=tol,
                       provenance="skewness tensor from alpha spread")


def _check_exponential_form(spec, subject, grid):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    tol = spec.tol("exponential-form")
    rep = submanifold.exponential_form_check(model, grid, tol=tol)
    expected = _expected_flag(spec, "exponential-form", True)
    return CheckResult(status=_assert_status(rep.is_exponential_form == expected),
                       residuals={"is_exponential_form": rep.is_exponential_form,
                                  "max_variation": rep.max_variation},
                       tolerance=tol, provenance=rep.note)


def _check_structural(spec, subject, grid):
    tol = spec.tol("structural")
    worst = {"gauss": 0.0, "codazzi_h": 0.0, "codazzi_s": 0.0, "ricci": 0.0}
    for u in grid:
        r = immersion.structural_check(subject, u)
        worst["gauss"] = max(worst["gauss"], r.gauss)
        worst["codazzi_h"] = max(worst["codazzi_h"], r.codazzi_h)
        worst["codazzi_s"] = max(worst["codazzi_s"], r.codazzi_s)
        worst["ricci"] = max(worst["ricci"], r.ricci)
    ok = max(worst.values()) < tol
    return CheckResult(status=_assert_status(ok), residuals=worst,
                       tolerance=tol,
                       provenance="Gauss, two Codazzi and Ricci identities "
                                  "of the induced data")


def _check_classify(spec, subject, grid):
    tol = spec.tol("classify")
    rep = immersion.classify(subject, grid, tol=tol)
    flags = {
        "centro_affine": rep.flags.centro_affine,
        "equiaffine": rep.flags.equiaffine,
        "nondegenerate": rep.flags.nondegenerate,
        "blaschke": rep.flags.blaschke,
        "improper_hypersphere": rep.flags.improper_hypersphere,
        "proper_hypersphere": rep.flags.proper_hypersphere,
    }
    expected = spec.expect.get("classify", {})
    ok = all(flags.get(k) == bool(v) for k, v in expected.items())
    residuals = dict(flags)
    residuals.update({"lambda": rep.lambda_mean,
                      "lambda_deviation": rep.lambda_deviation,
                      "max_alpha": rep.max_alpha,
                      "min_abs_det_h": rep.min_abs_det_h,
                      "max_blaschke_gap": rep.max_blaschke_gap})
    return CheckResult(status=_assert_status(ok), residuals=residuals,
                       tolerance=tol, provenance="thresholded grid flags")


def _check_volume_transport(spec, subject, grid):
    tol = spec.tol("volume-transport")
    worst_transport = 0.0
    worst_gap = 0.0
    testable = True
    for u in grid:
        try:
            v = immersion.induced_volume_check(subject, u)
            worst_transport = max(worst_transport, v.transport_residual)
            worst_gap = max(worst_gap, v.blaschke_gap)
        except DegenerateH:
            testable = False
    if not testable:
        return CheckResult(status="untestable",
                           residuals={"max_transport_residual": worst_transport},
                           tolerance=tol,
                           detail="h degenerate somewhere on the grid")
    return CheckResult(status=_assert_status(worst_transport < tol),
                       residuals={"max_transport_residual": worst_transport,
                                  "max_blaschke_gap": worst_gap},
                       tolerance=tol,
                       provenance="volume transport nabla eta = alpha eta")


def _check_statistical_structure(spec, subject, grid):
    tol = spec.tol("statistical-structure")
    try:
        rep = immersion.statistical_structure(subject, grid, tol=tol)
    except DegenerateH as exc:
        return CheckResult(status="untestable", tolerance=tol, detail=str(exc))
    expected = _expected_flag(spec, "statistical-structure", True)
    return CheckResult(status=_assert_status(rep.is_statistical == expected),
                       residuals={"codazzi_residual": rep.codazzi_residual,
                                  "is_statistical": rep.is_statistical},
                       tolerance=tol,
                       provenance="Codazzi residual of the induced pair")


def _check_legendre(spec, subject, grid):
    tol = spec.tol("legendre-roundtrip")
    worst = 0.0
    for theta in grid:
        eta = dualflat.dual_coords(subject, theta)
        back = dualflat.legendre_inverse(subject, eta,
                                         theta0=np.asarray(theta, float))
        worst = max(worst, float(np.abs(back - np.asarray(theta, float)).max()))
    return CheckResult(status=_assert_status(worst < tol),
                       residuals={"max_roundtrip_error": worst}, tolerance=tol,
                       provenance="theta -> grad K -> Newton inverse")


def _check_hessian_vs_fisher(spec, subject, grid):
    tol = spec.tol("hessian-vs-fisher")
    model = dualflat.family_model(subject)
    worst = 0.0
    for theta in grid:
        H = dualflat.hessian_metric(subject, theta)
        g = infogeo.fisher_metric(model, theta)
        worst = max(worst, float(np.abs(H - g).max()))
    return CheckResult(status=_assert_status(worst < tol),
                       residuals={"max_difference": worst}, tolerance=tol,
                       provenance="Hess K vs score covariance")


def _check_graph_realization(spec, subject, grid):
    tol_h = spec.tol("graph-realization")
    tol_zero = 1e-6
    surf = dualflat.graph_realization(subject)
    worst_h = worst_zero = 0.0
    for theta in grid:
        data = immersion.decompose(surf, theta)
        H = dualflat.hessian_metric(subject, theta)
        worst_h = max(worst_h, float(np.abs(data.h - H).max()))
        worst_zero = max(worst_zero,
                         float(np.abs(data.gamma).max()),
                         float(np.abs(data.shape_operator).max()),
                         float(np.abs(data.alpha_form).max()))
    ok = worst_h < tol_h and worst_zero < tol_zero
    return CheckResult(status=_assert_status(ok),
                       residuals={"max_h_minus_hessK": worst_h,
                                  "max_gamma_S_alpha": worst_zero},
                       tolerance={"h_vs_hessK": tol_h, "gamma_S_alpha": tol_zero},
                       provenance="decomposition of the potential graph")


def _check_centro_affine_lift(spec, subject, grid):
    tol = spec.tol("centro-affine-lift")
    surf = dualflat.centro_affine_lift(subject)
    n = subject.dim
    worst_rho = 0.0
    equivalent = True
    try:
        for theta in grid:
            data = immersion.decompose(surf, theta)
            pr = infogeo.projective_equivalence(np.zeros((n, n, n)), data.gamma,
                                                tol=tol)
            # default psi = exp K, so -d log psi = -grad K
            rho_expected = -dualflat.dual_coords(subject, theta)
            worst_rho = max(worst_rho,
                            float(np.abs(pr.rho - rho_expected).max()),
                            pr.residual)
            equivalent = equivalent and pr.equivalent
    except SingularFrame as exc:
        return CheckResult(status="untestable", tolerance=tol, detail=str(exc),
                           provenance="lift transversality is a local property")
    ok = equivalent and worst_rho < tol
    return CheckResult(status=_assert_status(ok),
                       residuals={"projectively_flat": equivalent,
                                  "max_rho_error": worst_rho},
                       tolerance=tol,
                       provenance="induced connection vs rho-deformed flat "
                                  "connection, rho = -d log psi")


def _check_autoparallel(spec, subject, grid):
    tol = spec.tol("autoparallel")
    alpha = spec.alphas[0]
    conn = infogeo.alpha_field(subject.ambient, alpha)
    gf = infogeo.fisher_field(subject.ambient)
    rep = submanifold.autoparallel_check(subject, conn, gf, grid, tol=tol)
    expected = _expected_flag(spec, "autoparallel", True, alpha)
    return CheckResult(status=_assert_status(rep.autoparallel == expected),
                       residuals={"autoparallel": rep.autoparallel,
                                  "max_abs_H": rep.max_abs,
                                  "alpha": alpha},
                       tolerance=tol,
                       provenance="embedding curvature in a g-orthonormal "
                                  "normal frame")


def _check_embedding_curvature(spec, subject, grid):
    tol = spec.tol("embedding-curvature")
    alpha = spec.alphas[0]
    conn = infogeo.alpha_field(subject.ambient, alpha)
    gf = infogeo.fisher_field(subject.ambient)
    worst = 0.0
    for u in grid:
        worst = max(worst, submanifold.embedding_curvature(
            subject, conn, gf, u).max_abs)
    return CheckResult(status="pass",
                       residuals={"max_abs_H": worst, "alpha": alpha},
                       tolerance=tol, provenance="informational sweep")


def _check_geodesic(spec, subject, grid):
    doc = spec.geodesic_doc
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    alpha = float(doc.get("alpha", 1.0))
    conn = infogeo.alpha_field(model, alpha)
    path = dualflat.geodesic(conn, doc["theta0"], doc["v0"],
                             float(doc.get("t_final", 1.0)),
                             int(doc.get("steps", 1000)),
                             domain=model.domain)
    gf = infogeo.fisher_field(model)
    speeds = [float(v @ gf(th) @ v) for th, v in
              zip(path.theta[::max(1, len(path.theta) // 20)],
                  path.velocity[::max(1, len(path.velocity) // 20)])]
    drift = max(abs(s - speeds[0]) for s in speeds)
    return CheckResult(status="pass",
                       residuals={"alpha": alpha,
                                  "final_theta": [float(v) for v in path.final_theta],
                                  "speed_drift": drift},
                       tolerance=spec.tol("geodesic"),
                       provenance="fixed-step RK4; g-speed sampled along path",
                       detail=f"steps={len(path.t) - 1}")


CHECKS = {
    "validate": CheckDef(("model", "family"), _check_validate),
    "flatness": CheckDef(("model", "family"), _check_flatness),
    "alpha-duality": CheckDef(("model", "family"), _check_alpha_duality),
    "codazzi": CheckDef(("model", "family"), _check_codazzi),
    "cubic-symmetry": CheckDef(("model", "family"), _check_cubic_symmetry),
    "exponential-form": CheckDef(("model", "family"), _check_exponential_form),
    "structural": CheckDef(("surface",), _check_structural),
    "classify": CheckDef(("surface",), _check_classify),
    "volume-transport": CheckDef(("surface",), _check_volume_transport),
    "statistical-structure": CheckDef(("surface",), _check_statistical_structure),
    "legendre-roundtrip": CheckDef(("family",), _check_legendre),
    "hessian-vs-fisher": CheckDef(("family",), _check_hessian_vs_fisher),
    "graph-realization": CheckDef(("family",), _check_graph_realization),
    "centro-affine-lift": CheckDef(("family",), _check_centro_affine_lift),
    "autoparallel": CheckDef(("embedding",), _check_autoparallel),
    "embedding-curvature": CheckDef(("embedding",), _check_embedding_curvature),
    "geodesic": CheckDef(("model", "family"), _check_geodesic),
}


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else repr(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


@dataclass
class RunReport:
    label: str
    spec_echo: dict
    results: dict

    @property
    def all_passed(self) -> bool:
        return all(r.status == "pass" for r in self.results.values())

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "spec": _jsonable(self.spec_echo),
            "all_passed": self.all_passed,
            "results": {
                name: {
                    "status": r.status,
                    "residuals": _jsonable(r.residuals),
                    "tolerance": _jsonable(r.tolerance),
                    "oracle_provenance": r.provenance,
                    "detail": r.detail,
                }
                for name, r in self.results.items()
            },
        }


@dataclass
class Report:
    runs: list
    seed: Optional[int] = None
    timestamp: str = ""

    @property
    def all_passed(self) -> bool:
        return all(r.all_passed for r in self.runs)

    def to_dict(self) -> dict:
        return {
            "toolkit": {"name": "igeo", "version": __version__},
            "seed": self.seed,
            "all_passed": self.all_passed,
            "runs": [r.to_dict() for r in self.runs],
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run(spec: RunSpec) -> RunReport:
    """Execute every check of one spec; per-check failures never propagate."""
    subject = _load_subject(spec)
    grid = _grid_points(spec, subject)
    results = {}
    for name in spec.checks:
        try:
            results[name] = CHECKS[name].runner(spec, subject, grid)
        except IgeoError as exc:
            results[name] = CheckResult(status="error", detail=str(exc))
        except Exception as exc:  # never abort sibling checks
            results[name] = CheckResult(
                status="error", detail=f"{type(exc).__name__}: {exc}")
    return RunReport(label=spec.label, spec_echo=spec.raw, results=results)


def run_document(doc: dict, seed_override=None, tol_overrides=None) -> Report:
    """Run a single spec or a {"runs": [...]} collection."""
    if "runs" in doc:
        if not isinstance(doc["runs"], list) or not doc["runs"]:
            raise SchemaError('"runs" must be a non-empty list of specs')
        specs = [RunSpec.from_dict(d, seed_override, tol_overrides)
                 for d in doc["runs"]]
    else:
        specs = [RunSpec.from_dict(doc, seed_override, tol_overrides)]
    reports = [run(s) for s in specs]
    seed = specs[0].seed
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return Report(runs=reports, seed=seed, timestamp=stamp)


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------

def write_tensor_csv(path, header, rows):
    """Fixed-header CSV: index columns then a single value column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def dump_model_tensors(spec: RunSpec, subject, grid, out_dir: Path):
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    rows_g = []
    rows_c = []
    for p, theta in enumerate(grid):
        g = infogeo.fisher_metric(model, theta)
        for i in range(model.dim):
            for j in range(model.dim):
                rows_g.append([p, i, j, repr(float(g[i, j]))])
        for alpha in spec.alphas:
            low = infogeo.alpha_connection(model, theta, alpha)
            for i in range(model.dim):
                for j in range(model.dim):
                    for k in range(model.dim):
                        rows_c.append([p, alpha, i, j, k,
                                       repr(float(low[i, j, k]))])
    write_tensor_csv(out_dir / "fisher.csv", ["point", "i", "j", "value"], rows_g)
    write_tensor_csv(out_dir / "connection.csv",
                     ["point", "alpha", "i", "j", "k", "value"], rows_c)
    write_tensor_csv(out_dir / "grid.csv",
                     ["point"] + [f"theta_{i}" for i in range(model.dim)],
                     [[p] + [repr(float(v)) for v in np.atleast_1d(theta)]
                      for p, theta in enumerate(grid)])


def dump_surface_tensors(spec: RunSpec, subject, grid, out_dir: Path):
    rows = []
    n = subject.dim
    for p, u in enumerate(grid):
        d = immersion.decompose(subject, u)
        for i in range(n):
            for j in range(n):
                rows.append([p, "h", i, j, "", repr(float(d.h[i, j]))])
                rows.append([p, "S", i, j, "", repr(float(d.shape_operator[i, j]))])
                for k in range(n):
                    rows.append([p, "gamma", i, j, k, repr(float(d.gamma[i, j, k]))])
        for i in range(n):
            rows.append([p, "alpha", i, "", "", repr(float(d.alpha_form[i]))])
        rows.append([p, "eta", "", "", "", repr(float(d.volume))])
    write_tensor_csv(out_dir / "immersion.csv",
                     ["point", "tensor", "i", "j", "k", "value"], rows)


def dump_geodesic_csv(spec: RunSpec, subject, out_path: Path):
    doc = spec.geodesic_doc
    model = subject if isinstance(subject, models.StatisticalModel) \
        else dualflat.family_model(subject)
    conn = infogeo.alpha_field(model, float(doc.get("alpha", 1.0)))
    path = dualflat.geodesic(conn, doc["theta0"], doc["v0"],
                             float(doc.get("t_final", 1.0)),
                             int(doc.get("steps", 1000)), domain=model.domain)
    n = path.theta.shape[1]
    header = (["step", "t"] + [f"theta_{i}" for i in range(n)]
              + [f"v_{i}" for i in range(n)])
    rows = []
    for k in range(len(path.t)):
        rows.append([k, repr(float(path.t[k]))]
                    + [repr(float(v)) for v in path.theta[k]]
                    + [repr(float(v)) for v in path.velocity[k]])
    write_tensor_csv(out_path, header, rows)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _parse_tol_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SchemaError(f"--tol-override expects check=value, got {pair!r}")
        name, _, raw = pair.partition("=")
        if name not in DEFAULT_TOLERANCES:
            raise SchemaError(f"unknown check {name!r} in --tol-override")
        try:
            out[name] = float(raw)
        except ValueError:
            raise SchemaError(f"tolerance {raw!r} is not a number") from None
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="igeo",
        description="grid verification of statistical-manifold and "
                    "immersion geometry")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("verify", "run checks and write a report"),
            ("compute", "run checks and dump tensor CSV files"),
            ("geodesic", "integrate a geodesic and write the path CSV"),
            ("classify", "classify a surface subject")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--spec", required=True, help="run spec JSON document")
        p.add_argument("--out", default=None, help="report JSON path")
        p.add_argument("--csv-dir", default=None, help="directory for CSV dumps")
        p.add_argument("--tol-override", action="append", default=[],
                       metavar="CHECK=VAL", help="override one check tolerance")
        p.add_argument("--seed", type=int, default=None,
                       help="override the spec seed")
    args = parser.parse_args(argv)

    try:
        with open(args.spec) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 2

    try:
        overrides = _parse_tol_overrides(args.tol_override)
        if args.command == "classify":
            if "runs" in doc:
                raise SchemaError("classify takes a single-subject spec")
            doc = dict(doc)
            doc["checks"] = ["classify"]
        report = run_document(doc, seed_override=args.seed,
                              tol_overrides=overrides)

        if args.command in ("compute", "geodesic"):
            csv_dir = Path(args.csv_dir or ".")
            csv_dir.mkdir(parents=True, exist_ok=True)
            single = [RunSpec.from_dict(d, args.seed, overrides)
                      for d in (doc["runs"] if "runs" in doc else [doc])]
            for spec in single:
                subject = _load_subject(spec)
                if args.command == "geodesic":
                    if spec.geodesic_doc is None:
                        raise SchemaError("geodesic command needs a geodesic block")
                    dump_geodesic_csv(spec, subject,
                                      csv_dir / f"geodesic_{spec.label}.csv")
                else:
                    grid = _grid_points(spec, subject)
                    if spec.kind in ("model", "family"):
                        dump_model_tensors(spec, subject, grid, csv_dir)
                    elif spec.kind == "surface":
                        dump_surface_tensors(spec, subject, grid, csv_dir)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)

    if args.out:
        summary = "PASS" if report.all_passed else "FAIL"
        print(f"{summary}: "
              f"{sum(r.status == 'pass' for run_ in report.runs for r in run_.results.values())}"
              f"/{sum(len(run_.results) for run_ in report.runs)} checks passed")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
