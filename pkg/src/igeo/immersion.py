"""Hypersurface immersions: induced data, structural equations, classification.

A hypersurface is a chart ``f: U in R^n -> R^{n+1}`` together with a
transversal field ``xi``.  Differentiating the chart and expanding in the
moving frame ``{d_1 f, ..., d_n f, xi}`` recovers the induced connection,
the affine fundamental form h, the shape operator S and the transversal
form alpha:

    d_i d_j f = Gamma^k_{ij} d_k f + h_{ij} xi
    d_i xi    = -S^k_i d_k f + alpha_i xi

Sign convention: for position-transversal surfaces the toolkit standardises
xi = -f (pointing toward the origin), which gives alpha = 0 and S = I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateH, SchemaError
from .expressions import compile_expression
from .infogeo import ConnectionField, MetricField, codazzi_check, curvature
from .models import Box
from .numerics import DiffScheme, derive, solve_frame

# Charts are smooth closed forms, so wide extrapolated steps drive the
# decomposition error to ~1e-10; the field scheme differentiates decomposed
# quantities (one more stacked difference).
CHART_SCHEME_1 = DiffScheme(order=1, base_step=2.0**-8, richardson_levels=1)
CHART_SCHEME_2 = DiffScheme(order=2, base_step=2.0**-8, richardson_levels=1)
SURFACE_FIELD_SCHEME = DiffScheme(order=1, base_step=2.0**-7, richardson_levels=1)


@dataclass(frozen=True, eq=False)
class Hypersurface:
    """Immersion chart plus transversal field over an open box."""

    chart: Callable       # u (n,) -> (n+1,)
    transversal: Callable
    domain: Box
    dim: int
    label: str = ""

    @classmethod
    def centro_affine(cls, chart: Callable, domain: Box, dim: int,
                      label: str = "") -> "Hypersurface":
        """Position-transversal surface with the standard xi = -f."""
        return cls(chart=chart, transversal=lambda u: -np.asarray(chart(u), float),
                   domain=domain, dim=dim, label=label)


@dataclass(frozen=True, eq=False)
class ImmersionData:
    """Induced data at one chart point."""

    gamma: np.ndarray        # gamma[i,j,k] = Gamma^k_{ij}
    h: np.ndarray            # affine fundamental form
    shape_operator: np.ndarray   # S[k,i] = S^k_i, columns act on basis vectors
    alpha_form: np.ndarray   # alpha[i]
    volume: float            # eta = det[d_1 f ... d_n f xi]


@dataclass(frozen=True)
class ImmersionFlags:
    centro_affine: bool
    equiaffine: bool
    nondegenerate: bool
    blaschke: bool
    improper_hypersphere: bool
    proper_hypersphere: bool
    lam: Optional[float] = None

    def __post_init__(self):
        if self.blaschke and not (self.equiaffine and self.nondegenerate):
            raise ValueError("blaschke requires equiaffine and nondegenerate")
        if self.improper_hypersphere and self.proper_hypersphere:
            raise ValueError("proper and improper hypersphere are exclusive")


def _chart_jacobian(surface: Hypersurface, u: np.ndarray) -> np.ndarray:
    cols = [derive(surface.chart, u, (i,), scheme=CHART_SCHEME_1,
                   domain=surface.domain) for i in range(surface.dim)]
    return np.column_stack(cols)


def decompose(surface: Hypersurface, u) -> ImmersionData:
    """Frame-solve the second derivatives of the chart and the transversal."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = surface.dim
    J = _chart_jacobian(surface, u)
    xi = np.asarray(surface.transversal(u), dtype=float)
    frame = np.column_stack([J, xi])

    gamma = np.empty((n, n, n))
    h = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            rhs = derive(surface.chart, u, (i, j), scheme=CHART_SCHEME_2,
                         domain=surface.domain)
            coeff = solve_frame(frame, rhs)
            gamma[i, j, :] = gamma[j, i, :] = coeff[:n]
            h[i, j] = h[j, i] = coeff[n]

    S = np.empty((n, n))
    alpha = np.empty(n)
    for i in range(n):
        rhs = derive(surface.transversal, u, (i,), scheme=CHART_SCHEME_1,
                     domain=surface.domain)
        coeff = solve_frame(frame, rhs)
        S[:, i] = -coeff[:n]
        alpha[i] = coeff[n]

    return ImmersionData(gamma=gamma, h=h, shape_operator=S,
                         alpha_form=alpha, volume=float(np.linalg.det(frame)))


def gamma_field(surface: Hypersurface) -> ConnectionField:
    """Induced connection as an infogeo-compatible field."""
    return ConnectionField(dim=surface.dim,
                           up_fn=lambda u: decompose(surface, u).gamma,
                           provenance="induced", domain=surface.domain)


def h_field(surface: Hypersurface) -> MetricField:
    """Affine fundamental form as a (possibly degenerate) metric field."""
    return MetricField(dim=surface.dim, fn=lambda u: decompose(surface, u).h,
                       label=f"h[{surface.label}]", domain=surface.domain)


# ---------------------------------------------------------------------------
# Structural equations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuralResiduals:
    gauss: float
    codazzi_h: float
    codazzi_s: float
    ricci: float

    @property
    def max(self) -> float:
        return max(self.gauss, self.codazzi_h, self.codazzi_s, self.ricci)


def _field_derivative(surface: Hypersurface, extract: Callable, u: np.ndarray,
                      scheme: DiffScheme = SURFACE_FIELD_SCHEME) -> np.ndarray:
    """d_a of a decomposed quantity, stacked finite difference."""
    n = surface.dim
    out = [derive(lambda v: extract(decompose(surface, v)), u, (a,),
                  scheme=scheme, domain=surface.domain) for a in range(n)]
    return np.stack(out, axis=0)


def structural_check(surface: Hypersurface, u) -> StructuralResiduals:
    """Max-entry residuals of the four structural identities at u.

    (1) R(X,Y)Z = h(Y,Z)SX - h(X,Z)SY
    (2) (nabla_X h)(Y,Z) + alpha(X) h(Y,Z) symmetric in X,Y
    (3) (nabla_X S)(Y) - alpha(X) SY symmetric in X,Y
    (4) h(X,SY) - h(SX,Y) = d alpha(X,Y)
    The curvature comes from the induced connection field.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = surface.dim
    data = decompose(surface, u)
    G, h, S, al = data.gamma, data.h, data.shape_operator, data.alpha_form

    pack = curvature(gamma_field(surface), u, scheme=SURFACE_FIELD_SCHEME)
    gauss_rhs = np.einsum("jk,li->ijkl", h, S) - np.einsum("ik,lj->ijkl", h, S)
    gauss = float(np.abs(pack.R - gauss_rhs).max())

    dh = _field_derivative(surface, lambda d: d.h, u)
    nabla_h = dh - np.einsum("ijm,mk->ijk", G, h) - np.einsum("ikm,jm->ijk", G, h)
    lhs_h = nabla_h + np.einsum("i,jk->ijk", al, h)
    codazzi_h = float(np.abs(lhs_h - np.transpose(lhs_h, (1, 0, 2))).max())

    # dS[a, k, j] = d_a S^k_j; (nabla_i S)^k_j = dS + Gamma^k_{im} S^m_j - Gamma^m_{ij} S^k_m
    dS = _field_derivative(surface, lambda d: d.shape_operator, u)
    nabla_S = dS + np.einsum("imk,mj->ikj", G, S) - np.einsum("ijm,km->ikj", G, S)
    lhs_s = nabla_S - np.einsum("i,kj->ikj", al, S)
    codazzi_s = float(np.abs(lhs_s - np.transpose(lhs_s, (2, 1, 0))).max())

    dal = _field_derivative(surface, lambda d: d.alpha_form, u)
    ricci_lhs = h @ S - (h @ S).T
    ricci = float(np.abs(ricci_lhs - (dal - dal.T)).max())

    return StructuralResiduals(gauss=gauss, codazzi_h=codazzi_h,
                               codazzi_s=codazzi_s, ricci=ricci)


# ---------------------------------------------------------------------------
# Induced volume
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VolumeCheck:
    transport_residual: float   # | d_i eta - Gamma^m_{mi} eta - alpha_i eta |
    blaschke_gap: float         # | |eta| - sqrt|det h| |


def induced_volume_check(surface: Hypersurface, u,
                         degeneracy_tol: float = 1e-10) -> VolumeCheck:
    """Volume transport identity and the Blaschke gap at u.

    The covariant derivative of the induced volume must equal alpha x eta;
    in coordinates d_i eta - Gamma^m_{im} eta = alpha_i eta.  The gap
    compares |eta| against the volume of h and needs h nondegenerate.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    data = decompose(surface, u)
    deta = _field_derivative(surface, lambda d: d.volume, u)
    trace_term = np.einsum("imm->i", data.gamma) * data.volume
    residual = float(np.abs(deta - trace_term - data.alpha_form * data.volume).max())

    det_h = float(np.linalg.det(data.h))
    if abs(det_h) < degeneracy_tol:
        raise DegenerateH(f"det h = {det_h:.3e} at u={u.tolist()}; "
                          "volume comparison needs nondegenerate h")
    gap = float(abs(abs(data.volume) - math.sqrt(abs(det_h))))
    return VolumeCheck(transport_residual=residual, blaschke_gap=gap)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationReport:
    flags: ImmersionFlags
    centro_residual: float
    max_alpha: float
    min_abs_det_h: float
    max_blaschke_gap: float
    max_S: float
    lambda_mean: Optional[float]
    lambda_deviation: Optional[float]
    tolerance: float


def classify(surface: Hypersurface, grid: Sequence,
             tol: float = 1e-6) -> ClassificationReport:
    """Thresholded flags over a grid; failures clear flags, never raise.

    centro-affine: xi is a negative multiple of the position vector.
    equiaffine:    max |alpha| below tol.
    nondegenerate: min |det h| above tol.
    blaschke:      equiaffine, nondegenerate, and |eta| = sqrt|det h|.
    hypersphere:   S identically zero (improper) or lambda I with constant
                   nonzero lambda (proper); lambda is the grid mean of
                   trace(S)/n with the max deviation reported.
    """
    n = surface.dim
    centro_res = 0.0
    max_alpha = 0.0
    min_det = float("inf")
    max_gap = 0.0
    max_S = 0.0
    lambdas = []
    lam_dev = 0.0
    gap_testable = True
    for u in grid:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        data = decompose(surface, u)
        f = np.asarray(surface.chart(u), dtype=float)
        xi = np.asarray(surface.transversal(u), dtype=float)
        denom = float(f @ f)
        if denom > 0:
            c = float(xi @ f) / denom
            res = float(np.linalg.norm(xi - c * f))
            scale = max(float(np.linalg.norm(xi)), 1e-300)
            centro_res = max(centro_res, res / scale if c < 0 else float("inf"))
        else:
            centro_res = float("inf")
        max_alpha = max(max_alpha, float(np.abs(data.alpha_form).max()))
        det_h = float(np.linalg.det(data.h))
        min_det = min(min_det, abs(det_h))
        max_S = max(max_S, float(np.abs(data.shape_operator).max()))
        lambdas.append(float(np.trace(data.shape_operator)) / n)
        try:
            check = induced_volume_check(surface, u)
            max_gap = max(max_gap, check.blaschke_gap)
        except DegenerateH:
            gap_testable = False

    lam = float(np.mean(lambdas)) if lambdas else None
    if lam is not None:
        for u in grid:
            S = decompose(surface, np.atleast_1d(np.asarray(u, float))).shape_operator
            lam_dev = max(lam_dev, float(np.abs(S - lam * np.eye(n)).max()))

    centro = bool(centro_res < tol)
    equi = bool(max_alpha < tol)
    nondeg = bool(min_det > tol)
    blaschke = bool(equi and nondeg and gap_testable and max_gap < tol)
    # hypersphere flags come from S (with the equiaffine/nondegenerate
    # sanity requirements); the volume normalization is reported separately
    # through the blaschke flag
    improper = bool(equi and nondeg and max_S < tol)
    proper = bool(equi and nondeg and not improper and lam is not None
                  and lam_dev < tol and abs(lam) > tol)
    flags = ImmersionFlags(centro_affine=centro, equiaffine=equi,
                           nondegenerate=nondeg, blaschke=blaschke,
                           improper_hypersphere=improper,
                           proper_hypersphere=proper,
                           lam=lam if proper else None)
    return ClassificationReport(flags=flags, centro_residual=centro_res,
                                max_alpha=max_alpha, min_abs_det_h=min_det,
                                max_blaschke_gap=max_gap if gap_testable else float("nan"),
                                max_S=max_S, lambda_mean=lam,
                                lambda_deviation=lam_dev, tolerance=tol)


# ---------------------------------------------------------------------------
# Statistical structure export
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StatisticalStructure:
    gamma: ConnectionField
    h: MetricField
    codazzi_residual: float
    is_statistical: bool
    tolerance: float


def statistical_structure(surface: Hypersurface, grid: Sequence,
                          tol: float = 1e-5,
                          degeneracy_tol: float = 1e-10) -> StatisticalStructure:
    """Induced (connection, h) pair with its Codazzi residual over a grid.

    The pair is a statistical structure precisely when the residual
    vanishes; a non-equiaffine transversal shows up as a residual of the
    size of alpha.  Raises DegenerateH when h is singular on the grid.
    """
    conn = gamma_field(surface)
    hf = h_field(surface)
    residual = 0.0
    for u in grid:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        det_h = float(np.linalg.det(hf(u)))
        if abs(det_h) < degeneracy_tol:
            raise DegenerateH(f"det h = {det_h:.3e} at u={u.tolist()}")
        residual = max(residual, codazzi_check(hf, conn, u,
                                               scheme=SURFACE_FIELD_SCHEME))
    return StatisticalStructure(gamma=conn, h=hf, codazzi_residual=residual,
                                is_statistical=bool(residual < tol),
                                tolerance=tol)


# ---------------------------------------------------------------------------
# Builtin surfaces and schema loading
# ---------------------------------------------------------------------------

def unit_sphere(extent: float = 0.8) -> Hypersurface:
    """Upper hemisphere of the unit sphere in the graph chart, xi = -f."""

    def chart(u):
        u = np.asarray(u, dtype=float)
        return np.array([u[0], u[1], math.sqrt(1.0 - float(u @ u))])

    return Hypersurface.centro_affine(chart, Box((-extent, -extent), (extent, extent)),
                                      dim=2, label="sphere")


def scaled_sphere(c: float, extent: float = 0.8) -> Hypersurface:
    """Sphere of radius c with the position transversal xi = -f."""

    def chart(u):
        u = np.asarray(u, dtype=float)
        return c * np.array([u[0], u[1], math.sqrt(1.0 - float(u @ u))])

    return Hypersurface.centro_affine(chart, Box((-extent, -extent), (extent, extent)),
                                      dim=2, label=f"sphere-scaled-{c}")


def paraboloid(extent: float = 2.0) -> Hypersurface:
    """Elliptic paraboloid x3 = (x1^2 + x2^2)/2 with constant transversal e3."""

    def chart(u):
        u = np.asarray(u, dtype=float)
        return np.array([u[0], u[1], 0.5 * float(u @ u)])

    return Hypersurface(chart=chart, transversal=lambda u: np.array([0.0, 0.0, 1.0]),
                        domain=Box((-extent, -extent), (extent, extent)),
                        dim=2, label="paraboloid")


def tilted_paraboloid(slope: float = 0.3, extent: float = 2.0) -> Hypersurface:
    """Paraboloid with a deliberately non-equiaffine transversal."""

    def chart(u):
        u = np.asarray(u, dtype=float)
        return np.array([u[0], u[1], 0.5 * float(u @ u)])

    def xi(u):
        u = np.asarray(u, dtype=float)
        return np.array([slope * u[0], 0.0, 1.0])

    return Hypersurface(chart=chart, transversal=xi,
                        domain=Box((-extent, -extent), (extent, extent)),
                        dim=2, label=f"paraboloid-tilted-{slope}")


def plane(height: float = 1.0, extent: float = 2.0) -> Hypersurface:
    """Affine plane x3 = height with xi = -position (h degenerates)."""

    def chart(u):
        u = np.asarray(u, dtype=float)
        return np.array([u[0], u[1], height])

    return Hypersurface.centro_affine(chart, Box((-extent, -extent), (extent, extent)),
                                      dim=2, label="plane")


SURFACES = {
    "sphere": unit_sphere,
    "paraboloid": paraboloid,
    "paraboloid-tilted": tilted_paraboloid,
    "plane": plane,
}


def load_surface(doc: dict) -> Hypersurface:
    """Build a surface from {"name", "dim", "chart": [exprs over u[i]],
    "transversal": [exprs] | "centro-affine", "domain": {"lo","hi"}}."""
    if not isinstance(doc, dict):
        raise SchemaError("surface document must be a mapping")
    if "builtin" in doc:
        name = doc["builtin"]
        if name not in SURFACES:
            raise SchemaError(f"unknown builtin surface {name!r}")
        return SURFACES[name]()
    for key in ("name", "dim", "chart", "domain"):
        if key not in doc:
            raise SchemaError(f"surface document is missing {key!r}")
    dim = int(doc["dim"])
    chart_exprs = doc["chart"]
    if not isinstance(chart_exprs, list) or len(chart_exprs) != dim + 1:
        raise SchemaError("chart must list dim+1 component expressions")
    comp = [compile_expression(e, ("u",)) for e in chart_exprs]

    def chart(u):
        env = {"u": np.asarray(u, dtype=float)}
        return np.array([float(c(env)) for c in comp])

    dom = doc["domain"]
    box = Box(tuple(float(v) for v in dom["lo"]), tuple(float(v) for v in dom["hi"]))
    if box.dim != dim:
        raise SchemaError("surface domain dimension must equal dim")

    tr = doc.get("transversal", "centro-affine")
    if tr == "centro-affine":
        return Hypersurface.centro_affine(chart, box, dim, label=doc["name"])
    if not isinstance(tr, list) or len(tr) != dim + 1:
        raise SchemaError('transversal must be "centro-affine" or dim+1 expressions')
    tcomp = [compile_expression(e, ("u",)) for e in tr]

    def xi(u):
        env = {"u": np.asarray(u, dtype=float)}
        return np.array([float(c(env)) for c in tcomp])

    return Hypersurface(chart=chart, transversal=xi, domain=box, dim=dim,
                        label=doc["name"])
