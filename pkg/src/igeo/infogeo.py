"""Metric, connections and curvature of a statistical model.

Index conventions, fixed across the toolkit (all arrays are numpy):

* ``low[i, j, k]``  = Gamma_{ij,k}            (last index lowered)
* ``up[i, j, k]``   = Gamma^k_{ij}            (last index raised)
* ``R[i, j, k, l]`` = R^l_{ijk}, i.e. the l-component of R(e_i, e_j) e_k
* ``Ric[j, k]``     = trace of X -> R(X, e_j) e_k = sum_m R[m, j, k, m]

All formulas are coordinate expressions in a frame with vanishing brackets,
so no explicit commutator terms appear.  Tensor fields are represented as
plain callables of the parameter point wrapped in small dataclasses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularMetric
from .models import (HESSIAN_SCHEME, StatisticalModel, node_quadrature,
                     score_matrix, second_log_derivs)
from .numerics import DiffScheme, derive, expect

# Differentiating an already-computed tensor field stacks a second finite
# difference on top of quadrature noise; a wider extrapolated step keeps the
# amplification in check.
FIELD_SCHEME = DiffScheme(order=1, base_step=2.0**-7, richardson_levels=1)

_METRIC_CONDITION_CAP = 1e12


@dataclass(frozen=True, eq=False)
class MetricField:
    """A parameter-dependent symmetric bilinear form."""

    dim: int
    fn: Callable
    label: str = ""
    domain: object = None

    def __call__(self, theta) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_1d(np.asarray(theta, float))), float)

    @classmethod
    def constant(cls, matrix, label: str = "constant") -> "MetricField":
        g = np.asarray(matrix, dtype=float)
        return cls(dim=g.shape[0], fn=lambda th: g, label=label)


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """Connection coefficients as a field, in lowered and/or raised form.

    Whichever form is missing is produced through the attached metric.
    ``provenance`` records how the field was built ("alpha=1", "induced",
    "levi-civita", "custom", ...).
    """

    dim: int
    low_fn: Optional[Callable] = None
    up_fn: Optional[Callable] = None
    metric: Optional[MetricField] = None
    provenance: str = "custom"
    domain: object = None

    def low(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, float))
        if self.low_fn is not None:
            return np.asarray(self.low_fn(th), float)
        if self.up_fn is None or self.metric is None:
            raise ValueError("connection field needs low_fn, or up_fn plus a metric")
        return lower_connection(np.asarray(self.up_fn(th), float), self.metric(th))

    def up(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, float))
        if self.up_fn is not None:
            return np.asarray(self.up_fn(th), float)
        if self.low_fn is None or self.metric is None:
            raise ValueError("connection field needs up_fn, or low_fn plus a metric")
        return raise_connection(np.asarray(self.low_fn(th), float), self.metric(th))

    @classmethod
    def zero(cls, dim: int) -> "ConnectionField":
        z = np.zeros((dim, dim, dim))
        return cls(dim=dim, up_fn=lambda th: z, low_fn=lambda th: z,
                   provenance="flat")


def _metric_inverse(g: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > _METRIC_CONDITION_CAP:
        raise SingularMetric(f"metric condition {cond:.3e} exceeds cap")
    return np.linalg.inv(g)


def raise_connection(low: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gamma^k_{ij} from Gamma_{ij,k}: contract the last index with g^{-1}."""
    return np.einsum("ijm,mk->ijk", low, _metric_inverse(g))


def lower_connection(up: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gamma_{ij,k} from Gamma^k_{ij}: contract the last index with g."""
    return np.einsum("ijm,mk->ijk", up, np.asarray(g, float))


# ---------------------------------------------------------------------------
# Fisher metric and alpha-connections
# ---------------------------------------------------------------------------

def fisher_metric(model: StatisticalModel, theta) -> np.ndarray:
    """Fisher information g_ij = E[score_i * score_j] at theta."""
    th = model.check_theta(theta)
    nodes = node_quadrature(model.space)
    if nodes is not None:
        xs, w = nodes
        s = score_matrix(model, th, xs)
        p = np.exp(model.log_density(xs, th))
        pw = p if w is None else p * w
        g = np.einsum("in,jn,n->ij", s, s, pw)
    else:
        n = model.dim
        g = np.empty((n, n))
        weight = model.density(th)
        for i in range(n):
            for j in range(i, n):
                def integrand(x, i=i, j=j):
                    s = score_matrix(model, th, x)
                    return s[i] * s[j]
                g[i, j] = g[j, i] = expect(model.space, weight, integrand)
    g = 0.5 * (g + g.T)
    cond = np.linalg.cond(g)
    if not np.isfinite(cond) or cond > _METRIC_CONDITION_CAP:
        raise SingularMetric(f"Fisher metric condition {cond:.3e} exceeds cap")
    return g


def fisher_field(model: StatisticalModel) -> MetricField:
    return MetricField(dim=model.dim, fn=lambda th: fisher_metric(model, th),
                       label=f"fisher[{model.label}]", domain=model.domain)


def alpha_connection(model: StatisticalModel, theta, alpha: float) -> np.ndarray:
    """Lowered alpha-connection coefficients.

    Gamma^a_{ij,k} = E[(d_i d_j l + (1-a)/2 d_i l d_j l) d_k l], symmetric in
    (i, j) by construction of the central stencils.
    """
    th = model.check_theta(theta)
    c = (1.0 - alpha) / 2.0
    nodes = node_quadrature(model.space)
    if nodes is not None:
        xs, w = nodes
        s = score_matrix(model, th, xs)
        dd = second_log_derivs(model, th, xs)
        p = np.exp(model.log_density(xs, th))
        pw = p if w is None else p * w
        core = dd + c * s[:, None, :] * s[None, :, :]
        return np.einsum("ijn,kn,n->ijk", core, s, pw)
    n = model.dim
    low = np.empty((n, n, n))
    weight = model.density(th)
    for i in range(n):
        for j in range(i, n):
            for k in range(n):
                def integrand(x, i=i, j=j, k=k):
                    s = score_matrix(model, th, x)
                    dd = derive(lambda t: model.log_density(x, t), th, (i, j),
                                scheme=HESSIAN_SCHEME, domain=model.domain)
                    return (dd + c * s[i] * s[j]) * s[k]
                low[i, j, k] = low[j, i, k] = expect(model.space, weight, integrand)
    return low


def alpha_field(model: StatisticalModel, alpha: float) -> ConnectionField:
    return ConnectionField(dim=model.dim,
                           low_fn=lambda th: alpha_connection(model, th, alpha),
                           metric=fisher_field(model),
                           provenance=f"alpha={alpha}", domain=model.domain)


def cubic_tensor(model: StatisticalModel, theta, alpha: float = 1.0) -> np.ndarray:
    """Skewness tensor from the alpha spread of connections.

    2(Gamma^{-a} - Gamma^{a})/(2a); independent of a and fully symmetric for
    any model whose expectations commute with differentiation.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    lo_minus = alpha_connection(model, theta, -alpha)
    lo_plus = alpha_connection(model, theta, alpha)
    return (lo_minus - lo_plus) / alpha


# ---------------------------------------------------------------------------
# Derived fields: metric derivative, Levi-Civita
# ---------------------------------------------------------------------------

def metric_derivative(metric_field: MetricField, theta,
                      scheme: DiffScheme = FIELD_SCHEME) -> np.ndarray:
    """dg[a, j, k] = d_a g_jk by finite differences of the field."""
    th = np.atleast_1d(np.asarray(theta, float))
    n = th.size
    dg = np.empty((n, n, n))
    for a in range(n):
        dg[a] = derive(metric_field, th, (a,), scheme=scheme,
                       domain=metric_field.domain)
    return dg


def levi_civita(metric_field: MetricField, theta,
                scheme: DiffScheme = FIELD_SCHEME) -> np.ndarray:
    """Lowered Levi-Civita coefficients of the metric field."""
    dg = metric_derivative(metric_field, theta, scheme)
    # low[i,j,k] = (d_i g_jk + d_j g_ik - d_k g_ij)/2
    low = 0.5 * (dg + np.transpose(dg, (1, 0, 2)) - np.transpose(dg, (1, 2, 0)))
    return low


def levi_civita_field(metric_field: MetricField,
                      scheme: DiffScheme = FIELD_SCHEME) -> ConnectionField:
    return ConnectionField(dim=metric_field.dim,
                           low_fn=lambda th: levi_civita(metric_field, th, scheme),
                           metric=metric_field, provenance="levi-civita",
                           domain=metric_field.domain)


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CurvaturePack:
    """Curvature, torsion, Ricci and (optionally) the metric's covariant
    derivative at one point."""

    R: np.ndarray        # R[i,j,k,l] = R^l_{ijk}
    torsion: np.ndarray  # T[i,j,k] = T^k_{ij}
    ricci: np.ndarray
    nabla_h: Optional[np.ndarray] = None

    @property
    def max_R(self) -> float:
        return float(np.abs(self.R).max())

    @property
    def max_torsion(self) -> float:
        return float(np.abs(self.torsion).max())


def covariant_metric_derivative(up0: np.ndarray, g0: np.ndarray,
                                dg: np.ndarray) -> np.ndarray:
    """(nabla_i h)_{jk} = d_i g_jk - Gamma^m_{ij} g_mk - Gamma^m_{ik} g_jm."""
    return dg - np.einsum("ijm,mk->ijk", up0, g0) - np.einsum("ikm,jm->ijk", up0, g0)


def curvature(conn: ConnectionField, theta, scheme: DiffScheme = FIELD_SCHEME,
              metric_field: Optional[MetricField] = None) -> CurvaturePack:
    """Coordinate curvature of the connection field at theta.

    R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
                + Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik}
    plus torsion, Ricci trace, and nabla h when a metric field is supplied.
    """
    th = np.atleast_1d(np.asarray(theta, float))
    n = th.size
    DG = np.empty((n, n, n, n))  # DG[a, b, c, d] = d_a Gamma^d_{bc}
    for a in range(n):
        DG[a] = derive(conn.up, th, (a,), scheme=scheme, domain=conn.domain)
    up0 = conn.up(th)
    quad = np.einsum("iml,jkm->ijkl", up0, up0)
    R = DG - np.swapaxes(DG, 0, 1) + quad - np.swapaxes(quad, 0, 1)
    torsion = up0 - np.transpose(up0, (1, 0, 2))
    ricci = np.einsum("mjkm->jk", R)
    nabla_h = None
    if metric_field is not None:
        g0 = metric_field(th)
        dg = metric_derivative(metric_field, th, scheme)
        nabla_h = covariant_metric_derivative(up0, g0, dg)
    return CurvaturePack(R=R, torsion=torsion, ricci=ricci, nabla_h=nabla_h)


@dataclass(frozen=True)
class FlatnessReport:
    flat: bool
    max_R: float
    max_torsion: float
    tolerance: float
    alpha: float
    per_point: tuple


def flatness_check(model: StatisticalModel, grid: Sequence, alpha: float,
                   tol: float = 1e-3,
                   scheme: DiffScheme = FIELD_SCHEME) -> FlatnessReport:
    """Grid sweep of curvature residuals of the alpha-connection.

    Strict threshold, no hysteresis; the residuals are reported alongside
    the flag so borderline calls can be judged by the caller.
    """
    conn = alpha_field(model, alpha)
    per_point = []
    max_R = max_T = 0.0
    for theta in grid:
        pack = curvature(conn, theta, scheme=scheme)
        per_point.append((tuple(np.atleast_1d(theta).tolist()),
                          pack.max_R, pack.max_torsion))
        max_R = max(max_R, pack.max_R)
        max_T = max(max_T, pack.max_torsion)
    return FlatnessReport(flat=bool(max_R < tol and max_T < tol),
                          max_R=max_R, max_torsion=max_T, tolerance=tol,
                          alpha=alpha, per_point=tuple(per_point))


# ---------------------------------------------------------------------------
# Conjugate connection, Codazzi, conformal and projective structure
# ---------------------------------------------------------------------------

def conjugate_connection(metric_field: MetricField, conn: ConnectionField,
                         theta, scheme: DiffScheme = FIELD_SCHEME) -> np.ndarray:
    """Lowered conjugate connection via X h(Y,Z) = h(D_X Y, Z) + h(Y, D*_X Z).

    In coordinates: conj_{ij,k} = d_i g_{kj} - Gamma_{ik,j}.
    """
    dg = metric_derivative(metric_field, theta, scheme)
    low0 = conn.low(theta)
    return np.transpose(dg, (0, 2, 1)) - np.transpose(low0, (0, 2, 1))


def conjugate_field(metric_field: MetricField, conn: ConnectionField,
                    scheme: DiffScheme = FIELD_SCHEME) -> ConnectionField:
    return ConnectionField(
        dim=conn.dim,
        low_fn=lambda th: conjugate_connection(metric_field, conn, th, scheme),
        metric=metric_field, provenance=f"conjugate[{conn.provenance}]",
        domain=conn.domain)


def codazzi_check(metric_field: MetricField, conn: ConnectionField, theta,
                  scheme: DiffScheme = FIELD_SCHEME) -> float:
    """Residual of (nabla_X h)(Y,Z) = (nabla_Z h)(Y,X) at theta.

    Zero residual (to tolerance) is the statistical-manifold property: the
    conjugate connection is then torsion free.
    """
    th = np.atleast_1d(np.asarray(theta, float))
    g0 = metric_field(th)
    dg = metric_derivative(metric_field, th, scheme)
    up0 = conn.up(th)
    nh = covariant_metric_derivative(up0, g0, dg)
    return float(np.abs(nh - np.transpose(nh, (2, 1, 0))).max())


def conformal_transform(metric_field: MetricField, conn: ConnectionField,
                        phi: Callable, alpha: float,
                        scheme: Optional[DiffScheme] = None):
    """Conformal change of a statistical structure with weight alpha.

    h~ = e^phi h, and the new connection satisfies
    h~(D~_X Y, Z) = h(D_X Y, Z) - (1+alpha)/2 dphi(Z) h(X,Y)
                    + (1-alpha)/2 {dphi(X) h~(Y,Z) + dphi(Y) h~(X,Z)}.
    The returned lowered coefficients are taken against h~.
    """
    dscheme = scheme or DiffScheme(order=1)

    def new_metric(th):
        return float(np.exp(phi(th))) * metric_field(th)

    tilde = MetricField(dim=metric_field.dim, fn=new_metric,
                        label=f"conformal[{metric_field.label}]",
                        domain=metric_field.domain)

    def new_low(th):
        th = np.atleast_1d(np.asarray(th, float))
        n = th.size
        g0 = metric_field(th)
        gt = new_metric(th)
        low0 = conn.low(th)
        dphi = np.array([derive(phi, th, (a,), scheme=dscheme,
                                domain=metric_field.domain) for a in range(n)])
        term_z = -(1.0 + alpha) / 2.0 * np.einsum("k,ij->ijk", dphi, g0)
        term_x = (1.0 - alpha) / 2.0 * (np.einsum("i,jk->ijk", dphi, gt)
                                        + np.einsum("j,ik->ijk", dphi, gt))
        return low0 + term_z + term_x

    new_conn = ConnectionField(dim=conn.dim, low_fn=new_low, metric=tilde,
                               provenance=f"conformal(alpha={alpha})[{conn.provenance}]",
                               domain=conn.domain)
    return tilde, new_conn


@dataclass(frozen=True)
class ProjectiveResult:
    equivalent: bool
    rho: np.ndarray
    residual: float
    tolerance: float


def projective_equivalence(gamma_a, gamma_b, theta=None,
                           tol: float = 1e-8) -> ProjectiveResult:
    """Test D = Gamma' - Gamma for the form rho(X)Y + rho(Y)X.

    The candidate covector is the trace rho_i = D^m_{im} / (n+1); the
    residual is the largest entry of D minus the reconstructed tensor.
    """
    A = gamma_a(theta) if callable(gamma_a) else np.asarray(gamma_a, float)
    B = gamma_b(theta) if callable(gamma_b) else np.asarray(gamma_b, float)
    n = A.shape[0]
    # n = 1 is allowed: equivalence is then automatic and the recovered rho
    # is the informative part
    D = B - A
    rho = np.einsum("imm->i", D) / (n + 1.0)
    eye = np.eye(n)
    model = np.einsum("i,jk->ijk", rho, eye) + np.einsum("j,ik->ijk", rho, eye)
    residual = float(np.abs(D - model).max())
    return ProjectiveResult(equivalent=bool(residual < tol), rho=rho,
                            residual=residual, tolerance=tol)
