"""Exponential-family potentials, Legendre duality, geodesics, realizations.

A ``PotentialFamily`` is an exponential family given by sufficient
statistics, a base log-measure and the induced normalizer

    K(theta) = log integral exp(sum_i theta_i F_i(x) + D(x)) dx,

always evaluated by sum/quadrature rather than assumed in closed form
(catalog entries additionally carry the closed form for oracle tests).
The gradient of K gives the dual coordinates, the Legendre transform the
dual potential, and the Hessian the dually flat metric.

Two concrete hypersurface realizations of such a family are provided: the
potential graph (theta, K(theta)) with a constant transversal, and the
centro-affine lift (theta, 1)/psi(theta) with the position transversal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import (LeftDomain, NonConvergent, OutOfDomain, OutOfDualDomain,
                     SchemaError)
from .expressions import compile_expression
from .immersion import Hypersurface
from .infogeo import ConnectionField, MetricField
from .models import (HESSIAN_SCHEME, SCORE_SCHEME, Box, SampleSpace,
                     StatisticalModel, node_quadrature, space_from_doc)
from .numerics import derive, expect


@dataclass(frozen=True, eq=False)
class PotentialFamily:
    """Exponential family defined by statistics, base measure and domain."""

    stats: tuple                 # callables x:(N,xdim) -> (N,)
    base: Callable               # log base measure D(x)
    space: SampleSpace
    domain: Box
    label: str = ""
    closed_form_potential: Optional[Callable] = None

    @property
    def dim(self) -> int:
        return len(self.stats)

    def check_theta(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.size != self.dim or not self.domain.contains(th):
            raise OutOfDomain(f"theta {np.asarray(theta).tolist()} outside "
                              f"domain of family {self.label or '?'}")
        return th

    def exponent(self, x, theta) -> np.ndarray:
        """sum_i theta_i F_i(x) + D(x), before normalization."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        total = np.asarray(self.base(x), dtype=float)
        for t, F in zip(th, self.stats):
            total = total + t * np.asarray(F(x), dtype=float)
        return total


def potential(family: PotentialFamily, theta) -> float:
    """Normalizer K(theta), by exact sum or quadrature (log-sum-exp)."""
    th = family.check_theta(theta)
    nodes = node_quadrature(family.space)
    if nodes is not None:
        xs, w = nodes
        expo = family.exponent(xs, th)
        if w is None:
            return float(logsumexp(expo))
        return float(logsumexp(expo + np.log(w)))
    val = expect(family.space, lambda x: np.exp(family.exponent(x, th)),
                 lambda x: np.ones(len(x)))
    return float(np.log(val))


def family_model(family: PotentialFamily) -> StatisticalModel:
    """The family as a StatisticalModel; K is cached per parameter point."""
    cache: dict = {}

    def K(th):
        key = th.tobytes()
        if key not in cache:
            cache[key] = potential(family, th)
        return cache[key]

    def ll(x, th):
        th = np.atleast_1d(np.asarray(th, dtype=float))
        return family.exponent(x, th) - K(th)

    return StatisticalModel(space=family.space, dim=family.dim,
                            domain=family.domain, log_density=ll,
                            label=family.label or "potential-family")


def dual_coords(family: PotentialFamily, theta) -> np.ndarray:
    """Dual (expectation) coordinates eta = grad K(theta)."""
    th = family.check_theta(theta)
    return np.array([derive(lambda t: potential(family, t), th, (i,),
                            scheme=SCORE_SCHEME, domain=family.domain)
                     for i in range(family.dim)])


def hessian_metric(family: PotentialFamily, theta) -> np.ndarray:
    """Hessian of the potential: the dually flat metric in theta coordinates."""
    th = family.check_theta(theta)
    n = family.dim
    H = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            H[i, j] = H[j, i] = derive(lambda t: potential(family, t), th,
                                       (i, j), scheme=HESSIAN_SCHEME,
                                       domain=family.domain)
    return H


def hessian_field(family: PotentialFamily) -> MetricField:
    return MetricField(dim=family.dim, fn=lambda th: hessian_metric(family, th),
                       label=f"hessK[{family.label}]", domain=family.domain)


def legendre_inverse(family: PotentialFamily, eta, theta0=None,
                     tol: float = 1e-11, max_iter: int = 100) -> np.ndarray:
    """Solve grad K(theta) = eta by damped Newton on the convex potential.

    Raises NonConvergent after ``max_iter`` iterations and OutOfDualDomain
    when the iteration cannot stay inside the parameter box.
    """
    target = np.atleast_1d(np.asarray(eta, dtype=float))
    th = np.asarray(theta0, dtype=float) if theta0 is not None \
        else family.domain.center()
    if not family.domain.contains(th):
        raise OutOfDomain("starting point outside the parameter domain")
    # keep iterates clear of the boundary by more than any stencil radius
    margin = 0.005 * float(np.min(np.asarray(family.domain.hi)
                                  - np.asarray(family.domain.lo)))
    for _ in range(max_iter):
        grad = dual_coords(family, th)
        residual = target - grad
        if float(np.abs(residual).max()) < tol:
            return th
        H = hessian_metric(family, th)
        step = np.linalg.solve(H, residual)
        lam = 1.0
        while not family.domain.contains(th + lam * step, margin=margin):
            lam *= 0.5
            if lam < 1e-14:
                raise OutOfDualDomain(
                    f"eta {target.tolist()} seems outside the gradient image")
        new = th + lam * step
        if float(np.abs(new - th).max()) < 1e-12 * max(1.0, float(np.abs(th).max())):
            # stalled against the boundary with residual left over
            raise OutOfDualDomain(
                f"eta {target.tolist()} seems outside the gradient image")
        th = new
    raise NonConvergent(f"Newton did not reach |grad K - eta| < {tol:g} "
                        f"in {max_iter} iterations")


def dual_potential(family: PotentialFamily, eta, theta0=None) -> float:
    """Legendre dual phi(eta) = <theta, eta> - K(theta) at theta(eta)."""
    target = np.atleast_1d(np.asarray(eta, dtype=float))
    th = legendre_inverse(family, target, theta0=theta0)
    return float(th @ target - potential(family, th))


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeodesicPath:
    t: np.ndarray
    theta: np.ndarray      # (steps+1, n)
    velocity: np.ndarray   # (steps+1, n)

    @property
    def final_theta(self) -> np.ndarray:
        return self.theta[-1]


def geodesic(conn: ConnectionField, theta0, v0, t_final: float,
             steps: int, domain: Optional[Box] = None) -> GeodesicPath:
    """Fixed-step classical Runge-Kutta integration of the geodesic equation.

    d2 theta^k/dt^2 + Gamma^k_{ij} d theta^i d theta^j = 0.  Integration
    aborts with LeftDomain (carrying the partial path) as soon as a stage
    point leaves ``domain``.
    """
    th = np.atleast_1d(np.asarray(theta0, dtype=float))
    v = np.atleast_1d(np.asarray(v0, dtype=float))
    n = th.size
    if steps < 1 or t_final <= 0:
        raise ValueError("need steps >= 1 and t_final > 0")
    dt = t_final / steps

    ts = np.empty(steps + 1)
    thetas = np.empty((steps + 1, n))
    vels = np.empty((steps + 1, n))
    ts[0], thetas[0], vels[0] = 0.0, th, v

    def partial(k):
        return GeodesicPath(t=ts[:k + 1].copy(), theta=thetas[:k + 1].copy(),
                            velocity=vels[:k + 1].copy())

    def rhs(state, t_now, k_done):
        p, w = state[:n], state[n:]
        if domain is not None and not domain.contains(p):
            raise LeftDomain(t_now, partial(k_done))
        try:
            G = conn.up(p)
        except OutOfDomain:
            raise LeftDomain(t_now, partial(k_done)) from None
        acc = -np.einsum("ijk,i,j->k", G, w, w)
        return np.concatenate([w, acc])

    state = np.concatenate([th, v])
    for k in range(steps):
        t_now = k * dt
        k1 = rhs(state, t_now, k)
        k2 = rhs(state + 0.5 * dt * k1, t_now + 0.5 * dt, k)
        k3 = rhs(state + 0.5 * dt * k2, t_now + 0.5 * dt, k)
        k4 = rhs(state + dt * k3, t_now + dt, k)
        state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ts[k + 1] = (k + 1) * dt
        thetas[k + 1] = state[:n]
        vels[k + 1] = state[n:]
        if domain is not None and not domain.contains(state[:n]):
            raise LeftDomain(ts[k + 1], partial(k + 1))
    return GeodesicPath(t=ts, theta=thetas, velocity=vels)


# ---------------------------------------------------------------------------
# Immersion realizations
# ---------------------------------------------------------------------------

def graph_realization(family: PotentialFamily) -> Hypersurface:
    """Potential graph (theta, K(theta)) with the constant transversal e_{n+1}.

    Decomposing it yields Gamma = 0, h = Hess K, S = 0 and alpha = 0: an
    improper-hypersphere witness of the dually flat structure.
    """
    n = family.dim
    e_last = np.zeros(n + 1)
    e_last[n] = 1.0

    def chart(th):
        th = np.atleast_1d(np.asarray(th, dtype=float))
        return np.append(th, potential(family, th))

    return Hypersurface(chart=chart, transversal=lambda th: e_last,
                        domain=family.domain, dim=n,
                        label=f"graph[{family.label}]")


def centro_affine_lift(family: PotentialFamily,
                       psi: Optional[Callable] = None,
                       label: Optional[str] = None) -> Hypersurface:
    """Centro-affine realization (theta, 1)/psi(theta) with xi = -f.

    Any positive psi is accepted; the default is exp(K).  The induced
    connection is projectively equivalent to the flat one with
    rho = -d log psi, and h_ij = (d_i d_j psi)/psi, so projective flatness
    is the invariant, not a particular h.
    """
    if psi is None:
        psi = lambda th: math.exp(potential(family, th))
    n = family.dim

    def chart(th):
        th = np.atleast_1d(np.asarray(th, dtype=float))
        value = float(psi(th))
        if not value > 0:
            raise OutOfDomain(f"psi must stay positive, got {value} at "
                              f"{th.tolist()}")
        return np.append(th, 1.0) / value

    return Hypersurface.centro_affine(
        chart, family.domain, n,
        label=label or f"centro-affine-lift[{family.label}]")


# ---------------------------------------------------------------------------
# Catalog families
# ---------------------------------------------------------------------------

def normal_natural_family() -> PotentialFamily:
    from .models import normal_natural, normal_natural_potential
    template = normal_natural()
    return PotentialFamily(
        stats=(lambda x: x[..., 0] ** 2, lambda x: x[..., 0]),
        base=lambda x: np.zeros(len(x)),
        space=template.space, domain=template.domain,
        label="normal-natural",
        closed_form_potential=normal_natural_potential)


def bernoulli_natural_family() -> PotentialFamily:
    return PotentialFamily(
        stats=(lambda x: x[..., 0],),
        base=lambda x: np.zeros(len(x)),
        space=SampleSpace.finite([[0.0], [1.0]]),
        domain=Box((-6.0,), (6.0,)),
        label="bernoulli-natural",
        closed_form_potential=lambda th: float(np.logaddexp(0.0, th[0])))


def poisson_natural_family() -> PotentialFamily:
    from scipy.special import gammaln
    from .models import poisson_natural
    template = poisson_natural()
    return PotentialFamily(
        stats=(lambda x: x[..., 0],),
        base=lambda x: -gammaln(x[..., 0] + 1.0),
        space=template.space, domain=template.domain,
        label="poisson-natural",
        closed_form_potential=lambda th: math.exp(th[0]))


def categorical_natural_family(n: int = 2) -> PotentialFamily:
    from .models import categorical_natural
    template = categorical_natural(n)
    stats = tuple((lambda i: (lambda x: (x[..., 0] == i + 1).astype(float)))(i)
                  for i in range(n))
    return PotentialFamily(
        stats=stats,
        base=lambda x: np.zeros(len(x)),
        space=template.space, domain=template.domain,
        label=f"categorical-natural-{n}",
        closed_form_potential=lambda th: float(np.log1p(np.sum(np.exp(th)))))


FAMILIES = {
    "normal-natural": normal_natural_family,
    "bernoulli-natural": bernoulli_natural_family,
    "poisson-natural": poisson_natural_family,
    "categorical-natural": categorical_natural_family,
}


def load_family(doc: dict) -> PotentialFamily:
    """Build a family from {"stats": [exprs over x], "base": expr,
    "domain": {"lo","hi"}, "space": {...}} or {"builtin": name}."""
    if not isinstance(doc, dict):
        raise SchemaError("family document must be a mapping")
    if "builtin" in doc:
        name = doc["builtin"]
        if name not in FAMILIES:
            raise SchemaError(f"unknown builtin family {name!r}")
        return FAMILIES[name]()
    for key in ("stats", "domain", "space"):
        if key not in doc:
            raise SchemaError(f"family document is missing {key!r}")
    if not isinstance(doc["stats"], list) or not doc["stats"]:
        raise SchemaError("stats must be a non-empty list of expressions")
    compiled = [compile_expression(e, ("x",)) for e in doc["stats"]]
    stats = tuple((lambda c: (lambda x: c({"x": x})))(c) for c in compiled)
    if "base" in doc:
        base_c = compile_expression(doc["base"], ("x",))
        base = lambda x: base_c({"x": x}) * np.ones(len(x))
    else:
        base = lambda x: np.zeros(len(x))
    dom = doc["domain"]
    box = Box(tuple(float(v) for v in dom["lo"]), tuple(float(v) for v in dom["hi"]))
    if box.dim != len(stats):
        raise SchemaError("domain dimension must match the number of statistics")
    space = space_from_doc(doc["space"])
    return PotentialFamily(stats=stats, base=base, space=space, domain=box,
                           label=doc.get("name", "family"))
