"""Statistical models: sample spaces, parametrized log-densities, catalog.

A model is a sample space plus a vectorised log-density ``l(x, theta)`` over
a declared open parameter box.  Evaluation outside the box is an error, not
an extrapolation.  The builtin catalog covers the families used throughout
the verification suite; every entry passes ``validate_model`` on its
reference grid.

Array conventions: sample points always have shape ``(N, xdim)`` and
vectorised callables over the sample space return shape ``(N,)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from . import numerics
from .errors import NonFinite, OutOfDomain, SchemaError
from .expressions import compile_expression
from .numerics import DiffScheme, ExpectationRule, derive, expect

# Derivative policies for log-densities: tight steps for scores, wider ones
# for the second derivatives appearing inside connection integrands.
SCORE_SCHEME = DiffScheme(order=1, base_step=2.0**-17)
HESSIAN_SCHEME = DiffScheme(order=2, base_step=2.0**-12)


def default_quad_nodes(fallback: int) -> int:
    """Quadrature node count, overridable through IGEO_QUAD_NODES."""
    raw = os.environ.get("IGEO_QUAD_NODES")
    if raw is None:
        return fallback
    try:
        value = int(raw)
    except ValueError:
        raise SchemaError(f"IGEO_QUAD_NODES must be an integer, got {raw!r}") from None
    if value < 1:
        raise SchemaError("IGEO_QUAD_NODES must be >= 1")
    return value


@dataclass(frozen=True)
class Box:
    """Open axis-aligned parameter box."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box must satisfy lo < hi componentwise")
        object.__setattr__(self, "_lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "_hi", np.asarray(self.hi, dtype=float))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.size != self.dim:
            return False
        return bool(np.all(p > self._lo + margin) and np.all(p < self._hi - margin))

    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    def grid(self, counts) -> list:
        """Row-major tensor grid with ``counts`` points per coordinate."""
        axes = [np.linspace(a, b, int(c)) for a, b, c in zip(self.lo, self.hi, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return [np.array(p) for p in zip(*(m.ravel() for m in mesh))]


@dataclass(frozen=True, eq=False)
class SampleSpace:
    """Sample space: finite point list or a real coordinate space.

    Real spaces carry a default quadrature rule; finite spaces default to the
    exact compensated sum.
    """

    kind: str
    xdim: int
    rule: ExpectationRule
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("finite-discrete", "real-line", "real-k"):
            raise ValueError(f"unknown sample space kind {self.kind!r}")
        if self.kind == "finite-discrete":
            if self.points is None or len(self.points) < 2:
                raise ValueError("finite-discrete spaces need >= 2 points")
            if len(np.unique(self.points, axis=0)) < 2:
                raise ValueError("finite-discrete spaces need >= 2 distinct points")
        else:
            if self.rule.kind == "exact-finite-sum":
                raise ValueError("real sample spaces need a quadrature rule")

    @classmethod
    def finite(cls, points, rule: Optional[ExpectationRule] = None) -> "SampleSpace":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        return cls(kind="finite-discrete", xdim=pts.shape[1],
                   rule=rule or ExpectationRule.exact(), points=pts)

    @classmethod
    def real_line(cls, rule: ExpectationRule) -> "SampleSpace":
        return cls(kind="real-line", xdim=1, rule=rule)

    @classmethod
    def real(cls, k: int, rule: ExpectationRule) -> "SampleSpace":
        if k == 1:
            return cls.real_line(rule)
        return cls(kind="real-k", xdim=int(k), rule=rule)

    @property
    def is_exact(self) -> bool:
        return self.kind == "finite-discrete" and self.rule.kind == "exact-finite-sum"


@dataclass(frozen=True, eq=False)
class StatisticalModel:
    """Parametrized family of densities on a sample space."""

    space: SampleSpace
    dim: int
    domain: Box
    log_density: Callable   # (x:(N,xdim), theta:(dim,)) -> (N,)
    label: str = ""

    def __post_init__(self):
        if self.domain.dim != self.dim:
            raise ValueError("domain dimension does not match model dimension")

    def check_theta(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.size != self.dim or not self.domain.contains(th):
            raise OutOfDomain(
                f"theta {np.asarray(theta).tolist()} outside domain of {self.label or 'model'}")
        return th

    def density(self, theta) -> Callable:
        """Weight function x -> p(x; theta) for expectation calls."""
        th = self.check_theta(theta)
        return lambda x: np.exp(self.log_density(x, th))

    @property
    def tolerance(self) -> float:
        """Residual tolerance profile: exact sums 1e-6, quadrature 1e-4."""
        return 1e-6 if self.space.is_exact else 1e-4


def log_density(model: StatisticalModel, x, theta) -> float:
    """Scalar log-density at one sample point."""
    th = model.check_theta(theta)
    xa = _as_sample(model, x)
    val = float(np.asarray(model.log_density(xa, th)).reshape(()))
    if not math.isfinite(val):
        raise NonFinite(f"log-density not finite at x={x}, theta={th.tolist()}")
    return val


def score(model: StatisticalModel, x, theta, i: int,
          scheme: DiffScheme = SCORE_SCHEME) -> float:
    """i-th score (0-based) at a single sample point, by central differences."""
    th = model.check_theta(theta)
    xa = _as_sample(model, x)
    fn = lambda t: np.asarray(model.log_density(xa, t)).reshape(())
    return float(derive(fn, th, (i,), scheme=scheme, domain=model.domain))


def _as_sample(model: StatisticalModel, x) -> np.ndarray:
    xa = np.asarray(x, dtype=float)
    if xa.ndim == 0:
        xa = xa.reshape(1, 1)
    elif xa.ndim == 1:
        xa = xa.reshape(1, -1)
    if xa.shape[-1] != model.space.xdim:
        raise OutOfDomain(f"sample point has dimension {xa.shape[-1]}, "
                          f"expected {model.space.xdim}")
    return xa


def score_matrix(model: StatisticalModel, theta, xs,
                 scheme: DiffScheme = SCORE_SCHEME) -> np.ndarray:
    """All scores at once: array of shape (dim, N) over sample points xs."""
    th = model.check_theta(theta)
    out = np.empty((model.dim, len(xs)))
    for i in range(model.dim):
        out[i] = derive(lambda t: model.log_density(xs, t), th, (i,),
                        scheme=scheme, domain=model.domain)
    return out


def second_log_derivs(model: StatisticalModel, theta, xs,
                      scheme: DiffScheme = HESSIAN_SCHEME) -> np.ndarray:
    """Second parameter derivatives of the log-density, shape (dim, dim, N)."""
    th = model.check_theta(theta)
    n = model.dim
    out = np.empty((n, n, len(xs)))
    for i in range(n):
        for j in range(i, n):
            val = derive(lambda t: model.log_density(xs, t), th, (i, j),
                         scheme=scheme, domain=model.domain)
            out[i, j] = val
            out[j, i] = val
    return out


def node_quadrature(space: SampleSpace):
    """(points, weights) when the space's rule is node based, else None.

    ``weights`` of None means the counting measure (plain sum over points).
    """
    if space.points is not None and space.rule.kind == "exact-finite-sum":
        return space.points, None
    if space.rule.kind == "gauss-hermite":
        return numerics.quadrature_nodes(space.rule.nodes, space.rule.loc,
                                         space.rule.scale, space.xdim)
    return None


def quadrature_sample(space: SampleSpace) -> np.ndarray:
    """Representative sample points: the full support or the rule's nodes."""
    if space.points is not None:
        return space.points
    if space.rule.kind == "gauss-hermite":
        pts, _ = numerics.quadrature_nodes(space.rule.nodes, space.rule.loc,
                                           space.rule.scale, space.xdim)
        return pts
    # adaptive / monte-carlo: deterministic quantile spread
    qs = stats.norm.ppf(np.linspace(0.02, 0.98, 25),
                        loc=space.rule.loc, scale=space.rule.scale)
    if space.xdim == 1:
        return qs.reshape(-1, 1)
    grids = np.meshgrid(*([qs] * space.xdim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationEntry:
    theta: tuple
    normalization_residual: float
    score_gram_condition: float
    smooth: bool


@dataclass(frozen=True)
class ValidationReport:
    label: str
    entries: tuple
    tolerance: float
    passed: bool

    @property
    def max_normalization_residual(self) -> float:
        return max(e.normalization_residual for e in self.entries)


def validate_model(model: StatisticalModel, grid: Sequence) -> ValidationReport:
    """Numeric regularity checks over a parameter grid.

    Per point: |E[exp(l)] - 1| (normalization), condition number of the
    score Gram matrix (linear independence), and finiteness of l and its
    first two parameter derivatives on a probe sample.  Failures are
    reported, never thrown.
    """
    entries = []
    for theta in grid:
        th = model.check_theta(theta)
        one = lambda x: np.ones(len(x))
        try:
            total = expect(model.space, model.density(th), one)
            residual = abs(total - 1.0)
        except Exception:
            residual = float("inf")
        smooth = True
        gram_cond = float("inf")
        try:
            xs = quadrature_sample(model.space)
            s = score_matrix(model, th, xs)
            dd = second_log_derivs(model, th, xs)
            smooth = bool(np.all(np.isfinite(s)) and np.all(np.isfinite(dd)))
            p = np.exp(model.log_density(xs, th))
            # unweighted-by-rule Gram is enough: condition is scale invariant
            gram = np.einsum("in,jn,n->ij", s, s, p)
            gram_cond = float(np.linalg.cond(gram))
        except Exception:
            smooth = False
        entries.append(ValidationEntry(tuple(th.tolist()), float(residual),
                                       gram_cond, smooth))
    tol = model.tolerance
    passed = all(e.normalization_residual < tol for e in entries)
    return ValidationReport(model.label, tuple(entries), tol, passed)


# ---------------------------------------------------------------------------
# Builtin catalog
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def normal_mean_sigma() -> StatisticalModel:
    """Normal family in (mu, sigma) coordinates."""
    rule = ExpectationRule.gauss_hermite(default_quad_nodes(96), loc=0.0, scale=2.5)

    def ll(x, th):
        mu, sig = th
        z = (x[..., 0] - mu) / sig
        return -0.5 * z * z - np.log(sig) - 0.5 * _LOG_2PI

    return StatisticalModel(space=SampleSpace.real_line(rule), dim=2,
                            domain=Box((-2.0, 0.8), (2.0, 2.2)),
                            log_density=ll, label="normal")


def normal_natural_potential(theta) -> float:
    """Closed-form normalizer of the natural-coordinate normal family."""
    t1, t2 = float(theta[0]), float(theta[1])
    return 0.5 * math.log(-math.pi / t1) - t2 * t2 / (4.0 * t1)


def normal_natural() -> StatisticalModel:
    """Normal family in natural coordinates (theta1, theta2) = (-1/(2s^2), m/s^2)."""
    rule = ExpectationRule.gauss_hermite(default_quad_nodes(96), loc=0.0, scale=2.5)

    def ll(x, th):
        x0 = x[..., 0]
        return th[0] * x0 * x0 + th[1] * x0 - normal_natural_potential(th)

    # theta1 lower bound keeps the density wide enough for the fixed rule
    return StatisticalModel(space=SampleSpace.real_line(rule), dim=2,
                            domain=Box((-0.78, -2.0), (-0.1, 2.0)),
                            log_density=ll, label="normal-natural")


def bernoulli_natural() -> StatisticalModel:
    def ll(x, th):
        return x[..., 0] * th[0] - np.logaddexp(0.0, th[0])

    return StatisticalModel(space=SampleSpace.finite([[0.0], [1.0]]), dim=1,
                            domain=Box((-6.0,), (6.0,)),
                            log_density=ll, label="bernoulli-natural")


def categorical_natural(n: int = 2) -> StatisticalModel:
    """Categorical family on outcomes {0..n}; outcome 0 is the baseline."""
    if n < 1:
        raise ValueError("categorical dimension must be >= 1")
    points = np.arange(n + 1, dtype=float).reshape(-1, 1)

    def ll(x, th):
        xv = x[..., 0]
        val = np.zeros_like(xv)
        for i in range(n):
            val = val + th[i] * (xv == i + 1)
        return val - np.log1p(np.sum(np.exp(th)))

    return StatisticalModel(space=SampleSpace.finite(points), dim=n,
                            domain=Box((-4.0,) * n, (4.0,) * n),
                            log_density=ll, label=f"categorical-natural-{n}")


def poisson_natural() -> StatisticalModel:
    """Poisson family with natural parameter theta = log(rate), truncated support.

    The support cutoff keeps at least 1 - 1e-12 of the mass at the largest
    rate in the domain, so discrete expectations stay exact finite sums.
    """
    hi = 2.5
    lam_max = math.exp(hi)
    cutoff = int(stats.poisson.isf(1e-12, lam_max)) + 2
    points = np.arange(cutoff + 1, dtype=float).reshape(-1, 1)

    def ll(x, th):
        xv = x[..., 0]
        return xv * th[0] - math.exp(th[0]) - gammaln(xv + 1.0)

    return StatisticalModel(space=SampleSpace.finite(points), dim=1,
                            domain=Box((-2.5,), (hi,)),
                            log_density=ll, label="poisson-natural")


def _log_q_logistic(y):
    return -y - 2.0 * np.logaddexp(0.0, -y)


def _log_q_gaussian(y):
    return -0.5 * y * y - 0.5 * _LOG_2PI


def location_family(q: str = "logistic", k: int = 1) -> StatisticalModel:
    """Location family p(x; mu) = prod_i q(x_i - mu_i) for k <= 2."""
    if q not in ("logistic", "gaussian"):
        raise ValueError(f"unknown location density {q!r}")
    if k not in (1, 2):
        raise ValueError("location families support k in {1, 2}")
    log_q = _log_q_logistic if q == "logistic" else _log_q_gaussian
    rule = ExpectationRule.gauss_hermite(default_quad_nodes(64), loc=0.0, scale=1.0)

    def ll(x, th):
        return sum(log_q(x[..., i] - th[i]) for i in range(k))

    return StatisticalModel(space=SampleSpace.real(k, rule), dim=k,
                            domain=Box((-1.5,) * k, (1.5,) * k),
                            log_density=ll, label=f"{q}-location-{k}")


CATALOG = {
    "normal": normal_mean_sigma,
    "normal-natural": normal_natural,
    "bernoulli-natural": bernoulli_natural,
    "categorical-natural": categorical_natural,
    "poisson-natural": poisson_natural,
    "logistic-location": lambda: location_family("logistic", 1),
    "logistic-location-2": lambda: location_family("logistic", 2),
    "gaussian-location": lambda: location_family("gaussian", 1),
    "gaussian-location-2": lambda: location_family("gaussian", 2),
}

_REFERENCE_GRIDS = {
    "normal": [(m, s) for m in (-0.5, 0.0, 0.5) for s in (0.9, 1.2, 1.6)],
    "normal-natural": [(t1, t2) for t1 in (-0.6, -0.5, -0.3) for t2 in (-0.4, 0.0, 0.4)],
    "bernoulli-natural": [(-2.0,), (0.0,), (2.0,)],
    "categorical-natural": [(-0.5, 0.5), (0.0, 0.0), (1.0, -1.0)],
    "poisson-natural": [(-1.0,), (0.0,), (1.0,)],
    "logistic-location": [(-0.5,), (0.0,), (0.5,)],
    "logistic-location-2": [(-0.5, 0.5), (0.0, 0.0), (0.5, 0.25)],
    "gaussian-location": [(-0.5,), (0.0,), (0.5,)],
    "gaussian-location-2": [(-0.5, 0.5), (0.0, 0.0), (0.5, 0.25)],
}


def reference_grid(name: str) -> list:
    return [np.asarray(p, dtype=float) for p in _REFERENCE_GRIDS[name]]


# ---------------------------------------------------------------------------
# Schema loading
# ---------------------------------------------------------------------------

def _require(doc: dict, key: str, types):
    if key not in doc:
        raise SchemaError(f"model document is missing {key!r}")
    value = doc[key]
    if not isinstance(value, types):
        raise SchemaError(f"field {key!r} has unexpected type {type(value).__name__}")
    return value


def _rule_from_doc(doc: dict) -> ExpectationRule:
    kind = _require(doc, "kind", str)
    if kind == "gauss-hermite":
        return ExpectationRule.gauss_hermite(
            nodes=default_quad_nodes(int(doc.get("nodes", 64))),
            loc=float(doc.get("loc", 0.0)), scale=float(doc.get("scale", 1.0)))
    if kind == "adaptive-quadrature":
        return ExpectationRule.adaptive(tol=float(doc.get("tol", 1e-10)))
    if kind == "monte-carlo":
        if "seed" not in doc:
            raise SchemaError("monte-carlo quadrature requires a seed")
        return ExpectationRule.monte_carlo(
            nodes=int(doc.get("nodes", 4096)), seed=int(doc["seed"]),
            loc=float(doc.get("loc", 0.0)), scale=float(doc.get("scale", 1.0)))
    raise SchemaError(f"unknown quadrature kind {kind!r}")


def space_from_doc(doc: dict) -> SampleSpace:
    kind = _require(doc, "kind", str)
    if kind == "finite-discrete":
        return SampleSpace.finite(_require(doc, "points", list))
    if kind in ("real-line", "real-k"):
        rule = _rule_from_doc(_require(doc, "quadrature", dict))
        k = int(doc.get("k", 1)) if kind == "real-k" else 1
        return SampleSpace.real(k, rule)
    raise SchemaError(f"unknown sample space kind {kind!r}")


def load_model(doc: dict) -> StatisticalModel:
    """Build a model from a configuration document.

    Either ``{"builtin": name}`` for a catalog entry, or the full schema with
    ``name``, ``dim``, ``space``, ``domain`` and a ``log_density`` expression
    over ``x[i]`` and ``theta[i]``.
    """
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a mapping")
    if "builtin" in doc:
        name = doc["builtin"]
        if name not in CATALOG:
            raise SchemaError(f"unknown builtin model {name!r}")
        return CATALOG[name]()

    name = _require(doc, "name", str)
    dim = _require(doc, "dim", int)
    space = space_from_doc(_require(doc, "space", dict))
    dom = _require(doc, "domain", dict)
    box = Box(tuple(float(v) for v in _require(dom, "lo", list)),
              tuple(float(v) for v in _require(dom, "hi", list)))
    if box.dim != dim:
        raise SchemaError("domain box dimension does not match dim")
    expr = compile_expression(_require(doc, "log_density", str), ("x", "theta"))

    def ll(x, th):
        return expr({"x": x, "theta": th})

    return StatisticalModel(space=space, dim=dim, domain=box,
                            log_density=ll, label=name)
