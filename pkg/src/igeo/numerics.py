"""Deterministic differentiation, expectation and linear-solve kernels.

Everything downstream (metrics, connections, curvature, immersion data) is
built from three primitives:

* ``derive``      -- central finite differences for mixed partials up to
                     order three, with optional Richardson extrapolation.
* ``expect``      -- expectations of an integrand against an explicit weight
                     over a sample space, under one of four rules.
* ``solve_frame`` -- inversion of a tangent-plus-transversal frame.

All functions here are pure; nothing keeps global state beyond node caches
keyed by the rule parameters.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import Divergent, NonFinite, SingularFrame, StencilOutOfDomain

# Default relative steps per derivative order.  Powers of two keep the
# perturbed coordinates (and polynomial values at them) exactly
# representable, so differences of polynomials carry no rounding noise.
# The magnitudes balance truncation against roundoff for each order.
_DEFAULT_BASE_STEP = {1: 2.0**-17, 2: 2.0**-12, 3: 2.0**-9}

_DEFAULT_CONDITION_CAP = 1e12


@dataclass(frozen=True)
class DiffScheme:
    """Finite-difference policy: derivative order, relative step, extrapolation.

    The step used along coordinate ``i`` is ``base_step * max(1, |x_i|)``.
    ``richardson_levels`` successive halvings feed a standard extrapolation
    table (error orders h^2, h^4, ...).
    """

    order: int = 1
    base_step: Optional[float] = None
    richardson_levels: int = 0

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")
        if self.base_step is not None and not self.base_step > 0:
            raise ValueError("base_step must be positive")
        if self.richardson_levels < 0:
            raise ValueError("richardson_levels must be >= 0")

    @property
    def step(self) -> float:
        if self.base_step is not None:
            return self.base_step
        return _DEFAULT_BASE_STEP[self.order]


# 1-d central stencils: (offset, coefficient) pairs; coefficient is divided
# by h**count at evaluation time.
_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def _in_domain(domain, x) -> bool:
    if domain is None:
        return True
    if callable(domain):
        return bool(domain(x))
    return bool(domain.contains(x))


def derive(fn: Callable, point, multi_index: Sequence[int],
           scheme: Optional[DiffScheme] = None, domain=None):
    """Mixed partial derivative of ``fn`` at ``point`` by central differences.

    ``multi_index`` lists 0-based coordinate indices, one entry per
    differentiation (e.g. ``(0, 0)`` for a second derivative along the first
    coordinate).  ``fn`` may return a scalar or an ndarray; the stencil is
    applied componentwise.  ``domain`` is an optional ``contains``-style
    object or predicate; stencil nodes outside it raise
    ``StencilOutOfDomain``.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    idx = tuple(int(i) for i in multi_index)
    if not 1 <= len(idx) <= 3:
        raise ValueError("multi_index must contain 1 to 3 entries")
    if any(i < 0 or i >= point.size for i in idx):
        raise ValueError(f"coordinate index out of range for point of size {point.size}")
    if scheme is None:
        scheme = DiffScheme(order=len(idx))

    counts = Counter(idx)
    coords = sorted(counts)
    steps = {i: scheme.step * max(1.0, abs(point[i])) for i in coords}

    def estimate(shrink: float):
        total = None
        stencil_axes = [_STENCILS[counts[i]] for i in coords]
        for combo in product(*stencil_axes):
            x = point.copy()
            coeff = 1.0
            for i, (offset, c) in zip(coords, combo):
                h = steps[i] * shrink
                x[i] += offset * h
                coeff *= c / h ** counts[i]
            if not _in_domain(domain, x):
                raise StencilOutOfDomain(
                    f"stencil node {x.tolist()} leaves the declared domain")
            val = np.asarray(fn(x), dtype=float)
            if not np.all(np.isfinite(val)):
                raise NonFinite(f"fn returned a non-finite value at {x.tolist()}")
            total = coeff * val if total is None else total + coeff * val
        return total

    levels = scheme.richardson_levels
    table = [[estimate(0.5 ** i)] for i in range(levels + 1)]
    for i in range(1, levels + 1):
        for j in range(1, i + 1):
            table[i].append(
                (4.0 ** j * table[i][j - 1] - table[i - 1][j - 1]) / (4.0 ** j - 1.0))
    result = table[levels][levels]
    if result.ndim == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class ExpectationRule:
    """How E[integrand] under an explicit weight is evaluated.

    kind is one of ``exact-finite-sum``, ``gauss-hermite``,
    ``adaptive-quadrature``, ``monte-carlo``.  Gauss-Hermite nodes are
    affinely mapped (``loc`` + sqrt(2)*``scale``*t) and carry effective
    weights for integration against the flat measure, so the weight function
    is always an explicit factor.  Monte-carlo requires a seed; unseeded
    rules are rejected at construction.
    """

    kind: str
    nodes: int = 64
    tol: float = 1e-10
    seed: Optional[int] = None
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        kinds = ("exact-finite-sum", "gauss-hermite", "adaptive-quadrature", "monte-carlo")
        if self.kind not in kinds:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.nodes < 1:
            raise ValueError("node count must be >= 1")
        if self.kind == "adaptive-quadrature" and not self.tol > 0:
            raise ValueError("adaptive tolerance must be positive")
        if self.kind == "monte-carlo" and self.seed is None:
            raise ValueError("monte-carlo rules must carry an explicit seed")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def exact(cls) -> "ExpectationRule":
        return cls(kind="exact-finite-sum")

    @classmethod
    def gauss_hermite(cls, nodes: int = 64, loc: float = 0.0,
                      scale: float = 1.0) -> "ExpectationRule":
        return cls(kind="gauss-hermite", nodes=nodes, loc=loc, scale=scale)

    @classmethod
    def adaptive(cls, tol: float = 1e-10) -> "ExpectationRule":
        return cls(kind="adaptive-quadrature", tol=tol)

    @classmethod
    def monte_carlo(cls, nodes: int, seed: int, loc: float = 0.0,
                    scale: float = 1.0) -> "ExpectationRule":
        return cls(kind="monte-carlo", nodes=nodes, seed=seed, loc=loc, scale=scale)


@lru_cache(maxsize=64)
def _gh_nodes_1d(n: int, loc: float, scale: float):
    t, w = np.polynomial.hermite.hermgauss(n)
    x = loc + math.sqrt(2.0) * scale * t
    # effective weights for the flat measure; computed in log space so large
    # |t| nodes do not overflow exp(t^2)
    weights = math.sqrt(2.0) * scale * np.exp(np.log(w) + t * t)
    return x, weights


@lru_cache(maxsize=64)
def quadrature_nodes(n: int, loc: float, scale: float, xdim: int):
    """Tensor-product mapped Gauss-Hermite nodes.

    Returns ``(points, weights)`` with points of shape ``(n**xdim, xdim)``.
    """
    x1, w1 = _gh_nodes_1d(n, loc, scale)
    if xdim == 1:
        return x1.reshape(-1, 1), w1.copy()
    grids = np.meshgrid(*([x1] * xdim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w1] * xdim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, weights


def _masked_products(weight_vals, integrand_vals):
    w = np.asarray(weight_vals, dtype=float)
    if np.any(w < 0):
        raise ValueError("weight must be nonnegative on all evaluated nodes")
    f = np.asarray(integrand_vals, dtype=float)
    contrib = np.where(w > 0, f * w, 0.0)
    if not np.all(np.isfinite(contrib)):
        raise NonFinite("non-finite integrand*weight at a node with positive weight")
    return contrib


def expect(space, weight: Callable, integrand: Callable,
           rule: Optional[ExpectationRule] = None) -> float:
    """Expectation of ``integrand`` against ``weight`` over ``space``.

    ``space`` provides ``points`` (finite spaces) or ``xdim`` (real spaces)
    and a default ``rule``.  Both callables are evaluated on arrays of shape
    ``(N, xdim)`` and must return shape ``(N,)``.  Deterministic for a fixed
    rule; the exact-finite-sum path uses compensated summation and is
    therefore invariant under permutations of the point list.
    """
    if rule is None:
        rule = space.rule

    if rule.kind == "exact-finite-sum":
        pts = space.points
        if pts is None:
            raise ValueError("exact-finite-sum requires a finite sample space")
        contrib = _masked_products(weight(pts), integrand(pts))
        return math.fsum(contrib.tolist())

    if rule.kind == "gauss-hermite":
        pts, qweights = quadrature_nodes(rule.nodes, rule.loc, rule.scale, space.xdim)
        contrib = _masked_products(weight(pts), integrand(pts))
        return float(np.dot(qweights, contrib))

    if rule.kind == "adaptive-quadrature":
        def g(*coords):
            x = np.array([coords], dtype=float)
            w = float(np.asarray(weight(x)).reshape(()))
            if w < 0:
                raise ValueError("weight must be nonnegative on all evaluated nodes")
            if w == 0.0:
                return 0.0
            val = w * float(np.asarray(integrand(x)).reshape(()))
            if not math.isfinite(val):
                raise NonFinite("non-finite integrand*weight during adaptive quadrature")
            return val

        if space.xdim == 1:
            out = integrate.quad(g, -np.inf, np.inf, epsabs=rule.tol,
                                 epsrel=rule.tol, limit=200, full_output=1)
            if len(out) > 3:
                raise Divergent(f"adaptive quadrature did not converge: {out[3]}")
            return float(out[0])
        ranges = [(-np.inf, np.inf)] * space.xdim
        val, abserr = integrate.nquad(g, ranges,
                                      opts={"epsabs": rule.tol, "epsrel": rule.tol})
        if not math.isfinite(val) or abserr > max(rule.tol * 100, rule.tol * abs(val) * 100):
            raise Divergent(f"adaptive quadrature error estimate {abserr:.2e} too large")
        return float(val)

    if rule.kind == "monte-carlo":
        rng = np.random.default_rng(rule.seed)
        if space.points is not None:
            n_pts = len(space.points)
            picks = rng.integers(0, n_pts, size=rule.nodes)
            pts = space.points[picks]
            contrib = _masked_products(weight(pts), integrand(pts))
            return float(np.mean(contrib) * n_pts)
        pts = rng.normal(rule.loc, rule.scale, size=(rule.nodes, space.xdim))
        log_prop = -0.5 * np.sum(((pts - rule.loc) / rule.scale) ** 2, axis=-1) \
            - space.xdim * math.log(math.sqrt(2 * math.pi) * rule.scale)
        contrib = _masked_products(weight(pts), integrand(pts))
        return float(np.mean(contrib * np.exp(-log_prop)))

    raise ValueError(f"unknown rule kind {rule.kind!r}")


def solve_frame(columns, rhs, condition_cap: float = _DEFAULT_CONDITION_CAP):
    """Coefficients of ``rhs`` in the basis given by ``columns``.

    ``columns`` is a sequence of vectors (or an already column-stacked
    square matrix).  Raises ``SingularFrame`` when the frame's condition
    number exceeds ``condition_cap``, which downstream signals a
    non-transversal field.
    """
    if isinstance(columns, np.ndarray) and columns.ndim == 2:
        A = np.asarray(columns, dtype=float)
    else:
        A = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"frame matrix must be square, got {A.shape}")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > condition_cap:
        raise SingularFrame(f"frame condition {cond:.3e} exceeds cap {condition_cap:.1e}")
    return np.linalg.solve(A, np.asarray(rhs, dtype=float))
