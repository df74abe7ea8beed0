"""Submanifold embeddings, embedding curvature, autoparallel and
exponential-form tests, and coordinate slices of potential families.

An embedding is a map ``u -> theta(u)`` into the parameter domain of an
ambient model, with Jacobian columns B_a required to be linearly
independent.  The embedding curvature collects the normal components of the
ambient covariant derivative of the coordinate frame:

    V_ab = d_a d_b theta + Gamma(B_a, B_b),      H_abk = g(V_ab, N_k)

for a g-orthonormal frame {N_k} of the normal space.  H = 0 on a grid is
the autoparallel certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as sstats

from .dualflat import PotentialFamily, family_model
from .errors import (EmptyFixed, EmptyFree, IncompatibleConstants,
                     RankDeficientB, SchemaError)
from .expressions import compile_expression
from .infogeo import ConnectionField, MetricField
from .models import (Box, SampleSpace, StatisticalModel, load_model,
                     second_log_derivs)
from .numerics import DiffScheme, derive

CHART_SCHEME_1 = DiffScheme(order=1, base_step=2.0**-8, richardson_levels=1)
CHART_SCHEME_2 = DiffScheme(order=2, base_step=2.0**-8, richardson_levels=1)

_RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SubmanifoldEmbedding:
    """Parameter map u -> theta(u) into an ambient statistical model."""

    ambient: StatisticalModel
    chart: Callable          # u (m,) -> theta (n,)
    domain: Box              # of u
    dim: int                 # m <= ambient.dim
    label: str = ""

    def __post_init__(self):
        if self.dim > self.ambient.dim:
            raise ValueError("embedding dimension exceeds the ambient dimension")
        if self.domain.dim != self.dim:
            raise ValueError("embedding domain dimension must equal dim")

    def theta(self, u) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.chart(np.atleast_1d(
            np.asarray(u, dtype=float))), dtype=float))


def tangent_basis(emb: SubmanifoldEmbedding, u) -> np.ndarray:
    """Jacobian columns B[:, a] = d theta / d u_a; raises RankDeficientB."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    cols = [derive(emb.chart, u, (a,), scheme=CHART_SCHEME_1, domain=emb.domain)
            for a in range(emb.dim)]
    B = np.column_stack([np.atleast_1d(c) for c in cols])
    if np.linalg.matrix_rank(B, tol=_RANK_TOL) < emb.dim:
        raise RankDeficientB(f"Jacobian columns dependent at u={u.tolist()}")
    return B


def normal_frame(g: np.ndarray, B: np.ndarray) -> np.ndarray:
    """g-orthonormal basis of the g-orthogonal complement of span(B).

    Gram-Schmidt over the tangent columns followed by the ambient
    coordinate axes in index order; deterministic for fixed inputs.
    """
    n = g.shape[0]
    m = B.shape[1]
    accepted = []

    def project(v):
        w = v.astype(float).copy()
        for q in accepted:
            w -= float(q @ g @ w) * q
        return w

    for a in range(m):
        w = project(B[:, a])
        norm2 = float(w @ g @ w)
        if norm2 <= _RANK_TOL:
            raise RankDeficientB("tangent columns are g-degenerate")
        accepted.append(w / np.sqrt(norm2))
    for i in range(n):
        if len(accepted) == n:
            break
        w = project(np.eye(n)[i])
        norm2 = float(w @ g @ w)
        if norm2 > _RANK_TOL:
            accepted.append(w / np.sqrt(norm2))
    if len(accepted) != n:
        raise RankDeficientB("could not complete a g-orthonormal frame")
    return np.column_stack(accepted[m:]) if n > m else np.zeros((n, 0))


@dataclass(frozen=True, eq=False)
class EmbeddingCurvature:
    H: np.ndarray            # (m, m, n-m), symmetric in the first two axes
    max_abs: float
    normal_basis: np.ndarray  # (n, n-m) columns


def embedding_curvature(emb: SubmanifoldEmbedding, conn: ConnectionField,
                        metric: MetricField, u) -> EmbeddingCurvature:
    """Second fundamental data of the embedding at u for the connection."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    m = emb.dim
    th = emb.theta(u)
    B = tangent_basis(emb, u)
    g = metric(th)
    up = conn.up(th)

    N = normal_frame(g, B)
    V = np.empty((m, m, emb.ambient.dim))
    for a in range(m):
        for b in range(a, m):
            dd = derive(emb.chart, u, (a, b), scheme=CHART_SCHEME_2,
                        domain=emb.domain)
            vec = np.atleast_1d(dd) + np.einsum("jki,j,k->i", up, B[:, a], B[:, b])
            V[a, b] = V[b, a] = vec
    H = np.einsum("abi,ij,jk->abk", V, g, N)
    max_abs = float(np.abs(H).max()) if H.size else 0.0
    return EmbeddingCurvature(H=H, max_abs=max_abs, normal_basis=N)


@dataclass(frozen=True)
class AutoparallelReport:
    autoparallel: bool
    max_abs: float
    tolerance: float


def autoparallel_check(emb: SubmanifoldEmbedding, conn: ConnectionField,
                       metric: MetricField, grid: Sequence,
                       tol: float = 1e-5) -> AutoparallelReport:
    """True when the embedding curvature vanishes over the whole grid."""
    worst = 0.0
    for u in grid:
        worst = max(worst, embedding_curvature(emb, conn, metric, u).max_abs)
    return AutoparallelReport(autoparallel=bool(worst < tol), max_abs=worst,
                              tolerance=tol)


def composed_model(emb: SubmanifoldEmbedding) -> StatisticalModel:
    """The ambient family restricted to the embedded parameters."""

    def ll(x, u):
        th = emb.ambient.check_theta(emb.theta(u))
        return emb.ambient.log_density(x, th)

    return StatisticalModel(space=emb.ambient.space, dim=emb.dim,
                            domain=emb.domain, log_density=ll,
                            label=f"{emb.label or 'embedding'}"
                                  f"<{emb.ambient.label}>")


# ---------------------------------------------------------------------------
# Exponential form
# ---------------------------------------------------------------------------

def probe_points(space: SampleSpace, count: int = 8) -> np.ndarray:
    """Sample-space probes: quantile-spread for continuous, full support
    (up to truncation) for discrete."""
    if space.points is not None:
        return space.points
    if space.xdim == 1:
        qs = np.linspace(0.05, 0.95, max(count, 8))
        x = sstats.norm.ppf(qs, loc=space.rule.loc, scale=space.rule.scale)
        return x.reshape(-1, 1)
    per_dim = int(np.ceil(max(count, 8) ** (1.0 / space.xdim)))
    qs = np.linspace(0.05, 0.95, per_dim)
    x1 = sstats.norm.ppf(qs, loc=space.rule.loc, scale=space.rule.scale)
    grids = np.meshgrid(*([x1] * space.xdim), indexing="ij")
    return np.stack([gg.ravel() for gg in grids], axis=-1)


@dataclass(frozen=True)
class ExponentialFormReport:
    is_exponential_form: bool
    max_variation: float
    tolerance: float
    note: str = ("variation of second parameter derivatives across sample "
                 "probes; a negative result only means the given coordinates "
                 "are not natural parameters, not that no exponential "
                 "reparametrization exists")


def exponential_form_check(model: StatisticalModel, grid: Sequence,
                           probes: Optional[np.ndarray] = None,
                           tol: float = 1e-4) -> ExponentialFormReport:
    """Do second parameter-derivatives of log p carry any x dependence?

    For a family in natural exponential form they equal the negative
    potential Hessian at every sample point, so the probe-to-probe
    variation certifies the given coordinates as natural parameters.
    """
    if probes is None:
        probes = probe_points(model.space)
    # discrete supports smaller than 8 are probed in full
    if len(probes) < 8 and model.space.points is None:
        raise ValueError("need at least 8 probe points on a continuous space")
    worst = 0.0
    for u in grid:
        dd = second_log_derivs(model, u, probes)
        variation = float((dd.max(axis=-1) - dd.min(axis=-1)).max())
        worst = max(worst, variation)
    return ExponentialFormReport(is_exponential_form=bool(worst < tol),
                                 max_variation=worst, tolerance=tol)


# ---------------------------------------------------------------------------
# Coordinate slices of a potential family
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoordinateSlice:
    embedding: SubmanifoldEmbedding
    family: PotentialFamily
    free_indices: tuple
    fixed_indices: tuple
    constants: np.ndarray


def coordinate_slice(family: PotentialFamily, fixed_indices: Sequence[int],
                     constants: Sequence[float]) -> CoordinateSlice:
    """Fix a proper subset of natural coordinates to constants.

    The slice is again an exponential family: the fixed statistics are
    absorbed into the base measure weighted by their constants, and the free
    coordinates chart an affine (hence e-autoparallel) submanifold.
    """
    n = family.dim
    fixed = tuple(sorted(set(int(i) for i in fixed_indices)))
    if not fixed:
        raise EmptyFixed("slice needs at least one fixed index")
    if any(i < 0 or i >= n for i in fixed):
        raise IncompatibleConstants(f"fixed indices {fixed} out of range for "
                                    f"dimension {n}")
    free = tuple(i for i in range(n) if i not in fixed)
    if not free:
        raise EmptyFree("slice must leave at least one free coordinate")
    consts = np.asarray(constants, dtype=float)
    if consts.shape != (len(fixed),):
        raise IncompatibleConstants("need exactly one constant per fixed index")
    for i, c in zip(fixed, consts):
        if not (family.domain.lo[i] < c < family.domain.hi[i]):
            raise IncompatibleConstants(
                f"constant {c} for coordinate {i} outside the domain slab")

    def chart(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        th = np.empty(n)
        th[list(free)] = u
        th[list(fixed)] = consts
        return th

    sub_box = Box(tuple(family.domain.lo[i] for i in free),
                  tuple(family.domain.hi[i] for i in free))
    emb = SubmanifoldEmbedding(ambient=family_model(family), chart=chart,
                               domain=sub_box, dim=len(free),
                               label=f"slice{list(fixed)}={consts.tolist()}")

    fixed_stats = tuple(family.stats[i] for i in fixed)

    def absorbed_base(x):
        total = np.asarray(family.base(x), dtype=float)
        for c, F in zip(consts, fixed_stats):
            total = total + c * np.asarray(F(x), dtype=float)
        return total

    sliced = PotentialFamily(stats=tuple(family.stats[i] for i in free),
                             base=absorbed_base, space=family.space,
                             domain=sub_box,
                             label=f"{family.label}|{emb.label}")
    return CoordinateSlice(embedding=emb, family=sliced,
                           free_indices=free, fixed_indices=fixed,
                           constants=consts)


def load_embedding(doc: dict) -> SubmanifoldEmbedding:
    """Build an embedding from {"ambient": model doc | builtin name,
    "map": [exprs over u[i]], "domain": {"lo","hi"}}."""
    if not isinstance(doc, dict):
        raise SchemaError("embedding document must be a mapping")
    for key in ("ambient", "map", "domain"):
        if key not in doc:
            raise SchemaError(f"embedding document is missing {key!r}")
    ambient_doc = doc["ambient"]
    if isinstance(ambient_doc, str):
        ambient_doc = {"builtin": ambient_doc}
    ambient = load_model(ambient_doc)
    exprs = doc["map"]
    if not isinstance(exprs, list) or len(exprs) != ambient.dim:
        raise SchemaError("map must list one expression per ambient coordinate")
    comp = [compile_expression(e, ("u",)) for e in exprs]

    def chart(u):
        env = {"u": np.asarray(u, dtype=float)}
        return np.array([float(c(env)) for c in comp])

    dom = doc["domain"]
    box = Box(tuple(float(v) for v in dom["lo"]), tuple(float(v) for v in dom["hi"]))
    return SubmanifoldEmbedding(ambient=ambient, chart=chart, domain=box,
                                dim=box.dim, label=doc.get("name", "embedding"))
