"""Design criteria: classical optimality values, optimality verification,
minimax-robust losses, and bias/confounder-aware variants.

Conventions used throughout:

* The variance function of a measure xi at a candidate point is
  d(x, z) = row' M(xi)^-1 row with row = (f(x), h(x), g(z)).
* A measure supported on k_eff informative directions is optimal exactly
  when max over the grid of d equals k_eff; the check is two-sided because
  the weighted average of d over the support always equals the rank.
* Matrices that must be inverted go through a guarded symmetric eigensolve:
  condition number above 1e12 (or a non-positive eigenvalue) raises
  SingularMatrixError carrying the smallest eigenvalue.  Nothing is ever
  silently regularized; a fudged inverse would corrupt optimality verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError, SingularMatrixError
from .model_core import (
    BiasSpec,
    CandidateGrid,
    DesignMeasure,
    InformationMatrix,
    ModelSpec,
    _eval_basis,
    eval_row,
    information_matrix,
    model_matrix,
)

_COND_LIMIT = 1e12
_EIG_FLOOR = 1e-12
_RANK_TOL = 1e-9

CRITERION_NAMES = ("D", "I", "A", "Inu", "Dnu", "traceR", "detR_bias", "detR_conf")


@dataclass(frozen=True)
class CriterionValue:
    """A named criterion value plus JSON-safe diagnostics."""

    name: str
    value: float
    meta: dict

    def __post_init__(self):
        if self.name not in CRITERION_NAMES:
            raise InvalidInputError(f"unknown criterion {self.name!r}")

    def to_json_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "meta": _json_safe(self.meta)}


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _sym_inverse(mat: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of a symmetric PSD matrix with a hard condition guard.

    Returns (inverse, eigenvalues ascending).  Raises SingularMatrixError
    when the smallest eigenvalue is non-positive or cond exceeds 1e12.
    """
    sym = (mat + mat.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    smallest = float(eigvals[0])
    largest = float(eigvals[-1])
    if smallest <= 0.0 or largest / smallest > _COND_LIMIT:
        raise SingularMatrixError(
            f"{what} is singular or ill-conditioned (smallest eigenvalue {smallest:.6e})",
            smallest_eigenvalue=smallest,
        )
    inv = (eigvecs / eigvals) @ eigvecs.T
    return (inv + inv.T) / 2.0, eigvals


def effective_rank(m: InformationMatrix, tol: float = _RANK_TOL) -> int:
    """Count of eigenvalues above tol * ||M||_2 (the default k_eff)."""
    eigs = np.linalg.eigvalsh(m.full)
    scale = max(float(eigs[-1]), 0.0)
    if scale == 0.0:
        return 0
    return int(np.sum(eigs > tol * scale))


# ---------------------------------------------------------------------------
# classical values


def variance_function(spec: ModelSpec, design: DesignMeasure, x, z=None) -> float:
    """d((x, z), xi) = row' M(xi)^-1 row over the full (f, h, g) row."""
    m = information_matrix(spec, design)
    minv, _ = _sym_inverse(m.full, "information matrix")
    row = eval_row(spec, x, z)
    return float(row @ minv @ row)


def variance_profile(spec: ModelSpec, design: DesignMeasure, grid: CandidateGrid) -> np.ndarray:
    """Variance function evaluated at every grid point (vectorized)."""
    m = information_matrix(spec, design)
    minv, _ = _sym_inverse(m.full, "information matrix")
    rows = model_matrix(spec, grid.x_part(), grid.z_part())
    return np.einsum("ij,jk,ik->i", rows, minv, rows)


def d_criterion(m: InformationMatrix) -> CriterionValue:
    """log det M, with value -inf (and meta flag) for singular M."""
    sign, logdet = np.linalg.slogdet(m.full)
    if sign <= 0.0 or not np.isfinite(logdet):
        return CriterionValue("D", float("-inf"), {"det": 0.0, "singular": True})
    det = float(np.exp(logdet))
    return CriterionValue("D", float(logdet), {"det": det, "singular": False})


def a_criterion(m: InformationMatrix) -> CriterionValue:
    """Trace of the inverse of the full information matrix."""
    minv, eigvals = _sym_inverse(m.full, "information matrix")
    return CriterionValue("A", float(np.trace(minv)), {"smallest_eigenvalue": float(eigvals[0])})


def i_criterion(spec: ModelSpec, design: DesignMeasure, grid: CandidateGrid) -> CriterionValue:
    """Total prediction variance over the candidate grid (sum of d values)."""
    prof = variance_profile(spec, design, grid)
    total = float(prof.sum())
    return CriterionValue("I", total, {"mean": total / grid.n_points, "n_grid": grid.n_points})


# ---------------------------------------------------------------------------
# optimality verification


@dataclass(frozen=True)
class GetVerdict:
    """Outcome of the equivalence-theorem check for a candidate measure."""

    is_optimal: bool
    max_variance: float
    bound: float
    worst_point: np.ndarray
    tolerance: float

    def to_json_dict(self) -> dict:
        return {
            "is_optimal": bool(self.is_optimal),
            "max_variance": float(self.max_variance),
            "bound": float(self.bound),
            "worst_point": [float(v) for v in np.atleast_1d(self.worst_point)],
            "tolerance": float(self.tolerance),
        }


def get_check(
    spec: ModelSpec,
    design: DesignMeasure,
    grid: CandidateGrid,
    k_eff: int | None = None,
    tol: float = 1e-6,
) -> GetVerdict:
    """Two-sided D-optimality check via the variance function.

    The measure is optimal on the grid exactly when the max of d over the
    grid equals k_eff; max < k_eff - tol is reported as non-optimal as well
    because it signals an inconsistent k_eff (the support average of d is
    always the matrix rank).  Ties on the argmax break to the lowest index.
    """
    if tol <= 0.0:
        raise InvalidInputError("tol must be positive")
    m = information_matrix(spec, design)
    if k_eff is None:
        k_eff = effective_rank(m)
    if k_eff < 1:
        raise InvalidInputError("k_eff must be at least 1")
    prof = variance_profile(spec, design, grid)
    worst = int(np.argmax(prof))
    max_d = float(prof[worst])
    ok = (max_d <= k_eff + tol) and (max_d >= k_eff - tol)
    return GetVerdict(
        is_optimal=bool(ok),
        max_variance=max_d,
        bound=float(k_eff),
        worst_point=grid.points[worst].copy(),
        tolerance=float(tol),
    )


# ---------------------------------------------------------------------------
# minimax-robust losses on a discrete grid


@dataclass(frozen=True)
class RobustContext:
    """Grid-level context for the robust losses.

    f_matrix holds the regression-basis rows over the grid (N x p); q_matrix
    is its orthonormalized version (reduced QR), validated to Q'Q = I within
    1e-10.  nu in [0, 1] mixes variance (nu=0) against worst-case bias
    (nu=1).  points optionally carries the grid coordinates for design
    construction; its trailing z_dim columns are confounder coordinates.
    """

    f_matrix: np.ndarray
    q_matrix: np.ndarray
    nu: float
    points: np.ndarray | None = None
    z_dim: int = 0

    def __post_init__(self):
        f = np.asarray(self.f_matrix, dtype=float)
        qm = np.asarray(self.q_matrix, dtype=float)
        if f.ndim != 2 or qm.shape != f.shape:
            raise InvalidInputError("f_matrix and q_matrix must be matching 2-D arrays")
        if f.shape[0] <= f.shape[1]:
            raise InvalidInputError("grid must have more points than basis terms")
        if not 0.0 <= self.nu <= 1.0:
            raise InvalidInputError("nu must lie in [0, 1]")
        gram = qm.T @ qm
        if float(np.max(np.abs(gram - np.eye(qm.shape[1])))) > 1e-10:
            raise InvalidInputError("q_matrix columns are not orthonormal to 1e-10")
        f.setflags(write=False)
        qm.setflags(write=False)
        object.__setattr__(self, "f_matrix", f)
        object.__setattr__(self, "q_matrix", qm)
        if self.points is not None:
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            if pts.shape[0] != f.shape[0]:
                raise InvalidInputError("points must have one row per grid point")
            if not 0 <= self.z_dim <= pts.shape[1]:
                raise InvalidInputError("z_dim must lie in [0, point dimension]")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)
        elif self.z_dim != 0:
            raise InvalidInputError("z_dim without points is meaningless")

    @property
    def n_grid(self) -> int:
        return self.f_matrix.shape[0]

    @property
    def p(self) -> int:
        return self.f_matrix.shape[1]

    @staticmethod
    def from_f_matrix(
        f: np.ndarray, nu: float, points: np.ndarray | None = None, z_dim: int = 0
    ) -> "RobustContext":
        f = np.asarray(f, dtype=float)
        q, _ = np.linalg.qr(f)
        return RobustContext(f_matrix=f, q_matrix=q, nu=nu, points=points, z_dim=z_dim)

    @staticmethod
    def from_grid(spec: ModelSpec, grid: CandidateGrid, nu: float, full_rows: bool = False) -> "RobustContext":
        """Context over a candidate grid.

        By default only the f-block defines the regression; full_rows=True
        uses the whole (f, h, g) row as the regression basis instead.
        """
        rows = model_matrix(spec, grid.x_part(), grid.z_part())
        if not full_rows:
            rows = rows[:, : spec.p]
        return RobustContext.from_f_matrix(rows, nu, points=grid.points, z_dim=grid.z_dim)


def design_weights_on_grid(ctx_or_grid, design: DesignMeasure) -> np.ndarray:
    """Express a measure as a weight vector over context/grid points.

    Every design point (with its z part, if any) must match a grid point
    exactly; unmatched points raise ConfigError.
    """
    if isinstance(ctx_or_grid, RobustContext):
        pts = ctx_or_grid.points
        if pts is None:
            raise InvalidInputError("context carries no grid points")
    elif isinstance(ctx_or_grid, CandidateGrid):
        pts = ctx_or_grid.points
    else:
        pts = np.asarray(ctx_or_grid, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
    lookup = {tuple(row): i for i, row in enumerate(pts)}
    w = np.zeros(pts.shape[0])
    d_pts = design.x_points
    if design.z_points is not None:
        d_pts = np.hstack([design.x_points, design.z_points])
    if d_pts.shape[1] != pts.shape[1]:
        raise InvalidInputError("design and grid dimensions differ")
    for i in range(d_pts.shape[0]):
        at = lookup.get(tuple(d_pts[i]))
        if at is None:
            raise ConfigError(f"design point {d_pts[i].tolist()} is not a grid point")
        w[at] += design.weights[i]
    return w


def top_eigenpair(sym: np.ndarray, tie_tol: float = 1e-10) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and a deterministically chosen unit eigenvector.

    When the top eigenvalue has multiplicity > 1 within tie_tol, the vector
    is the lexicographically largest |v| among the tied columns, then
    sign-normalized so its first non-negligible component is positive.
    """
    eigvals, eigvecs = np.linalg.eigh((sym + sym.T) / 2.0)
    lam = float(eigvals[-1])
    thresh = tie_tol * max(1.0, abs(lam))
    tied = [i for i in range(eigvals.size) if abs(eigvals[i] - lam) <= thresh]
    best = None
    for i in tied:
        key = tuple(np.round(np.abs(eigvecs[:, i]), 12))
        if best is None or key > best[0]:
            best = (key, i)
    vec = eigvecs[:, best[1]].copy()
    for comp in vec:
        if abs(comp) > 1e-12:
            if comp < 0:
                vec = -vec
            break
    return lam, vec


def _robust_core(ctx: RobustContext, weights: np.ndarray):
    """Shared pieces: R = Q'DQ, its guarded inverse, and B2 = Q'D^2 Q."""
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != ctx.n_grid:
        raise InvalidInputError("weight vector length does not match the grid")
    if np.any(w < 0.0):
        raise InvalidInputError("weights must be non-negative")
    if abs(float(w.sum()) - 1.0) > 1e-12:
        raise InvalidInputError("weights must sum to 1 within 1e-12")
    q = ctx.q_matrix
    r = (q * w[:, None]).T @ q
    rinv, r_eigs = _sym_inverse(r, "weighted gram matrix R")
    b2 = (q * (w * w)[:, None]).T @ q
    return w, q, r, rinv, r_eigs, b2


def wiens_losses(ctx: RobustContext, design) -> tuple[CriterionValue, CriterionValue]:
    """Robust I- and D-loss of a measure on the context grid.

    With R = Q'D(xi)Q and U = R^-1 Q'D^2Q R^-1:

        Inu = (1 - nu) tr(R^-1) + nu lambda_max(U)
        Dnu = ((1 - nu + nu lambda_max(R^1/2 (U - I) R^1/2)) / det R)^(1/p)

    `design` may be a DesignMeasure supported on the grid or a bare weight
    vector.  At nu = 0 both reduce to the classical I/D values of the
    induced measure (total prediction variance over the grid; a normalized
    determinant ratio).
    """
    if isinstance(design, DesignMeasure):
        weights = design_weights_on_grid(ctx, design)
    else:
        weights = design
    w, q, r, rinv, r_eigs, b2 = _robust_core(ctx, weights)
    nu = ctx.nu
    p = ctx.p

    u = rinv @ b2 @ rinv
    lam_u, vec_u = top_eigenpair(u)
    i_val = (1.0 - nu) * float(np.trace(rinv)) + nu * lam_u

    eigvecs = np.linalg.eigh(r)[1]
    root = (eigvecs * np.sqrt(r_eigs)) @ eigvecs.T
    h = root @ (u - np.eye(p)) @ root
    lam_h, vec_h = top_eigenpair(h)
    det_r = float(np.prod(r_eigs))
    d_val = ((1.0 - nu + nu * lam_h) / det_r) ** (1.0 / p)

    meta_i = {
        "lambda_max": lam_u,
        "eigenvector": vec_u,
        "trace_Rinv": float(np.trace(rinv)),
        "nu": nu,
    }
    meta_d = {
        "lambda_max": lam_h,
        "eigenvector": vec_h,
        "det_R": det_r,
        "nu": nu,
    }
    return (
        CriterionValue("Inu", float(i_val), meta_i),
        CriterionValue("Dnu", float(d_val), meta_d),
    )


# ---------------------------------------------------------------------------
# bias-aware criteria


def _bias_blocks(m: InformationMatrix, bias: BiasSpec):
    if bias.psi.size != m.m:
        raise InvalidInputError(
            f"psi has length {bias.psi.size} but the model has m = {m.m}"
        )
    if bias.phi.size != m.q:
        raise InvalidInputError(
            f"phi has length {bias.phi.size} but the model has q = {m.q}"
        )
    m11_inv, eigs = _sym_inverse(m.m11, "M11 block")
    return m11_inv, eigs


def trace_r(m: InformationMatrix, bias: BiasSpec, cross_term_coefficient: float = 2.0) -> CriterionValue:
    """Trace of the scaled MSE matrix of the regression estimate.

    tr R = tr(M11^-1) + (n/sigma)^2 (tr S2 + tr S3 + c tr S4) with

        S2 = psi' M21 M11^-2 M12 psi       (contamination square)
        S3 = phi' M31 M11^-2 M13 phi       (confounder square)
        S4 = phi' M31 M11^-2 M12 psi       (cross term)

    The cross term enters twice (c = 2, the default, which follows from
    expanding the squared bias); c = 1 reproduces a display variant that
    counts it once and is kept only for comparison.
    """
    if cross_term_coefficient not in (1.0, 2.0):
        raise InvalidInputError("cross_term_coefficient must be 1.0 or 2.0")
    m11_inv, _ = _bias_blocks(m, bias)
    a2 = m11_inv @ m11_inv
    u = m.m12 @ bias.psi if m.m else np.zeros(m.p)
    v = m.m13 @ bias.phi if m.q else np.zeros(m.p)
    s2 = float(u @ a2 @ u)
    s3 = float(v @ a2 @ v)
    s4 = float(v @ a2 @ u)
    ratio2 = bias.ratio**2
    value = float(np.trace(m11_inv)) + ratio2 * (s2 + s3 + cross_term_coefficient * s4)
    return CriterionValue(
        "traceR",
        value,
        {
            "trace_m11_inv": float(np.trace(m11_inv)),
            "tr_S2": s2,
            "tr_S3": s3,
            "tr_S4": s4,
            "cross_term_coefficient": cross_term_coefficient,
        },
    )


def det_r_bias(m: InformationMatrix, bias: BiasSpec) -> CriterionValue:
    """det(M11^-1) (1 + (n/sigma)^2 psi' M21 M11^-1 M12 psi)."""
    m11_inv, eigs = _bias_blocks(m, bias)
    u = m.m12 @ bias.psi if m.m else np.zeros(m.p)
    pen = float(u @ m11_inv @ u)
    det_inv = float(np.prod(1.0 / eigs))
    value = det_inv * (1.0 + bias.ratio**2 * pen)
    return CriterionValue("detR_bias", value, {"det_m11_inv": det_inv, "bias_penalty": pen})


def det_r_conf(m: InformationMatrix, bias: BiasSpec) -> CriterionValue:
    """det(M11^-1) (1 + (n/sigma)^2 phi' M31 M11^-1 M13 phi)."""
    m11_inv, eigs = _bias_blocks(m, bias)
    v = m.m13 @ bias.phi if m.q else np.zeros(m.p)
    pen = float(v @ m11_inv @ v)
    det_inv = float(np.prod(1.0 / eigs))
    value = det_inv * (1.0 + bias.ratio**2 * pen)
    return CriterionValue("detR_conf", value, {"det_m11_inv": det_inv, "confounder_penalty": pen})


@dataclass(frozen=True)
class BiasConstrainedVerdict:
    """Outcome of the bias-constrained optimality condition."""

    ok: bool
    worst_point: np.ndarray
    max_lhs: float
    bound: float

    def to_json_dict(self) -> dict:
        return {
            "ok": bool(self.ok),
            "worst_point": [float(v) for v in np.atleast_1d(self.worst_point)],
            "max_lhs": float(self.max_lhs),
            "bound": float(self.bound),
        }


def montepiedra_check(
    spec: ModelSpec,
    design: DesignMeasure,
    bias: BiasSpec,
    budget: float,
    lambda_star: float,
    grid: CandidateGrid,
    tol: float = 1e-9,
) -> BiasConstrainedVerdict:
    """Check the bias-constrained D-optimality condition over a grid.

    With d1(x) = f' M11^-1 f, r(x) = (n/sigma) psi' h(x),
    c(x) = sum_j w_j f(x)' M11^-1 f(x_j), and d2(x) = c(x)^2 - 2 c(x) r(x),
    the design satisfies the condition when

        d1(x) + lambda_star * d2(x) <= p - lambda_star * budget

    for every grid point x.  Returns the verdict plus the worst point
    (argmax of the left side; ties break to the lowest index).
    """
    if lambda_star < 0.0:
        raise InvalidInputError("lambda_star must be non-negative")
    m = information_matrix(spec, design)
    m11_inv, _ = _bias_blocks(m, bias)

    gx = grid.x_part()
    rows_f = np.empty((grid.n_points, spec.p))
    rows_h = np.zeros((grid.n_points, spec.m)) if spec.m else None
    for i in range(grid.n_points):
        rows_f[i] = _eval_basis(spec.f_basis, gx[i], spec.p, "f")
        if spec.m:
            rows_h[i] = _eval_basis(spec.h_basis, gx[i], spec.m, "h")

    d1 = np.einsum("ij,jk,ik->i", rows_f, m11_inv, rows_f)
    # c(x) is linear in the design's weighted f average
    f_design = model_matrix(spec, design.x_points, design.z_points)[:, : spec.p]
    fbar = design.weights @ f_design
    c = rows_f @ (m11_inv @ fbar)
    r = bias.ratio * (rows_h @ bias.psi) if spec.m else np.zeros(grid.n_points)
    lhs = d1 + lambda_star * (c * c - 2.0 * c * r)
    bound = spec.p - lambda_star * budget
    worst = int(np.argmax(lhs))
    ok = bool(lhs[worst] <= bound + tol)
    return BiasConstrainedVerdict(
        ok=ok, worst_point=grid.points[worst].copy(), max_lhs=float(lhs[worst]), bound=float(bound)
    )


# ---------------------------------------------------------------------------
# confounder game


def _confounder_bilinear(spec: ModelSpec, x_points: np.ndarray, z_points: np.ndarray, phi: np.ndarray) -> float:
    n = x_points.shape[0]
    rows = model_matrix(spec, x_points, z_points)
    f = rows[:, : spec.p]
    g = rows[:, spec.p + spec.m :]
    m11 = f.T @ f / n
    m11_inv, _ = _sym_inverse(m11, "empirical M11")
    u = g @ np.asarray(phi, dtype=float)
    t = f.T @ u / n
    return float(t @ m11_inv @ m11_inv @ t)


def confounder_loss(spec: ModelSpec, data_points, assignment, bias: BiasSpec) -> float:
    """Squared bias pushed into the regression estimate by one confounder
    assignment: phi' G'F M11^-2 F'G phi over the empirical measure."""
    if spec.q == 0:
        raise InvalidInputError("model has no confounder terms")
    xs = np.asarray(data_points, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    zs = np.asarray(assignment, dtype=float)
    if zs.ndim == 1:
        zs = zs[:, None]
    if zs.shape[0] != xs.shape[0]:
        raise InvalidInputError("assignment must give one z per data point")
    if bias.phi.size != spec.q:
        raise InvalidInputError("phi length does not match the model's q")
    return _confounder_bilinear(spec, xs, zs, bias.phi)


def confounder_expected_worst(
    spec: ModelSpec,
    data_points,
    assignments: Sequence,
    probabilities: Sequence[float],
    phi_candidates: Sequence,
) -> tuple[float, list[float]]:
    """E over assignments of the max over candidate phi of the loss.

    assignments is a finite list of z-assignments with probabilities summing
    to 1; phi_candidates a finite list of coefficient vectors.  Returns the
    expectation and the per-assignment worst-case values.
    """
    probs = np.asarray(probabilities, dtype=float).ravel()
    if probs.size != len(assignments):
        raise InvalidInputError("one probability per assignment is required")
    if np.any(probs < 0.0) or abs(float(probs.sum()) - 1.0) > 1e-12:
        raise InvalidInputError("probabilities must be non-negative and sum to 1")
    if not phi_candidates:
        raise InvalidInputError("at least one phi candidate is required")
    xs = np.asarray(data_points, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    worst: list[float] = []
    for za in assignments:
        zs = np.asarray(za, dtype=float)
        if zs.ndim == 1:
            zs = zs[:, None]
        vals = [_confounder_bilinear(spec, xs, zs, np.atleast_1d(phi)) for phi in phi_candidates]
        worst.append(max(vals))
    return float(np.dot(probs, worst)), worst


def confounder_minimax(
    spec: ModelSpec,
    data_points,
    assignment_distributions: Sequence[tuple[Sequence, Sequence[float]]],
    phi_candidates: Sequence,
) -> tuple[float, int]:
    """Min over candidate assignment distributions of the expected worst case.

    Each distribution is a pair (assignments, probabilities).  Returns the
    minimal value and the index of the minimizing distribution (lowest index
    on ties).
    """
    if not assignment_distributions:
        raise InvalidInputError("at least one assignment distribution is required")
    best_val = None
    best_idx = -1
    for i, (assigns, probs) in enumerate(assignment_distributions):
        val, _ = confounder_expected_worst(spec, data_points, assigns, probs, phi_candidates)
        if best_val is None or val < best_val:
            best_val, best_idx = val, i
    return float(best_val), best_idx
