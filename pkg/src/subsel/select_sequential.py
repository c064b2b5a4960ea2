"""Sequential design-guided subsampling.

Starting from a seeded initial subsample, each iteration scores every
candidate grid point by the improvement a one-point design augmentation
would bring under the configured utility, picks the best candidate (ties to
the lowest grid index), transfers the nearest not-yet-selected data rows to
the selection, and refits the working model.  For a 0/1 response the fit is
logistic and all information matrices carry the pi(1-pi) weights of the
current fit; otherwise the fit is least squares and weights are 1.

Utilities:

* ``D``      maximize det(M + w c row row') via the variance function,
* ``A``      minimize trace of the inverse of the augmented matrix,
* ``Inu``/``Dnu``  minimize the robust loss of the augmented grid measure,
* ``traceR`` minimize the bias-aware trace criterion (needs a BiasSpec).

The working regression inside the loop uses the full evaluated row (f, h, g
blocks concatenated), so augmentation always sees the full information
matrix.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .criteria import _sym_inverse
from .errors import (
    DegenerateColumnError,
    ExhaustionError,
    InvalidInputError,
    SeparationError,
    SingularMatrixError,
)
from .estimation import FitResult, fit_logistic, fit_ols, sigmoid
from .model_core import (
    BiasSpec,
    CandidateGrid,
    ModelSpec,
    SubsampleSelection,
    model_matrix,
)
from .rng import CounterRng

_UTILITIES = ("D", "A", "Inu", "Dnu", "traceR")
_FAMILIES = ("auto", "linear", "logistic")
_STRATEGIES = ("random", "stratified", "dope")
_STOP_RULES = ("n_reached", "utility_gain_below")
_DISTANCES = ("euclidean", "scaled")


@dataclass(frozen=True)
class SeqConfig:
    """Configuration for :func:`run_sequential`."""

    n_init: int
    n_target: int
    batch_size: int = 1
    utility: str = "D"
    nu: float | None = None
    bias: BiasSpec | None = None
    family: str = "auto"
    distance: str = "euclidean"
    init_strategy: str = "random"
    init_column: int | str | None = None
    init_quantiles: int = 10
    init_label: float = 1.0
    seed: int = 0
    stop_rule: str = "n_reached"
    stop_epsilon: float = 0.0

    def __post_init__(self):
        if self.n_init < 1:
            raise InvalidInputError("n_init must be at least 1")
        if self.n_target < self.n_init:
            raise InvalidInputError("n_target must be at least n_init")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be at least 1")
        if self.n_target > self.n_init and self.batch_size > self.n_target - self.n_init:
            raise InvalidInputError("batch_size cannot exceed n_target - n_init")
        if self.utility not in _UTILITIES:
            raise InvalidInputError(f"utility must be one of {_UTILITIES}")
        if self.utility in ("Inu", "Dnu"):
            if self.nu is None or not 0.0 <= self.nu <= 1.0:
                raise InvalidInputError("Inu/Dnu utilities need nu in [0, 1]")
        if self.utility == "traceR" and self.bias is None:
            raise InvalidInputError("traceR utility needs a BiasSpec")
        if self.family not in _FAMILIES:
            raise InvalidInputError(f"family must be one of {_FAMILIES}")
        if self.distance not in _DISTANCES:
            raise InvalidInputError(f"distance must be one of {_DISTANCES}")
        if self.init_strategy not in _STRATEGIES:
            raise InvalidInputError(f"init_strategy must be one of {_STRATEGIES}")
        if self.init_strategy == "stratified":
            if self.init_column is None:
                raise InvalidInputError("stratified init needs init_column")
            if self.init_quantiles < 1:
                raise InvalidInputError("init_quantiles must be at least 1")
        if self.stop_rule not in _STOP_RULES:
            raise InvalidInputError(f"stop_rule must be one of {_STOP_RULES}")
        if self.stop_epsilon < 0.0:
            raise InvalidInputError("stop_epsilon must be non-negative")


@dataclass(frozen=True)
class SeqStep:
    """One augmentation step of the loop."""

    iteration: int
    grid_index: int
    grid_point: np.ndarray
    data_indices: np.ndarray
    utility: float
    theta: np.ndarray
    n_selected: int

    def to_json_dict(self) -> dict:
        return {
            "iteration": int(self.iteration),
            "grid_index": int(self.grid_index),
            "grid_point": [float(v) for v in self.grid_point],
            "data_indices": [int(i) for i in self.data_indices],
            "utility": float(self.utility),
            "theta": [float(v) for v in self.theta],
            "n_selected": int(self.n_selected),
        }


@dataclass
class SeqTrace:
    """Initial sample, per-iteration steps, final fit, and the stop reason."""

    initial_indices: np.ndarray
    initial_theta: np.ndarray
    steps: list[SeqStep] = field(default_factory=list)
    final_fit: FitResult | None = None
    stop_reason: str = "n_reached"

    def theta_rows(self) -> list[list[float]]:
        """Rows (iteration, n_selected, theta...) for the trajectory CSV."""
        rows = [[0, len(self.initial_indices), *map(float, self.initial_theta)]]
        for s in self.steps:
            rows.append([s.iteration, s.n_selected, *map(float, s.theta)])
        return rows

    def write_theta_csv(self, path) -> None:
        k = len(self.initial_theta)
        header = "iteration,n_selected," + ",".join(f"theta_{j}" for j in range(k))
        lines = [header]
        for row in self.theta_rows():
            lines.append(",".join([str(int(row[0])), str(int(row[1]))] + [repr(v) for v in row[2:]]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "initial_indices": [int(i) for i in self.initial_indices],
            "initial_theta": [float(v) for v in self.initial_theta],
            "steps": [s.to_json_dict() for s in self.steps],
            "stop_reason": self.stop_reason,
            "final_fit": None if self.final_fit is None else self.final_fit.to_json_dict(),
        }


# ---------------------------------------------------------------------------
# initial sampling strategies


def _stratified_init(rng: CounterRng, values: np.ndarray, edge_pool: np.ndarray,
                     n_init: int, n_quantiles: int) -> list[int]:
    """Round-robin across quantile bins of `values`.

    Bin edges come from the `edge_pool` rows (e.g. the rare-label rows of a
    binary response, so strata concentrate where the response varies), but
    membership and sampling run over every row: the selection depends on the
    covariate only, which keeps downstream estimates free of selection bias.
    """
    picked: list[int] = []
    if edge_pool.size:
        edges = np.quantile(values[edge_pool], np.linspace(0.0, 1.0, n_quantiles + 1))
        bins = np.searchsorted(edges[1:-1], values, side="right")
        members = [list(np.flatnonzero(bins == b)) for b in range(n_quantiles)]
        while len(picked) < n_init and any(members):
            for b in range(n_quantiles):
                if len(picked) >= n_init:
                    break
                if members[b]:
                    at = rng.randbelow(len(members[b]))
                    picked.append(int(members[b].pop(at)))
    if len(picked) < n_init:
        rest = np.setdiff1d(np.arange(values.size), np.asarray(picked, dtype=int))
        fill = rng.sample_indices(rest.size, n_init - len(picked))
        picked.extend(int(rest[i]) for i in fill)
    return picked


def _initial_indices(rng: CounterRng, cfg: SeqConfig, coords: np.ndarray,
                     y: np.ndarray, feature_names, family: str) -> tuple[list[int], list[int]]:
    """Initial retained rows and the rows used to train the first estimate.

    Both lists are usually identical.  The dope strategy differs: rows whose
    response equals the label enrich the training list so the first estimate
    is informed, but the retained subset stays response-blind.  Retaining
    rows because of their own response would bias every later estimate (the
    forced rows' score terms no longer average to zero), which is also why
    the stratified strategy takes only its bin edges from the labeled rows.
    """
    n = coords.shape[0]
    if cfg.init_strategy == "random":
        retained = [int(i) for i in rng.sample_indices(n, cfg.n_init)]
        return retained, retained
    if cfg.init_strategy == "dope":
        retained = [int(i) for i in rng.sample_indices(n, cfg.n_init)]
        doped = np.flatnonzero(y == cfg.init_label)
        fit_rows = sorted(set(retained).union(int(i) for i in doped))
        return retained, fit_rows
    # stratified
    col = cfg.init_column
    if isinstance(col, str):
        if feature_names is None or col not in feature_names:
            raise InvalidInputError(f"unknown init_column {col!r}")
        col = list(feature_names).index(col)
    col = int(col)
    if not 0 <= col < coords.shape[1]:
        raise InvalidInputError("init_column is out of range")
    # for a binary response, focus the bins where the rare label lives
    edge_pool = np.flatnonzero(y == 1.0) if family == "logistic" else np.arange(n)
    if edge_pool.size == 0:
        edge_pool = np.arange(n)
    retained = _stratified_init(rng, coords[:, col], edge_pool, cfg.n_init, cfg.init_quantiles)
    return retained, retained


# ---------------------------------------------------------------------------
# candidate scoring


class _RobustAugmenter:
    """Batched robust-loss evaluation of one-point measure augmentations."""

    def __init__(self, rows_grid: np.ndarray, nu: float, kind: str):
        self.q, _ = np.linalg.qr(rows_grid)
        self.nu = nu
        self.kind = kind
        self.p = self.q.shape[1]
        self.outer = np.einsum("gi,gj->gij", self.q, self.q)

    def candidate_values(self, xi: np.ndarray, n: int) -> np.ndarray:
        q, p, nu = self.q, self.p, self.nu
        a1 = (q * xi[:, None]).T @ q
        b1 = (q * (xi * xi)[:, None]).T @ q
        denom = n + 1.0
        r_all = (n * a1[None, :, :] + self.outer) / denom
        b_all = (n * n * b1[None, :, :] + (2.0 * n * xi + 1.0)[:, None, None] * self.outer) / (denom * denom)
        eigvals, eigvecs = np.linalg.eigh(r_all)
        bad = eigvals[:, 0] <= 1e-14
        safe = np.where(bad[:, None], 1.0, eigvals)
        rinv = np.einsum("gij,gj,gkj->gik", eigvecs, 1.0 / safe, eigvecs)
        if self.kind == "Inu":
            u = np.einsum("gij,gjk,gkl->gil", rinv, b_all, rinv)
            lam = np.linalg.eigvalsh(u)[:, -1]
            vals = (1.0 - nu) * np.trace(rinv, axis1=1, axis2=2) + nu * lam
        else:
            inv_root = np.einsum("gij,gj,gkj->gik", eigvecs, 1.0 / np.sqrt(safe), eigvecs)
            h = np.einsum("gij,gjk,gkl->gil", inv_root, b_all, inv_root) - r_all
            lam = np.linalg.eigvalsh(h)[:, -1]
            det_r = np.prod(eigvals, axis=1)
            vals = ((1.0 - nu + nu * lam) / det_r) ** (1.0 / p)
        vals = np.where(bad, np.inf, vals)
        return vals


def _trace_r_candidates(m_full: np.ndarray, rows_grid: np.ndarray, c_grid: np.ndarray,
                        w_new: float, spec: ModelSpec, bias: BiasSpec) -> np.ndarray:
    """Bias-aware trace of every one-point augmentation (batched)."""
    p, m_dim, q_dim = spec.p, spec.m, spec.q
    f = rows_grid[:, :p]
    a = w_new * c_grid
    m11 = m_full[:p, :p]
    m11_all = m11[None, :, :] + a[:, None, None] * np.einsum("gi,gj->gij", f, f)
    eigvals, eigvecs = np.linalg.eigh(m11_all)
    bad = eigvals[:, 0] <= 1e-14
    safe = np.where(bad[:, None], 1.0, eigvals)
    inv_all = np.einsum("gij,gj,gkj->gik", eigvecs, 1.0 / safe, eigvecs)
    a2_all = np.einsum("gij,gjk->gik", inv_all, inv_all)
    tr_inv = np.trace(inv_all, axis1=1, axis2=2)

    if m_dim:
        h = rows_grid[:, p : p + m_dim]
        u0 = m_full[:p, p : p + m_dim] @ bias.psi
        u_all = u0[None, :] + (a * (h @ bias.psi))[:, None] * f
    else:
        u_all = np.zeros((rows_grid.shape[0], p))
    if q_dim:
        g = rows_grid[:, p + m_dim :]
        v0 = m_full[:p, p + m_dim :] @ bias.phi
        v_all = v0[None, :] + (a * (g @ bias.phi))[:, None] * f
    else:
        v_all = np.zeros((rows_grid.shape[0], p))

    s2 = np.einsum("gi,gij,gj->g", u_all, a2_all, u_all)
    s3 = np.einsum("gi,gij,gj->g", v_all, a2_all, v_all)
    s4 = np.einsum("gi,gij,gj->g", v_all, a2_all, u_all)
    vals = tr_inv + bias.ratio**2 * (s2 + s3 + 2.0 * s4)
    return np.where(bad, np.inf, vals)


# ---------------------------------------------------------------------------
# main loop


def run_sequential(data, grid: CandidateGrid, spec: ModelSpec, cfg: SeqConfig):
    """Run the sequential selection; returns (SubsampleSelection, SeqTrace)."""
    feats = np.asarray(getattr(data, "features", data), dtype=float)
    if feats.ndim == 1:
        feats = feats[:, None]
    n_rows = feats.shape[0]
    y = getattr(data, "response", None)
    if y is None:
        raise InvalidInputError("sequential selection needs a response column")
    y = np.asarray(y, dtype=float).ravel()
    if cfg.n_target > n_rows:
        raise InvalidInputError(f"n_target {cfg.n_target} exceeds the {n_rows} data rows")

    confs = getattr(data, "confounders", None)
    if confs is not None:
        confs = np.asarray(confs, dtype=float)
        if confs.ndim == 1:
            confs = confs[:, None]

    # matching space: covariates plus confounder coords when the grid has them
    if grid.z_dim > 0:
        if confs is None or confs.shape[1] != grid.z_dim:
            raise InvalidInputError("grid has z axes but data has no matching confounder columns")
        coords = np.hstack([feats, confs])
    else:
        coords = feats
    if coords.shape[1] != grid.dim:
        raise InvalidInputError(
            f"grid dimension {grid.dim} does not match data dimension {coords.shape[1]}"
        )

    if cfg.distance == "scaled":
        sd = coords.std(axis=0, ddof=1)
        flat = np.flatnonzero(sd <= 0.0)
        if flat.size:
            raise DegenerateColumnError(f"constant column {int(flat[0])} cannot be distance-scaled")
        scale = sd
    else:
        scale = np.ones(coords.shape[1])
    coords_s = coords / scale
    grid_s = grid.points / scale

    family = cfg.family
    if family == "auto":
        family = "logistic" if np.all((y == 0.0) | (y == 1.0)) else "linear"

    rows_data = model_matrix(spec, feats, confs if spec.q > 0 else None)
    rows_grid = model_matrix(spec, grid.x_part(), grid.z_part())
    k = spec.k_total

    rng = CounterRng(cfg.seed)
    names = getattr(data, "feature_names", None)
    selected, init_fit_rows = _initial_indices(rng, cfg, feats, y, names, family)
    # training-only enrichment rows (dope): inform the first estimate without
    # entering the retained subset
    extra_fit = sorted(set(init_fit_rows) - set(selected))
    in_sel = np.zeros(n_rows, dtype=bool)
    in_sel[selected] = True

    def fit_rows_subset(idx):
        xs = rows_data[idx]
        ys = y[idx]
        if family == "logistic":
            return fit_logistic(xs, ys)
        return fit_ols(xs, ys)

    def fit_current():
        return fit_rows_subset(selected)

    # initial fit, doubling the sample on singular/separated failures
    fit = None
    while True:
        try:
            fit = fit_rows_subset(selected + extra_fit if extra_fit else selected)
            break
        except (SingularMatrixError, SeparationError):
            if len(selected) >= cfg.n_target:
                raise
            want = min(len(selected), cfg.n_target - len(selected))
            rest = np.flatnonzero(~in_sel)
            more = rng.sample_indices(rest.size, want)
            for i in more:
                selected.append(int(rest[i]))
                in_sel[rest[i]] = True

    def empirical_info(theta: np.ndarray) -> np.ndarray:
        xs = rows_data[selected]
        if family == "logistic":
            pi = sigmoid(xs @ theta)
            w = pi * (1.0 - pi)
            mat = (xs * w[:, None]).T @ xs / len(selected)
        else:
            mat = xs.T @ xs / len(selected)
        return (mat + mat.T) / 2.0

    m_emp = empirical_info(fit.theta)
    robust = None
    xi = None
    if cfg.utility in ("Inu", "Dnu"):
        robust = _RobustAugmenter(rows_grid, cfg.nu, cfg.utility)
        xi = np.zeros(grid.n_points)
        for i in selected:
            g = int(np.argmin(((grid_s - coords_s[i]) ** 2).sum(axis=1)))
            xi[g] += 1.0
        xi /= len(selected)

    trace = SeqTrace(
        initial_indices=np.asarray(selected, dtype=int).copy(),
        initial_theta=fit.theta.copy(),
    )
    fit_failures = 0
    prev_utility = None
    stop_reason = "n_reached"
    iteration = 0

    while len(selected) < cfg.n_target:
        iteration += 1
        n_c = len(selected)
        w_new = 1.0 / (n_c + 1.0)
        if family == "logistic":
            pi_g = sigmoid(rows_grid @ fit.theta)
            c_grid = pi_g * (1.0 - pi_g)
        else:
            c_grid = np.ones(grid.n_points)

        if cfg.utility in ("D", "A"):
            minv, _ = _sym_inverse(m_emp, "working information matrix")
            mr = rows_grid @ minv
            quad = np.einsum("gk,gk->g", mr, rows_grid)
            if cfg.utility == "D":
                gain = c_grid * quad
                best = int(np.argmax(gain))
                sign, logdet = np.linalg.slogdet(m_emp)
                util_val = float(logdet + np.log1p(w_new * gain[best]))
            else:
                norm2 = np.einsum("gk,gk->g", mr, mr)
                scores = np.trace(minv) - (w_new * c_grid * norm2) / (1.0 + w_new * c_grid * quad)
                best = int(np.argmin(scores))
                util_val = float(scores[best])
        elif cfg.utility == "traceR":
            # the criterion lives on the unnormalized selection matrix / sigma^2
            s2 = cfg.bias.sigma ** 2
            vals = _trace_r_candidates(m_emp * n_c / s2, rows_grid, c_grid, 1.0 / s2, spec, cfg.bias)
            best = int(np.argmin(vals))
            util_val = float(vals[best])
        else:
            vals = robust.candidate_values(xi, n_c)
            best = int(np.argmin(vals))
            util_val = float(vals[best])

        # transfer the nearest unsampled data rows to the selection
        m_eff = min(cfg.batch_size, cfg.n_target - n_c)
        dist = ((coords_s - grid_s[best]) ** 2).sum(axis=1)
        dist[in_sel] = np.inf
        avail = int(n_rows - n_c)
        if avail < m_eff:
            raise ExhaustionError(
                f"only {avail} selectable rows remain, need {m_eff}", iteration=iteration
            )
        if m_eff == 1:
            added = [int(np.argmin(dist))]
        else:
            added = [int(i) for i in np.argsort(dist, kind="stable")[:m_eff]]
        for i in added:
            selected.append(i)
            in_sel[i] = True

        try:
            fit = fit_current()
        except (SingularMatrixError, SeparationError):
            fit_failures += 1
        m_emp = empirical_info(fit.theta)
        if xi is not None:
            xi = xi * n_c
            for i in added:
                g = int(np.argmin(((grid_s - coords_s[i]) ** 2).sum(axis=1)))
                xi[g] += 1.0
            xi /= len(selected)

        trace.steps.append(
            SeqStep(
                iteration=iteration,
                grid_index=best,
                grid_point=grid.points[best].copy(),
                data_indices=np.asarray(added, dtype=int),
                utility=util_val,
                theta=fit.theta.copy(),
                n_selected=len(selected),
            )
        )

        if cfg.stop_rule == "utility_gain_below" and prev_utility is not None:
            if abs(util_val - prev_utility) < cfg.stop_epsilon:
                stop_reason = "utility_gain_below"
                break
        prev_utility = util_val

    trace.final_fit = fit
    trace.stop_reason = stop_reason
    checksum = hashlib.sha256(np.asarray(selected, dtype=np.int64).tobytes()).hexdigest()
    selection = SubsampleSelection(
        indices=np.asarray(selected, dtype=int),
        algorithm="sequential",
        provenance={
            "utility": cfg.utility,
            "family": family,
            "n_init": cfg.n_init,
            "n_target": cfg.n_target,
            "batch_size": cfg.batch_size,
            "init_strategy": cfg.init_strategy,
            "seed": cfg.seed,
            "stop_reason": stop_reason,
            "fit_failures": fit_failures,
            "indices_sha256": checksum,
        },
    )
    return selection, trace
