"""Robust design construction on a discrete grid by vertex-direction steps.

Starting from a uniform measure on a seeded random subset of grid points,
each iteration moves mass 1/(n+1) toward the grid point with the steepest
ascent direction of the robust D-loss and renormalizes.  The mixing constant
nu must lie strictly inside (0, 1): the endpoints have closed-form answers
(nu = 0 is the classical D-optimal problem, nu = 1 is solved by the uniform
measure on the grid) and the gradient expressions degenerate there.

Per iteration, with R = Q'D(xi)Q, U = R^-1 Q'D^2(xi) Q R^-1, lambda/z the
top eigenpair of R^1/2 (U - I) R^1/2, v = R^1/2 z and w = R^-1/2 z:

    J = lambda (R^-1 + w w') + (w v' + v w')
    K = 2 w w'
    T_ii = (1 - nu) q_i' R^-1 q_i + nu (q_i' J q_i - xi_i q_i' K q_i)

and the mass moves toward argmax_i T_ii (ties to the lowest index).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .criteria import RobustContext, top_eigenpair
from .errors import InvalidInputError, SingularMatrixError
from .model_core import DesignMeasure
from .rng import CounterRng

_EIG_FLOOR = 1e-12
_STOPS = ("n_reached", "dnu_gain_below")


@dataclass(frozen=True)
class RobustStep:
    """One mass-moving iteration."""

    iteration: int
    chosen_index: int
    dnu: float
    lambda_max: float
    weights_sha256: str

    def to_json_dict(self) -> dict:
        return {
            "iteration": int(self.iteration),
            "chosen_index": int(self.chosen_index),
            "dnu": float(self.dnu),
            "lambda_max": float(self.lambda_max),
            "weights_sha256": self.weights_sha256,
        }


@dataclass
class RobustTrajectory:
    """Initial support, per-iteration records, and the final loss."""

    initial_indices: np.ndarray
    steps: list[RobustStep] = field(default_factory=list)
    final_dnu: float = float("nan")
    stop_reason: str = "n_reached"

    def dnu_values(self) -> list[float]:
        return [s.dnu for s in self.steps]

    def write_dnu_csv(self, path) -> None:
        lines = ["iteration,chosen_index,dnu,lambda_max"]
        for s in self.steps:
            lines.append(f"{s.iteration},{s.chosen_index},{s.dnu!r},{s.lambda_max!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "initial_indices": [int(i) for i in self.initial_indices],
            "steps": [s.to_json_dict() for s in self.steps],
            "final_dnu": float(self.final_dnu),
            "stop_reason": self.stop_reason,
        }


def _dnu_of(r_eigs: np.ndarray, lam: float, nu: float, p: int) -> float:
    det_r = float(np.prod(r_eigs))
    return float(((1.0 - nu + nu * lam) / det_r) ** (1.0 / p))


def run_wiens(
    ctx: RobustContext,
    n_init: int,
    n_target: int,
    seed: int = 0,
    stop: str = "n_reached",
    stop_epsilon: float = 0.0,
    stop_window: int = 25,
) -> tuple[DesignMeasure, RobustTrajectory]:
    """Iterate the vertex-direction update until n_target pseudo-observations.

    Stops either when the measure counts n_target points (``n_reached``) or
    when the relative D-loss improvement over the trailing ``stop_window``
    iterations falls below ``stop_epsilon`` (``dnu_gain_below``).  Returns
    the final measure on the context grid plus the trajectory.
    """
    if not 0.0 < ctx.nu < 1.0:
        raise InvalidInputError(
            "run_wiens needs nu strictly inside (0, 1): nu = 0 is the classical "
            "D-optimal problem and nu = 1 is solved by the uniform measure"
        )
    if ctx.points is None:
        raise InvalidInputError("context must carry grid points to build a measure")
    n_grid, p = ctx.n_grid, ctx.p
    if not 1 <= n_init <= n_grid:
        raise InvalidInputError("n_init must lie in [1, grid size]")
    if n_target <= n_init:
        raise InvalidInputError("n_target must exceed n_init")
    if stop not in _STOPS:
        raise InvalidInputError(f"stop must be one of {_STOPS}")
    if stop_epsilon < 0.0 or stop_window < 1:
        raise InvalidInputError("stop_epsilon must be >= 0 and stop_window >= 1")

    q = ctx.q_matrix
    nu = ctx.nu
    rng = CounterRng(seed)
    init = np.sort(rng.sample_indices(n_grid, n_init))
    xi = np.zeros(n_grid)
    xi[init] = 1.0 / n_init

    traj = RobustTrajectory(initial_indices=init.copy())
    identity = np.eye(p)
    n = n_init
    while n < n_target:
        it = len(traj.steps) + 1
        r = (q * xi[:, None]).T @ q
        r_eigs, r_vecs = np.linalg.eigh((r + r.T) / 2.0)
        if float(r_eigs[0]) < _EIG_FLOOR:
            raise SingularMatrixError(
                f"weighted gram matrix R is singular at iteration {it}",
                smallest_eigenvalue=float(r_eigs[0]),
                iteration=it,
            )
        rinv = (r_vecs / r_eigs) @ r_vecs.T
        root = (r_vecs * np.sqrt(r_eigs)) @ r_vecs.T
        inv_root = (r_vecs / np.sqrt(r_eigs)) @ r_vecs.T
        b2 = (q * (xi * xi)[:, None]).T @ q
        u = rinv @ b2 @ rinv
        lam, z = top_eigenpair(root @ (u - identity) @ root)
        v = root @ z
        w = inv_root @ z
        j = lam * (rinv + np.outer(w, w)) + np.outer(w, v) + np.outer(v, w)
        kk = 2.0 * np.outer(w, w)
        t_var = np.einsum("gi,ij,gj->g", q, rinv, q)
        t_bias = np.einsum("gi,ij,gj->g", q, j, q) - xi * np.einsum("gi,ij,gj->g", q, kk, q)
        t_diag = (1.0 - nu) * t_var + nu * t_bias
        best = int(np.argmax(t_diag))

        dnu = _dnu_of(r_eigs, lam, nu, p)
        xi = (n * xi + _unit_mass(n_grid, best)) / (n + 1.0)
        n += 1
        total = float(xi.sum())
        if abs(total - 1.0) > 1e-12:
            raise InvalidInputError(f"weights left the simplex (sum {total!r})")
        traj.steps.append(
            RobustStep(
                iteration=it,
                chosen_index=best,
                dnu=dnu,
                lambda_max=lam,
                weights_sha256=hashlib.sha256(xi.tobytes()).hexdigest(),
            )
        )

        if stop == "dnu_gain_below" and len(traj.steps) > stop_window:
            past = traj.steps[-1 - stop_window].dnu
            now = traj.steps[-1].dnu
            if (past - now) / max(abs(past), 1e-300) < stop_epsilon:
                traj.stop_reason = "dnu_gain_below"
                break

    # final loss of the returned measure
    r = (q * xi[:, None]).T @ q
    r_eigs, r_vecs = np.linalg.eigh((r + r.T) / 2.0)
    if float(r_eigs[0]) < _EIG_FLOOR:
        raise SingularMatrixError(
            "weighted gram matrix R is singular at the final measure",
            smallest_eigenvalue=float(r_eigs[0]),
            iteration=len(traj.steps),
        )
    rinv = (r_vecs / r_eigs) @ r_vecs.T
    root = (r_vecs * np.sqrt(r_eigs)) @ r_vecs.T
    b2 = (q * (xi * xi)[:, None]).T @ q
    lam, _ = top_eigenpair(root @ (rinv @ b2 @ rinv - identity) @ root)
    traj.final_dnu = _dnu_of(r_eigs, lam, nu, p)

    if ctx.z_dim > 0:
        split = ctx.points.shape[1] - ctx.z_dim
        measure = DesignMeasure(ctx.points[:, :split], xi, ctx.points[:, split:])
    else:
        measure = DesignMeasure(ctx.points, xi)
    return measure, traj


def _unit_mass(n: int, at: int) -> np.ndarray:
    e = np.zeros(n)
    e[at] = 1.0
    return e
