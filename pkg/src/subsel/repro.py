"""Desk-scale reproduction pipelines behind `subsel repro 1|2|3`.

Each pipeline simulates its dataset from a fixed seed, runs the applicable
selection algorithms, and writes selections, criterion values, coefficient
trajectories, and design scatter data into an output directory.  Artifacts
are deterministic functions of (seed, sizes): rerunning a pipeline with the
same arguments rewrites byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .criteria import RobustContext, d_criterion
from .estimation import predict_classify
from .ingest_sim import (
    Dataset,
    default_analogue_grid,
    default_analogue_theta,
    grid_from_data,
    simulate_example2,
    simulate_example3,
    simulate_mortgage_analogue,
    standardize,
    write_csv,
)
from .model_core import (
    CandidateGrid,
    ModelSpec,
    information_matrix_from_selection,
    model_matrix,
    polynomial_basis,
)
from .select_iboss import run_iboss
from .select_robust import run_wiens
from .select_sequential import SeqConfig, run_sequential


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _linear_spec(p_covariates: int) -> ModelSpec:
    fn, n_terms = polynomial_basis(degree=1, intercept=True, dim=p_covariates)
    return ModelSpec(f_basis=fn, p=n_terms)


def _curve_spec(with_confounder: bool) -> ModelSpec:
    f_fn, p = polynomial_basis(degree=1, intercept=True, dim=1)
    if not with_confounder:
        return ModelSpec(f_basis=f_fn, p=p)
    g_fn, q = polynomial_basis(degree=1, intercept=False, dim=1, scale=1.0 / 9.0)
    return ModelSpec(f_basis=f_fn, p=p, g_basis=g_fn, q=q)


def repro_example1(
    out_dir,
    seed: int = 0,
    n_data: int = 100_000,
    n_init: int = 5000,
    n_target: int = 6200,
    n_test: int = 10_010,
    threshold: float = 0.5,
) -> dict:
    """Sequential selection on the loan-default analogue, three init styles."""
    os.makedirs(out_dir, exist_ok=True)
    theta_gen = default_analogue_theta()
    full = simulate_mortgage_analogue(n_data + n_test, seed=seed)
    train = Dataset(
        feature_names=full.feature_names,
        features=full.features[:n_data],
        response=full.response[:n_data],
        response_name=full.response_name,
    )
    test_x = full.features[n_data:]
    test_y = full.response[n_data:]

    grid = default_analogue_grid()
    spec = _linear_spec(4)
    test_rows = model_matrix(spec, test_x)

    strategies = {
        "random": SeqConfig(n_init=n_init, n_target=n_target, utility="D", seed=seed),
        "stratified": SeqConfig(
            n_init=n_init, n_target=n_target, utility="D", seed=seed,
            init_strategy="stratified", init_column="ccDebt", init_quantiles=10,
        ),
        "doped": SeqConfig(
            n_init=n_init, n_target=n_target, utility="D", seed=seed,
            init_strategy="dope", init_label=1.0,
        ),
    }

    estimates = {"generator_theta": [float(v) for v in theta_gen]}
    criteria_out = {}
    for name, cfg in strategies.items():
        selection, trace = run_sequential(train, grid, spec, cfg)
        _write_json(os.path.join(out_dir, f"selection_{name}.json"), selection.to_json_dict())
        trace.write_theta_csv(os.path.join(out_dir, f"trajectory_{name}.csv"))
        fit = trace.final_fit
        estimates[name] = {
            "theta_hat": [float(v) for v in fit.theta],
            "std_errors": [float(v) for v in fit.std_errors],
            "converged": bool(fit.converged),
        }
        confusion = predict_classify(fit, test_rows, test_y, threshold=threshold)
        _write_json(os.path.join(out_dir, f"confusion_{name}.json"), confusion.to_json_dict())
        m = information_matrix_from_selection(spec, train, selection)
        criteria_out[name] = d_criterion(m).to_json_dict()

    _write_json(os.path.join(out_dir, "estimates.json"), estimates)
    _write_json(os.path.join(out_dir, "criteria.json"), criteria_out)
    return {
        "pipeline": 1,
        "seed": seed,
        "n_data": n_data,
        "n_init": n_init,
        "n_target": n_target,
        "n_test": n_test,
        "threshold": threshold,
        "positives_train": int(train.response.sum()),
    }


def _design_scatter_rows(variant: str, algorithm: str, ds: Dataset, indices, weight=None):
    rows = []
    z = ds.confounders[:, 0] if ds.confounders is not None else None
    for i in indices:
        rows.append(
            {
                "variant": variant,
                "algorithm": algorithm,
                "data_index": int(i),
                "x": float(ds.features[i, 0]),
                "z": float(z[i]) if z is not None else "",
                "weight": "" if weight is None else repr(float(weight)),
            }
        )
    return rows


def _write_scatter_csv(path, rows) -> None:
    header = "variant,algorithm,data_index,x,z,weight"
    lines = [header]
    for r in rows:
        x = repr(r["x"])
        z = repr(r["z"]) if r["z"] != "" else ""
        lines.append(f"{r['variant']},{r['algorithm']},{r['data_index']},{x},{z},{r['weight']}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def repro_example2(
    out_dir,
    seed: int = 0,
    n_points: int = 105,
    n_design: int = 12,
    n_init: int = 6,
    grid_levels: int = 200,
) -> dict:
    """Sequential vs extreme-value designs on the nonlinear curve data."""
    os.makedirs(out_dir, exist_ok=True)
    ds = simulate_example2(n_points, seed=seed)
    write_csv(ds, os.path.join(out_dir, "dataset.csv"))
    ds_std, _ = standardize(ds)
    abs_std_x = np.abs(ds_std.features[:, 0])

    scatter = []
    criteria_out = {}
    for variant in ("xz", "x"):
        with_conf = variant == "xz"
        spec = _curve_spec(with_conf)
        if with_conf:
            grid = grid_from_data(ds, n_levels=grid_levels)
            iboss_matrix = np.hstack([ds.features, ds.confounders])
        else:
            grid = CandidateGrid.from_axes(
                {"x": np.linspace(ds.features[:, 0].min(), ds.features[:, 0].max(), grid_levels)}
            )
            iboss_matrix = ds.features
        cfg = SeqConfig(n_init=n_init, n_target=n_design, utility="D", seed=seed, family="linear")
        sel_seq, trace = run_sequential(ds, grid, spec, cfg)
        sel_ib = run_iboss(iboss_matrix, n_design)

        _write_json(os.path.join(out_dir, f"selection_seq_{variant}.json"), sel_seq.to_json_dict())
        _write_json(os.path.join(out_dir, f"selection_iboss_{variant}.json"), sel_ib.to_json_dict())
        d_seq = d_criterion(information_matrix_from_selection(spec, ds, sel_seq))
        d_ib = d_criterion(information_matrix_from_selection(spec, ds, sel_ib))
        criteria_out[variant] = {
            "sequential": d_seq.to_json_dict(),
            "iboss": d_ib.to_json_dict(),
            "mean_abs_std_x_sequential": float(abs_std_x[sel_seq.indices].mean()),
            "mean_abs_std_x_iboss": float(abs_std_x[sel_ib.indices].mean()),
        }
        scatter += _design_scatter_rows(variant, "sequential", ds, sel_seq.indices)
        scatter += _design_scatter_rows(variant, "iboss", ds, sel_ib.indices)

    _write_scatter_csv(os.path.join(out_dir, "designs.csv"), scatter)
    _write_json(os.path.join(out_dir, "criteria.json"), criteria_out)
    return {
        "pipeline": 2,
        "seed": seed,
        "n_points": n_points,
        "n_design": n_design,
        "n_init": n_init,
        "grid_levels": grid_levels,
    }


def repro_example3(
    out_dir,
    seed: int = 0,
    n_design: int = 12,
    n_init: int = 6,
    nu: float = 0.5,
    robust_iters: int = 2000,
    grid_levels: int = 100,
) -> dict:
    """All three selection styles on the integer wave data at nu = 0.5."""
    os.makedirs(out_dir, exist_ok=True)
    ds = simulate_example3(seed=seed)
    write_csv(ds, os.path.join(out_dir, "dataset.csv"))

    scatter = []
    criteria_out = {}
    for variant in ("xz", "x"):
        with_conf = variant == "xz"
        spec = _curve_spec(with_conf)
        if with_conf:
            grid = CandidateGrid.from_axes(
                {
                    "x": np.linspace(-100.0, 100.0, grid_levels),
                    "z": np.linspace(-3.0, 3.0, grid_levels),
                },
                z_dim=1,
            )
            iboss_matrix = np.hstack([ds.features, ds.confounders])
        else:
            grid = CandidateGrid.from_axes({"x": np.linspace(-100.0, 100.0, grid_levels)})
            iboss_matrix = ds.features

        cfg = SeqConfig(n_init=n_init, n_target=n_design, utility="D", seed=seed, family="linear")
        sel_seq, _ = run_sequential(ds, grid, spec, cfg)
        sel_ib = run_iboss(iboss_matrix, n_design)

        ctx = RobustContext.from_grid(spec, grid, nu, full_rows=True)
        w_init = ctx.f_matrix.shape[1] + 1
        measure, traj = run_wiens(ctx, n_init=w_init, n_target=w_init + robust_iters, seed=seed)
        traj.write_dnu_csv(os.path.join(out_dir, f"dnu_trajectory_{variant}.csv"))
        _write_json(os.path.join(out_dir, f"robust_measure_{variant}.json"), measure.to_json_dict())

        _write_json(os.path.join(out_dir, f"selection_seq_{variant}.json"), sel_seq.to_json_dict())
        _write_json(os.path.join(out_dir, f"selection_iboss_{variant}.json"), sel_ib.to_json_dict())
        d_seq = d_criterion(information_matrix_from_selection(spec, ds, sel_seq))
        d_ib = d_criterion(information_matrix_from_selection(spec, ds, sel_ib))
        criteria_out[variant] = {
            "sequential": d_seq.to_json_dict(),
            "iboss": d_ib.to_json_dict(),
            "robust_final_dnu": float(traj.final_dnu),
        }
        scatter += _design_scatter_rows(variant, "sequential", ds, sel_seq.indices)
        scatter += _design_scatter_rows(variant, "iboss", ds, sel_ib.indices)
        # robust design: grid points carrying the heaviest n_design weights
        top = np.argsort(-measure.weights, kind="stable")[:n_design]
        z_flag = measure.z_points is not None
        for g in top:
            scatter.append(
                {
                    "variant": variant,
                    "algorithm": "robust",
                    "data_index": -1,
                    "x": float(measure.x_points[g, 0]),
                    "z": float(measure.z_points[g, 0]) if z_flag else "",
                    "weight": repr(float(measure.weights[g])),
                }
            )

    _write_scatter_csv(os.path.join(out_dir, "designs.csv"), scatter)
    _write_json(os.path.join(out_dir, "criteria.json"), criteria_out)
    return {
        "pipeline": 3,
        "seed": seed,
        "n_design": n_design,
        "n_init": n_init,
        "nu": nu,
        "robust_iters": robust_iters,
        "grid_levels": grid_levels,
    }
