"""Dataset ingestion, standardization, grid construction, and simulators.

All simulators draw from :class:`subsel.rng.CounterRng` in a documented
block order, so a seed pins every generated dataset byte for byte.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import (
    ConfigError,
    DegenerateColumnError,
    EmptyDatasetError,
    InvalidInputError,
    ParseError,
)
from .estimation import sigmoid
from .model_core import CandidateGrid
from .rng import CounterRng


@dataclass(frozen=True)
class Dataset:
    """Columnar numeric data: features, optional response and confounders."""

    feature_names: tuple[str, ...]
    features: np.ndarray
    response: np.ndarray | None = None
    response_name: str | None = None
    confounders: np.ndarray | None = None
    confounder_names: tuple[str, ...] = ()
    n_dropped: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise EmptyDatasetError("dataset has no rows")
        if len(self.feature_names) != feats.shape[1]:
            raise InvalidInputError("one name per feature column is required")
        if not np.all(np.isfinite(feats)):
            raise InvalidInputError("features contain non-finite values")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.response is not None:
            resp = np.asarray(self.response, dtype=float).ravel()
            if resp.size != feats.shape[0]:
                raise InvalidInputError("response length does not match the row count")
            if not np.all(np.isfinite(resp)):
                raise InvalidInputError("response contains non-finite values")
            resp.setflags(write=False)
            object.__setattr__(self, "response", resp)
        if self.confounders is not None:
            conf = np.asarray(self.confounders, dtype=float)
            if conf.ndim == 1:
                conf = conf[:, None]
            if conf.shape[0] != feats.shape[0]:
                raise InvalidInputError("confounder rows do not match the row count")
            if len(self.confounder_names) != conf.shape[1]:
                raise InvalidInputError("one name per confounder column is required")
            if not np.all(np.isfinite(conf)):
                raise InvalidInputError("confounders contain non-finite values")
            conf.setflags(write=False)
            object.__setattr__(self, "confounders", conf)
        elif self.confounder_names:
            raise InvalidInputError("confounder names without confounder columns")

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])


# ---------------------------------------------------------------------------
# CSV in / out


def load_csv(
    path,
    response_column: str | None = None,
    feature_columns: list[str] | None = None,
    confounder_columns: list[str] | None = None,
    strict: bool = False,
) -> Dataset:
    """Read a headered numeric CSV into a Dataset.

    Cells in the used columns must parse as floats.  By default a row with
    an unparseable or empty cell is dropped and counted in n_dropped;
    strict=True raises ParseError naming the first bad row and column.
    Feature columns default to every column not claimed as response or
    confounder.  Raises ConfigError for missing columns and
    EmptyDatasetError when no usable rows remain.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = list(reader)

    confounder_columns = list(confounder_columns or [])
    claimed = set(confounder_columns)
    if response_column is not None:
        claimed.add(response_column)
    if feature_columns is None:
        feature_columns = [h for h in header if h not in claimed]
    for name in list(feature_columns) + confounder_columns + (
        [response_column] if response_column else []
    ):
        if name not in header:
            raise ConfigError(f"column {name!r} not found in {path}")
    overlap = set(feature_columns) & claimed
    if overlap:
        raise ConfigError(f"columns {sorted(overlap)} claimed twice")

    used = list(feature_columns) + confounder_columns + (
        [response_column] if response_column else []
    )
    pos = {name: header.index(name) for name in used}

    keep: list[list[float]] = []
    dropped = 0
    for r_i, row in enumerate(rows, start=2):  # header is line 1
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue  # blank line (csv.reader yields [] for one)
        vals = []
        bad: str | None = None
        for name in used:
            j = pos[name]
            cell = row[j].strip() if j < len(row) else ""
            try:
                v = float(cell)
                if not math.isfinite(v):
                    raise ValueError
            except ValueError:
                bad = name
                break
            vals.append(v)
        if bad is not None:
            if strict:
                raise ParseError(
                    f"cannot parse column {bad!r} on line {r_i} of {path}",
                    row=r_i,
                    column=bad,
                )
            dropped += 1
            continue
        keep.append(vals)

    if not keep:
        raise EmptyDatasetError(f"no usable data rows in {path}")
    arr = np.asarray(keep, dtype=float)
    n_f = len(feature_columns)
    n_c = len(confounder_columns)
    feats = arr[:, :n_f]
    confs = arr[:, n_f : n_f + n_c] if n_c else None
    resp = arr[:, n_f + n_c] if response_column else None
    return Dataset(
        feature_names=tuple(feature_columns),
        features=feats,
        response=resp,
        response_name=response_column,
        confounders=confs,
        confounder_names=tuple(confounder_columns),
        n_dropped=dropped,
    )


def write_csv(data: Dataset, path) -> None:
    """Write a Dataset back to CSV with full-roundtrip float formatting."""
    names = list(data.feature_names) + list(data.confounder_names)
    cols = [data.features[:, j] for j in range(data.n_features)]
    if data.confounders is not None:
        cols += [data.confounders[:, j] for j in range(data.confounders.shape[1])]
    if data.response is not None:
        names.append(data.response_name or "y")
        cols.append(data.response)
    lines = [",".join(names)]
    for i in range(data.n_rows):
        lines.append(",".join(repr(float(c[i])) for c in cols))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class ColumnTransform:
    """Per-feature affine transform x -> (x - mean) / sd and its inverse."""

    means: np.ndarray
    sds: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.means) / self.sds

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.sds + self.means


def standardize(data: Dataset) -> tuple[Dataset, ColumnTransform]:
    """Center and scale every feature column to mean 0, sd 1 (ddof = 1).

    Constant columns raise DegenerateColumnError naming the column.
    Response and confounders pass through unchanged.
    """
    means = data.features.mean(axis=0)
    sds = data.features.std(axis=0, ddof=1) if data.n_rows > 1 else np.zeros(data.n_features)
    for j, s in enumerate(sds):
        if not s > 0.0:
            raise DegenerateColumnError(
                f"feature column {data.feature_names[j]!r} is constant; cannot standardize"
            )
    transform = ColumnTransform(means=means, sds=sds)
    out = Dataset(
        feature_names=data.feature_names,
        features=transform.apply(data.features),
        response=data.response,
        response_name=data.response_name,
        confounders=data.confounders,
        confounder_names=data.confounder_names,
        n_dropped=data.n_dropped,
    )
    return out, transform


# ---------------------------------------------------------------------------
# grids


def build_grid(axes: dict, z_axes: list[str] | None = None) -> CandidateGrid:
    """CandidateGrid from {name: levels}; z_axes names must come last."""
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("axes must be a non-empty mapping name -> levels")
    names = list(axes.keys())
    z_axes = list(z_axes or [])
    for z in z_axes:
        if z not in names:
            raise ConfigError(f"z axis {z!r} is not an axis name")
    if z_axes and names[-len(z_axes) :] != z_axes:
        raise ConfigError("z axes must be the trailing axes of the grid")
    return CandidateGrid.from_axes(axes, z_dim=len(z_axes))


def default_analogue_grid() -> CandidateGrid:
    """Integer grid over four standardized score-like covariates.

    Axes: creditscore -4..4, houseAge -2..2, yearsemploy -2..4, ccDebt -2..4
    (2205 points), the working grid for the loan-default analogue simulator.
    """
    axes = {
        "creditscore": list(range(-4, 5)),
        "houseAge": list(range(-2, 3)),
        "yearsemploy": list(range(-2, 5)),
        "ccDebt": list(range(-2, 5)),
    }
    return CandidateGrid.from_axes({k: [float(v) for v in vs] for k, vs in axes.items()})


def grid_from_data(data: Dataset, n_levels: int = 200, n_z_levels: int | None = None) -> CandidateGrid:
    """Equispaced grid spanning each observed column's [min, max].

    Feature axes get n_levels points; confounder axes (appended last) get
    n_z_levels points (default: same as n_levels).
    """
    if n_levels < 2:
        raise ConfigError("n_levels must be at least 2")
    nz = n_levels if n_z_levels is None else n_z_levels
    axes: dict[str, np.ndarray] = {}
    for j, name in enumerate(data.feature_names):
        col = data.features[:, j]
        axes[name] = np.linspace(col.min(), col.max(), n_levels)
    z_names: list[str] = []
    if data.confounders is not None:
        for j, name in enumerate(data.confounder_names):
            col = data.confounders[:, j]
            axes[name] = np.linspace(col.min(), col.max(), nz)
            z_names.append(name)
    return build_grid(axes, z_axes=z_names)


# ---------------------------------------------------------------------------
# simulators


def curve_mean(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Mean surface -x/2 - 5/3 + 0.35 sin(x^2) + z/9."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return -x / 2.0 - 5.0 / 3.0 + 0.35 * np.sin(x * x) + z / 9.0


def simulate_example2(n: int = 105, seed: int = 0, noise_sd: float = 1.0) -> Dataset:
    """Noisy nonlinear curve with a weak additive confounder.

    x ~ N(2, 1), z ~ N(0, 1), y = curve_mean(x, z) + N(0, noise_sd^2).
    Draw order: the x block, then the z block, then the noise block.
    """
    if n < 1:
        raise InvalidInputError("n must be positive")
    rng = CounterRng(seed)
    x = rng.normal(n, mean=2.0, sd=1.0)
    z = rng.normal(n)
    eps = rng.normal(n, sd=noise_sd)
    y = curve_mean(x, z) + eps
    return Dataset(
        feature_names=("x",),
        features=x[:, None],
        response=y,
        response_name="y",
        confounders=z[:, None],
        confounder_names=("z",),
    )


def wave_mean(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Mean surface x + cos(x) + z/9."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return x + np.cos(x) + z / 9.0


def simulate_example3(seed: int = 0, n: int = 105, noise_sd: float = 1.0,
                      x_low: int = -100, x_high: int = 100) -> Dataset:
    """Integer-located wave data with a weak additive confounder.

    x is a without-replacement sample of n integers from [x_low, x_high],
    z ~ N(0, 1), y = wave_mean(x, z) + N(0, noise_sd^2).  Draw order: the
    integer sample, then the z block, then the noise block.
    """
    span = x_high - x_low + 1
    if n < 1 or n > span:
        raise InvalidInputError(f"n must lie in [1, {span}]")
    rng = CounterRng(seed)
    picks = rng.sample_indices(span, n)
    x = (x_low + picks).astype(float)
    z = rng.normal(n)
    eps = rng.normal(n, sd=noise_sd)
    y = wave_mean(x, z) + eps
    return Dataset(
        feature_names=("x",),
        features=x[:, None],
        response=y,
        response_name="y",
        confounders=z[:, None],
        confounder_names=("z",),
    )


_DEFAULT_SLOPES = (1.0, -0.5, 0.3, 2.0)
_DEFAULT_POSITIVE_RATE = 1031.0 / 1_000_000.0


def solve_intercept(slopes, target_rate: float, n_nodes: int = 80) -> float:
    """Intercept t0 such that E[sigmoid(t0 + b'X)] = target_rate, X std normal.

    b'X ~ N(0, ||b||^2), so the expectation is a 1-D Gauss-Hermite integral;
    the root is bracketed and solved with Brent's method.
    """
    if not 0.0 < target_rate < 1.0:
        raise InvalidInputError("target_rate must lie strictly inside (0, 1)")
    norm = float(np.linalg.norm(np.asarray(slopes, dtype=float)))
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / weights.sum()

    def rate(t0: float) -> float:
        return float(np.dot(weights, sigmoid(t0 + norm * nodes)))

    lo, hi = -60.0, 60.0
    return float(optimize.brentq(lambda t: rate(t) - target_rate, lo, hi, xtol=1e-12))


def default_analogue_theta() -> np.ndarray:
    """Generator coefficients (intercept, slopes) of the default simulator."""
    t0 = solve_intercept(_DEFAULT_SLOPES, _DEFAULT_POSITIVE_RATE)
    return np.asarray([t0, *_DEFAULT_SLOPES], dtype=float)


def simulate_mortgage_analogue(n: int, theta: np.ndarray | None = None, seed: int = 0) -> Dataset:
    """Rare-event binary outcomes on four standard-normal covariates.

    A stand-in generator for a loan-default-style dataset (the original data
    source is unavailable, so this analogue makes no claim of matching it).
    theta = (intercept, b1..b4); when omitted, slopes are (1, -0.5, 0.3, 2)
    and the intercept is solved so the marginal positive rate is 1031 per
    million.  Draw order: covariate blocks x1..x4 (n draws each), then one
    uniform block for the outcomes.  P(y=1 | x) = sigmoid(theta0 + b'x).
    """
    if n < 1:
        raise InvalidInputError("n must be positive")
    if theta is None:
        theta = default_analogue_theta()
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != 5:
        raise InvalidInputError("theta must have 5 entries (intercept + 4 slopes)")
    rng = CounterRng(seed)
    cols = [rng.normal(n) for _ in range(4)]
    x = np.column_stack(cols)
    u = rng.uniform(n)
    pi = sigmoid(theta[0] + x @ theta[1:])
    y = (u < pi).astype(float)
    return Dataset(
        feature_names=("creditscore", "houseAge", "yearsemploy", "ccDebt"),
        features=x,
        response=y,
        response_name="default",
    )
