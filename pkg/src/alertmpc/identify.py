"""Model identification from logged telemetry.

All three fits are ordinary least squares on lagged telemetry columns.
The drowsiness regression needs three consecutive steps per sample (the
lagged DL increments reach two steps back); the environment fits need
two.  Designs are centered before solving, so rank-deficient data yields
the minimum-norm coefficient vector with the intercept carrying the mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DL_FEATURES, DL_MAX, DL_MIN, AmiModel, DlModel, IdtModel
from .models import increments

# Fitted lag gains are clipped into this range to stay physical.
_K_FLOOR = 1e-9


class InsufficientData(ValueError):
    """Too few usable samples to identify the requested model."""


class DegenerateSweep(ValueError):
    """The excitation never varied, so the model is unidentifiable."""


@dataclass(frozen=True)
class TelemetryRow:
    step_index: int
    worker_id: str
    dl: float
    effort: float
    temp: float
    illum: float
    temp_set: float
    illum_set: float

    def __post_init__(self):
        if not DL_MIN <= self.dl <= DL_MAX:
            raise ValueError(
                f"dl must lie in [{DL_MIN}, {DL_MAX}], got {self.dl} "
                f"(worker {self.worker_id}, step {self.step_index})"
            )
        if self.effort < 0:
            raise ValueError(
                f"effort must be >= 0, got {self.effort} "
                f"(worker {self.worker_id}, step {self.step_index})"
            )


@dataclass(frozen=True)
class TelemetryTable:
    """Validated telemetry stream: one row per worker per step."""

    rows: tuple[TelemetryRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        last_step: dict[str, int] = {}
        for row in self.rows:
            prev = last_step.get(row.worker_id)
            if prev is not None and row.step_index <= prev:
                raise ValueError(
                    f"step indices must be strictly increasing per worker: "
                    f"worker {row.worker_id} repeats or reverses at step {row.step_index}"
                )
            last_step[row.worker_id] = row.step_index

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def by_worker(self) -> dict[str, list[TelemetryRow]]:
        grouped: dict[str, list[TelemetryRow]] = {}
        for row in self.rows:
            grouped.setdefault(row.worker_id, []).append(row)
        return grouped

    def step_environment(self) -> list[tuple[int, float, float, float, float]]:
        """Per-step (index, temp, illum, temp_set, illum_set), worker-averaged."""
        buckets: dict[int, list[TelemetryRow]] = {}
        for row in self.rows:
            buckets.setdefault(row.step_index, []).append(row)
        env = []
        for step in sorted(buckets):
            rows = buckets[step]
            env.append(
                (
                    step,
                    float(np.mean([r.temp for r in rows])),
                    float(np.mean([r.illum for r in rows])),
                    float(np.mean([r.temp_set for r in rows])),
                    float(np.mean([r.illum_set for r in rows])),
                )
            )
        return env


@dataclass(frozen=True)
class FitReport:
    rmse: float
    n_samples: int
    condition_warning: bool = False


def _centered_lstsq(X: np.ndarray, y: np.ndarray, ridge: float):
    """Least squares on mean-centered data.

    Returns (intercept, coefficients, rank of the centered design).  With
    a rank-deficient design the coefficient vector is the minimum-norm
    solution and the intercept absorbs the sample mean.
    """
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    xc = X - x_mean
    yc = y - y_mean
    if ridge > 0.0:
        gram = xc.T @ xc + ridge * np.eye(X.shape[1])
        beta = np.linalg.solve(gram, xc.T @ yc)
        rank = np.linalg.matrix_rank(xc)
    else:
        beta, _, rank, _ = np.linalg.lstsq(xc, yc, rcond=None)
    intercept = float(y_mean - x_mean @ beta)
    return intercept, beta, int(rank)


def _rmse(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(residuals))))


def dl_design(
    data: TelemetryTable, exclude_boundary: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (columns in DL_FEATURES order) and target vector.

    A sample needs three consecutive step indices for its worker; gaps
    break the chain.  With exclude_boundary, samples whose target sits on
    the scale limits are dropped since the clamp censors them.
    """
    features: list[list[float]] = []
    targets: list[float] = []
    for rows in data.by_worker().values():
        for older, prev, cur in zip(rows, rows[1:], rows[2:]):
            if prev.step_index != older.step_index + 1:
                continue
            if cur.step_index != prev.step_index + 1:
                continue
            if exclude_boundary and cur.dl in (DL_MIN, DL_MAX):
                continue
            d_plus, d_minus = increments(prev.dl, older.dl)
            t_plus, t_minus = increments(cur.temp, prev.temp)
            l_plus, l_minus = increments(cur.illum, prev.illum)
            features.append(
                [
                    prev.dl,
                    d_plus,
                    d_minus,
                    cur.temp,
                    t_plus,
                    t_minus,
                    cur.illum,
                    l_plus,
                    l_minus,
                    cur.effort,
                ]
            )
            targets.append(cur.dl)
    return np.asarray(features, dtype=float), np.asarray(targets, dtype=float)


def fit_dl_model(
    data: TelemetryTable, exclude_boundary: bool = True, ridge: float = 0.0
) -> tuple[DlModel, FitReport]:
    """Identify the drowsiness regression from telemetry."""
    X, y = dl_design(data, exclude_boundary)
    n_params = len(DL_FEATURES) + 1
    if len(y) < n_params:
        raise InsufficientData(
            f"drowsiness fit needs >= {n_params} usable samples, got {len(y)}"
        )
    intercept, beta, rank = _centered_lstsq(X, y, ridge)
    residuals = y - (intercept + X @ beta)
    model = DlModel(intercept=intercept, coef=dict(zip(DL_FEATURES, (float(b) for b in beta))))
    report = FitReport(
        rmse=_rmse(residuals),
        n_samples=len(y),
        condition_warning=rank < len(DL_FEATURES),
    )
    return model, report


def fit_idt_coeffs(data: TelemetryTable) -> tuple[IdtModel, FitReport]:
    """Identify the temperature lag gains, one per direction.

    Each consecutive step pair contributes one transition; a setpoint at
    or above the previous temperature counts as raising.  The per-branch
    gain has a closed form; results outside (0, 1] are clipped and
    flagged via condition_warning.
    """
    env = data.step_environment()
    raising: list[tuple[float, float]] = []  # (setpoint - prev, observed - prev)
    lowering: list[tuple[float, float]] = []
    for (s0, t0, _, _, _), (s1, t1, _, tset, _) in zip(env, env[1:]):
        if s1 != s0 + 1:
            continue
        pair = (tset - t0, t1 - t0)
        if tset >= t0:
            raising.append(pair)
        else:
            lowering.append(pair)
    for name, branch in (("raising", raising), ("lowering", lowering)):
        if len(branch) < 2:
            raise InsufficientData(
                f"temperature fit needs >= 2 {name} transitions, got {len(branch)}"
            )

    clipped = False

    def branch_gain(branch: list[tuple[float, float]], name: str) -> float:
        nonlocal clipped
        denom = sum(dp * dp for dp, _ in branch)
        if denom == 0.0:
            raise InsufficientData(
                f"temperature fit has no informative {name} transitions "
                "(setpoint always equals the previous temperature)"
            )
        k = sum(dp * do for dp, do in branch) / denom
        if not _K_FLOOR <= k <= 1.0:
            clipped = True
            k = min(max(k, _K_FLOOR), 1.0)
        return k

    k_up = branch_gain(raising, "raising")
    k_down = branch_gain(lowering, "lowering")
    residuals = [do - k_up * dp for dp, do in raising]
    residuals += [do - k_down * dp for dp, do in lowering]
    model = IdtModel(k_up=k_up, k_down=k_down)
    report = FitReport(
        rmse=_rmse(np.asarray(residuals)),
        n_samples=len(raising) + len(lowering),
        condition_warning=clipped,
    )
    return model, report


def fit_ami_model(data: TelemetryTable) -> tuple[AmiModel, FitReport]:
    """Identify the illuminance response by least squares."""
    env = data.step_environment()
    features: list[list[float]] = []
    targets: list[float] = []
    for (s0, _, l0, _, _), (s1, _, l1, _, lset) in zip(env, env[1:]):
        if s1 != s0 + 1:
            continue
        features.append([l0, lset])
        targets.append(l1)
    if len(targets) < 3:
        raise InsufficientData(
            f"illuminance fit needs >= 3 samples, got {len(targets)}"
        )
    X = np.asarray(features)
    y = np.asarray(targets)
    if np.unique(X[:, 1]).size < 2:
        raise DegenerateSweep(
            "illuminance setpoint never varied; sweep the setpoint to identify the response"
        )
    intercept, beta, rank = _centered_lstsq(X, y, ridge=0.0)
    residuals = y - (intercept + X @ beta)
    model = AmiModel(theta0=intercept, theta_prev=float(beta[0]), theta_set=float(beta[1]))
    report = FitReport(
        rmse=_rmse(residuals),
        n_samples=len(y),
        condition_warning=rank < 2,
    )
    return model, report


__all__ = [
    "InsufficientData",
    "DegenerateSweep",
    "TelemetryRow",
    "TelemetryTable",
    "FitReport",
    "dl_design",
    "fit_dl_model",
    "fit_idt_coeffs",
    "fit_ami_model",
]
