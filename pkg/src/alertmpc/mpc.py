"""Receding-horizon control built on the prediction models.

solve() turns one measured state into a setpoint schedule.  NOC simply
holds the comfort point; the optimizing modes search the setpoint box by
differential evolution, sharing one rollout per candidate between the
objective and the constraint.  step_controller() wraps solve() with the
measurement history and the per-interval seed policy; Controller keeps
the loop state (log + last applied setpoints) for simulator and daemon
use.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domain import (
    ControlMode,
    ControlSchedule,
    ModelSet,
    MpcConfig,
    StateSnapshot,
    WorkerState,
    validate_config,
)
from .models import (
    HorizonPrediction,
    constraint_violation,
    objective,
    rollout,
)
from .optimizer import DeParams, DeResult, de_minimize


class StaleDataError(RuntimeError):
    """The measurement log has not caught up with the controller clock."""

    def __init__(self, latest_index, clock):
        self.latest_index = latest_index
        self.clock = clock
        super().__init__(
            f"latest recorded step is {latest_index}, interval {clock} needs step {clock - 1}"
        )


@dataclass(frozen=True)
class MpcSolution:
    """One interval's decision: the schedule and its predicted outcome."""

    schedule: ControlSchedule
    predicted: HorizonPrediction
    objective_value: float
    feasible: bool
    applied_setpoints: tuple[float, float]


def solve(
    models: ModelSet,
    snapshot: StateSnapshot,
    cfg: MpcConfig,
    de: DeParams = DeParams(),
) -> MpcSolution:
    """Choose the setpoint schedule for the coming horizon.

    NOC returns the constant comfort schedule without touching the
    optimizer.  MPC1 optimizes temperatures with illuminance pinned at
    the comfort value; MPC2 optimizes both.  When no feasible schedule
    is found the least-violating one is returned with feasible false so
    the caller can decide what to apply.
    """
    validate_config(cfg)
    horizon = cfg.horizon

    if cfg.mode is ControlMode.NOC:
        schedule = ControlSchedule(
            (cfg.temp_comfort,) * horizon, (cfg.illum_comfort,) * horizon
        )
        pred = rollout(models, snapshot, schedule, cfg)
        return MpcSolution(
            schedule=schedule,
            predicted=pred,
            objective_value=objective(pred),
            feasible=constraint_violation(pred, cfg) == 0.0,
            applied_setpoints=(schedule.temp_setpoints[0], schedule.illum_setpoints[0]),
        )

    if cfg.mode is ControlMode.MPC1:
        lower = np.full(horizon, cfg.temp_lo)
        upper = np.full(horizon, cfg.temp_hi)
        pinned = (cfg.illum_comfort,) * horizon

        def to_schedule(vec: np.ndarray) -> ControlSchedule:
            return ControlSchedule(tuple(vec), pinned)

    else:
        lower = np.concatenate(
            [np.full(horizon, cfg.temp_lo), np.full(horizon, cfg.illum_lo)]
        )
        upper = np.concatenate(
            [np.full(horizon, cfg.temp_hi), np.full(horizon, cfg.illum_hi)]
        )

        def to_schedule(vec: np.ndarray) -> ControlSchedule:
            return ControlSchedule.unflatten(vec)

    # One rollout per candidate, shared by both callbacks.
    cache: dict[bytes, tuple[float, float]] = {}

    def eval_pair(vec: np.ndarray) -> tuple[float, float]:
        key = vec.tobytes()
        pair = cache.get(key)
        if pair is None:
            pred = rollout(models, snapshot, to_schedule(vec), cfg)
            pair = (objective(pred), constraint_violation(pred, cfg))
            cache[key] = pair
        return pair

    result: DeResult = de_minimize(
        lambda v: eval_pair(v)[0],
        lambda v: eval_pair(v)[1],
        lower,
        upper,
        de,
    )

    schedule = to_schedule(result.best_vector)
    pred = rollout(models, snapshot, schedule, cfg)
    return MpcSolution(
        schedule=schedule,
        predicted=pred,
        objective_value=objective(pred),
        feasible=result.feasible,
        applied_setpoints=(schedule.temp_setpoints[0], schedule.illum_setpoints[0]),
    )


@dataclass(frozen=True)
class _StepRecord:
    dl_means: tuple[float, ...]
    dl_sds: tuple[float, ...]
    temp: float
    illum: float


class MeasurementLog:
    """Step-indexed record of averaged measurements feeding the controller."""

    def __init__(self):
        self._records: dict[int, _StepRecord] = {}
        self._latest: int | None = None
        self._num_workers: int | None = None

    @property
    def latest_index(self) -> int | None:
        return self._latest

    def __len__(self) -> int:
        return len(self._records)

    def record_step(self, step_index: int, dl_means, dl_sds, temp: float, illum: float):
        """Append one completed interval's averaged measurements."""
        dl_means = tuple(float(x) for x in dl_means)
        dl_sds = tuple(float(x) for x in dl_sds)
        if len(dl_means) != len(dl_sds):
            raise ValueError("dl_means and dl_sds must have matching lengths")
        if not dl_means:
            raise ValueError("a step record needs at least one worker")
        if self._num_workers is None:
            self._num_workers = len(dl_means)
        elif len(dl_means) != self._num_workers:
            raise ValueError(
                f"worker count changed from {self._num_workers} to {len(dl_means)}"
            )
        if self._latest is not None and step_index <= self._latest:
            raise ValueError(
                f"step indices must advance strictly: {step_index} after {self._latest}"
            )
        self._records[step_index] = _StepRecord(dl_means, dl_sds, float(temp), float(illum))
        self._latest = step_index

    def snapshot(self) -> StateSnapshot:
        """Measured state from the two most recent (consecutive) steps."""
        if self._latest is None or (self._latest - 1) not in self._records:
            raise ValueError(
                "history must contain the two most recent consecutive steps"
            )
        cur = self._records[self._latest]
        prev = self._records[self._latest - 1]
        workers = tuple(
            WorkerState.from_history(d_cur, d_prev, effort)
            for d_cur, d_prev, effort in zip(cur.dl_means, prev.dl_means, cur.dl_sds)
        )
        return StateSnapshot(
            workers=workers, temp_current=cur.temp, illum_current=cur.illum
        )


def step_controller(
    models: ModelSet,
    history: MeasurementLog,
    cfg: MpcConfig,
    de: DeParams,
    clock: int,
) -> MpcSolution:
    """Solve interval `clock`, seeding the optimizer as base seed + clock.

    The interval needs measurements through step clock - 1; older data
    raises StaleDataError so the caller can hold its previous setpoints.
    """
    latest = history.latest_index
    if latest is None or latest < clock - 1:
        raise StaleDataError(latest, clock)
    try:
        snapshot = history.snapshot()
    except ValueError as err:
        # Fresh latest step but the one before it is missing (data gap):
        # the increment features are unavailable, so treat it as stale.
        raise StaleDataError(latest, clock) from err
    de_interval = replace(de, seed=de.seed + clock)
    return solve(models, snapshot, cfg, de_interval)


class Controller:
    """Closed-loop wrapper: owns the log and holds setpoints on stale data."""

    def __init__(self, models: ModelSet, cfg: MpcConfig, de: DeParams = DeParams()):
        validate_config(cfg)
        self.models = models
        self.cfg = cfg
        self.de = de
        self.log = MeasurementLog()
        self.last_applied: tuple[float, float] = (cfg.temp_comfort, cfg.illum_comfort)

    def observe(self, step_index: int, dl_means, dl_sds, temp: float, illum: float):
        self.log.record_step(step_index, dl_means, dl_sds, temp, illum)

    def decide(self, clock: int) -> tuple[tuple[float, float], MpcSolution | None, str]:
        """Setpoints for interval `clock` plus the solution and a status.

        Status is "ok" on a fresh solve and "stale" when the log lags the
        clock, in which case the previous setpoints are held.
        """
        try:
            solution = step_controller(self.models, self.log, self.cfg, self.de, clock)
        except StaleDataError:
            return self.last_applied, None, "stale"
        self.last_applied = solution.applied_setpoints
        return self.last_applied, solution, "ok"


__all__ = [
    "StaleDataError",
    "MpcSolution",
    "solve",
    "MeasurementLog",
    "step_controller",
    "Controller",
]
