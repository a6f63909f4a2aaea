"""Prediction models and the horizon rollout used by the controller.

The drowsiness regression consumes the current environment, its one-step
increments, the previous drowsiness level with its lagged increments, and
a per-worker effort term that the rollout holds at its measured value.
Room temperature follows an asymmetric first-order lag toward the
setpoint; illuminance follows a one-step affine response.

This module is the optimizer's inner loop, so the recursion is written
with plain floats and tuples rather than arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import (
    DL_MAX,
    DL_MIN,
    AmiModel,
    ControlSchedule,
    DlModel,
    IdtModel,
    ModelSet,
    MpcConfig,
    StateSnapshot,
)


class ShapeMismatch(ValueError):
    """Schedule or snapshot dimensions disagree with the configuration."""


def increments(x_t: float, x_prev: float) -> tuple[float, float]:
    """Positive and negative parts of the step change x_t - x_prev."""
    delta = x_t - x_prev
    if delta >= 0.0:
        return delta, 0.0
    return 0.0, -delta


def predict_idt(m: IdtModel, temp_prev: float, setpoint: float) -> float:
    """Next room temperature: first-order pull toward the setpoint.

    Raising and lowering use separate gains; a setpoint equal to the
    current temperature counts as raising (and is a fixed point either way).
    """
    k = m.k_up if setpoint >= temp_prev else m.k_down
    return k * setpoint + (1.0 - k) * temp_prev


def predict_ami(m: AmiModel, illum_prev: float, setpoint: float) -> float:
    """Next desk illuminance, clamped at physical zero."""
    level = m.theta0 + m.theta_prev * illum_prev + m.theta_set * setpoint
    return level if level > 0.0 else 0.0


def predict_dl(
    m: DlModel,
    d_prev: float,
    d_plus_prev: float,
    d_minus_prev: float,
    temp: float,
    temp_plus: float,
    temp_minus: float,
    illum: float,
    illum_plus: float,
    illum_minus: float,
    effort: float,
) -> float:
    """One-step drowsiness prediction, clamped onto the 1-5 scale."""
    c = m.coef
    raw = (
        m.intercept
        + c["d_prev"] * d_prev
        + c["d_plus_prev"] * d_plus_prev
        + c["d_minus_prev"] * d_minus_prev
        + c["temp"] * temp
        + c["temp_plus"] * temp_plus
        + c["temp_minus"] * temp_minus
        + c["illum"] * illum
        + c["illum_plus"] * illum_plus
        + c["illum_minus"] * illum_minus
        + c["effort"] * effort
    )
    if raw < DL_MIN:
        return DL_MIN
    if raw > DL_MAX:
        return DL_MAX
    return raw


@dataclass(frozen=True)
class HorizonPrediction:
    """Predicted trajectories over the horizon (step 1 .. horizon).

    temps / illums have one entry per step; dls is indexed
    [worker][step].  Values at step 0 (the measured state) are not
    repeated here.
    """

    temps: tuple[float, ...]
    illums: tuple[float, ...]
    dls: tuple[tuple[float, ...], ...]

    @property
    def horizon(self) -> int:
        return len(self.temps)


def rollout(
    models: ModelSet,
    snapshot: StateSnapshot,
    schedule: ControlSchedule,
    cfg: MpcConfig,
) -> HorizonPrediction:
    """Propagate the environment and every worker across the horizon.

    Environment increments are taken along the predicted trajectory,
    anchored at the measured state.  Drowsiness increments are lagged:
    step 1 uses the measured ones from the snapshot, later steps use the
    increments of the model's own clamped predictions.  Effort is frozen
    at each worker's measured value.
    """
    if schedule.horizon != cfg.horizon:
        raise ShapeMismatch(
            f"schedule covers {schedule.horizon} steps, config expects {cfg.horizon}"
        )
    if len(snapshot.workers) != cfg.num_workers:
        raise ShapeMismatch(
            f"snapshot has {len(snapshot.workers)} workers, config expects {cfg.num_workers}"
        )

    idt = models.idt
    ami = models.ami
    dl = models.dl

    temps: list[float] = []
    illums: list[float] = []
    temp_incs: list[tuple[float, float]] = []
    illum_incs: list[tuple[float, float]] = []
    t_prev = snapshot.temp_current
    l_prev = snapshot.illum_current
    for t_set, l_set in zip(schedule.temp_setpoints, schedule.illum_setpoints):
        t_next = predict_idt(idt, t_prev, t_set)
        l_next = predict_ami(ami, l_prev, l_set)
        temps.append(t_next)
        illums.append(l_next)
        temp_incs.append(increments(t_next, t_prev))
        illum_incs.append(increments(l_next, l_prev))
        t_prev = t_next
        l_prev = l_next

    dls: list[tuple[float, ...]] = []
    for worker in snapshot.workers:
        d_prev = worker.d_current
        d_plus = worker.d_plus
        d_minus = worker.d_minus
        effort = worker.effort
        path: list[float] = []
        for step in range(cfg.horizon):
            t_plus, t_minus = temp_incs[step]
            l_plus, l_minus = illum_incs[step]
            d_next = predict_dl(
                dl,
                d_prev,
                d_plus,
                d_minus,
                temps[step],
                t_plus,
                t_minus,
                illums[step],
                l_plus,
                l_minus,
                effort,
            )
            path.append(d_next)
            d_plus, d_minus = increments(d_next, d_prev)
            d_prev = d_next
        dls.append(tuple(path))

    return HorizonPrediction(tuple(temps), tuple(illums), tuple(dls))


def objective(pred: HorizonPrediction) -> float:
    """Mean predicted drowsiness across workers and steps."""
    total = 0.0
    count = 0
    for path in pred.dls:
        for value in path:
            total += value
            count += 1
    return total / count


def comfort_penalty(temp: float, illum: float, cfg: MpcConfig) -> float:
    """Weighted absolute deviation from the comfort point."""
    return cfg.p_temp * abs(temp - cfg.temp_comfort) + cfg.p_illum * abs(
        illum - cfg.illum_comfort
    )


def constraint_violation(pred: HorizonPrediction, cfg: MpcConfig) -> float:
    """Total excess of the per-step comfort penalty over the cap.

    Zero exactly when every predicted step satisfies the comfort
    constraint.
    """
    total = 0.0
    for temp, illum in zip(pred.temps, pred.illums):
        excess = comfort_penalty(temp, illum, cfg) - cfg.penalty_cap
        if excess > 0.0:
            total += excess
    return total


__all__ = [
    "ShapeMismatch",
    "increments",
    "predict_idt",
    "predict_ami",
    "predict_dl",
    "HorizonPrediction",
    "rollout",
    "objective",
    "comfort_penalty",
    "constraint_violation",
]
