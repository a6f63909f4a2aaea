"""Closed-loop simulator for evaluating control arms on a synthetic room.

The plant lives in the same parametric families as the controller's
models (optionally with different coefficients), plus Gaussian
disturbances, a per-step drowsiness drift profile, and an optional pull
toward outdoor temperature.  Noise streams are derived from (seed, step)
only, so paired runs of different control arms see identical
disturbances: differences in outcomes are attributable to control alone.

Within each step the plant draws a handful of instant drowsiness
readings; their standard deviation is the realized effort, which feeds
the true drowsiness model for that same step.  The step's reported DL is
the model's (disturbed, clamped) step average.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domain import (
    AmiModel,
    ControlMode,
    DlModel,
    IdtModel,
    ModelSet,
    MpcConfig,
    clamp_dl,
    validate_config,
)
from .identify import TelemetryRow, TelemetryTable
from .models import comfort_penalty, increments, predict_ami, predict_dl, predict_idt
from .mpc import Controller
from .optimizer import DeParams

ARMS = (ControlMode.NOC, ControlMode.MPC1, ControlMode.MPC2)


@dataclass(frozen=True)
class PlantConfig:
    """True room + worker dynamics and their disturbance magnitudes."""

    true_idt: IdtModel
    true_ami: AmiModel
    true_dl: DlModel
    idt_noise_sd: float = 0.05
    ami_noise_sd: float = 5.0
    dl_noise_sd: float = 0.05
    effort_sd: float = 0.05
    substeps: int = 4
    drift: tuple[float, ...] = ()
    ambient_pull: float = 0.0
    ambient_temp: float = 30.0
    init_temp: float = 26.0
    init_illum: float = 600.0
    init_dl: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "drift", tuple(float(x) for x in self.drift))
        for name in ("idt_noise_sd", "ami_noise_sd", "dl_noise_sd", "effort_sd", "ambient_pull"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if not 1.0 <= self.init_dl <= 5.0:
            raise ValueError(f"init_dl must lie on the 1-5 scale, got {self.init_dl}")

    def drift_at(self, step: int) -> float:
        """Drift profile value at a step; shorter profiles repeat cyclically."""
        if not self.drift:
            return 0.0
        return self.drift[step % len(self.drift)]

    def truth(self) -> ModelSet:
        return ModelSet(dl=self.true_dl, idt=self.true_idt, ami=self.true_ami)


@dataclass(frozen=True)
class PlantState:
    """Realized room state plus each worker's DL and its latest increments."""

    temp: float
    illum: float
    dls: tuple[float, ...]
    dl_plus: tuple[float, ...]
    dl_minus: tuple[float, ...]


@dataclass(frozen=True)
class StepOutcome:
    temp: float
    illum: float
    dls: tuple[float, ...]
    efforts: tuple[float, ...]


def initial_state(plant: PlantConfig, num_workers: int) -> PlantState:
    zeros = (0.0,) * num_workers
    return PlantState(
        temp=plant.init_temp,
        illum=plant.init_illum,
        dls=(plant.init_dl,) * num_workers,
        dl_plus=zeros,
        dl_minus=zeros,
    )


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Disturbance stream for one step, independent of the control arm."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, step))))


def plant_step(
    plant: PlantConfig,
    state: PlantState,
    setpoints: tuple[float, float],
    rng: np.random.Generator,
    drift_value: float = 0.0,
    freeze_workers: bool = False,
) -> tuple[PlantState, StepOutcome]:
    """Advance the room one interval under the given setpoints.

    Draw order is fixed (temperature, illuminance, then per worker:
    instant jitter, DL disturbance) so a given rng yields the same
    disturbances whatever controller produced the setpoints.  With
    freeze_workers the room still evolves but worker state is carried
    through unchanged (lunch break).
    """
    t_set, l_set = setpoints

    temp = predict_idt(plant.true_idt, state.temp, t_set)
    if plant.ambient_pull > 0.0:
        gap = plant.ambient_temp - temp
        temp += max(-plant.ambient_pull, min(plant.ambient_pull, gap))
    temp += rng.normal(0.0, plant.idt_noise_sd)

    illum = predict_ami(plant.true_ami, state.illum, l_set)
    illum += rng.normal(0.0, plant.ami_noise_sd)
    if illum < 0.0:
        illum = 0.0

    if freeze_workers:
        outcome = StepOutcome(
            temp=temp,
            illum=illum,
            dls=state.dls,
            efforts=(0.0,) * len(state.dls),
        )
        next_state = PlantState(
            temp=temp,
            illum=illum,
            dls=state.dls,
            dl_plus=(0.0,) * len(state.dls),
            dl_minus=(0.0,) * len(state.dls),
        )
        return next_state, outcome

    t_plus, t_minus = increments(temp, state.temp)
    l_plus, l_minus = increments(illum, state.illum)

    new_dls: list[float] = []
    efforts: list[float] = []
    plus: list[float] = []
    minus: list[float] = []
    for i, d_prev in enumerate(state.dls):
        # Instant readings scatter around the step average; their SD is
        # the effort and feeds the same step's true model, so telemetry
        # rows satisfy the regression exactly when disturbances are off.
        jitter = rng.normal(0.0, plant.effort_sd, plant.substeps)
        effort = float(np.std(jitter))
        base = predict_dl(
            plant.true_dl,
            d_prev,
            state.dl_plus[i],
            state.dl_minus[i],
            temp,
            t_plus,
            t_minus,
            illum,
            l_plus,
            l_minus,
            effort,
        )
        dl = clamp_dl(base + drift_value + rng.normal(0.0, plant.dl_noise_sd))
        d_plus, d_minus = increments(dl, d_prev)
        new_dls.append(dl)
        efforts.append(effort)
        plus.append(d_plus)
        minus.append(d_minus)

    next_state = PlantState(
        temp=temp,
        illum=illum,
        dls=tuple(new_dls),
        dl_plus=tuple(plus),
        dl_minus=tuple(minus),
    )
    return next_state, StepOutcome(temp, illum, tuple(new_dls), tuple(efforts))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one closed-loop run needs."""

    mode: ControlMode
    num_workers: int
    steps: int
    seed: int
    plant: PlantConfig
    mpc_cfg: MpcConfig
    de: DeParams = DeParams()
    model_mismatch: bool = False
    controller_models: ModelSet | None = None
    lunch_start: int | None = None
    lunch_steps: int = 4


def validate_scenario(sc: ScenarioConfig) -> None:
    validate_config(sc.mpc_cfg)
    if sc.mode is not sc.mpc_cfg.mode:
        raise ValueError(
            f"scenario mode {sc.mode.value} disagrees with mpc config mode {sc.mpc_cfg.mode.value}"
        )
    if sc.num_workers != sc.mpc_cfg.num_workers:
        raise ValueError(
            f"scenario num_workers {sc.num_workers} disagrees with mpc config {sc.mpc_cfg.num_workers}"
        )
    if sc.steps < 1:
        raise ValueError(f"steps must be >= 1, got {sc.steps}")
    if sc.seed < 0:
        raise ValueError(f"seed must be >= 0, got {sc.seed}")
    if sc.model_mismatch and sc.controller_models is None:
        raise ValueError("model_mismatch requires controller_models")
    if sc.lunch_start is not None and sc.lunch_start < 0:
        raise ValueError(f"lunch_start must be >= 0, got {sc.lunch_start}")
    if sc.lunch_steps < 0:
        raise ValueError(f"lunch_steps must be >= 0, got {sc.lunch_steps}")


@dataclass(frozen=True)
class TraceStep:
    step: int
    temp_set: float
    illum_set: float
    temp: float
    illum: float
    penalty: float
    feasible: bool
    status: str
    dls: tuple[float, ...]
    efforts: tuple[float, ...]


@dataclass(frozen=True)
class SimTrace:
    mode: ControlMode
    seed: int
    num_workers: int
    penalty_cap: float
    temp_comfort: float
    illum_comfort: float
    steps: tuple[TraceStep, ...]


@dataclass(frozen=True)
class Metrics:
    mean_dl: float
    comfort_violation_rate: float
    mean_abs_temp_dev: float
    mean_abs_illum_dev: float
    setpoint_change_count: int


def compute_metrics(trace: SimTrace) -> Metrics:
    dls = [d for step in trace.steps for d in step.dls]
    violations = sum(1 for step in trace.steps if step.penalty > trace.penalty_cap)
    changes = sum(
        1
        for prev, cur in zip(trace.steps, trace.steps[1:])
        if (cur.temp_set, cur.illum_set) != (prev.temp_set, prev.illum_set)
    )
    return Metrics(
        mean_dl=float(np.mean(dls)),
        comfort_violation_rate=violations / len(trace.steps),
        mean_abs_temp_dev=float(
            np.mean([abs(s.temp - trace.temp_comfort) for s in trace.steps])
        ),
        mean_abs_illum_dev=float(
            np.mean([abs(s.illum - trace.illum_comfort) for s in trace.steps])
        ),
        setpoint_change_count=changes,
    )


def _in_lunch(sc: ScenarioConfig, step: int) -> bool:
    return (
        sc.lunch_start is not None
        and sc.lunch_start <= step < sc.lunch_start + sc.lunch_steps
    )


def run_scenario(sc: ScenarioConfig) -> tuple[SimTrace, Metrics]:
    """Simulate one working period under the configured control arm.

    The controller history is seeded with two synthetic pre-run steps at
    the initial conditions, so control decisions start at step 0.
    Controller failures are recorded in the per-step status (holding the
    previous setpoints) rather than aborting the run.
    """
    validate_scenario(sc)
    plant = sc.plant
    cfg = sc.mpc_cfg
    workers = sc.num_workers

    controller_models = sc.controller_models if sc.model_mismatch else plant.truth()
    ctl = Controller(controller_models, cfg, sc.de)
    for pre_step in (-2, -1):
        ctl.observe(
            pre_step,
            (plant.init_dl,) * workers,
            (0.0,) * workers,
            plant.init_temp,
            plant.init_illum,
        )

    state = initial_state(plant, workers)
    records: list[TraceStep] = []
    for t in range(sc.steps):
        lunch = _in_lunch(sc, t)
        if lunch:
            setpoints, solution, status = ctl.last_applied, None, "lunch"
        else:
            try:
                setpoints, solution, status = ctl.decide(t)
            except Exception:
                setpoints, solution, status = ctl.last_applied, None, "error"

        rng = step_rng(sc.seed, t)
        state, outcome = plant_step(
            plant, state, setpoints, rng, plant.drift_at(t), freeze_workers=lunch
        )
        ctl.observe(t, outcome.dls, outcome.efforts, outcome.temp, outcome.illum)
        records.append(
            TraceStep(
                step=t,
                temp_set=setpoints[0],
                illum_set=setpoints[1],
                temp=outcome.temp,
                illum=outcome.illum,
                penalty=comfort_penalty(outcome.temp, outcome.illum, cfg),
                feasible=solution.feasible if solution is not None else True,
                status=status,
                dls=outcome.dls,
                efforts=outcome.efforts,
            )
        )

    trace = SimTrace(
        mode=sc.mode,
        seed=sc.seed,
        num_workers=workers,
        penalty_cap=cfg.penalty_cap,
        temp_comfort=cfg.temp_comfort,
        illum_comfort=cfg.illum_comfort,
        steps=tuple(records),
    )
    return trace, compute_metrics(trace)


def run_open_loop(
    plant: PlantConfig,
    num_workers: int,
    setpoints: list[tuple[float, float]],
    seed: int,
) -> TelemetryTable:
    """Drive the plant with a fixed setpoint sequence and log telemetry.

    This is the identification data collector: sweep the setpoints over
    their ranges and fit models from the returned table.
    """
    if not setpoints:
        raise ValueError("setpoint sequence must not be empty")
    state = initial_state(plant, num_workers)
    rows: list[TelemetryRow] = []
    for t, pair in enumerate(setpoints):
        rng = step_rng(seed, t)
        state, outcome = plant_step(plant, state, pair, rng, plant.drift_at(t))
        for i in range(num_workers):
            rows.append(
                TelemetryRow(
                    step_index=t,
                    worker_id=f"w{i}",
                    dl=outcome.dls[i],
                    effort=outcome.efforts[i],
                    temp=outcome.temp,
                    illum=outcome.illum,
                    temp_set=pair[0],
                    illum_set=pair[1],
                )
            )
    return TelemetryTable(tuple(rows))


def trace_to_telemetry(trace: SimTrace) -> TelemetryTable:
    """Recast a closed-loop trace as identification telemetry."""
    rows = [
        TelemetryRow(
            step_index=step.step,
            worker_id=f"w{i}",
            dl=step.dls[i],
            effort=step.efforts[i],
            temp=step.temp,
            illum=step.illum,
            temp_set=step.temp_set,
            illum_set=step.illum_set,
        )
        for step in trace.steps
        for i in range(trace.num_workers)
    ]
    return TelemetryTable(tuple(rows))


@dataclass(frozen=True)
class ArmComparison:
    """Per-arm metrics over a common seed list (paired by construction)."""

    seeds: tuple[int, ...]
    metrics: dict[str, tuple[Metrics, ...]]

    def mean_of(self, arm: str, attribute: str) -> float:
        return float(np.mean([getattr(m, attribute) for m in self.metrics[arm]]))

    def paired_delta(self, arm_a: str, arm_b: str, attribute: str = "mean_dl"):
        """Per-seed differences attribute(arm_a) - attribute(arm_b)."""
        return tuple(
            getattr(a, attribute) - getattr(b, attribute)
            for a, b in zip(self.metrics[arm_a], self.metrics[arm_b])
        )


def scenario_for_arm(base: ScenarioConfig, mode: ControlMode, seed: int) -> ScenarioConfig:
    return replace(
        base, mode=mode, seed=seed, mpc_cfg=replace(base.mpc_cfg, mode=mode)
    )


def compare_arms(base: ScenarioConfig, seeds) -> ArmComparison:
    """Run every control arm over the same seeds with shared disturbances."""
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 2:
        raise ValueError(f"need at least 2 seeds for a comparison, got {len(seeds)}")
    results: dict[str, tuple[Metrics, ...]] = {}
    for mode in ARMS:
        per_seed = []
        for seed in seeds:
            _, metrics = run_scenario(scenario_for_arm(base, mode, seed))
            per_seed.append(metrics)
        results[mode.value] = tuple(per_seed)
    return ArmComparison(seeds=seeds, metrics=results)


def working_day_drift(steps: int = 28, bump: float = 0.08) -> tuple[float, ...]:
    """A mild drowsiness drift peaking after the midpoint of the day."""
    profile = []
    for t in range(steps):
        if steps // 2 <= t < steps // 2 + 6:
            profile.append(bump)
        else:
            profile.append(0.0)
    return tuple(profile)


__all__ = [
    "ARMS",
    "PlantConfig",
    "PlantState",
    "StepOutcome",
    "initial_state",
    "step_rng",
    "plant_step",
    "ScenarioConfig",
    "validate_scenario",
    "TraceStep",
    "SimTrace",
    "Metrics",
    "compute_metrics",
    "run_scenario",
    "run_open_loop",
    "trace_to_telemetry",
    "ArmComparison",
    "scenario_for_arm",
    "compare_arms",
    "working_day_drift",
]
