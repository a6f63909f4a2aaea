"""Core value types shared by the controller, models, and simulator.

Everything here is an immutable dataclass plus the validation that keeps
the rest of the package honest.  Drowsiness level (DL) lives on a 1-5
scale (1 = fully awake, 5 = extremely drowsy).  Temperatures are degrees
Celsius, illuminances are lux, step lengths are hours.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DL_MIN = 1.0
DL_MAX = 5.0

# Regressor names for the drowsiness model, in canonical order.
DL_FEATURES = (
    "d_prev",
    "d_plus_prev",
    "d_minus_prev",
    "temp",
    "temp_plus",
    "temp_minus",
    "illum",
    "illum_plus",
    "illum_minus",
    "effort",
)


def clamp_dl(value: float) -> float:
    """Clamp a drowsiness value onto the reportable 1-5 scale."""
    return min(max(value, DL_MIN), DL_MAX)


class ConfigError(ValueError):
    """Base class for controller configuration rejections."""


class BoundsInverted(ConfigError):
    pass


class ComfortOutsideBounds(ConfigError):
    pass


class NonPositiveCoefficient(ConfigError):
    pass


class ControlMode(str, enum.Enum):
    NOC = "NOC"
    MPC1 = "MPC1"
    MPC2 = "MPC2"

    @classmethod
    def parse(cls, text: str) -> "ControlMode":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ConfigError(f"unknown control mode {text!r}") from None


@dataclass(frozen=True)
class WorkerState:
    """Latest measured drowsiness state of one worker.

    d_plus / d_minus are the positive and negative parts of the DL change
    over the previous step, so at most one of them is nonzero.  effort is
    the within-step standard deviation of instant DL readings and proxies
    how actively the worker is fighting sleepiness.
    """

    d_current: float
    d_plus: float = 0.0
    d_minus: float = 0.0
    effort: float = 0.0

    def __post_init__(self):
        if not DL_MIN <= self.d_current <= DL_MAX:
            raise ValueError(
                f"d_current must lie in [{DL_MIN}, {DL_MAX}], got {self.d_current}"
            )
        if self.d_plus < 0 or self.d_minus < 0 or self.effort < 0:
            raise ValueError("d_plus, d_minus and effort must be nonnegative")
        if self.d_plus != 0.0 and self.d_minus != 0.0:
            raise ValueError("at most one of d_plus/d_minus may be nonzero")

    @classmethod
    def from_history(cls, d_current: float, d_previous: float, effort: float = 0.0):
        """Build a state from two consecutive step-averaged DL readings."""
        delta = d_current - d_previous
        return cls(
            d_current=d_current,
            d_plus=max(delta, 0.0),
            d_minus=max(-delta, 0.0),
            effort=effort,
        )


@dataclass(frozen=True)
class StateSnapshot:
    """Measured room + worker state at the start of a control interval."""

    workers: tuple[WorkerState, ...]
    temp_current: float
    illum_current: float

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        if not self.workers:
            raise ValueError("snapshot needs at least one worker")
        if not 0.0 <= self.temp_current <= 50.0:
            raise ValueError(f"temp_current out of range: {self.temp_current}")
        if not 0.0 <= self.illum_current <= 10000.0:
            raise ValueError(f"illum_current out of range: {self.illum_current}")


@dataclass(frozen=True)
class ControlSchedule:
    """Setpoint sequence over the horizon: temperatures then illuminances."""

    temp_setpoints: tuple[float, ...]
    illum_setpoints: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "temp_setpoints", tuple(float(x) for x in self.temp_setpoints))
        object.__setattr__(self, "illum_setpoints", tuple(float(x) for x in self.illum_setpoints))
        if len(self.temp_setpoints) != len(self.illum_setpoints):
            raise ValueError("setpoint sequences must have equal length")
        if not self.temp_setpoints:
            raise ValueError("schedule must cover at least one step")

    @property
    def horizon(self) -> int:
        return len(self.temp_setpoints)

    def flatten(self) -> np.ndarray:
        """The decision vector: temperature setpoints first, then illuminance."""
        return np.asarray(self.temp_setpoints + self.illum_setpoints, dtype=float)

    @classmethod
    def unflatten(cls, vec) -> "ControlSchedule":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size % 2 != 0 or vec.size == 0:
            raise ValueError(f"decision vector must be 1-D with even length, got shape {vec.shape}")
        half = vec.size // 2
        return cls(tuple(vec[:half]), tuple(vec[half:]))


@dataclass(frozen=True)
class DlModel:
    """Linear drowsiness regression: intercept + coef . features."""

    intercept: float
    coef: dict[str, float]

    def __post_init__(self):
        keys = set(self.coef)
        expected = set(DL_FEATURES)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise ValueError(f"bad DL coefficient names: missing={missing} extra={extra}")
        values = [self.intercept] + [self.coef[k] for k in DL_FEATURES]
        if not all(np.isfinite(values)):
            raise ValueError("DL model coefficients must be finite")


@dataclass(frozen=True)
class IdtModel:
    """Asymmetric first-order lag of room temperature toward its setpoint."""

    k_up: float
    k_down: float

    def __post_init__(self):
        for name in ("k_up", "k_down"):
            k = getattr(self, name)
            if not (np.isfinite(k) and 0.0 < k <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {k}")


@dataclass(frozen=True)
class AmiModel:
    """Affine illuminance response to the previous level and the setpoint."""

    theta0: float
    theta_prev: float
    theta_set: float

    def __post_init__(self):
        if not all(np.isfinite([self.theta0, self.theta_prev, self.theta_set])):
            raise ValueError("illuminance coefficients must be finite")
        if abs(self.theta_prev) >= 1.0:
            raise ValueError(f"|theta_prev| must be < 1 for stability, got {self.theta_prev}")


@dataclass(frozen=True)
class ModelSet:
    dl: DlModel
    idt: IdtModel
    ami: AmiModel


@dataclass(frozen=True)
class MpcConfig:
    """Controller tuning: horizon, bounds, comfort targets, penalty weights.

    Constructing an instance performs no cross-field checks so that bad
    configurations can be represented and reported; run validate_config
    before use.
    """

    horizon: int = 4
    step_hours: float = 0.25
    num_workers: int = 1
    temp_lo: float = 25.5
    temp_hi: float = 26.5
    illum_lo: float = 450.0
    illum_hi: float = 750.0
    temp_comfort: float = 26.0
    illum_comfort: float = 600.0
    p_temp: float = 0.5
    p_illum: float = 1.0 / 150.0
    penalty_cap: float = 2.0
    mode: ControlMode = ControlMode.MPC2


def validate_config(cfg: MpcConfig) -> None:
    """Raise a ConfigError subclass naming the offending field(s)."""
    if cfg.horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {cfg.horizon}")
    if cfg.num_workers < 1:
        raise ConfigError(f"num_workers must be >= 1, got {cfg.num_workers}")
    if cfg.step_hours <= 0:
        raise ConfigError(f"step_hours must be positive, got {cfg.step_hours}")
    if cfg.temp_lo > cfg.temp_hi:
        raise BoundsInverted(
            f"temp_lo {cfg.temp_lo} exceeds temp_hi {cfg.temp_hi}"
        )
    if cfg.illum_lo > cfg.illum_hi:
        raise BoundsInverted(
            f"illum_lo {cfg.illum_lo} exceeds illum_hi {cfg.illum_hi}"
        )
    if not cfg.temp_lo <= cfg.temp_comfort <= cfg.temp_hi:
        raise ComfortOutsideBounds(
            f"temp_comfort {cfg.temp_comfort} outside [{cfg.temp_lo}, {cfg.temp_hi}]"
        )
    if not cfg.illum_lo <= cfg.illum_comfort <= cfg.illum_hi:
        raise ComfortOutsideBounds(
            f"illum_comfort {cfg.illum_comfort} outside [{cfg.illum_lo}, {cfg.illum_hi}]"
        )
    if cfg.p_temp <= 0:
        raise NonPositiveCoefficient(f"p_temp must be positive, got {cfg.p_temp}")
    if cfg.p_illum <= 0:
        raise NonPositiveCoefficient(f"p_illum must be positive, got {cfg.p_illum}")
    if cfg.penalty_cap <= 0:
        raise NonPositiveCoefficient(f"penalty_cap must be positive, got {cfg.penalty_cap}")
    if not isinstance(cfg.mode, ControlMode):
        raise ConfigError(f"mode must be a ControlMode, got {cfg.mode!r}")


def case1_config(mode: ControlMode = ControlMode.MPC2) -> MpcConfig:
    """Five-worker room, narrow 25.5-26.5 degC temperature band."""
    return MpcConfig(num_workers=5, temp_lo=25.5, temp_hi=26.5, mode=mode)


def case2_config(mode: ControlMode = ControlMode.MPC2) -> MpcConfig:
    """Six-worker room, wider 25.0-27.0 degC temperature band."""
    return MpcConfig(num_workers=6, temp_lo=25.0, temp_hi=27.0, mode=mode)


__all__ = [
    "DL_MIN",
    "DL_MAX",
    "DL_FEATURES",
    "clamp_dl",
    "ConfigError",
    "BoundsInverted",
    "ComfortOutsideBounds",
    "NonPositiveCoefficient",
    "ControlMode",
    "WorkerState",
    "StateSnapshot",
    "ControlSchedule",
    "DlModel",
    "IdtModel",
    "AmiModel",
    "ModelSet",
    "MpcConfig",
    "validate_config",
    "case1_config",
    "case2_config",
]
