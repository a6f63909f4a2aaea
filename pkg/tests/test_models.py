import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from alertmpc.domain import (
    AmiModel,
    ControlSchedule,
    DlModel,
    DL_FEATURES,
    IdtModel,
    ModelSet,
    MpcConfig,
    StateSnapshot,
    WorkerState,
    clamp_dl,
)
from alertmpc.models import (
    ShapeMismatch,
    comfort_penalty,
    constraint_violation,
    increments,
    objective,
    predict_ami,
    predict_dl,
    predict_idt,
    rollout,
)


def zero_coef(**overrides):
    coef = {name: 0.0 for name in DL_FEATURES}
    coef.update(overrides)
    return coef


IDENTITY_AMI = AmiModel(theta0=0.0, theta_prev=0.0, theta_set=1.0)


def reference_rollout(models, snapshot, schedule):
    """Plain transcription of the one-step recursions, kept independent of
    the package implementation on purpose."""
    temps, illums = [], []
    t_prev, l_prev = snapshot.temp_current, snapshot.illum_current
    for t_set, l_set in zip(schedule.temp_setpoints, schedule.illum_setpoints):
        k = models.idt.k_up if t_set >= t_prev else models.idt.k_down
        t = k * t_set + (1.0 - k) * t_prev
        l = models.ami.theta0 + models.ami.theta_prev * l_prev + models.ami.theta_set * l_set
        l = max(l, 0.0)
        temps.append(t)
        illums.append(l)
        t_prev, l_prev = t, l

    env_prev = [(snapshot.temp_current, snapshot.illum_current)] + list(zip(temps, illums))[:-1]
    dls = []
    for w in snapshot.workers:
        d_prev, dp, dm = w.d_current, w.d_plus, w.d_minus
        row = []
        for n in range(schedule.horizon):
            tp, tm = max(temps[n] - env_prev[n][0], 0.0), max(env_prev[n][0] - temps[n], 0.0)
            lp, lm = max(illums[n] - env_prev[n][1], 0.0), max(env_prev[n][1] - illums[n], 0.0)
            c = models.dl.coef
            raw = (
                models.dl.intercept
                + c["d_prev"] * d_prev
                + c["d_plus_prev"] * dp
                + c["d_minus_prev"] * dm
                + c["temp"] * temps[n]
                + c["temp_plus"] * tp
                + c["temp_minus"] * tm
                + c["illum"] * illums[n]
                + c["illum_plus"] * lp
                + c["illum_minus"] * lm
                + c["effort"] * w.effort
            )
            d = min(max(raw, 1.0), 5.0)
            row.append(d)
            dp, dm = max(d - d_prev, 0.0), max(d_prev - d, 0.0)
            d_prev = d
        dls.append(tuple(row))
    return tuple(temps), tuple(illums), tuple(dls)


class TestIncrements:
    def test_rise(self):
        assert increments(2.5, 2.0) == (0.5, 0.0)

    def test_fall(self):
        assert increments(2.0, 2.5) == (0.0, 0.5)

    def test_flat(self):
        assert increments(3.0, 3.0) == (0.0, 0.0)

    @given(
        st.floats(-1e6, 1e6, allow_nan=False),
        st.floats(-1e6, 1e6, allow_nan=False),
    )
    def test_one_side_zero_and_difference_recovered(self, a, b):
        plus, minus = increments(a, b)
        assert plus >= 0.0 and minus >= 0.0
        assert plus * minus == 0.0
        assert plus - minus == a - b


class TestPredictIdt:
    def test_unit_gain_reaches_setpoint(self):
        m = IdtModel(k_up=1.0, k_down=1.0)
        assert predict_idt(m, temp_prev=24.0, setpoint=26.0) == 26.0

    def test_half_gain_cooling(self):
        m = IdtModel(k_up=0.3, k_down=0.5)
        assert predict_idt(m, temp_prev=28.0, setpoint=26.0) == 27.0

    def test_setpoint_equal_is_fixed_point(self):
        m = IdtModel(k_up=0.3, k_down=0.7)
        assert predict_idt(m, 26.0, 26.0) == 26.0

    def test_result_between_prev_and_setpoint(self):
        rng = np.random.default_rng(3)
        m = IdtModel(k_up=0.4, k_down=0.8)
        for _ in range(200):
            prev = rng.uniform(20, 32)
            sp = rng.uniform(20, 32)
            out = predict_idt(m, prev, sp)
            assert min(prev, sp) - 1e-12 <= out <= max(prev, sp) + 1e-12


class TestPredictAmi:
    def test_identity(self):
        assert predict_ami(IDENTITY_AMI, illum_prev=312.0, setpoint=640.0) == 640.0

    def test_affine_example(self):
        m = AmiModel(theta0=100.0, theta_prev=0.5, theta_set=0.25)
        assert predict_ami(m, 400.0, 600.0) == 450.0

    def test_clamped_at_zero(self):
        m = AmiModel(theta0=-500.0, theta_prev=0.1, theta_set=0.2)
        assert predict_ami(m, 100.0, 100.0) == 0.0


class TestPredictDl:
    def test_clamps_high(self):
        m = DlModel(intercept=7.0, coef=zero_coef())
        assert predict_dl(m, d_prev=2.0, d_plus_prev=0.0, d_minus_prev=0.0,
                          temp=26.0, temp_plus=0.0, temp_minus=0.0,
                          illum=600.0, illum_plus=0.0, illum_minus=0.0,
                          effort=0.0) == 5.0

    def test_clamps_low(self):
        m = DlModel(intercept=0.0, coef=zero_coef())
        assert predict_dl(m, 2.0, 0.0, 0.0, 26.0, 0.0, 0.0, 600.0, 0.0, 0.0, 0.0) == 1.0

    def test_linear_region(self):
        m = DlModel(intercept=0.5, coef=zero_coef(d_prev=0.8, temp_minus=-0.2))
        out = predict_dl(m, 2.0, 0.0, 0.0, 26.0, 0.0, 0.5, 600.0, 0.0, 0.0, 0.0)
        assert out == pytest.approx(0.5 + 1.6 - 0.1, abs=1e-15)


def snapshot_one(d=2.0, d_plus=0.0, d_minus=0.0, effort=0.0, temp=28.0, illum=520.0):
    return StateSnapshot((WorkerState(d, d_plus, d_minus, effort),), temp, illum)


class TestRollout:
    def test_env_chain_frozen_values(self):
        # k_down=0.5 from 28: 28 -> 27.0 -> 26.5 with constant setpoint 26.
        models = ModelSet(
            dl=DlModel(intercept=2.0, coef=zero_coef()),
            idt=IdtModel(k_up=0.3, k_down=0.5),
            ami=IDENTITY_AMI,
        )
        pred = rollout(models, snapshot_one(), ControlSchedule((26.0, 26.0), (600.0, 600.0)),
                       MpcConfig(horizon=2))
        assert pred.temps == (27.0, 26.5)
        assert pred.illums == (600.0, 600.0)

    def test_dl_recursion_frozen_values(self):
        models = ModelSet(
            dl=DlModel(intercept=0.5, coef=zero_coef(d_prev=0.8, temp_minus=-0.2)),
            idt=IdtModel(k_up=0.3, k_down=0.5),
            ami=IDENTITY_AMI,
        )
        pred = rollout(models, snapshot_one(d=2.0, temp=28.0, illum=600.0),
                       ControlSchedule((26.0, 26.0), (600.0, 600.0)), MpcConfig(horizon=2))
        assert pred.dls[0][0] == pytest.approx(1.9000000000000001, abs=1e-12)
        assert pred.dls[0][1] == pytest.approx(1.9200000000000004, abs=1e-12)

    def test_against_reference_recursion(self):
        rng = np.random.default_rng(17)
        for trial in range(25):
            coef = zero_coef(
                d_prev=rng.uniform(0.4, 0.95),
                d_plus_prev=rng.uniform(-0.2, 0.2),
                d_minus_prev=rng.uniform(-0.2, 0.2),
                temp=rng.uniform(-0.05, 0.05),
                temp_plus=rng.uniform(-0.3, 0.3),
                temp_minus=rng.uniform(-0.3, 0.3),
                illum=rng.uniform(-8e-4, 8e-4),
                illum_plus=rng.uniform(-2e-3, 2e-3),
                illum_minus=rng.uniform(-2e-3, 2e-3),
                effort=rng.uniform(-0.2, 0.2),
            )
            models = ModelSet(
                dl=DlModel(intercept=rng.uniform(0.0, 1.0), coef=coef),
                idt=IdtModel(k_up=rng.uniform(0.1, 1.0), k_down=rng.uniform(0.1, 1.0)),
                ami=AmiModel(theta0=rng.uniform(0, 120),
                             theta_prev=rng.uniform(-0.5, 0.9),
                             theta_set=rng.uniform(0.1, 1.0)),
            )
            horizon = int(rng.integers(1, 6))
            workers = tuple(
                WorkerState.from_history(rng.uniform(1.2, 4.8), rng.uniform(1.2, 4.8),
                                         effort=rng.uniform(0, 0.4))
                for _ in range(int(rng.integers(1, 4)))
            )
            snap = StateSnapshot(workers, rng.uniform(22, 30), rng.uniform(300, 900))
            sched = ControlSchedule(
                tuple(rng.uniform(24, 28, horizon)), tuple(rng.uniform(400, 800, horizon)))
            pred = rollout(models, snap, sched,
                           MpcConfig(horizon=horizon, num_workers=len(workers)))
            temps, illums, dls = reference_rollout(models, snap, sched)
            assert np.allclose(pred.temps, temps, atol=1e-12, rtol=0)
            assert np.allclose(pred.illums, illums, atol=1e-12, rtol=0)
            for got, want in zip(pred.dls, dls):
                assert np.allclose(got, want, atol=1e-12, rtol=0), f"trial {trial}"

    def test_schedule_independent_when_env_coefs_zero(self):
        models = ModelSet(
            dl=DlModel(intercept=0.6, coef=zero_coef(d_prev=0.7)),
            idt=IdtModel(k_up=0.5, k_down=0.5),
            ami=IDENTITY_AMI,
        )
        snap = snapshot_one(d=3.0)
        a = rollout(models, snap, ControlSchedule((25.5, 25.5), (450.0, 450.0)), MpcConfig(horizon=2))
        b = rollout(models, snap, ControlSchedule((26.5, 26.5), (750.0, 750.0)), MpcConfig(horizon=2))
        assert a.dls == b.dls

    def test_worker_permutation(self):
        models = ModelSet(
            dl=DlModel(intercept=0.4, coef=zero_coef(d_prev=0.8, effort=-0.1, temp_plus=0.2)),
            idt=IdtModel(k_up=0.4, k_down=0.6),
            ami=IDENTITY_AMI,
        )
        workers = (
            WorkerState(2.0, 0.1, 0.0, 0.05),
            WorkerState(3.5, 0.0, 0.2, 0.2),
            WorkerState(1.5, 0.0, 0.0, 0.0),
        )
        sched = ControlSchedule((26.5, 25.5), (700.0, 500.0))
        cfg = MpcConfig(horizon=2, num_workers=3)
        fwd = rollout(models, StateSnapshot(workers, 26.0, 600.0), sched, cfg)
        rev = rollout(models, StateSnapshot(workers[::-1], 26.0, 600.0), sched, cfg)
        assert fwd.dls == rev.dls[::-1]
        assert fwd.temps == rev.temps

    def test_shape_mismatch(self):
        models = ModelSet(DlModel(2.0, zero_coef()), IdtModel(0.5, 0.5), IDENTITY_AMI)
        with pytest.raises(ShapeMismatch):
            rollout(models, snapshot_one(), ControlSchedule((26.0,), (600.0,)),
                    MpcConfig(horizon=3))


class TestObjectiveAndConstraint:
    def test_objective_is_grand_mean(self):
        class P:
            dls = ((2.0, 3.0), (4.0, 1.0))
        assert objective(P()) == 2.5

    def test_comfort_penalty_values(self):
        cfg = MpcConfig()
        assert comfort_penalty(26.0, 600.0, cfg) == 0.0
        assert comfort_penalty(26.5, 600.0, cfg) == pytest.approx(0.25, abs=1e-15)
        assert comfort_penalty(26.0, 750.0, cfg) == pytest.approx(1.0, abs=1e-15)
        assert comfort_penalty(25.5, 450.0, cfg) == pytest.approx(1.25, abs=1e-15)

    def test_violation_zero_within_cap(self):
        cfg = MpcConfig()

        class P:
            temps = (26.5, 25.5)
            illums = (750.0, 450.0)
        assert constraint_violation(P(), cfg) == 0.0

    def test_violation_sums_positive_excess(self):
        cfg = MpcConfig(penalty_cap=0.5)

        class P:
            temps = (26.5, 26.0, 27.5)
            illums = (750.0, 600.0, 600.0)
        # penalties: 1.25, 0.0, 0.75 -> excesses 0.75, 0, 0.25
        assert constraint_violation(P(), cfg) == pytest.approx(1.0, abs=1e-12)


class TestObjectiveGradient:
    """Check smoothness of the optimizer's landscape at a kink-free point:
    central finite differences of the rolled-out objective must agree with a
    tighter-step estimate (Richardson-style consistency)."""

    def test_fd_consistency(self):
        models = ModelSet(
            dl=DlModel(intercept=0.3, coef={
                "d_prev": 0.8, "d_plus_prev": 0.05, "d_minus_prev": -0.03,
                "temp": 0.02, "temp_plus": 0.06, "temp_minus": -0.15,
                "illum": -0.0004, "illum_plus": -0.001, "illum_minus": 0.0005,
                "effort": -0.05,
            }),
            idt=IdtModel(k_up=0.3, k_down=0.5),
            ami=AmiModel(theta0=30.0, theta_prev=0.1, theta_set=0.85),
        )
        snap = StateSnapshot((WorkerState(2.4, 0.1, 0.0, 0.1),), 27.0, 520.0)
        cfg = MpcConfig(horizon=3)
        x0 = np.array([26.2, 25.8, 26.1, 640.0, 560.0, 610.0])

        def f(vec):
            return objective(rollout(models, snap, ControlSchedule.unflatten(vec), cfg))

        for j in range(x0.size):
            h = 1e-3 if j < 3 else 1e-1
            def fd(step):
                up, dn = x0.copy(), x0.copy()
                up[j] += step
                dn[j] -= step
                return (f(up) - f(dn)) / (2 * step)
            g1, g2 = fd(h), fd(h / 2)
            assert g1 == pytest.approx(g2, abs=1e-6), f"coordinate {j}"
