import math

import numpy as np
import pytest

from collbreak.daughter import NoMassTransfer, ShatterAttach, Uniform
from collbreak.integrator import (
    Integrator,
    IntegratorConfig,
    StiffnessError,
    integrate,
    step,
    trajectory_to_csv,
)
from collbreak.kernel import CollisionKernel
from collbreak.rhs import Problem
from collbreak.state import StateVector, make_initial, moment, y1_distance

K = CollisionKernel(1.0, 0.5, 0.5)
UNIFORM = Problem(K, Uniform())


def test_step_keeps_monomer_state():
    w = make_initial("monomer", None, 1.5, 16)
    w2, err = step(w, 0.1, IntegratorConfig(), UNIFORM)
    assert np.array_equal(w2.counts, w.counts) and err == 0.0


@pytest.mark.parametrize("policy_cap", [4, 16])
def test_step_conserves_mass_with_leak(policy_cap):
    w = StateVector(np.linspace(1.0, 0.2, policy_cap))
    cfg = IntegratorConfig(rtol=1e-8)
    w2, err = step(w, 1e-3, cfg, UNIFORM)
    assert err <= 1.0
    before = moment(w, 1) + w.leaked_mass
    after = moment(w2, 1) + w2.leaked_mass + w2.clamped_mass
    assert abs(after - before) <= 1e-13 * before
    assert w2.leaked_mass > 0


def test_euler_is_first_order():
    w0 = StateVector([1.0, 1.0] + [0.0] * 30)
    T = 0.2
    ref = integrate(w0, T, IntegratorConfig(rtol=1e-12), UNIFORM, store_states=True).final_state
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        cfg = IntegratorConfig(method="euler_fixed", dt_init=dt, dt_max=dt, dt_min=dt / 2)
        w = integrate(w0, T, cfg, UNIFORM, store_states=True, sample_times=[T]).final_state
        errs.append(y1_distance(w, ref))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(1.8 < r < 2.2 for r in ratios), ratios


def test_euler_step_mass_defect():
    # euler preserves the linear invariant M1 + leak exactly up to rounding
    w = StateVector([1.0, 1.0, 0.5, 0.0])
    for dt in (1e-2, 5e-3):
        w2, _ = step(w, dt, IntegratorConfig(method="euler_fixed", dt_init=dt, dt_min=dt), UNIFORM)
        assert abs(moment(w2, 1) + w2.leaked_mass + w2.clamped_mass - moment(w, 1)) <= 1e-15


def test_uniform_monomer_trajectory_is_constant():
    w0 = make_initial("monomer", None, 1.0, 32)
    traj = integrate(w0, 5.0, IntegratorConfig(), UNIFORM)
    assert np.all(traj["M1"] == 1.0) and np.all(traj["M0"] == 1.0) and np.all(traj["w1"] == 1.0)


def test_short_time_taylor():
    w0 = StateVector([1.0, 1.0] + [0.0] * 62)
    h = 1e-4
    traj = integrate(w0, h, IntegratorConfig(), UNIFORM, sample_times=[h])
    assert abs(traj["w1"][-1] - (1 + 4 / 3 * h)) <= 20 * h**2


def test_no_mass_transfer_ends_in_monomers():
    w0 = make_initial("two_point", 0.6, 1.0, 32)
    traj = integrate(w0, 200.0, IntegratorConfig(), Problem(K, NoMassTransfer()), store_states=True)
    assert traj.final_state.counts[0] == pytest.approx(1.0, abs=1e-6)


def test_trajectory_invariants():
    w0 = make_initial("power_law", 0.5, 1.0, 64, support=16)
    traj = integrate(w0, 3.0, IntegratorConfig(observable_stride=0.25), Problem(K, ShatterAttach()),
                     store_states=True)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.times[-1] == 3.0 and traj.times.size == 13
    assert all(s.is_nonnegative() for s in traj.states)
    acc = traj["M1"] + traj["leak"] + traj["clamp"]
    assert np.abs(acc - 1.0).max() <= 1e-8
    # at least two fragments per collision: number of clusters cannot drop
    assert np.diff(traj["M0"]).min() >= -10 * traj.rtol * traj["M0"].max()


def test_tolerance_refinement_converges():
    w0 = make_initial("power_law", 0.5, 1.0, 64, support=16)
    finals = []
    for rtol in (1e-6, 5e-7):
        traj = integrate(w0, 2.0, IntegratorConfig(rtol=rtol, atol=rtol * 1e-4), UNIFORM, store_states=True)
        finals.append(traj.final_state)
    assert y1_distance(*finals) <= 1e-6 * moment(w0, 1)


def test_mass_accounting_default_tolerances():
    w0 = make_initial("two_point", 0.5, 1.0, 24)
    traj = integrate(w0, 10.0, None, UNIFORM)
    assert traj["leak"][-1] > 1e-6  # small cap: real overflow
    acc = traj["M1"] + traj["leak"] + traj["clamp"]
    assert np.abs(acc - 1.0).max() <= 1e-8


def test_stiffness_failure_carries_state():
    w0 = make_initial("power_law", 0.5, 1.0, 32, support=8)
    cfg = IntegratorConfig(rtol=1e-12, dt_init=5.0, dt_min=4.0, dt_max=5.0)
    with pytest.raises(StiffnessError) as info:
        integrate(w0, 10.0, cfg, UNIFORM)
    assert info.value.t == 0.0 and info.value.state is not None


def test_fixed_step_failure_on_negative_state():
    w0 = make_initial("power_law", 0.5, 1.0, 32, support=8)
    cfg = IntegratorConfig(method="euler_fixed", dt_init=2.0, dt_min=1.0, dt_max=2.0)
    with pytest.raises(StiffnessError):
        integrate(w0, 4.0, cfg, UNIFORM, sample_times=[4.0])


def test_rejected_step_reports_infinite_error():
    w = make_initial("power_law", 0.5, 1.0, 32, support=8)
    w2, err = step(w, 2.0, IntegratorConfig(method="euler_fixed", dt_init=2.0, dt_max=2.0, dt_min=1.0), UNIFORM)
    assert math.isinf(err) and w2 is w


@pytest.mark.parametrize(
    "kwargs",
    [dict(method="rk4"), dict(rtol=0.0), dict(atol=-1.0), dict(dt_init=1e-20), dict(dt_min=2.0, dt_init=1.0),
     dict(observable_stride=0.0)],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_step_requires_positive_dt():
    with pytest.raises(ValueError):
        step(make_initial("monomer", None, 1.0, 4), 0.0, IntegratorConfig(), UNIFORM)


def test_horizon_must_be_positive():
    with pytest.raises(ValueError):
        integrate(make_initial("monomer", None, 1.0, 4), 0.0, None, UNIFORM)


def test_integrator_resumes_without_restart():
    w0 = make_initial("two_point", 0.5, 1.0, 32)
    drv = Integrator(w0, UNIFORM)
    drv.advance_to(1.0)
    drv.advance_to(2.0)
    one_shot = integrate(w0, 2.0, None, UNIFORM, sample_times=[2.0], store_states=True).final_state
    assert y1_distance(drv.state, one_shot) <= 1e-9


def test_callbacks_and_extra_moments():
    seen = []
    cfg = IntegratorConfig(observable_stride=0.5, moment_orders=(3.0,))
    traj = integrate(make_initial("two_point", 0.5, 1.0, 16), 1.0, cfg, UNIFORM,
                     callbacks=[lambda t, s: seen.append(t)])
    assert seen == [0.0, 0.5, 1.0]
    assert "M3" in traj.observables and "M0.5" in traj.observables and "M1.5" in traj.observables


def test_csv_export_and_snapshots(tmp_path):
    traj = integrate(make_initial("two_point", 0.5, 1.0, 16), 1.0, IntegratorConfig(observable_stride=0.5),
                     UNIFORM, store_states=True)
    traj.to_csv(tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "time,M0,M1,M2,M0.5,M1.5,w1,leak,clamp"
    assert len(lines) == 4
    assert trajectory_to_csv(traj) == (tmp_path / "traj.csv").read_text()
    paths = traj.write_snapshots(tmp_path / "snap", times=[1.0])
    assert len(paths) == 1 and StateVector.from_csv(paths[0]).cap == 16
