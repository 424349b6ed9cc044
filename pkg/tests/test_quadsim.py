import numpy as np
import pytest

from quadfault.errors import (DegenerateLogError, EpisodeDivergedError, InputDomainError)
from quadfault.quadsim import (ControllerGains, DomainConfig, FaultSpec, FlightLog,
                               QuadParams, QuadState, UnbalanceModel, adjust_speed,
                               angular_dynamics, controller_update, estimate_unbalance,
                               fly_episode, grid_plan, hover_plan, jittered_plan,
                               rotor_forces, step)

HOVER = QuadParams().hover_speed()


# ---------------------------------------------------------------------------
# rotor forces
# ---------------------------------------------------------------------------

def test_rotor_forces_zero_speeds(quad, healthy):
    f, tau = rotor_forces(np.zeros(4), quad, healthy)
    assert np.all(f == 0) and np.all(tau == 0)


def test_rotor_forces_direct_substitution(quad, healthy):
    f, _ = rotor_forces(np.array([500.0, 0, 0, 0]), quad, healthy)
    assert f[0] == pytest.approx(1e-5 * 500.0 ** 2)  # 2.5 N


def test_rotor_forces_faulty_rotor_scales(quad):
    fault = FaultSpec.for_label(2, thrust_eff=0.85)
    f, _ = rotor_forces(np.array([500.0, 500.0, 0, 0]), quad, fault)
    assert f[0] == pytest.approx(0.85 * 2.5)
    assert f[1] == pytest.approx(2.5)


@pytest.mark.parametrize("bad", [[-1, 0, 0, 0], [np.nan, 0, 0, 0], [np.inf, 0, 0, 0]])
def test_rotor_forces_rejects_bad_input(quad, healthy, bad):
    with pytest.raises(InputDomainError):
        rotor_forces(np.array(bad, dtype=float), quad, healthy)


# ---------------------------------------------------------------------------
# angular dynamics
# ---------------------------------------------------------------------------

def test_balanced_hover_nullity(quad, healthy):
    state = QuadState()
    f, tau = rotor_forces(np.full(4, HOVER), quad, healthy)
    acc = angular_dynamics(state, f, tau, quad)
    assert np.all(acc == 0.0)  # exact, not approximate


def test_single_thrust_substitution(healthy):
    params = QuadParams(inertia_diag=(0.01, 0.01, 0.018), arm_length=0.2)
    acc = angular_dynamics(QuadState(), np.array([0, 0, 1.0, 0]), np.zeros(4), params)
    assert acc[0] == pytest.approx(20.0)  # L*F3/Ixx = 0.2/0.01


def test_gyroscopic_term_against_cross_product_oracle(quad):
    # independent oracle: numpy's cross product
    rate = np.array([1.0, 2.0, 3.0])
    inertia = quad.inertia
    expected = -np.cross(rate, inertia * rate) / inertia
    acc = angular_dynamics(QuadState(rate=rate), np.zeros(4), np.zeros(4), quad)
    np.testing.assert_allclose(acc, expected, rtol=1e-12)


def test_sign_conventions(quad, healthy):
    base = np.full(4, 500.0)
    up3 = base.copy()
    up3[2] += 10.0
    f, tau = rotor_forces(up3, quad, healthy)
    assert angular_dynamics(QuadState(), f, tau, quad)[0] > 0  # omega3 raises pdot
    up2 = base.copy()
    up2[1] += 10.0
    f, tau = rotor_forces(up2, quad, healthy)
    assert angular_dynamics(QuadState(), f, tau, quad)[1] > 0  # omega2 raises qdot


# ---------------------------------------------------------------------------
# step / integrator
# ---------------------------------------------------------------------------

def test_hover_equilibrium_1000_steps(quad, healthy, source_domain):
    state = QuadState(position=np.array([0, 0, 1.0]), rotor_speed=np.full(4, HOVER))
    cmd = np.full(4, HOVER)
    for _ in range(1000):
        state = step(state, cmd, 0.01, quad, healthy, source_domain)
    assert np.max(np.abs(state.rate)) < 1e-12


def test_perfect_motor_snaps_to_command(quad, healthy, source_domain):
    state = QuadState(position=np.array([0, 0, 1.0]), rotor_speed=np.full(4, HOVER))
    cmd = np.array([480.0, 500.0, 510.0, 490.0])
    out = step(state, cmd, 0.01, quad, healthy, source_domain)
    np.testing.assert_array_equal(out.rotor_speed, cmd)


def test_finite_motor_first_order_lag(quad, healthy):
    dom = DomainConfig(name="target", perfect_motor=False)
    state = QuadState(rotor_speed=np.full(4, 400.0), position=np.array([0, 0, 100.0]))
    cmd = np.full(4, 500.0)
    out = step(state, cmd, 0.01, quad, healthy, dom)
    # one RK4 step of the linear ODE wdot = k_m (cmd - w) equals the 4th-order
    # Taylor polynomial of the decay factor
    x = -quad.k_m * 0.01
    p4 = 1.0 + x + x ** 2 / 2 + x ** 3 / 6 + x ** 4 / 24
    np.testing.assert_allclose(out.rotor_speed, 500.0 - 100.0 * p4, rtol=1e-12)


def test_step_rejects_bad_dt(quad, healthy, source_domain):
    state = QuadState()
    with pytest.raises(InputDomainError):
        step(state, np.zeros(4), 0.0, quad, healthy, source_domain)
    with pytest.raises(InputDomainError):
        step(state, np.zeros(4), 0.05, quad, healthy, source_domain)


def test_step_rejects_invalid_state(quad, healthy, source_domain):
    state = QuadState(quat=np.array([1.0, 0.5, 0, 0]))  # not unit
    with pytest.raises(InputDomainError):
        step(state, np.zeros(4), 0.01, quad, healthy, source_domain)


def _integrate(quad, healthy, dom, state, cmd, dt, n):
    for _ in range(n):
        state = step(state, cmd, dt, quad, healthy, dom)
    return state


def test_rk4_fourth_order_convergence(quad, healthy):
    # Richardson study against a dt=1.6e-6 reference over a fixed horizon
    dom = DomainConfig(name="source", perfect_motor=False)
    cmd = np.array([520.0, 470.0, 505.0, 485.0])
    quat = np.array([0.9914449, 0.08715574, 0.0, 0.09659258])
    init = QuadState(quat=quat / np.linalg.norm(quat), rate=np.array([0.8, -0.5, 0.3]),
                     position=np.array([0, 0, 1.0]), rotor_speed=np.full(4, 495.0))
    horizon = 0.016
    ref = _integrate(quad, healthy, dom, init.copy(), cmd, 1.6e-6, 10000)
    dts, errs = [], []
    for k in (1, 2, 4, 8):
        out = _integrate(quad, healthy, dom, init.copy(), cmd, horizon / k, k)
        errs.append(np.linalg.norm(out.rate - ref.rate) + np.linalg.norm(out.quat - ref.quat))
        dts.append(horizon / k)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


def test_gyroscopic_energy_conservation(quad, healthy, source_domain):
    # torque-free spin: rate^T I rate is conserved; RK4 drift stays tiny over 10 s
    state = QuadState(rate=np.array([1.0, 2.0, 3.0]), position=np.array([0, 0, 100.0]))
    inertia = quad.inertia
    e0 = float(state.rate @ (inertia * state.rate))
    for _ in range(1000):
        state = step(state, np.zeros(4), 0.01, quad, healthy, source_domain)
    e1 = float(state.rate @ (inertia * state.rate))
    assert abs(e1 - e0) / e0 < 1e-6


def test_quaternion_stays_normalized(quad, healthy, source_domain):
    state = QuadState(rate=np.array([2.0, -1.0, 0.5]), position=np.array([0, 0, 100.0]))
    for _ in range(200):
        state = step(state, np.full(4, 300.0), 0.01, quad, healthy, source_domain)
        assert abs(np.linalg.norm(state.quat) - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# controller
# ---------------------------------------------------------------------------

def test_controller_hover_feedforward(quad):
    state = QuadState(position=np.array([0, 0, 1.0]))
    cmd = controller_update(state, np.array([0, 0, 1.0]), quad)
    np.testing.assert_allclose(cmd, HOVER, rtol=1e-12)


def test_controller_climb_is_symmetric(quad):
    state = QuadState(position=np.array([0, 0, 1.0]))
    cmd = controller_update(state, np.array([0, 0, 2.0]), quad)
    assert np.all(cmd > HOVER)
    assert np.ptp(cmd) < 1e-9


def test_controller_forward_waypoint_pitches_with_eq_sign(quad, healthy, source_domain):
    state = QuadState(position=np.array([0, 0, 1.0]))
    cmd = controller_update(state, np.array([1.0, 0, 1.0]), quad)
    assert cmd[1] > cmd[0]  # omega2 > omega1 pitches the nose toward +x
    out = step(state, cmd, 0.01, quad, healthy, source_domain)
    assert out.rate[1] > 0  # and one step indeed raises the pitch rate


def test_controller_is_deterministic(quad):
    state = QuadState(position=np.array([0.3, -0.2, 1.1]), rate=np.array([0.1, 0, -0.05]))
    a = controller_update(state, np.array([1.0, 1.0, 1.5]), quad)
    b = controller_update(state.copy(), np.array([1.0, 1.0, 1.5]), quad)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# unbalance model
# ---------------------------------------------------------------------------

def test_adjust_speed_reference_endpoint():
    model = UnbalanceModel(rho=(1.0, 1.05, 1.0, 0.99), omega_ref_max=1000.0)
    assert adjust_speed(1000.0, 2, model) == pytest.approx(1.05 * 1000.0)


def test_adjust_speed_zero_endpoint():
    model = UnbalanceModel(rho=(1.0, 1.05, 1.0, 0.99), omega_ref_max=1000.0)
    assert adjust_speed(0.0, 2, model) == 0.0


def test_adjust_speed_paper_substitution():
    model = UnbalanceModel(rho=(1.0, 1.05, 1.0, 0.99), omega_ref_max=1000.0)
    assert adjust_speed(500.0, 2, model) == pytest.approx(262.5)  # ratio 0.525 at half speed


def test_adjust_speed_is_quadratic_in_speed():
    model = UnbalanceModel(rho=(1.0, 1.03, 0.98, 1.01), omega_ref_max=800.0)
    for rotor in (1, 2, 3, 4):
        for omega in np.linspace(10.0, 800.0, 7):
            for c in (0.25, 0.5, 2.0):
                got = adjust_speed(c * omega, rotor, model)
                assert got == pytest.approx(c * c * adjust_speed(omega, rotor, model))


def test_unbalance_model_requires_unit_baseline():
    with pytest.raises(InputDomainError):
        UnbalanceModel(rho=(1.01, 1.0, 1.0, 1.0), omega_ref_max=100.0)


def test_estimate_unbalance_constant_log():
    n = 600
    cmd = np.tile([1000.0, 1050.0, 1000.0, 990.0], (n, 1))
    log = FlightLog(dt=0.01, gyro=np.zeros((n, 3)), attitude=np.zeros((n, 2)),
                    omega_cmd=cmd, label=1, domain="target")
    model = estimate_unbalance(log)
    assert model.rho == pytest.approx((1.0, 1.05, 1.0, 0.99))
    assert model.omega_ref_max == pytest.approx(1050.0)


def test_estimate_unbalance_identity():
    n = 600
    log = FlightLog(dt=0.01, gyro=np.zeros((n, 3)), attitude=np.zeros((n, 2)),
                    omega_cmd=np.full((n, 4), 500.0), label=1, domain="target")
    assert estimate_unbalance(log).rho == (1.0, 1.0, 1.0, 1.0)


def test_estimate_unbalance_rejects_short_and_degenerate_logs():
    short = FlightLog(dt=0.01, gyro=np.zeros((100, 3)), attitude=np.zeros((100, 2)),
                      omega_cmd=np.full((100, 4), 500.0), label=1, domain="target")
    with pytest.raises(DegenerateLogError):
        estimate_unbalance(short)
    zero = FlightLog(dt=0.01, gyro=np.zeros((600, 3)), attitude=np.zeros((600, 2)),
                     omega_cmd=np.zeros((600, 4)), label=1, domain="target")
    with pytest.raises(DegenerateLogError):
        estimate_unbalance(zero)


def test_estimate_unbalance_closed_loop_recovery(quad, healthy):
    # target sim with known injected ratios; estimate must land within 0.005
    injected = (1.0, 1.03, 0.98, 1.01)
    dom = DomainConfig(name="target", gyro_noise_std=0.005, perfect_motor=False,
                       motor_gain_scale=(1.05, 0.95, 1.02, 0.9),
                       unbalance=UnbalanceModel(rho=injected, omega_ref_max=640.0), seed=7)
    log = fly_episode(quad, healthy, dom, jittered_plan(np.random.default_rng(99)), 60.0,
                      seed=42)
    model = estimate_unbalance(log.tail(len(log) - 1000))
    np.testing.assert_allclose(model.rho, injected, atol=0.005)


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------

def test_episode_steady_hover_gyro_near_zero(quad, healthy, source_domain):
    log = fly_episode(quad, healthy, source_domain, hover_plan(), 10.0, seed=3)
    assert np.max(np.abs(log.gyro[-500:])) < 1e-6


def test_episode_determinism(quad, healthy):
    dom = DomainConfig(name="target", gyro_noise_std=0.01, perfect_motor=False, seed=5)
    a = fly_episode(quad, healthy, dom, grid_plan(), 5.0, seed=11)
    b = fly_episode(quad, healthy, dom, grid_plan(), 5.0, seed=11)
    assert np.array_equal(a.gyro, b.gyro)
    assert np.array_equal(a.omega_cmd, b.omega_cmd)
    assert np.array_equal(a.attitude, b.attitude)


def test_episode_fault_compensation_raises_mean_command(quad, source_domain):
    healthy_log = fly_episode(quad, FaultSpec.for_label(1), source_domain, hover_plan(),
                              10.0, seed=5)
    faulty_log = fly_episode(quad, FaultSpec.for_label(2), source_domain, hover_plan(),
                             10.0, seed=5)
    assert faulty_log.omega_cmd[:, 0].mean() > healthy_log.omega_cmd[:, 0].mean()


def test_episode_divergence_error_names_step(quad, healthy, source_domain):
    unstable = ControllerGains(rate_p=-25.0)  # sign-flipped rate loop
    with pytest.raises(EpisodeDivergedError) as err:
        fly_episode(quad, healthy, source_domain, grid_plan(), 20.0, seed=1, gains=unstable)
    assert err.value.step >= 0


def test_episode_logs_adjusted_commands(quad, healthy):
    model = UnbalanceModel(rho=(1.0, 1.05, 1.0, 1.0), omega_ref_max=600.0)
    plain = DomainConfig(name="target", perfect_motor=False, seed=2)
    warped = DomainConfig(name="target", perfect_motor=False, unbalance=model, seed=2)
    a = fly_episode(quad, healthy, plain, hover_plan(), 5.0, seed=9)
    b = fly_episode(quad, healthy, warped, hover_plan(), 5.0, seed=9)
    # physics identical, recorded commands warped by rho_i(w) * w
    np.testing.assert_allclose(b.omega_cmd, (a.omega_cmd / 600.0) * a.omega_cmd
                               * np.array(model.rho), rtol=1e-12)
    np.testing.assert_array_equal(a.gyro, b.gyro)


def test_episode_applies_recorded_speed_bias(quad, healthy):
    plain = DomainConfig(name="target", perfect_motor=False, seed=2)
    biased = DomainConfig(name="target", perfect_motor=False,
                          cmd_log_bias=(8.0, -6.0, 5.0, -9.0), seed=2)
    a = fly_episode(quad, healthy, plain, hover_plan(), 5.0, seed=9)
    b = fly_episode(quad, healthy, biased, hover_plan(), 5.0, seed=9)
    expected = np.broadcast_to([8.0, -6.0, 5.0, -9.0], a.omega_cmd.shape)
    np.testing.assert_allclose(b.omega_cmd - a.omega_cmd, expected, rtol=1e-12)
    np.testing.assert_array_equal(a.gyro, b.gyro)  # physics untouched


def test_fault_spec_validation():
    with pytest.raises(InputDomainError):
        FaultSpec(label=2, faulty_rotor=None)
    with pytest.raises(InputDomainError):
        FaultSpec(label=1, faulty_rotor=1)
    with pytest.raises(InputDomainError):
        FaultSpec(label=3, faulty_rotor=1)
    with pytest.raises(InputDomainError):
        FaultSpec.for_label(2, thrust_eff=0.0)
    with pytest.raises(InputDomainError):
        FaultSpec.for_label(6)


def test_flight_log_shape_invariant():
    with pytest.raises(InputDomainError):
        FlightLog(dt=0.01, gyro=np.zeros((10, 3)), attitude=np.zeros((10, 2)),
                  omega_cmd=np.zeros((9, 4)), label=1, domain="source")
