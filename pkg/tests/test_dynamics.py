"""Plant model and integrator tests.

Oracles: closed-form free fall and exponential growth, hand-built linearized
mixing-matrix inverse for the allocation map, principal-axis spin constancy.
"""

import math

import numpy as np
import pytest

from cyclosim.config import default_config
from cyclosim.dynamics import (
    AQUATIC_DRAG_GAIN,
    QUAT_SLICE,
    STATE_DIM,
    ActuatorCommand,
    AerialInput,
    AquaticInput,
    TerrestrialInput,
    VehicleParams,
    VehicleState,
    aerial_derivative,
    aerial_step,
    allocate,
    aquatic_derivative,
    aquatic_rotor_speeds,
    forward_mix,
    hover_state,
    step_rk4,
    terrestrial_derivative,
)
from cyclosim.errors import DivergenceError, SaturationError

G = 9.81


@pytest.fixture
def params() -> VehicleParams:
    return VehicleParams()


def mixing_oracle(c: float, tau: np.ndarray, p: VehicleParams):
    """Independent linearized mixing-matrix inverse (numpy solve)."""
    m = np.array(
        [[1, 1, 1, 1], [1, -1, 1, -1], [-1, -1, 1, 1], [1, -1, -1, 1]], dtype=float
    )
    b = np.array([p.mass * c, tau[0] / p.arm, tau[1] / p.arm, 0.0])
    thrusts = np.linalg.solve(m, b)
    speeds = np.sign(thrusts) * np.sqrt(np.abs(thrusts) / p.k_f)
    servo = tau[2] / (p.arm * (thrusts[2] + thrusts[3]))
    return thrusts, speeds, servo


class TestAerialDerivative:
    def test_hover_equilibrium_exact_zero(self, params):
        x = hover_state((0.0, 0.0, 5.0)).as_vector()
        u = np.array([params.g_z, 0.0, 0.0, 0.0])
        dx = aerial_derivative(x, u, params)
        assert np.all(dx == 0.0)

    def test_thrust_enters_through_attitude(self, params):
        # 90 degree roll points body z along world -y.
        x = hover_state((0, 0, 5)).as_vector()
        x[6:10] = [math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0, 0.0]
        dx = aerial_derivative(x, np.array([2.0, 0.0, 0.0, 0.0]), params)
        assert dx[3] == pytest.approx(0.0, abs=1e-12)
        assert dx[4] == pytest.approx(-2.0, abs=1e-12)
        assert dx[5] == pytest.approx(-G, abs=1e-12)

    def test_torque_through_inertia(self, params):
        x = hover_state((0, 0, 5)).as_vector()
        u = np.array([G, 1e-3, 0.0, 0.0])
        dx = aerial_derivative(x, u, params)
        assert dx[10] == pytest.approx(1e-3 / params.inertia[0])

    def test_gyroscopic_coupling(self, params):
        x = hover_state((0, 0, 5)).as_vector()
        x[10:13] = [0.0, 2.0, 3.0]
        dx = aerial_derivative(x, np.array([G, 0, 0, 0]), params)
        jx, jy, jz = params.inertia
        assert dx[10] == pytest.approx(-(jz - jy) * 2.0 * 3.0 / jx)

    def test_rejects_bad_shapes_and_nan(self, params):
        x = hover_state((0, 0, 5)).as_vector()
        with pytest.raises(ValueError):
            aerial_derivative(x[:-1], np.zeros(4), params)
        with pytest.raises(ValueError):
            aerial_derivative(x, np.zeros(3), params)
        x_bad = x.copy()
        x_bad[0] = math.nan
        with pytest.raises(ValueError):
            aerial_derivative(x_bad, np.zeros(4), params)


class TestSurfaceModels:
    def test_differential_drive_spin_in_place(self, params):
        # Frozen: (v_left, v_right) = (-1, 1), track 0.4 -> heading rate 5.
        d = terrestrial_derivative(
            np.zeros(3), TerrestrialInput(v_left=-1.0, v_right=1.0), params
        )
        assert np.allclose(d, [0.0, 0.0, 5.0], atol=1e-15)

    def test_differential_drive_heading(self):
        p = VehicleParams(track_width=0.5)
        d = terrestrial_derivative(
            np.array([0.0, 0.0, math.pi / 2]),
            TerrestrialInput(v_left=1.0, v_right=2.0),
            p,
        )
        assert d[0] == pytest.approx(0.0, abs=1e-12)
        assert d[1] == pytest.approx(1.5)
        assert d[2] == pytest.approx(2.0)

    def test_aquatic_steering_rate(self):
        # Frozen: speed 1, wheelbase 0.5, steering pi/4 -> heading rate 2.
        p = VehicleParams(wheelbase=0.5)
        d = aquatic_derivative(np.zeros(3), AquaticInput(1.0, math.pi / 4), p)
        assert d[0] == pytest.approx(1.0)
        assert d[1] == pytest.approx(0.0, abs=1e-12)
        assert d[2] == pytest.approx(2.0)

    def test_aquatic_steering_limit(self):
        with pytest.raises(ValueError):
            AquaticInput(1.0, math.pi / 2)

    def test_straight_line_integration(self, params):
        pose = np.zeros(3)
        u = TerrestrialInput(1.0, 1.0)
        for _ in range(1000):
            pose = step_rk4(
                lambda s, uu: terrestrial_derivative(s, uu, params), pose, u, 1e-3
            )
        assert pose[0] == pytest.approx(1.0, abs=1e-12)
        assert pose[1] == pytest.approx(0.0, abs=1e-12)


class TestRk4:
    def test_free_fall_closed_form(self, params):
        x = hover_state((0.0, 0.0, 0.0)).as_vector()
        u = np.zeros(4)
        for _ in range(1000):
            x = aerial_step(x, u, params, 1e-3)
        assert abs(x[2] - (-0.5 * G)) < 1e-6
        assert abs(x[5] - (-G)) < 1e-9

    def test_order_reduction_on_exponential(self):
        lam = 40.0
        f = lambda s, _u: lam * s
        errors = []
        for dt in (0.05, 0.025, 0.0125):
            out = step_rk4(f, np.array([1.0]), None, dt)
            errors.append(abs(float(out[0]) - math.exp(lam * dt)))
        assert errors[0] / errors[1] > 15.0
        assert errors[1] / errors[2] > 15.0

    def test_dt_bounds(self, params):
        x = hover_state((0, 0, 1)).as_vector()
        u = np.array([G, 0, 0, 0])
        for bad in (0.0, -1e-3, 0.051):
            with pytest.raises(ValueError):
                aerial_step(x, u, params, bad)
            with pytest.raises(ValueError):
                step_rk4(lambda s, _: s, x, u, bad)

    def test_quaternion_norm_drift(self, params):
        x = hover_state((0, 0, 5)).as_vector()
        u = np.array([G, 2e-3, -1e-3, 5e-4])
        for _ in range(2000):
            x = aerial_step(x, u, params, 1e-3)
            n = float(x[QUAT_SLICE] @ x[QUAT_SLICE])
            assert abs(math.sqrt(n) - 1.0) < 1e-9

    def test_principal_axis_spin_constant(self, params):
        x = hover_state((0, 0, 5)).as_vector()
        x[10:13] = [0.0, 0.0, 2.0]
        u = np.array([G, 0.0, 0.0, 0.0])
        for _ in range(500):
            x = aerial_step(x, u, params, 1e-3)
        assert np.allclose(x[10:13], [0.0, 0.0, 2.0], atol=1e-12)
        # Half a second at 2 rad/s: yaw = 1 rad.
        yaw = 2.0 * math.atan2(x[9], x[6])
        assert abs(yaw - 1.0) < 1e-6

    def test_divergence_error_carries_state(self):
        f = lambda s, _u: s * 1e9  # blows up fast
        x = np.array([1.0])
        with pytest.raises(DivergenceError) as exc_info:
            for _ in range(200):
                x = step_rk4(f, x, None, 0.05)
        assert exc_info.value.state is not None


class TestVehicleState:
    def test_vector_round_trip(self):
        s = hover_state((1.0, -2.0, 3.0), yaw=0.7)
        back = VehicleState.from_vector(s.as_vector())
        assert np.allclose(back.position, s.position, atol=0)
        assert np.allclose(back.quaternion, s.quaternion, atol=0)

    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(ValueError):
            VehicleState(np.zeros(3), np.zeros(3), np.array([1.0, 1.0, 0, 0]), np.zeros(3))

    def test_vector_length(self):
        with pytest.raises(ValueError):
            VehicleState.from_vector(np.zeros(STATE_DIM + 1))

    def test_params_from_config(self):
        p = VehicleParams.from_config(default_config())
        assert p.mass == 0.75
        assert np.allclose(p.inertia, [8e-3, 8e-3, 1.2e-2])

    def test_params_validation(self):
        with pytest.raises(ValueError):
            VehicleParams(mass=-1.0)
        with pytest.raises(ValueError):
            VehicleParams(dt=0.1)


class TestAllocation:
    def test_hover_split_evenly(self, params):
        cmd = allocate(AerialInput(c=G, torque=np.zeros(3)), params)
        expected = math.sqrt(params.mass * G / 4.0 / params.k_f)
        assert np.allclose(cmd.rotor_speeds, expected, atol=1e-9)
        assert cmd.servo == 0.0

    def test_small_roll_torque_splits_pairs(self, params):
        # Frozen from the mixing oracle: FL/RL 429.025058, FR/RR 428.733600.
        cmd = allocate(AerialInput(c=G, torque=np.array([1e-3, 0.0, 0.0])), params)
        _, speeds_oracle, _ = mixing_oracle(G, np.array([1e-3, 0.0, 0.0]), params)
        assert np.allclose(cmd.rotor_speeds, speeds_oracle, atol=1e-9)
        assert cmd.rotor_speeds[0] == pytest.approx(429.025058, abs=1e-5)
        assert cmd.rotor_speeds[1] == pytest.approx(428.733600, abs=1e-5)
        # Left pair equal, right pair equal, split symmetric about hover.
        assert cmd.rotor_speeds[0] == pytest.approx(cmd.rotor_speeds[2])
        assert cmd.rotor_speeds[1] == pytest.approx(cmd.rotor_speeds[3])
        hover = math.sqrt(params.mass * G / 4.0 / params.k_f)
        t_fast = params.k_f * cmd.rotor_speeds[0] ** 2
        t_slow = params.k_f * cmd.rotor_speeds[1] ** 2
        t_hover = params.k_f * hover**2
        assert t_fast - t_hover == pytest.approx(t_hover - t_slow, rel=1e-9)

    def test_matches_oracle_on_grid(self, params):
        rng = np.random.default_rng(21)
        for _ in range(50):
            c = rng.uniform(3.0, 20.0)
            tau = np.array(
                [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2)]
            )
            cmd = allocate(AerialInput(c=c, torque=tau), params)
            _, speeds_oracle, servo_oracle = mixing_oracle(c, tau, params)
            assert np.allclose(cmd.rotor_speeds, speeds_oracle, rtol=1e-9)
            assert cmd.servo == pytest.approx(servo_oracle, rel=1e-9)

    def test_round_trip_within_tolerance(self, params):
        rng = np.random.default_rng(22)
        for _ in range(100):
            c = rng.uniform(1.0, 22.0)
            tau_x = rng.uniform(-0.3, 0.3)
            tau_y = rng.uniform(-0.3, 0.3)
            # Keep yaw torque inside the servo's feasible range for this c.
            rear = 0.5 * params.mass * c + 0.5 * tau_y / params.arm
            tau_z_max = 0.8 * params.arm * max(rear, 0.0) * params.servo_max
            u = AerialInput(
                c=c, torque=np.array([tau_x, tau_y, rng.uniform(-1, 1) * tau_z_max])
            )
            back = forward_mix(allocate(u, params), params)
            scale = max(1.0, abs(u.c), float(np.abs(u.torque).max()))
            assert abs(back.c - u.c) / scale < 1e-6
            assert np.abs(back.torque - u.torque).max() / scale < 1e-6

    def test_saturation_lists_channels(self, params):
        with pytest.raises(SaturationError) as exc_info:
            allocate(AerialInput(c=100.0, torque=np.zeros(3)), params)
        assert all(ch.startswith("rotor_") for ch in exc_info.value.channels)
        assert len(exc_info.value.channels) == 4
        with pytest.raises(SaturationError) as exc_info:
            allocate(AerialInput(c=G, torque=np.array([0.0, 0.0, 5.0])), params)
        assert "servo" in exc_info.value.channels

    def test_non_strict_clips(self, params):
        cmd = allocate(AerialInput(c=100.0, torque=np.zeros(3)), params, strict=False)
        assert np.all(np.abs(cmd.rotor_speeds) <= params.rotor_max)
        cmd = allocate(
            AerialInput(c=G, torque=np.array([0.0, 0.0, 5.0])), params, strict=False
        )
        assert abs(cmd.servo) <= params.servo_max

    def test_yaw_without_rear_thrust_rejected(self, params):
        # Pitch torque cancels the rear pair exactly: servo has nothing to tilt.
        c = 4.0
        tau_y = -c * params.mass * params.arm  # rear thrust = 0
        with pytest.raises(SaturationError):
            allocate(AerialInput(c=c, torque=np.array([0.0, tau_y, 0.1])), params)

    def test_actuator_command_validation(self):
        with pytest.raises(ValueError):
            ActuatorCommand(rotor_speeds=np.zeros(3), servo=0.0)

    def test_aquatic_drag_balance(self, params):
        w = aquatic_rotor_speeds(1.0, params)
        assert w[0] == w[1] == 0.0
        # Thrust of the two driven rotors balances the quadratic drag.
        thrust = 2.0 * params.k_f * w[2] ** 2
        assert thrust == pytest.approx(AQUATIC_DRAG_GAIN * 1.0**2)
        assert aquatic_rotor_speeds(0.0, params)[2] == 0.0
