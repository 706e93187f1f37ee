import numpy as np
import pytest

from ggplan.planner import (
    BicycleConfig,
    PlanLog,
    PlannerConfig,
    TrackSpeedProfile,
    kinematic_bicycle_step,
    lateral_cap,
    metrics,
    plan_derivative,
    plan_step,
    plan_step_states,
    run_closed_loop,
)
from ggplan.integrator import is_feasible
from ggplan.track import Obstacle, circular_track, stadium_track, straight_track


class TestPlanModel:
    def test_straight_derivative(self):
        state = np.array([0.0, 0.0, 0.0, 10.0, 0.0, 0.0])
        accel = np.array([2.0, 0.0, 0.0])
        np.testing.assert_allclose(plan_derivative(state, accel),
                                   [10.0, 0.0, 0.0, 2.0, 0.0, 0.0],
                                   atol=1e-14)

    def test_commanded_accel_is_physical(self):
        # With v_psi != 0 the raw inputs are shifted so the world-frame CoG
        # acceleration equals the command rotated by the heading.
        state = np.array([0.0, 0.0, 0.3, 12.0, -1.0, 0.7])
        accel = np.array([1.5, 4.0, 0.2])
        d = plan_derivative(state, accel)
        psi, v_x, v_y, v_psi = state[2], state[3], state[4], state[5]
        rot = np.array([[np.cos(psi), -np.sin(psi)],
                        [np.sin(psi), np.cos(psi)]])
        world = rot @ np.array([d[3] - v_psi * v_y, d[4] + v_psi * v_x])
        np.testing.assert_allclose(world, rot @ accel[:2], atol=1e-12)
        assert d[5] == pytest.approx(accel[2])

    def test_steady_circle(self):
        # a_y = v^2/R with matching yaw rate keeps body velocity constant and
        # traces the circle exactly up to integrator error.
        v, radius = 15.0, 50.0
        state = np.array([0.0, 0.0, 0.0, v, 0.0, v / radius])
        accel = np.array([0.0, v ** 2 / radius, 0.0])
        dt, steps = 0.05, int(round(2 * np.pi * radius / v / 0.05))
        center = np.array([0.0, radius])
        for _ in range(steps):
            state = plan_step_states(state, accel, dt)
            assert np.hypot(*(state[:2] - center)) == pytest.approx(radius,
                                                                    abs=1e-5)
        assert state[3] == pytest.approx(v, abs=1e-10)
        assert state[4] == pytest.approx(0.0, abs=1e-10)

    def test_batched_rollout_shape(self):
        states = np.tile([0.0, 0.0, 0.0, 5.0, 0.0, 0.0], (4, 1))
        accels = np.tile([1.0, 0.5, 0.1], (4, 1))
        out = plan_step_states(states, accels, 0.2)
        assert out.shape == (4, 6)
        np.testing.assert_allclose(out[0], out[2], atol=0.0)


class TestSpeedProfile:
    def test_lateral_cap_value(self, reference_envelope):
        # 5.1 / 0.57 from the yaw-coupling rows binds before the ellipse.
        assert lateral_cap(reference_envelope) == pytest.approx(5.1 / 0.57)

    def test_constant_speed_on_circle(self, reference_envelope):
        track = circular_track(radius=50.0)
        prof = TrackSpeedProfile(track, 8.0, reference_envelope.ax_min,
                                 reference_envelope.ax_max)
        s = np.linspace(0.0, track.length, 40)
        np.testing.assert_allclose(prof(s), np.sqrt(8.0 * 50.0), rtol=1e-3)

    def test_straight_track_hits_v_max(self, reference_envelope):
        track = straight_track(length=400.0)
        prof = TrackSpeedProfile(track, 8.0, reference_envelope.ax_min,
                                 reference_envelope.ax_max, v_max=30.0)
        assert prof(200.0) == pytest.approx(30.0)

    def test_transitions_within_accel_bounds(self, reference_envelope):
        track = stadium_track()
        prof = TrackSpeedProfile(track, 8.0, reference_envelope.ax_min,
                                 reference_envelope.ax_max)
        s = np.arange(0.0, 2.0 * track.length, 2.0)
        v = prof(s)
        dv2 = v[1:] ** 2 - v[:-1] ** 2
        ds = 2.0 * np.diff(s)
        assert np.all(dv2 <= 4.3 * ds + 1e-6)
        assert np.all(dv2 >= -9.3 * ds - 1e-6)

    def test_corner_speed_capped(self, reference_envelope):
        track = stadium_track()
        prof = TrackSpeedProfile(track, 8.0, reference_envelope.ax_min,
                                 reference_envelope.ax_max)
        mid_corner = 150.0 + np.pi * 25.0
        assert prof(mid_corner) == pytest.approx(np.sqrt(8.0 * 50.0),
                                                 rel=1e-2)

    def test_closed_seam_continuity(self, reference_envelope):
        track = stadium_track()
        prof = TrackSpeedProfile(track, 8.0, reference_envelope.ax_min,
                                 reference_envelope.ax_max)
        assert prof(0.0) == pytest.approx(float(prof(track.length)))
        assert abs(float(prof(track.length - 0.5)) - float(prof(0.5))) < 1.0

    def test_rejects_bad_caps(self, reference_envelope):
        track = straight_track()
        with pytest.raises(ValueError, match="positive"):
            TrackSpeedProfile(track, 0.0, reference_envelope.ax_min,
                              reference_envelope.ax_max)


class TestPlanStep:
    def test_zero_horizon(self, reference_envelope):
        xi0 = np.array([0.0, 0.0, 0.0, 10.0, 0.0, 0.0])
        cfg = PlannerConfig(horizon=0.0)
        res = plan_step(xi0, straight_track(), [], reference_envelope, cfg)
        assert res.controls.shape == (0, 3)
        np.testing.assert_allclose(res.states, xi0.reshape(1, 6))

    def test_full_throttle_from_rest(self, reference_envelope):
        xi0 = np.zeros(6)
        res = plan_step(xi0, straight_track(), [], reference_envelope)
        assert res.controls[0, 0] == pytest.approx(
            reference_envelope.ax_max(0.0), rel=0.02)
        assert abs(res.controls[0, 1]) < 0.2
        assert abs(res.controls[0, 2]) < 0.2

    def test_all_controls_feasible(self, reference_envelope):
        track = stadium_track()
        xi0 = np.array([140.0, -0.2, 0.05, 22.0, 0.1, 0.02])
        res = plan_step(xi0, track, [], reference_envelope)
        for k in range(len(res.controls)):
            assert is_feasible(reference_envelope, res.controls[k],
                               res.states[k, 3], tol=1e-6)

    def test_deterministic(self, reference_envelope):
        track = stadium_track()
        xi0 = np.array([100.0, 0.5, 0.0, 25.0, 0.0, 0.0])
        r1 = plan_step(xi0, track, [], reference_envelope)
        r2 = plan_step(xi0, track, [], reference_envelope)
        assert np.array_equal(r1.controls, r2.controls)
        assert np.array_equal(r1.states, r2.states)

    def test_swerves_around_obstacle(self, reference_envelope):
        track = straight_track(length=200.0)
        ob = Obstacle(center=np.array([60.0, 0.0]), radius=1.5)
        xi0 = np.array([20.0, 0.0, 0.0, 20.0, 0.0, 0.0])
        cfg = PlannerConfig()
        res = plan_step(xi0, track, [ob], reference_envelope, cfg)
        d = np.linalg.norm(res.states[:, :2] - ob.center, axis=1)
        assert d.min() > ob.radius + cfg.obstacle_margin
        assert res.states[-1, 0] > 60.0   # passes, not just stops
        assert res.violations == {}


class TestBicycleBaseline:
    def test_straight_line_exact(self, berline):
        state = np.array([0.0, 0.0, 0.0, 10.0])
        out = kinematic_bicycle_step(state, np.array([2.0, 0.0]), berline, 0.5)
        np.testing.assert_allclose(out, [10.0 * 0.5 + 0.5 * 2.0 * 0.5 ** 2,
                                         0.0, 0.0, 11.0], atol=1e-12)

    def test_steady_turn_radius(self, berline):
        v, delta = 10.0, 0.2
        slip = np.arctan(berline.l_r * np.tan(delta) / berline.wheelbase)
        radius = berline.l_r / np.sin(slip)
        state = np.array([0.0, 0.0, 0.0, v])
        pts = []
        for _ in range(200):
            state = kinematic_bicycle_step(state, np.array([0.0, delta]),
                                           berline, 0.05)
            pts.append(state[:2].copy())
        pts = np.array(pts)
        # Center sits left of the start at the turn radius, offset by slip.
        center = radius * np.array([-np.sin(slip), np.cos(slip)])
        np.testing.assert_allclose(np.hypot(*(pts - center).T), radius,
                                   rtol=1e-9)

    def test_rest_is_fixed_point(self, berline):
        state = np.array([3.0, 4.0, 1.0, 0.0])
        out = kinematic_bicycle_step(state, np.array([0.0, 0.3]), berline, 0.2)
        np.testing.assert_allclose(out[:3], state[:3], atol=1e-12)


class TestClosedLoop:
    def test_envelope_lap_on_circle(self, reference_envelope, berline):
        track = circular_track(radius=50.0)
        cfg = PlannerConfig(iterations=0)
        log = run_closed_loop("envelope", track, [], reference_envelope,
                              berline, ticks=200, cfg=cfg)
        assert log.lap_time is not None and log.lap_time < 25.0
        assert log.failures == 0
        m = metrics(log, track)
        assert m.rms_lat_err < 0.5
        assert m.max_lat_err < track.half_width
        cap = np.sqrt(cfg.profile_margin * lateral_cap(reference_envelope)
                      * 50.0)
        assert np.max(np.hypot(log.states[:, 3], log.states[:, 4])) \
            < cap + 0.5

    def test_bicycle_lap_on_circle(self, reference_envelope, berline):
        track = circular_track(radius=50.0)
        bike = BicycleConfig()
        log = run_closed_loop("bicycle", track, [], reference_envelope,
                              berline, ticks=300, bike_cfg=bike)
        assert log.lap_time is not None
        assert metrics(log, track).max_lat_err < 1.0
        steady = log.states[len(log) // 2:, 3]
        assert np.max(steady) < np.sqrt(bike.lat_cap * 50.0) + 0.3
        assert np.all(np.abs(log.controls[:, 1]) <= bike.delta_max + 1e-12)

    def test_budget_exhaustion_leaves_no_lap_time(self, reference_envelope,
                                                  berline):
        track = circular_track(radius=50.0)
        log = run_closed_loop("envelope", track, [], reference_envelope,
                              berline, ticks=10,
                              cfg=PlannerConfig(iterations=0))
        assert log.lap_time is None
        assert len(log) == 10

    def test_avoids_obstacle_closed_loop(self, reference_envelope, berline):
        track = straight_track(length=200.0)
        ob = Obstacle(center=np.array([60.0, 0.0]), radius=1.5)
        cfg = PlannerConfig(iterations=0)
        log = run_closed_loop("envelope", track, [ob], reference_envelope,
                              berline, ticks=80, cfg=cfg)
        d = np.linalg.norm(log.states[:, :2] - ob.center, axis=1)
        assert d.min() > ob.radius + cfg.obstacle_margin
        assert log.states[-1, 0] > 190.0

    def test_rejects_unknown_model(self, reference_envelope, berline):
        with pytest.raises(ValueError, match="unknown planner model"):
            run_closed_loop("hovercraft", straight_track(), [],
                            reference_envelope, berline)


def _synthetic_log(lat_offsets, v_x=20.0):
    n = len(lat_offsets)
    states = np.zeros((n, 6))
    states[:, 0] = np.arange(n) * v_x * 0.2
    states[:, 1] = lat_offsets
    states[:, 3] = v_x
    return PlanLog(model="envelope", replan=0.2, t=np.arange(n) * 0.2,
                   states=states, controls=np.zeros((n, 3)),
                   solve_ms=np.full(n, 5.0), lat_err=np.asarray(lat_offsets,
                                                                dtype=float),
                   predicted=[])


class TestMetricsAndLog:
    def test_centerline_gives_zero_error(self):
        track = straight_track(length=400.0)
        m = metrics(_synthetic_log(np.zeros(30)), track)
        assert m.rms_lat_err == 0.0
        assert m.max_lat_err == 0.0
        assert m.avg_solve_ms == pytest.approx(5.0)

    def test_constant_offset(self):
        track = straight_track(length=400.0)
        m = metrics(_synthetic_log(np.full(30, 0.25)), track)
        assert m.rms_lat_err == pytest.approx(0.25)
        assert m.max_lat_err == pytest.approx(0.25)

    def test_rms_of_mixed_offsets(self):
        track = straight_track(length=400.0)
        m = metrics(_synthetic_log(np.array([0.0, 0.3, 0.4] * 10)), track)
        assert m.rms_lat_err == pytest.approx(np.sqrt(0.25 / 3.0))

    def test_speed_by_arc_grid(self):
        track = straight_track(length=400.0)
        m = metrics(_synthetic_log(np.zeros(30), v_x=20.0), track)
        arc, v = m.speed_by_arc.T
        assert np.all(np.diff(arc) == pytest.approx(2.0))
        np.testing.assert_allclose(v, 20.0, atol=1e-9)

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError, match="empty log"):
            metrics(_synthetic_log(np.zeros(0)), straight_track())

    def test_save_round_trip(self, tmp_path):
        log = _synthetic_log(np.array([0.0, 0.1, -0.2]))
        path = tmp_path / "log.csv"
        log.save(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(PlanLog.CSV_COLUMNS)
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert table.shape == (3, len(PlanLog.CSV_COLUMNS))
        np.testing.assert_allclose(table[:, 0], log.t, rtol=1e-9)
        np.testing.assert_allclose(table[:, -1], log.lat_err, rtol=1e-9)
