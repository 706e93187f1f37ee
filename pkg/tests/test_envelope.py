import numpy as np
import pytest

from ggplan.envelope import (
    EnvelopeModel,
    FitConfig,
    FitError,
    build_envelope,
    convex_hull_2d,
    fit_ax_bounds,
    fit_ellipse,
    fit_halfspaces,
    hull_area,
    points_in_hull,
    upper_chain,
)


def reference_cloud(model: EnvelopeModel, v: float, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Uniform fill of the reference acceleration set at one speed."""
    lo, hi = model.ax_min(v), model.ax_max(v)
    out = np.empty((0, 3))
    while len(out) < n:
        cand = rng.uniform([lo, -model.beta, -9.9], [hi, model.beta, 9.9], (4 * n, 3))
        ok = (cand[:, 0] / model.alpha) ** 2 + (cand[:, 1] / model.beta) ** 2 <= 1.0
        ok &= np.all(cand @ model.a_rows.T <= model.b, axis=1)
        out = np.vstack([out, cand[ok]])
    return out[:n]


@pytest.fixture(scope="module")
def reference_per_speed(reference_envelope):
    rng = np.random.default_rng(42)
    return {v: reference_cloud(reference_envelope, v, 12000, rng)
            for v in (5.0, 10.0, 20.0, 30.0, 40.0)}


class TestConvexHull:
    def test_square_with_interior_point(self):
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])
        hull = convex_hull_2d(pts)
        assert len(hull) == 4
        assert hull_area(hull) == pytest.approx(1.0)

    def test_counter_clockwise(self):
        rng = np.random.default_rng(0)
        hull = convex_hull_2d(rng.normal(size=(200, 2)))
        # positive shoelace area certifies CCW orientation
        assert hull_area(hull) > 0.0
        edges = np.roll(hull, -1, axis=0) - hull
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        assert np.all(cross > 0.0)

    def test_contains_all_points(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-3, 3, size=(500, 2))
        hull = convex_hull_2d(pts)
        assert points_in_hull(pts, hull, tol=1e-9).all()

    def test_collinear_rejected(self):
        pts = np.column_stack([np.arange(5.0), 2.0 * np.arange(5.0)])
        with pytest.raises(FitError, match="collinear"):
            convex_hull_2d(pts)

    def test_too_few_points(self):
        with pytest.raises(FitError):
            convex_hull_2d(np.array([[0.0, 0.0], [1.0, 1.0]]))

    def test_upper_chain_of_diamond(self):
        pts = np.array([[-1, 0], [0, 1], [1, 0], [0, -1], [0, 0]])
        chain = upper_chain(pts)
        np.testing.assert_allclose(chain, [[-1, 0], [0, 1], [1, 0]])


class TestFitEllipse:
    def test_exact_recovery(self):
        t = np.linspace(0, 2 * np.pi, 541)
        pts = np.column_stack([9.4 * np.cos(t), 9.0 * np.sin(t)])
        alpha, beta = fit_ellipse(pts)
        assert alpha == pytest.approx(9.4, abs=1e-6)
        assert beta == pytest.approx(9.0, abs=1e-6)

    def test_unit_circle(self):
        t = np.linspace(0, 2 * np.pi, 100)
        pts = np.column_stack([np.cos(t), np.sin(t)])
        alpha, beta = fit_ellipse(pts)
        assert alpha == pytest.approx(1.0, abs=1e-9)
        assert beta == pytest.approx(1.0, abs=1e-9)

    def test_radial_noise_within_two_percent(self):
        rng = np.random.default_rng(5)
        t = rng.uniform(0, 2 * np.pi, 4000)
        r = 1.0 + rng.uniform(-0.01, 0.01, t.shape)
        pts = np.column_stack([9.4 * r * np.cos(t), 9.0 * r * np.sin(t)])
        alpha, beta = fit_ellipse(pts)
        assert alpha == pytest.approx(9.4, rel=0.02)
        assert beta == pytest.approx(9.0, rel=0.02)

    def test_cap_points_are_trimmed(self):
        # A straight traction cap cuts deep inside the ellipse; the refit
        # pass must ignore it.
        t = np.linspace(0.4, np.pi - 0.4, 200)
        arc = np.column_stack([9.4 * np.cos(t), 9.0 * np.sin(t)])
        x_cap = np.linspace(2.6, 4.2, 40)
        cap = np.column_stack([x_cap, 15.3 - 2.6 * x_cap])
        pts = np.vstack([arc, cap, arc * [1, -1], cap * [1, -1]])
        alpha, beta = fit_ellipse(pts)
        assert alpha == pytest.approx(9.4, rel=0.01)
        assert beta == pytest.approx(9.0, rel=0.01)

    def test_too_few_points_rejected(self):
        pts = np.array([[1.0, 0.1], [0.5, -0.2], [0.2, 0.3]])
        with pytest.raises(FitError, match="4"):
            fit_ellipse(pts)

    def test_one_sided_points_rejected(self):
        t = np.linspace(0.1, np.pi - 0.1, 50)
        pts = np.column_stack([np.cos(t), np.sin(t)])
        with pytest.raises(FitError, match="both signs"):
            fit_ellipse(pts)


class TestFitHalfspaces:
    def test_reference_recovery(self, reference_envelope, reference_per_speed):
        pooled = np.vstack(list(reference_per_speed.values()))
        a_rows, b = fit_halfspaces(pooled)
        for i in range(6):
            row_err = (np.linalg.norm(a_rows[i] - reference_envelope.a_rows[i])
                       / np.linalg.norm(reference_envelope.a_rows[i]))
            assert row_err < 0.05, f"row {i + 1} off by {row_err:.2%}"
            assert b[i] == pytest.approx(reference_envelope.b[i], rel=0.05)

    def test_containment(self, reference_per_speed):
        pooled = np.vstack(list(reference_per_speed.values()))
        a_rows, b = fit_halfspaces(pooled)
        inside = np.all(pooled @ a_rows.T <= b + 1e-9, axis=1)
        assert inside.mean() >= 0.995

    def test_mirror_pair_structure(self, reference_per_speed):
        pooled = np.vstack(list(reference_per_speed.values()))
        a_rows, b = fit_halfspaces(pooled)
        for i in (0, 2, 4):
            np.testing.assert_allclose(a_rows[i] * [1, -1, -1], a_rows[i + 1])
            assert b[i] == b[i + 1]

    def test_box_degenerates_to_zero_slopes(self):
        rng = np.random.default_rng(9)
        samples = rng.uniform([-8, -7, -5], [4, 7, 5], size=(20000, 3))
        a_rows, b = fit_halfspaces(samples)
        # Both slope families collapse onto axis-aligned faces.
        assert abs(a_rows[0, 0]) < 0.05
        assert abs(a_rows[2, 1]) < 0.05 and abs(a_rows[4, 1]) < 0.05
        assert b[2] == pytest.approx(5.0, rel=0.02)
        assert b[0] == pytest.approx(7.0, rel=0.02)

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_halfspaces(np.zeros((4, 3)))


class TestFitAxBounds:
    @staticmethod
    def exact_per_speed(model, speeds, n_interior=500):
        # Repeating the exact extremes makes the order-statistic quantile
        # land on them, so the polynomial fit sees noiseless data.
        rng = np.random.default_rng(11)
        out = {}
        for v in speeds:
            lo, hi = float(model.ax_min(v)), float(model.ax_max(v))
            interior = rng.uniform(lo, hi, n_interior)
            out[v] = np.concatenate([interior, np.full(5, lo), np.full(5, hi)])
        return out

    def test_exact_recovery(self, reference_envelope):
        per_speed = self.exact_per_speed(reference_envelope, (5, 10, 20, 30, 40))
        min_poly, max_poly = fit_ax_bounds(per_speed)
        np.testing.assert_allclose(min_poly, reference_envelope.ax_min_poly, atol=1e-9)
        np.testing.assert_allclose(max_poly, reference_envelope.ax_max_poly, atol=1e-9)

    def test_hand_evaluated_bounds(self, reference_envelope):
        assert reference_envelope.ax_max(20.0) == pytest.approx(4.12)
        assert reference_envelope.ax_min(20.0) == pytest.approx(-9.272)

    def test_speed_independent_data_gives_flat_polys(self):
        per_speed = {v: np.concatenate([np.full(50, -7.0), np.full(50, 3.0)])
                     for v in (5.0, 15.0, 25.0, 35.0)}
        min_poly, max_poly = fit_ax_bounds(per_speed)
        np.testing.assert_allclose(min_poly, [-7.0, 0.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(max_poly, [3.0, 0.0], atol=1e-9)

    def test_needs_three_speeds(self):
        with pytest.raises(FitError, match="3 or more"):
            fit_ax_bounds({5.0: np.zeros(4), 10.0: np.zeros(4)})


class TestEnvelopeModel:
    def test_json_round_trip_is_bitwise(self, reference_envelope):
        text = reference_envelope.to_json()
        again = EnvelopeModel.from_json(text)
        assert again == reference_envelope
        assert again.to_json() == text

    def test_save_load(self, reference_envelope, tmp_path):
        path = tmp_path / "env.json"
        reference_envelope.save(path)
        assert EnvelopeModel.load(path) == reference_envelope

    def test_missing_file(self, tmp_path):
        with pytest.raises(FitError, match="not found"):
            EnvelopeModel.load(tmp_path / "none.json")

    def test_unknown_keys_rejected(self, reference_envelope):
        text = reference_envelope.to_json().replace('"alpha"', '"axes"')
        with pytest.raises(FitError, match="keys"):
            EnvelopeModel.from_json(text)

    def test_wrong_schema_version(self, reference_envelope):
        text = reference_envelope.to_json().replace(
            '"schema_version": 1', '"schema_version": 99')
        with pytest.raises(FitError, match="version"):
            EnvelopeModel.from_json(text)

    def test_speed_clamping(self, reference_envelope):
        assert reference_envelope.ax_max(80.0) == reference_envelope.ax_max(50.0)
        assert reference_envelope.ax_min(-5.0) == reference_envelope.ax_min(0.0)

    def test_validate_rejects_bad_models(self, reference_envelope):
        bad = EnvelopeModel(alpha=-1.0, beta=9.0, a_rows=reference_envelope.a_rows,
                            b=reference_envelope.b,
                            ax_min_poly=reference_envelope.ax_min_poly,
                            ax_max_poly=reference_envelope.ax_max_poly)
        with pytest.raises(FitError):
            bad.validate()
        bad = EnvelopeModel(alpha=9.4, beta=9.0, a_rows=reference_envelope.a_rows,
                            b=np.zeros(6), ax_min_poly=reference_envelope.ax_min_poly,
                            ax_max_poly=reference_envelope.ax_max_poly)
        with pytest.raises(FitError):
            bad.validate()


class TestBuildEnvelope:
    def test_reference_pipeline(self, reference_envelope, reference_per_speed):
        model = build_envelope(reference_per_speed)
        assert model.alpha == pytest.approx(9.4, rel=0.015)
        assert model.beta == pytest.approx(9.0, rel=0.015)
        for i in range(6):
            row_err = (np.linalg.norm(model.a_rows[i] - reference_envelope.a_rows[i])
                       / np.linalg.norm(reference_envelope.a_rows[i]))
            assert row_err < 0.05
            assert model.b[i] == pytest.approx(reference_envelope.b[i], rel=0.05)
        assert model.ax_max(20.0) == pytest.approx(4.12, rel=0.02)
        assert model.ax_min(20.0) == pytest.approx(-9.272, rel=0.02)

    def test_scaled_cloud_gives_nested_model(self, reference_per_speed):
        model = build_envelope(reference_per_speed)
        scaled = {v: 0.3 * arr for v, arr in reference_per_speed.items()}
        small = build_envelope(scaled, FitConfig())
        assert small.alpha < model.alpha and small.beta < model.beta
        assert np.all(small.b <= model.b)
        assert small.ax_max(10.0) < model.ax_max(10.0)
        assert small.ax_min(10.0) > model.ax_min(10.0)

    def test_needs_three_speeds(self, reference_per_speed):
        two = dict(list(reference_per_speed.items())[:2])
        with pytest.raises(FitError, match="3 or more"):
            build_envelope(two)

    def test_rejects_bad_samples(self):
        speeds = {5.0: np.zeros((0, 3)), 10.0: np.ones((4, 3)), 20.0: np.ones((4, 3))}
        with pytest.raises(FitError, match="non-empty"):
            build_envelope(speeds)
        nan = np.ones((10, 3))
        nan[0, 0] = np.nan
        with pytest.raises(FitError, match="non-finite"):
            build_envelope({5.0: nan, 10.0: np.ones((4, 3)), 20.0: np.ones((4, 3))})
