import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from core.exceptions import ConfigError, EmptyTrack, LengthMismatch, SeriesTooShort
from core.geometry import CameraIntrinsics, CorrespondenceSet, TranslationDirection
from core.pitch_estimator import EstimatorConfig, PitchEstimate, PitchTrack
from core.signal import (
    PipelineConfig,
    VehicleTrack,
    aggregate_vertical,
    compensate,
    detect,
    run_pipeline,
    windowed_std,
)
from core.synth import (
    EGO_PITCH,
    VEHICLE_DISPLACEMENT,
    BumpProfile,
    SceneConfig,
    VehicleConfig,
    generate_sequence,
)

INTR = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, width=1280, height=720)
FORWARD = TranslationDirection()
CLEAN = SceneConfig(duration=150, noise_sigma=0.0, outlier_fraction=0.0, n_static_points=120)


def constant_track(values):
    y = np.asarray(values, dtype=float)
    return VehicleTrack(x=np.zeros_like(y), y=y, valid=np.ones(y.shape, dtype=bool))


class AggregateVerticalTests(SimpleTestCase):
    def test_constant(self):
        series = aggregate_vertical(constant_track(np.full((5, 3), 100.0)))
        assert_array_equal(series.values, 100.0)
        self.assertFalse(series.interpolated.any())

    def test_mean_of_valid_points(self):
        track = VehicleTrack(x=np.zeros((1, 4)), y=[[10, 20, 30, 1000]], valid=[[True, True, True, False]])
        self.assertEqual(aggregate_vertical(track).values[0], 20.0)

    def test_interpolates_empty_frame(self):
        track = VehicleTrack(x=np.zeros((3, 1)), y=[[10.0], [99.0], [20.0]], valid=[[True], [False], [True]])
        series = aggregate_vertical(track)
        self.assertEqual(series.values[1], 15.0)
        assert_array_equal(series.interpolated, [False, True, False])

    def test_non_finite_points_are_invalid(self):
        track = VehicleTrack(x=np.zeros((1, 2)), y=[[np.nan, 4.0]], valid=[[True, True]])
        self.assertEqual(aggregate_vertical(track).values[0], 4.0)

    def test_empty_track(self):
        track = VehicleTrack(x=np.zeros((2, 2)), y=np.zeros((2, 2)), valid=np.zeros((2, 2), dtype=bool))
        with self.assertRaises(EmptyTrack):
            aggregate_vertical(track)

    def test_point_limit(self):
        with self.assertRaises(ConfigError):
            constant_track(np.zeros((2, 401)))


class CompensateTests(SimpleTestCase):
    def test_zero_pitch(self):
        assert_array_equal(compensate([1.0, 2.0], [0.0, 0.0], INTR), [1.0, 2.0])

    def test_image_row_sign(self):
        # positive pitch lifts the vehicle in the image, so the row is pushed back down
        assert_allclose(compensate([105.0], [0.01], INTR), [105.0 + 1000 * np.tan(0.01)])
        self.assertAlmostEqual(compensate([105.0], [0.01], INTR)[0], 115.00033, places=5)
        self.assertAlmostEqual(compensate([105.0], [-0.01], INTR)[0], 94.99967, places=5)

    def test_accepts_pitch_track(self):
        estimate = PitchEstimate(0.01, 0.01, 0.0, 1, 10, 0, True)
        track = PitchTrack.from_estimates([estimate])
        assert_allclose(compensate([5.0, 5.0], track, INTR), [5.0, 5.0 + 1000 * np.tan(0.01)])

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatch):
            compensate([1.0, 2.0, 3.0], [0.0, 0.0], INTR)

    def test_removes_ego_pitch(self):
        bump = BumpProfile(EGO_PITCH, apex_frame=75, duration=11, amplitude=0.02)
        sequence = generate_sequence(CLEAN, [bump], VehicleConfig(distance=15.0), INTR)
        response, _ = run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD)
        raw = np.abs(response.y_hat - response.y_hat.mean()).max()
        compensated = np.abs(response.y_comp - response.y_comp.mean()).max()
        self.assertGreater(raw, 15.0)
        self.assertLess(compensated, 0.1 * raw)
        self.assertLess(np.abs(response.y_comp - response.y_comp[0]).max(), 0.05)


class WindowedStdTests(SimpleTestCase):
    def test_constant_series(self):
        s = windowed_std(np.full(10, 3.0), 4)
        self.assertTrue(np.isnan(s[:3]).all())
        assert_allclose(s[3:], 0.0, atol=1e-15)

    def test_population_std(self):
        self.assertAlmostEqual(windowed_std([1.0, 2.0, 3.0], 3)[2], np.sqrt(2 / 3))

    def test_homogeneous_and_translation_invariant(self):
        y = np.random.default_rng(0).normal(size=100)
        s = windowed_std(y, 30)
        assert_allclose(windowed_std(2 * y, 30), 2 * s)
        assert_allclose(windowed_std(y + 500.0, 30), s, atol=1e-9)

    def test_matches_direct_evaluation(self):
        y = np.random.default_rng(1).normal(scale=5.0, size=80)
        s = windowed_std(y, 30)
        for t in range(29, 80):
            window = y[t - 29 : t + 1]
            self.assertAlmostEqual(s[t], np.sqrt(np.mean((window - window.mean()) ** 2)), delta=1e-9)

    def test_too_short(self):
        with self.assertRaises(SeriesTooShort):
            windowed_std([1.0, 2.0], 3)


class DetectTests(SimpleTestCase):
    def test_single_peak(self):
        events = detect([0, 0, 5, 0, 0], threshold=1)
        self.assertEqual([(e.frame, e.response) for e in events], [(2, 5.0)])

    def test_suppression(self):
        events = detect([0, 3, 0, 4, 0], threshold=1, nms_radius=2)
        self.assertEqual([e.frame for e in events], [3])

    def test_below_threshold(self):
        self.assertEqual(detect(np.full(20, 0.1), threshold=1), [])

    def test_plateau_reported_once_at_first_frame(self):
        events = detect([0, 2, 2, 2, 0], threshold=1)
        self.assertEqual([e.frame for e in events], [1])

    def test_undefined_frames_are_skipped(self):
        events = detect([np.nan, np.nan, 2.0, 1.0, 3.0, 0.0], threshold=1, nms_radius=1, window=2)
        self.assertEqual([e.frame for e in events], [2, 4])
        self.assertEqual(events[1].window, (3, 4))

    def test_idempotent(self):
        s = np.abs(np.random.default_rng(4).normal(size=300)) * 3
        events = detect(s, threshold=1, nms_radius=10)
        survivors = np.zeros_like(s)
        for e in events:
            survivors[e.frame] = e.response
        self.assertEqual(detect(survivors, threshold=1, nms_radius=10), events)

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigError):
            detect([1.0], threshold=0)
        with self.assertRaises(ConfigError):
            detect([1.0], threshold=1, nms_radius=0)


class RunPipelineTests(SimpleTestCase):
    def test_flat_road_has_no_detections(self):
        sequence = generate_sequence(CLEAN, [], VehicleConfig(), INTR)
        response, detections = run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD, PipelineConfig(threshold=1e-6))
        self.assertEqual(detections, [])
        self.assertEqual(len(response.s), 150)

    def test_bump_detected_near_apex(self):
        bump = BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=80, duration=11, amplitude=0.06)
        sequence = generate_sequence(CLEAN, [bump], VehicleConfig(distance=10.0), INTR)
        _, detections = run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD)
        self.assertEqual(len(detections), 1)
        self.assertLessEqual(abs(detections[0].frame - 80), 15)

    def test_compensation_lowers_background_under_ego_bump(self):
        bump = BumpProfile(EGO_PITCH, apex_frame=75, duration=11, amplitude=0.02)
        sequence = generate_sequence(CLEAN, [bump], VehicleConfig(), INTR)
        on, _ = run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD)
        off, _ = run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD, PipelineConfig(compensation=False))
        self.assertGreater(np.nanmax(off.s), np.nanmax(on.s))
        assert_array_equal(off.y_comp, off.y_hat)
        assert_allclose(on.s_uncompensated, off.s, equal_nan=True)

    def test_misaligned_inputs(self):
        track = constant_track(np.full((10, 4), 50.0))
        sets = [CorrespondenceSet.empty(k) for k in range(5)]
        with self.assertRaises(LengthMismatch):
            run_pipeline(track, sets, INTR, FORWARD)

    def test_empty_sets_hold_zero_pitch(self):
        track = constant_track(np.full((40, 4), 50.0))
        sets = [CorrespondenceSet.empty(k) for k in range(39)]
        response, detections = run_pipeline(track, sets, INTR, FORWARD)
        self.assertTrue(response.pitch.held[1:].all())
        assert_array_equal(response.y_comp, 50.0)
        self.assertEqual(detections, [])

    def test_external_pitch_source(self):
        bump = BumpProfile(EGO_PITCH, apex_frame=75, duration=11, amplitude=0.02)
        sequence = generate_sequence(CLEAN, [bump], VehicleConfig(distance=15.0), INTR)
        cfg = PipelineConfig(pitch_source="external")
        response, _ = run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD, cfg, external_pitch=sequence.truth.pitch)
        assert_array_equal(response.compensation_angle, sequence.truth.pitch)
        with self.assertRaises(ConfigError):
            run_pipeline(sequence.track, sequence.correspondences, INTR, FORWARD, cfg)

    def test_fallback_uses_external_increments_on_held_frames(self):
        sequence = generate_sequence(SceneConfig(duration=40, noise_sigma=0.0, outlier_fraction=0.0), [], VehicleConfig(), INTR)
        sets = list(sequence.correspondences)
        sets[10] = CorrespondenceSet.empty(10)
        external = np.linspace(0.0, 0.039, 40)
        cfg = PipelineConfig(pitch_source="fallback", estimator=EstimatorConfig())
        response, _ = run_pipeline(sequence.track, sets, INTR, FORWARD, cfg, external_pitch=external)
        angles = response.compensation_angle
        self.assertTrue(response.pitch.held[11])
        self.assertAlmostEqual(angles[11] - angles[10], 0.001, places=9)
        self.assertLess(abs(angles[12] - angles[11]), 1e-6)
