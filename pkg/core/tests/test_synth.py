import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from core.evaluation import compare_pitch_tracks
from core.exceptions import ConfigError, DegenerateFit, DomainError
from core.geometry import CameraIntrinsics, TranslationDirection, fundamental_from_pitch, sampson_errors
from core.pitch_estimator import PitchTrack, estimate_pitch_track
from core.signal import PipelineConfig, run_pipeline
from core.synth import (
    EGO_PITCH,
    VEHICLE_DISPLACEMENT,
    BumpProfile,
    SceneConfig,
    VehicleConfig,
    build_suite,
    config_from_dict,
    default_bump_duration,
    fit_signal_model,
    generate_sequence,
    predict_response,
    pulse_response_factor,
    response_vs_distance_experiment,
)

HD = CameraIntrinsics(fx=1066.0, fy=1066.0, cx=960.0, cy=540.0, width=1920, height=1080)
FORWARD = TranslationDirection()
CLEAN = SceneConfig(duration=120, noise_sigma=0.0, outlier_fraction=0.0, n_static_points=100)
DISTANCES = (5.0, 10.0, 15.0, 20.0, 30.0, 40.0)


class ConfigTests(SimpleTestCase):
    def test_scene_invariants(self):
        with self.assertRaises(ConfigError):
            SceneConfig(depth_min=10.0, depth_max=5.0)
        with self.assertRaises(ConfigError):
            SceneConfig(outlier_fraction=0.5)

    def test_bump_invariants(self):
        with self.assertRaises(ConfigError):
            BumpProfile(EGO_PITCH, apex_frame=10, amplitude=-0.01)
        with self.assertRaises(ConfigError):
            BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=10, duration=1)
        with self.assertRaises(ConfigError):
            BumpProfile("pothole", apex_frame=10)

    def test_vehicle_invariants(self):
        with self.assertRaises(ConfigError):
            VehicleConfig(distance=1.0)
        with self.assertRaises(ConfigError):
            VehicleConfig(n_points=3)
        with self.assertRaises(ConfigError):
            VehicleConfig(n_points=401)
        rows, cols = VehicleConfig(n_points=400).grid_shape
        self.assertLessEqual(rows * cols, 400)

    def test_from_dict(self):
        vehicle = config_from_dict(VehicleConfig, {"distance": [5.0, 6.0, 7.0]})
        assert_array_equal(vehicle.distances(3), [5.0, 6.0, 7.0])
        with self.assertRaisesMessage(ConfigError, "colour"):
            config_from_dict(VehicleConfig, {"colour": "red"})

    def test_default_bump_duration(self):
        self.assertEqual(default_bump_duration(5.56, 30.0), 11)

    def test_half_sine(self):
        values = BumpProfile(EGO_PITCH, apex_frame=20, duration=11, amplitude=0.03).values(40)
        self.assertEqual(values[20], 0.03)
        self.assertEqual(int(np.argmax(values)), 20)
        self.assertEqual(np.count_nonzero(values), 11)
        assert_allclose(values[15:26], values[15:26][::-1])


class GenerateSequenceTests(SimpleTestCase):
    def test_no_excitation(self):
        sequence = generate_sequence(CLEAN, [], VehicleConfig(), HD)
        F = fundamental_from_pitch(HD, FORWARD, 0.0)
        for cs in sequence.correspondences[:10]:
            p0, p1 = cs.static()
            errors, _ = sampson_errors(p0, p1, F)
            self.assertLess(np.nanmax(errors), 1e-12)
        y_hat = sequence.track.y.mean(axis=1)
        assert_allclose(y_hat, y_hat[0], atol=1e-9)
        self.assertEqual(sequence.truth.apex_frames, [])

    def test_shapes(self):
        sequence = generate_sequence(CLEAN, [], VehicleConfig(n_points=100), HD)
        self.assertEqual(len(sequence.correspondences), 119)
        self.assertEqual(sequence.track.y.shape, (120, 96))
        # static points followed by vehicle matches flagged non-static
        cs = sequence.correspondences[0]
        self.assertEqual(len(cs), 120)
        self.assertEqual(int(cs.is_static.sum()), 100)

    def test_static_pairs_follow_true_pitch(self):
        bump = BumpProfile(EGO_PITCH, apex_frame=60, duration=15, amplitude=0.03)
        sequence = generate_sequence(CLEAN, [bump], VehicleConfig(), HD)
        assert_allclose(sequence.truth.pitch, bump.values(120))
        for k in (50, 55, 62):
            p0, p1 = sequence.correspondences[k].static()
            F = fundamental_from_pitch(HD, FORWARD, sequence.truth.relative_pitch[k])
            self.assertLess(np.nanmax(sampson_errors(p0, p1, F)[0]), 1e-12)

    def test_displacement_deflection(self):
        bump = BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=60, duration=11, amplitude=0.06)
        sequence = generate_sequence(CLEAN, [bump], VehicleConfig(distance=10.0), HD)
        y_hat = sequence.track.y.mean(axis=1)
        deflection = np.abs(y_hat - y_hat[0]).max()
        self.assertAlmostEqual(deflection, 6.396, delta=0.02 * 6.396)
        self.assertEqual(int(np.argmax(np.abs(y_hat - y_hat[0]))), 60)
        self.assertEqual(sequence.truth.apex_frames, [60])

    def test_outliers_and_noise(self):
        scene = SceneConfig(duration=5, noise_sigma=0.5, outlier_fraction=0.2, n_static_points=100, outliers_static=False)
        cs = generate_sequence(scene, [], VehicleConfig(), HD).correspondences[0]
        self.assertEqual(int(cs.is_static.sum()), 80)

    def test_deterministic(self):
        scene = SceneConfig(duration=20, seed=42)
        a = generate_sequence(scene, [], VehicleConfig(), HD)
        b = generate_sequence(scene, [], VehicleConfig(), HD)
        assert_array_equal(a.track.y, b.track.y)
        assert_array_equal(a.correspondences[7].p1, b.correspondences[7].p1)
        assert_array_equal(a.truth.imu_pitch, b.truth.imu_pitch)
        c = generate_sequence(SceneConfig(duration=20, seed=43), [], VehicleConfig(), HD)
        self.assertFalse(np.array_equal(a.track.y, c.track.y))

    def test_apex_outside_sequence(self):
        with self.assertRaises(ConfigError):
            generate_sequence(CLEAN, [BumpProfile(EGO_PITCH, apex_frame=500)], VehicleConfig(), HD)

    def test_visual_pitch_beats_drifting_gyro(self):
        scene = SceneConfig(duration=150, noise_sigma=0.5, outlier_fraction=0.1, n_static_points=200)
        bumps = [BumpProfile(EGO_PITCH, apex_frame=50, duration=11, amplitude=0.02), BumpProfile(EGO_PITCH, apex_frame=110, duration=11, amplitude=0.015)]
        sequence = generate_sequence(scene, bumps, VehicleConfig(), HD)
        visual = PitchTrack.from_estimates(estimate_pitch_track(sequence.correspondences, HD, FORWARD))
        visual_error = compare_pitch_tracks(visual, sequence.truth.pitch)
        gyro_error = compare_pitch_tracks(sequence.truth.imu_pitch, sequence.truth.pitch)
        self.assertLess(visual_error.rms, gyro_error.rms)


class SignalModelTests(SimpleTestCase):
    def test_predict_response(self):
        self.assertAlmostEqual(predict_response(10.0, 0.06, 1066.0), 6.396)
        self.assertEqual(predict_response(7.0, 0.0, 1066.0, beta=0.4), 0.4)
        self.assertAlmostEqual(predict_response(5.0, 0.06, 1066.0), 2 * predict_response(10.0, 0.06, 1066.0))
        with self.assertRaises(DomainError):
            predict_response(0.0, 0.06, 1066.0)

    def test_exact_fit(self):
        samples = [(d, predict_response(d, 0.06, 1066.0, 1.0, 2.0)) for d in DISTANCES]
        fit = fit_signal_model(samples, 1066.0, 0.06)
        self.assertAlmostEqual(fit.alpha, 1.0, places=9)
        self.assertAlmostEqual(fit.beta, 2.0, places=9)
        self.assertLess(fit.residual, 1e-9)

    def test_two_point_solve(self):
        fit = fit_signal_model([(10.0, 6.396 + 2), (20.0, 3.198 + 2)], 1066.0, 0.06)
        self.assertAlmostEqual(fit.alpha, 1.0, places=9)
        self.assertAlmostEqual(fit.beta, 2.0, places=9)

    def test_degenerate(self):
        with self.assertRaises(DegenerateFit):
            fit_signal_model([(10.0, 1.0), (10.0, 2.0)], 1066.0, 0.06)
        with self.assertRaises(DegenerateFit):
            fit_signal_model([(10.0, 1.0)], 1066.0, 0.06)

    def test_pulse_response_factor(self):
        factor = pulse_response_factor(11, 30)
        self.assertGreater(factor, 0.3)
        self.assertLess(factor, 0.5)


class ResponseVsDistanceTests(SimpleTestCase):
    scene = SceneConfig(duration=150, noise_sigma=0.0, outlier_fraction=0.0, n_static_points=100)

    def test_noise_free_law(self):
        rows = response_vs_distance_experiment(DISTANCES, self.scene, VehicleConfig(), HD)
        apex = [r.s_apex for r in rows]
        self.assertTrue(all(a > b for a, b in zip(apex, apex[1:])))

        fit = fit_signal_model([(r.distance, r.s_apex) for r in rows], HD.fy, 0.06)
        self.assertGreater(fit.r_squared, 0.95)
        ratio = fit.alpha / pulse_response_factor(default_bump_duration(), 30)
        self.assertTrue(0.9 <= ratio <= 1.1, ratio)

        deflection = fit_signal_model([(r.distance, r.peak_deflection) for r in rows], HD.fy, 0.06)
        self.assertTrue(0.9 <= deflection.alpha <= 1.1, deflection.alpha)

    def test_no_event(self):
        flat = BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=75, duration=11, amplitude=0.0)
        for row in response_vs_distance_experiment((5.0, 20.0), self.scene, VehicleConfig(), HD, bump=flat):
            self.assertAlmostEqual(row.s_apex, row.s_background, places=6)

    def test_calibrated_noise(self):
        scene = SceneConfig(duration=150)
        rows = response_vs_distance_experiment((5.0, 10.0, 15.0), scene, VehicleConfig(), HD)
        for row in rows:
            self.assertGreater(row.s_apex, row.s_background)


class SuiteTests(SimpleTestCase):
    def test_distance_suite(self):
        plans = build_suite("distance", SceneConfig())
        self.assertEqual([s.distance for s in plans], list(DISTANCES))
        self.assertTrue(all(len(s.apex_frames) == 1 for s in plans))

    def test_hard_suite(self):
        plans = build_suite("hard", SceneConfig(), positives=4, negatives=3, seed=1)
        self.assertEqual(len(plans), 7)
        positives = plans[:4]
        self.assertTrue(all({b.kind for b in s.bumps} == {EGO_PITCH, VEHICLE_DISPLACEMENT} for s in positives))
        negatives = plans[4:]
        self.assertTrue(all(s.apex_frames == [] and len(s.background_frames) == 1 for s in negatives))
        self.assertTrue(all(s.subset == "hard" for s in plans))

    def test_flat_and_unknown(self):
        plans = build_suite("flat", SceneConfig(), negatives=2)
        self.assertTrue(all(s.bumps == () for s in plans))
        with self.assertRaises(ConfigError):
            build_suite("bumpy", SceneConfig())
        with self.assertRaises(ConfigError):
            build_suite("ego", SceneConfig(), positives=1)

    def test_deterministic(self):
        self.assertEqual(build_suite("hard", SceneConfig(), 3, 3, seed=5), build_suite("hard", SceneConfig(), 3, 3, seed=5))

    def test_pipeline_runs_on_suite_sequence(self):
        plan = build_suite("easy", SceneConfig(duration=120), positives=1, seed=3)[0]
        scene = SceneConfig(duration=120, noise_sigma=0.0, outlier_fraction=0.0, n_static_points=80)
        sequence = generate_sequence(scene, plan.bumps, VehicleConfig(distance=plan.distance), HD)
        _, detections = run_pipeline(sequence.track, sequence.correspondences, HD, FORWARD, PipelineConfig(threshold=0.3))
        self.assertEqual(len(detections), 1)
