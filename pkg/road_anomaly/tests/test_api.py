import json

from django.test import SimpleTestCase
from django.urls import reverse

from core.geometry import CameraIntrinsics
from core.synth import VEHICLE_DISPLACEMENT, BumpProfile, SceneConfig, VehicleConfig, generate_sequence

INTR = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, width=1280, height=720)


def sequence_payload(bumps=(), duration=90):
    scene = SceneConfig(duration=duration, noise_sigma=0.0, outlier_fraction=0.0, n_static_points=40, n_vehicle_matches=0)
    sequence = generate_sequence(scene, bumps, VehicleConfig(n_points=16), INTR)
    return {
        "calibration": INTR.as_dict(),
        "track": {"x": sequence.track.x.tolist(), "y": sequence.track.y.tolist(), "fps": 30},
        "correspondences": [
            {"p0": cs.p0.tolist(), "p1": cs.p1.tolist(), "is_static": cs.is_static.tolist()}
            for cs in sequence.correspondences
        ],
        "config": {"threshold": 0.3},
    }


class ApiTestCase(SimpleTestCase):
    def post(self, name, payload):
        body = payload if isinstance(payload, str) else json.dumps(payload)
        return self.client.post(reverse(name), data=body, content_type="application/json")


class HealthCheckTests(ApiTestCase):
    def test_ok(self):
        response = self.client.get(reverse("road_anomaly:health_check"))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()["status"], "ok")

    def test_root_redirects_to_health(self):
        response = self.client.get("/")
        self.assertRedirects(response, reverse("road_anomaly:health_check"))

    def test_post_not_allowed(self):
        self.assertEqual(self.client.post(reverse("road_anomaly:health_check")).status_code, 405)


class DetectApiTests(ApiTestCase):
    def test_detects_vehicle_bump(self):
        payload = sequence_payload([BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=45, duration=11, amplitude=0.06)])
        response = self.post("road_anomaly:api_detect", payload)
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertTrue(data["ok"])
        self.assertEqual(len(data["detections"]), 1)
        self.assertLessEqual(abs(data["detections"][0]["frame"] - 45), 30)
        self.assertEqual(len(data["response"]["s"]), 90)
        self.assertIsNone(data["response"]["s"][0])

    def test_flat_road(self):
        data = self.post("road_anomaly:api_detect", sequence_payload()).json()
        self.assertEqual(data["detections"], [])
        self.assertEqual(set(data["response"]["held"]), {0})
        self.assertEqual(set(data["response"]["interpolated"]), {0})

    def test_invalid_json(self):
        response = self.post("road_anomaly:api_detect", "{not json")
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()["error"], "Invalid JSON format")

    def test_missing_track(self):
        response = self.post("road_anomaly:api_detect", {"correspondences": []})
        self.assertEqual(response.status_code, 400)
        self.assertIn("track", response.json()["error"])

    def test_misaligned_correspondences(self):
        payload = sequence_payload(duration=40)
        payload["correspondences"] = payload["correspondences"][:10]
        response = self.post("road_anomaly:api_detect", payload)
        self.assertEqual(response.status_code, 400)
        self.assertFalse(response.json()["ok"])

    def test_get_not_allowed(self):
        self.assertEqual(self.client.get(reverse("road_anomaly:api_detect")).status_code, 405)


class FitModelApiTests(ApiTestCase):
    def test_two_distances(self):
        data = self.post("road_anomaly:api_fit_model", {"samples": [[10, 6.0], [20, 3.0]], "f": 1000, "delta": 0.06}).json()
        self.assertTrue(data["ok"])
        self.assertAlmostEqual(data["alpha"], 1.0, places=9)
        self.assertAlmostEqual(data["beta"], 0.0, places=9)
        self.assertNotIn("shape_factor", data)

    def test_shape_factor(self):
        payload = {"samples": [[10, 6.0], [20, 3.0]], "f": 1000, "delta": 0.06, "pulse_duration": 11, "window": 30}
        data = self.post("road_anomaly:api_fit_model", payload).json()
        self.assertAlmostEqual(data["alpha_normalized"] * data["shape_factor"], data["alpha"])

    def test_degenerate(self):
        response = self.post("road_anomaly:api_fit_model", {"samples": [[10, 1.0], [10, 2.0]], "f": 1000, "delta": 0.06})
        self.assertEqual(response.status_code, 400)
        self.assertFalse(response.json()["ok"])
