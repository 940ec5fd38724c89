from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from core.evaluation import ANOMALY, LabeledEvent, score_events
from core.geometry import CameraIntrinsics, TranslationDirection
from core.signal import ResponseSeries
from road_anomaly.services import Dataset, distance_rows

INTR = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, width=1280, height=720)


class DistanceRowsTests(SimpleTestCase):
    def setUp(self):
        # pulse at 20 seen through a 4-frame window reaches frames 16..35
        s = np.ones(36)
        s[:10] = np.nan
        s[16:] = 5.0
        self.response = ResponseSeries(
            y_hat=np.zeros(36),
            y_comp=np.zeros(36),
            s=s,
            window=4,
            s_uncompensated=s.copy(),
            interpolated=np.zeros(36, dtype=bool),
        )
        sequences = pd.DataFrame({"sequence": ["a"], "distance": [10.0], "subset": ["easy"], "frames": [36]})
        self.dataset = Dataset(Path("."), INTR, TranslationDirection(), sequences, [])
        self.events = [LabeledEvent("a", 20, ANOMALY)]

    def rows(self, pulse_duration):
        responses = {"a": self.response}
        return distance_rows(self.dataset, responses, score_events(self.events, responses), self.events, pulse_duration)

    def test_background_excludes_whole_pulse(self):
        self.assertEqual(self.rows(11), [("a", 10.0, 5.0, 1.0)])

    def test_short_pulse_leaks_into_background(self):
        self.assertEqual(self.rows(2)[0][3], 5.0)
