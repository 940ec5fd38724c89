from django.conf import settings

from core.signal import PITCH_SOURCES
from road_anomaly import services
from road_anomaly.management.base import RoadAnomalyCommand, load_json


class Command(RoadAnomalyCommand):
    help = "Estimate pitch, compensate and detect road anomalies for every sequence of a dataset"

    def add_arguments(self, parser):
        parser.add_argument("dataset", help="Dataset directory (calibration.txt, sequences.txt, <sequence>/...)")
        parser.add_argument("--output", required=True, help="Run directory to write")
        parser.add_argument("--config", help="JSON run options: window, threshold, nms_radius, compensation, pitch_source, estimator, seed")
        parser.add_argument("--calibration", help="Calibration file, defaults to <dataset>/calibration.txt")
        parser.add_argument("--sequence", action="append", help="Only process this sequence id (repeatable)")
        parser.add_argument("--threshold", type=float, help="Detection threshold in pixels")
        parser.add_argument("--window", type=int, help="Response window T in frames")
        parser.add_argument("--nms-radius", type=int, help="Suppression radius in frames, defaults to T")
        parser.add_argument("--no-compensation", action="store_true", help="Skip ego pitch compensation")
        parser.add_argument("--pitch-source", choices=PITCH_SOURCES, help="Angles used for compensation")
        parser.add_argument("--external-pitch", help="Pitch table per sequence (relative to the sequence directory)")
        parser.add_argument("--external-column", default="imu_pitch", help="Column of the external pitch table")
        parser.add_argument("--seed", type=int, default=settings.ROAD_ANOMALY["SEED"])
        self.add_workers_argument(parser)

    def run(self, **options):
        overrides = load_json(options["config"])
        seed = overrides.pop("seed", options["seed"])
        flags = {
            "threshold": options["threshold"],
            "window": options["window"],
            "nms_radius": options["nms_radius"],
            "pitch_source": options["pitch_source"],
        }
        overrides.update({k: v for k, v in flags.items() if v is not None})
        if options["no_compensation"]:
            overrides["compensation"] = False
        cfg = services.pipeline_config(overrides)

        summaries = services.run_detection(
            options["dataset"],
            options["output"],
            cfg,
            sequences=options["sequence"],
            calibration=options["calibration"],
            workers=options["workers"],
            external_pitch=options["external_pitch"],
            external_column=options["external_column"],
            seed=seed,
        )
        for summary in summaries:
            for frame, response in summary.detections:
                self.emit(summary.sequence, frame, f"{response:.4f}")
