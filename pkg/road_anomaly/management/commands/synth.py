from road_anomaly import services
from road_anomaly.management.base import RoadAnomalyCommand, load_json


class Command(RoadAnomalyCommand):
    help = "Generate a synthetic dataset (correspondences, vehicle tracks, labels, true pitch)"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON document with calibration, scene, vehicle, sequences and suite")
        parser.add_argument("--output", required=True, help="Dataset directory to write")
        parser.add_argument("--seed", type=int, help="Override scene.seed")
        self.add_workers_argument(parser)

    def run(self, **options):
        doc = load_json(options["config"])
        dataset = services.synthesize_dataset(doc, options["output"], seed=options["seed"], workers=options["workers"])
        anomalies = {}
        for event in dataset.labels:
            anomalies[event.sequence] = anomalies.get(event.sequence, 0) + int(event.positive)
        for row in dataset.sequences.itertuples(index=False):
            self.emit(row.sequence, row.frames, anomalies.get(row.sequence, 0))
