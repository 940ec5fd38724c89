from django.conf import settings

from core.exceptions import ConfigError
from road_anomaly import services
from road_anomaly.management.base import RoadAnomalyCommand


def intensity_edges(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(","))
    except ValueError as e:
        raise ConfigError(f"invalid intensity edges {raw!r}") from e


class Command(RoadAnomalyCommand):
    help = "Score labelled events against one or more detection runs and write metric tables"

    def add_arguments(self, parser):
        parser.add_argument("dataset", help="Dataset directory holding labels.txt and sequences.txt")
        parser.add_argument("runs", nargs="+", help="Run directories written by detect")
        parser.add_argument("--output", required=True, help="Directory for report, ROC and FPR tables")
        parser.add_argument("--folds", type=int, default=settings.ROAD_ANOMALY["FOLDS"])
        parser.add_argument("--seed", type=int, default=settings.ROAD_ANOMALY["SEED"])
        parser.add_argument("--fpr-threshold", type=float, help="Threshold for the FPR curve, defaults to the run's")
        parser.add_argument("--intensity-edges", help="Comma-separated rotation intensity bin edges in radians")
        parser.add_argument("--pulse-duration", type=int, help="Bump duration in frames kept out of the background level")

    def run(self, **options):
        edges = intensity_edges(options["intensity_edges"]) if options["intensity_edges"] else None
        results = services.evaluate_runs(
            options["dataset"],
            options["runs"],
            options["output"],
            folds=options["folds"],
            seed=options["seed"],
            edges=edges,
            fpr_threshold=options["fpr_threshold"],
            pulse_duration=options["pulse_duration"],
        )
        self.emit("run", "subset", "auc", "balanced_accuracy", "balanced_accuracy_std", "f_score", "f_score_std")
        for result in results:
            for subset, report in result.reports.items():
                self.emit(
                    result.name,
                    subset,
                    f"{report.auc:.6f}",
                    f"{report.balanced_accuracy[0]:.6f}",
                    f"{report.balanced_accuracy[1]:.6f}",
                    f"{report.f_score[0]:.6f}",
                    f"{report.f_score[1]:.6f}",
                )
