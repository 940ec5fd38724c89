from django.conf import settings

from road_anomaly import formats, services
from road_anomaly.management.base import RoadAnomalyCommand


class Command(RoadAnomalyCommand):
    help = "Fit s = alpha * f * delta / d + beta to a response-vs-distance table"

    def add_arguments(self, parser):
        parser.add_argument("table", help="response_distance.txt written by eval")
        parser.add_argument("--f", type=float, required=True, help="Focal length in pixels")
        parser.add_argument("--delta", type=float, required=True, help="Anomaly height in metres")
        parser.add_argument("--column", default="s_apex", help="Response column to fit")
        parser.add_argument("--output", help="Also write the fit to this file")
        parser.add_argument("--pulse-duration", type=int, help="Bump duration in frames; reports alpha over the pulse shape factor")
        parser.add_argument("--window", type=int, default=settings.ROAD_ANOMALY["WINDOW"])

    def run(self, **options):
        fit = services.fit_model_table(options["table"], options["f"], options["delta"], options["column"])
        values = {
            "alpha": fit.alpha,
            "beta": fit.beta,
            "residual": fit.residual,
            "r_squared": fit.r_squared,
        }
        factor = services.shape_factor(options["pulse_duration"], options["window"])
        if factor:
            values["shape_factor"] = factor
            values["alpha_normalized"] = fit.alpha / factor

        self.emit(*values)
        self.emit(*(f"{v:.9g}" for v in values.values()))
        if options["output"]:
            formats.write_key_values(options["output"], "signal_model", values)
