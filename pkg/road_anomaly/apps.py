from django.apps import AppConfig


class RoadAnomalyConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "road_anomaly"
    verbose_name = "Road anomaly detection"
