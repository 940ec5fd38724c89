from django.urls import path, include
from django.views.generic import RedirectView
from django.http import HttpResponse


def favicon_view(request):
    return HttpResponse("", content_type="image/x-icon")


urlpatterns = [
    path("", RedirectView.as_view(url="/road_anomaly/health/", permanent=False)),
    path("road_anomaly/", include("road_anomaly.urls")),
    path("favicon.ico", favicon_view),
]
