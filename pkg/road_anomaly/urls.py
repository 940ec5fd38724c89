from django.urls import path
from . import views

app_name = 'road_anomaly'

urlpatterns = [
    path('health/', views.health_check, name='health_check'),

    # Pipeline endpoints
    path('api/detect/', views.detect_api, name='api_detect'),
    path('api/fit-model/', views.fit_model_api, name='api_fit_model'),
]
