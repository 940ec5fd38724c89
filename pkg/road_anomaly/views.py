"""
JSON API over the detection pipeline and the signal model fit
"""
import json
import logging

from django.http import JsonResponse
from django.utils import timezone
from django.views.decorators.csrf import csrf_exempt
from django.views.decorators.http import require_GET, require_POST

from . import services

logger = logging.getLogger("road_anomaly.api")


def _json_body(request):
    try:
        data = json.loads(request.body)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None
    return data if isinstance(data, dict) else None


@require_GET
def health_check(request):
    """Simple health check endpoint"""
    return JsonResponse({
        "status": "ok",
        "timestamp": timezone.now().isoformat(),
        "server": "road_anomaly"
    })


@csrf_exempt
@require_POST
def detect_api(request):
    """
    Run pitch estimation, compensation and detection on one sequence.

    Expected JSON payload:
    {
        "calibration": {"fx": 1000, "fy": 1000, "cx": 640, "cy": 360,
                        "width": 1280, "height": 720, "t": [0, 0, 1]},
        "track": {"y": [[...points of frame 0...], ...], "x": ..., "valid": ..., "fps": 30},
        "correspondences": [{"p0": [[x, y], ...], "p1": [[x, y], ...], "is_static": [...]}, ...],
        "config": {"window": 30, "threshold": 1.0, "compensation": true},
        "external_pitch": [...]   # optional, with config.pitch_source
    }

    Returns {"ok": true, "detections": [...], "response": {...}}
    """
    data = _json_body(request)
    if data is None:
        return JsonResponse({"ok": False, "error": "Invalid JSON format"}, status=400)
    try:
        result = services.detect_payload(data)
    except Exception:
        logger.exception("detect API failed")
        return JsonResponse({"ok": False, "error": "Internal error"}, status=500)
    if not result["ok"]:
        logger.info(f"detect API rejected payload: {result['error']}")
        return JsonResponse(result, status=400)
    return JsonResponse(result)


@csrf_exempt
@require_POST
def fit_model_api(request):
    """
    Fit s = alpha * f * delta / d + beta.

    Expected JSON payload:
    {"samples": [[distance, response], ...], "f": 1000, "delta": 0.06,
     "pulse_duration": 11, "window": 30}   # last two optional
    """
    data = _json_body(request)
    if data is None:
        return JsonResponse({"ok": False, "error": "Invalid JSON format"}, status=400)
    try:
        result = services.fit_model_payload(data)
    except Exception:
        logger.exception("fit-model API failed")
        return JsonResponse({"ok": False, "error": "Internal error"}, status=500)
    return JsonResponse(result, status=200 if result["ok"] else 400)
