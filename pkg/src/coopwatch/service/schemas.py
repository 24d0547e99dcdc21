"""JSON Schemas (draft 2020-12) for every HTTP response body."""

_BOX = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_TIMESTAMP = {
    "type": "string",
    "pattern": r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$",
}

DETECTION = {
    "type": "object",
    "required": ["class_name", "class_id", "confidence", "box"],
    "additionalProperties": False,
    "properties": {
        "class_name": {"type": "string", "minLength": 1},
        "class_id": {"type": "integer", "minimum": 0},
        "confidence": {"type": "number", "minimum": 0, "maximum": 1},
        "box": _BOX,
    },
}

PREDICTION = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "PredictionResponse",
    "type": "object",
    "required": ["image_id", "model_tag", "detections", "verdict", "timestamp"],
    "additionalProperties": False,
    "properties": {
        "image_id": {"type": "string"},
        "model_tag": {"type": "string"},
        "detections": {"type": "array", "items": DETECTION},
        "verdict": {"enum": ["healthy", "disease_suspected", "no_birds"]},
        "timestamp": _TIMESTAMP,
    },
}

ALERT_EVENT = {
    "type": "object",
    "required": ["seq", "stream_id", "class_name", "window_frame_ids", "triggered_at", "rule"],
    "additionalProperties": False,
    "properties": {
        "seq": {"type": "integer", "minimum": 1},
        "stream_id": {"type": "string", "minLength": 1},
        "class_name": {"type": "string", "minLength": 1},
        "window_frame_ids": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "triggered_at": _TIMESTAMP,
        "rule": {
            "type": "object",
            "required": ["confidence_floor", "window_size", "min_hits", "enabled"],
            "properties": {
                "confidence_floor": {"type": "number", "minimum": 0, "maximum": 1},
                "window_size": {"type": "integer", "minimum": 1},
                "min_hits": {"type": "integer", "minimum": 1},
                "enabled": {"type": "object", "additionalProperties": {"type": "boolean"}},
            },
        },
    },
}

FRAME = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "FrameResponse",
    "type": "object",
    "required": ["stream_id", "prediction", "alerts"],
    "additionalProperties": False,
    "properties": {
        "stream_id": {"type": "string", "minLength": 1},
        "prediction": PREDICTION,
        "alerts": {"type": "array", "items": ALERT_EVENT},
    },
}

ALERTS = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "AlertList",
    "type": "object",
    "required": ["alerts"],
    "additionalProperties": False,
    "properties": {"alerts": {"type": "array", "items": ALERT_EVENT}},
}

HEALTH = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Health",
    "type": "object",
    "required": ["status", "backend", "uptime_s"],
    "additionalProperties": False,
    "properties": {
        "status": {"enum": ["ok", "degraded"]},
        "backend": {"type": ["string", "null"]},
        "uptime_s": {"type": "number", "minimum": 0},
    },
}

ERROR = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Error",
    "type": "object",
    "required": ["error", "status"],
    "additionalProperties": False,
    "properties": {
        "error": {"type": "string"},
        "status": {"type": "integer"},
    },
}

DETECTION_LOG_RECORD = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "DetectionLogRecord",
    "type": "object",
    "required": ["seq", "stream_id", "image_id", "response"],
    "properties": {
        "seq": {"type": "integer", "minimum": 1},
        "stream_id": {"type": "string"},
        "image_id": {"type": "string"},
        "response": PREDICTION,
    },
}

BY_ENDPOINT = {
    "POST /v1/predict": PREDICTION,
    "POST /v1/streams/{stream_id}/frames": FRAME,
    "GET /v1/alerts": ALERTS,
    "GET /v1/healthz": HEALTH,
}
