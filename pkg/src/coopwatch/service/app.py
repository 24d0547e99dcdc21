"""Frame prediction and alerting service.

:class:`MonitorService` holds the logic and state; :func:`create_app` exposes
it over HTTP:

- ``POST /v1/predict``                      one frame, ad hoc
- ``POST /v1/streams/{stream_id}/frames``   one frame of a monitored stream
- ``GET  /v1/alerts?stream=&since=``        alert history
- ``GET  /v1/healthz``
"""

from __future__ import annotations

import dataclasses
import logging
import threading
import time
from datetime import datetime, timezone
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from coopwatch.dataset import ClassMap
from coopwatch.inference import (
    Backend,
    BadImage,
    PostprocessConfig,
    ReplayBackend,
    UnknownImage,
    postprocess,
)
from coopwatch.service.alerts import AlertEvent, AlertRule, StreamAlerts
from coopwatch.service.config import ServiceConfig
from coopwatch.service.logs import JsonlLog

log = logging.getLogger(__name__)

IMAGE_TYPES = ("image/jpeg", "image/png")


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def rfc3339(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def parse_rfc3339(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00").replace("z", "+00:00"))
    except ValueError:
        raise ServiceError(400, f"malformed timestamp: {text!r}") from None
    if ts.tzinfo is None:
        raise ServiceError(400, f"timestamp needs a UTC offset: {text!r}")
    return ts


class MonitorService:
    def __init__(
        self,
        backend: Backend | None,
        class_map: ClassMap | None = None,
        postprocess_config: PostprocessConfig | None = None,
        alert_rule: AlertRule | None = None,
        log_dir=None,
        log_max_bytes: int = 10 * 2**20,
        healthy_class: str = "Healthy",
        clock: Callable[[], datetime] = utc_now,
        log_fsync: bool = True,
    ):
        self.backend = backend
        self.class_map = class_map or ClassMap()
        self.postprocess_config = postprocess_config or PostprocessConfig()
        self.rule = alert_rule or AlertRule()
        self.healthy_class = healthy_class
        self.clock = clock
        self.started = time.monotonic()
        self.detection_log = JsonlLog(log_dir, "detections", log_max_bytes, log_fsync)
        self.alert_log = JsonlLog(log_dir, "alerts", log_max_bytes, log_fsync)
        self._streams: dict[str, StreamAlerts] = {}
        self._stream_locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._recover()

    @classmethod
    def from_config(cls, cfg: ServiceConfig, **kwargs) -> "MonitorService":
        backend = None
        if cfg.replay_fixture is not None:
            try:
                backend = ReplayBackend.from_file(cfg.replay_fixture, cfg.model_tag)
            except (OSError, ValueError) as exc:
                log.error("backend unavailable: %s", exc)
        return cls(
            backend,
            cfg.class_map,
            cfg.postprocess,
            cfg.alert_rule,
            cfg.log_dir,
            cfg.log_max_bytes,
            cfg.healthy_class,
            log_fsync=cfg.log_fsync,
            **kwargs,
        )

    @property
    def disease_classes(self) -> list[str]:
        return [n for n in self.class_map.names if n != self.healthy_class]

    # --- state ---------------------------------------------------------------

    def _stream(self, stream_id: str) -> tuple[StreamAlerts, threading.Lock]:
        with self._registry_lock:
            if stream_id not in self._streams:
                self._streams[stream_id] = StreamAlerts(stream_id, self.rule, self.disease_classes)
                self._stream_locks[stream_id] = threading.Lock()
            return self._streams[stream_id], self._stream_locks[stream_id]

    def _recover(self) -> None:
        """Reopen alerts that the alert log shows as still open."""
        for rec in self.alert_log.read():
            kind = rec.get("kind")
            stream, _ = self._stream(rec["stream_id"])
            if kind == "open":
                stream.restore(AlertEvent.from_dict(rec))
            elif kind == "close":
                stream.close(rec["class_name"])

    # --- operations ----------------------------------------------------------

    def _verdict(self, detections: list[dict]) -> str:
        if not detections:
            return "no_birds"
        floor = self.rule.confidence_floor
        if any(d["class_name"] != self.healthy_class and d["confidence"] >= floor for d in detections):
            return "disease_suspected"
        return "healthy"

    def _predict(self, image: bytes, image_id: str | None, stream_id: str) -> dict:
        if self.backend is None:
            raise ServiceError(503, "backend unavailable")
        if not image:
            raise ServiceError(400, "bad image: empty body")
        try:
            raw = self.backend.infer(image=image, image_id=image_id)
        except (BadImage, UnknownImage) as exc:
            raise ServiceError(400, str(exc)) from exc
        dets = []
        for d in postprocess(raw, self.postprocess_config):
            if d.class_id not in self.class_map:
                raise ServiceError(503, f"backend returned unknown class_id {d.class_id}")
            dets.append(
                {
                    "class_name": self.class_map.name(d.class_id),
                    "class_id": d.class_id,
                    "confidence": d.confidence,
                    "box": d.box.as_list(),
                }
            )
        response = {
            "image_id": raw.image_id,
            "model_tag": raw.model_tag,
            "detections": dets,
            "verdict": self._verdict(dets),
            "timestamp": rfc3339(self.clock()),
        }
        self.detection_log.append(
            {"stream_id": stream_id, "image_id": raw.image_id, "response": response}
        )
        return response

    def handle_predict(self, image: bytes, image_id: str | None = None) -> dict:
        return self._predict(image, image_id, "adhoc")

    def ingest_frame(
        self, stream_id: str, image: bytes, image_id: str | None = None
    ) -> tuple[dict, list[AlertEvent]]:
        if not stream_id:
            raise ServiceError(400, "stream_id must be non-empty")
        stream, lock = self._stream(stream_id)
        with lock:
            response = self._predict(image, image_id, stream_id)
            floor = self.rule.confidence_floor
            qualifying = {
                d["class_name"] for d in response["detections"] if d["confidence"] >= floor
            }
            opened, closed = stream.update(response["image_id"], qualifying, response["timestamp"])
            stored = []
            for event in opened:
                rec = self.alert_log.append({"kind": "open", **event.to_dict()})
                event = dataclasses.replace(event, seq=rec["seq"])
                stream.restore(event)
                stored.append(event)
            for name in closed:
                self.alert_log.append(
                    {"kind": "close", "stream_id": stream_id, "class_name": name,
                     "closed_at": response["timestamp"]}
                )
        return response, stored

    def list_alerts(self, stream_id: str | None = None, since: str | None = None) -> list[AlertEvent]:
        cutoff = parse_rfc3339(since) if since else None
        events = []
        for rec in self.alert_log.read():
            if rec.get("kind") != "open":
                continue
            if stream_id and rec["stream_id"] != stream_id:
                continue
            event = AlertEvent.from_dict(rec)
            if cutoff is not None and parse_rfc3339(event.triggered_at) < cutoff:
                continue
            events.append(event)
        events.sort(key=lambda e: (parse_rfc3339(e.triggered_at), e.seq))
        return events

    def health(self) -> dict:
        return {
            "status": "ok" if self.backend is not None else "degraded",
            "backend": self.backend.model_tag if self.backend is not None else None,
            "uptime_s": max(0.0, time.monotonic() - self.started),
        }


def _error(exc: ServiceError) -> JSONResponse:
    return JSONResponse({"error": exc.message, "status": exc.status}, status_code=exc.status)


async def _frame_body(request: Request) -> tuple[bytes, str | None]:
    ctype = request.headers.get("content-type", "").split(";")[0].strip().lower()
    if ctype not in IMAGE_TYPES:
        raise ServiceError(400, f"unsupported content type {ctype or '(none)'}; expected image/jpeg or image/png")
    return await request.body(), request.headers.get("x-image-id") or None


def create_app(service: MonitorService) -> FastAPI:
    app = FastAPI(title="coopwatch", version="0.1.0")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def service_error(request: Request, exc: ServiceError):
        return _error(exc)

    # Blocking work goes to the threadpool so requests proceed concurrently.
    @app.post("/v1/predict")
    async def predict(request: Request):
        body, image_id = await _frame_body(request)
        return await run_in_threadpool(service.handle_predict, body, image_id)

    @app.post("/v1/streams/{stream_id}/frames")
    async def frames(stream_id: str, request: Request):
        body, image_id = await _frame_body(request)
        response, events = await run_in_threadpool(service.ingest_frame, stream_id, body, image_id)
        return {
            "stream_id": stream_id,
            "prediction": response,
            "alerts": [e.to_dict() for e in events],
        }

    @app.get("/v1/alerts")
    def alerts(stream: str | None = None, since: str | None = None):
        return {"alerts": [e.to_dict() for e in service.list_alerts(stream, since)]}

    @app.get("/v1/healthz")
    def healthz():
        return service.health()

    return app
