from coopwatch.service.alerts import AlertEvent, AlertRule, StreamAlerts
from coopwatch.service.app import MonitorService, ServiceError, create_app
from coopwatch.service.config import ServiceConfig
from coopwatch.service.logs import JsonlLog

__all__ = [
    "AlertEvent",
    "AlertRule",
    "JsonlLog",
    "MonitorService",
    "ServiceConfig",
    "ServiceError",
    "StreamAlerts",
    "create_app",
]
