from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from coopwatch.dataset import ClassMap
from coopwatch.inference import PostprocessConfig
from coopwatch.service.alerts import AlertRule

CONFIG_ENV = "COOP_CONFIG"


@dataclass
class ServiceConfig:
    class_map: ClassMap = field(default_factory=ClassMap)
    replay_fixture: Path | None = None
    model_tag: str | None = None
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    alert_rule: AlertRule = field(default_factory=AlertRule)
    log_dir: Path = Path("logs")
    log_max_bytes: int = 10 * 2**20
    log_fsync: bool = True
    host: str = "127.0.0.1"
    port: int = 8080
    healthy_class: str = "Healthy"

    @classmethod
    def from_dict(cls, doc: dict, base: Path = Path(".")) -> "ServiceConfig":
        """Relative paths in ``doc`` resolve against ``base``."""

        def resolve(p: str) -> Path:
            path = Path(p)
            return path if path.is_absolute() else base / path

        cfg = cls()
        if "class_map" in doc:
            cfg.class_map = ClassMap.load(resolve(doc["class_map"]))
        if "replay_fixture" in doc:
            cfg.replay_fixture = resolve(doc["replay_fixture"])
        cfg.model_tag = doc.get("model_tag")
        cfg.postprocess = PostprocessConfig(**doc.get("postprocess", {}))
        cfg.alert_rule = AlertRule.from_dict(doc.get("alert_rule", {}))
        cfg.log_dir = resolve(doc.get("log_dir", "logs"))
        cfg.log_max_bytes = int(doc.get("log_max_bytes", cfg.log_max_bytes))
        cfg.log_fsync = bool(doc.get("log_fsync", cfg.log_fsync))
        cfg.healthy_class = doc.get("healthy_class", cfg.healthy_class)
        listen = doc.get("listen", f"{cfg.host}:{cfg.port}")
        host, _, port = listen.rpartition(":")
        cfg.host, cfg.port = host or cfg.host, int(port)
        return cfg

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ServiceConfig":
        """Read a JSON config; ``COOP_CONFIG`` takes precedence over ``path``."""
        chosen = os.environ.get(CONFIG_ENV) or path
        if chosen is None:
            raise ValueError(f"no config path given and {CONFIG_ENV} is unset")
        chosen = Path(chosen)
        doc = json.loads(chosen.read_text(encoding="utf-8"))
        return cls.from_dict(doc, chosen.parent)
