"""N-of-M rolling-window disease alerting per stream."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping


@dataclass(frozen=True)
class AlertRule:
    confidence_floor: float = 0.497
    window_size: int = 5
    min_hits: int = 3
    # class name -> enabled; classes not listed are enabled
    enabled: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence_floor <= 1.0):
            raise ValueError("confidence_floor outside [0, 1]")
        if not (1 <= self.min_hits <= self.window_size):
            raise ValueError("need 1 <= min_hits <= window_size")
        object.__setattr__(self, "enabled", dict(self.enabled))

    def is_enabled(self, class_name: str) -> bool:
        return self.enabled.get(class_name, True)

    def snapshot(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AlertRule":
        return cls(**doc)


@dataclass(frozen=True)
class AlertEvent:
    stream_id: str
    class_name: str
    window_frame_ids: tuple[str, ...]
    triggered_at: str
    rule: dict
    seq: int = 0

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "stream_id": self.stream_id,
            "class_name": self.class_name,
            "window_frame_ids": list(self.window_frame_ids),
            "triggered_at": self.triggered_at,
            "rule": self.rule,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AlertEvent":
        return cls(
            doc["stream_id"],
            doc["class_name"],
            tuple(doc["window_frame_ids"]),
            doc["triggered_at"],
            dict(doc["rule"]),
            int(doc.get("seq", 0)),
        )


@dataclass
class _ClassWindow:
    hits: deque
    frames: deque
    open: AlertEvent | None = None
    misses: int = 0


class StreamAlerts:
    """Alert state for one stream.

    A class alert opens when at least ``min_hits`` of the last
    ``window_size`` frames qualify and no alert for that class is open. An
    open alert closes after ``window_size`` consecutive non-qualifying
    frames, after which a new episode may open another.
    """

    def __init__(self, stream_id: str, rule: AlertRule, classes: Iterable[str]):
        self.stream_id = stream_id
        self.rule = rule
        self.windows = {
            c: _ClassWindow(deque(maxlen=rule.window_size), deque(maxlen=rule.window_size))
            for c in classes
            if rule.is_enabled(c)
        }

    def open_alerts(self) -> dict[str, AlertEvent]:
        return {c: w.open for c, w in self.windows.items() if w.open is not None}

    def restore(self, event: AlertEvent) -> None:
        if event.class_name in self.windows:
            self.windows[event.class_name].open = event

    def close(self, class_name: str) -> None:
        if class_name in self.windows:
            self.windows[class_name].open = None

    def update(
        self, frame_id: str, qualifying: set[str], now: str
    ) -> tuple[list[AlertEvent], list[str]]:
        """Feed one frame; return (opened events, names of classes closed)."""
        opened, closed = [], []
        for name, w in self.windows.items():
            hit = name in qualifying
            w.hits.append(hit)
            w.frames.append(frame_id)
            if w.open is not None:
                w.misses = 0 if hit else w.misses + 1
                if w.misses >= self.rule.window_size:
                    w.open, w.misses = None, 0
                    closed.append(name)
            elif sum(w.hits) >= self.rule.min_hits:
                w.open = AlertEvent(
                    self.stream_id, name, tuple(w.frames), now, self.rule.snapshot()
                )
                w.misses = 0
                opened.append(w.open)
        return opened, closed
