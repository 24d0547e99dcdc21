"""Append-only JSON Lines logs with size-based rotation."""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterator


class JsonlLog:
    """Serialized writer assigning gap-free sequence numbers.

    The live file is ``<name>.jsonl``; when it reaches ``max_bytes`` it is
    renamed to ``<name>.<n>.jsonl`` with ``n`` increasing. Sequence numbers
    continue across rotations and restarts. With ``fsync`` off, records
    survive a process crash but not a power loss.
    """

    def __init__(
        self, directory: str | Path, name: str, max_bytes: int = 10 * 2**20, fsync: bool = True
    ):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.max_bytes = max_bytes
        self.fsync = fsync
        self.path = self.dir / f"{name}.jsonl"
        self._lock = threading.Lock()
        self._seq = 0
        for rec in self.read():
            self._seq = max(self._seq, int(rec.get("seq", 0)))

    @property
    def last_seq(self) -> int:
        return self._seq

    def _rotated(self) -> list[Path]:
        out = []
        for p in self.dir.glob(f"{self.name}.*.jsonl"):
            middle = p.name[len(self.name) + 1 : -len(".jsonl")]
            if middle.isdigit():
                out.append((int(middle), p))
        return [p for _, p in sorted(out)]

    def files(self) -> list[Path]:
        files = self._rotated()
        if self.path.exists():
            files.append(self.path)
        return files

    def _rotate(self) -> None:
        rotated = self._rotated()
        n = int(rotated[-1].name[len(self.name) + 1 : -len(".jsonl")]) + 1 if rotated else 1
        os.replace(self.path, self.dir / f"{self.name}.{n}.jsonl")

    def append(self, record: dict) -> dict:
        """Write ``record`` with the next ``seq`` and return the stored record."""
        with self._lock:
            if self.path.exists() and self.path.stat().st_size >= self.max_bytes:
                self._rotate()
            self._seq += 1
            stored = {"seq": self._seq}
            stored.update((k, v) for k, v in record.items() if k != "seq")
            line = json.dumps(stored, sort_keys=False, separators=(",", ":")) + "\n"
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            return stored

    def read(self) -> Iterator[dict]:
        for path in self.files():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError:
                        # torn final line after a crash
                        continue
