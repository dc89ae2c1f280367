"""Line-delimited JSON logs and inter-process writer locks."""

from __future__ import annotations

import json
import os
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

from filelock import FileLock

HOME_ENV = "PROVREPRO_HOME"
DEFAULT_HOME = ".provrepro"


def home_dir(home: str | os.PathLike | None = None) -> Path:
    if home is None:
        home = os.environ.get(HOME_ENV) or DEFAULT_HOME
    return Path(home)


class WriterLock:
    """Serializes writers across threads and processes sharing a directory."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self._thread_lock = threading.RLock()
        self._file_lock = FileLock(str(path), thread_local=False)

    @contextmanager
    def __call__(self) -> Iterator[None]:
        with self._thread_lock, self._file_lock:
            yield


class JsonlLog:
    """Append-only JSON-lines file with incremental reads.

    Records are parsed once; subsequent reads only consume bytes appended
    since the previous read, so other processes' appends become visible.
    """

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._records: list[dict[str, Any]] = []
        self._offset = 0
        self._cursor = 0
        self._mutex = threading.Lock()

    def append(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def records(self) -> list[dict[str, Any]]:
        with self._mutex:
            self._refresh()
            return list(self._records)

    def read_new(self) -> list[dict[str, Any]]:
        """Records not yet returned by a previous ``read_new`` call."""
        with self._mutex:
            self._refresh()
            new = self._records[self._cursor :]
            self._cursor = len(self._records)
            return new

    def _refresh(self) -> None:
        if self.path.exists():
            with open(self.path, "rb") as fh:
                fh.seek(self._offset)
                chunk = fh.read()
            # a concurrent writer may have left a partial last line
            end = chunk.rfind(b"\n") + 1
            for raw in chunk[:end].splitlines():
                if raw.strip():
                    self._records.append(json.loads(raw))
            self._offset += end


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
