from __future__ import annotations

import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Iterator

from pydantic import ValidationError
from tinydb import Query, TinyDB

from src.errors import CorruptStateError, OutputError
from src.records import ModelRecord

logger = logging.getLogger(__name__)

STORE_NAME = "protocols.json"
JOURNAL_NAME = "models.jsonl"


def fingerprint(payload: dict[str, Any]) -> str:
    """Stable hash of a JSON-serializable description (model, grid, cost, optimizer)."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _backup_file(path: Path, suffix: str) -> Path | None:
    ts = datetime.now().strftime("%Y%m%d-%H%M%S")
    backup = path.with_name(f"{path.stem}.backup.{suffix}.{ts}{path.suffix}")
    try:
        backup.write_bytes(path.read_bytes())
    except OSError:
        logger.warning("could not back up %s", path)
        return None
    return backup


class ProtocolStore:
    """
    Optimized protocols cached per output directory, keyed by fingerprint.

    The fingerprint covers model, grid, cost and optimizer settings, so an
    approach name is only a label: the same cost under two names is one entry.

    TinyDB keeps its data in a JSON *dict* keyed by table name. A store file
    that was rewritten as a JSON list (or is unreadable) is backed up and
    rebuilt; list entries that look like protocol documents are kept.
    """

    def __init__(self, out_dir: str | Path):
        self.path = Path(out_dir) / STORE_NAME
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(f"cannot create output directory {self.path.parent}: {e}") from e

        salvaged: list[dict[str, Any]] = []
        if self.path.exists():
            salvaged = self._maybe_salvage_list_file(self.path)

        self.db = TinyDB(str(self.path))
        self.protocols = self.db.table("protocols")
        for doc in salvaged:
            if {"approach", "fingerprint"} <= doc.keys():
                self.protocols.insert(doc)

    def _maybe_salvage_list_file(self, path: Path) -> list[dict[str, Any]]:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            _backup_file(path, suffix="unreadable")
            path.unlink(missing_ok=True)
            logger.warning("protocol store %s was unreadable; starting a fresh one", path)
            return []

        if isinstance(data, list):
            _backup_file(path, suffix="list")
            path.unlink(missing_ok=True)
            logger.warning("protocol store %s was a JSON list; rebuilt from its records", path)
            return [x for x in data if isinstance(x, dict)]

        return []

    def get(self, key: str) -> dict[str, Any] | None:
        Entry = Query()
        found = self.protocols.search(Entry.fingerprint == key)
        return found[-1] if found else None

    def put(self, approach: str, key: str, document: dict[str, Any]) -> None:
        Entry = Query()
        document = {**document, "approach": approach, "fingerprint": key}
        document.setdefault("created_at", datetime.now().isoformat())
        self.protocols.upsert(document, Entry.fingerprint == key)

    def all(self) -> list[dict[str, Any]]:
        return self.protocols.all()

    def close(self) -> None:
        self.db.close()


class SweepJournal:
    """Append-only JSON lines, one ``ModelRecord`` per finished sweep model."""

    def __init__(self, out_dir: str | Path, key: str):
        self.path = Path(out_dir) / JOURNAL_NAME
        self.key = key

    def exists(self) -> bool:
        return self.path.exists() and self.path.stat().st_size > 0

    def _lines(self) -> Iterator[tuple[int, str]]:
        try:
            with self.path.open("r", encoding="utf-8") as handle:
                for number, line in enumerate(handle, start=1):
                    if line.strip():
                        yield number, line
        except OSError as e:
            raise OutputError(f"cannot read {self.path}: {e}") from e

    def load(self) -> list[ModelRecord]:
        """Completed records; refuses to resume from a corrupt or foreign journal."""
        if not self.path.exists():
            return []
        records = []
        for number, line in self._lines():
            try:
                record = ModelRecord.model_validate_json(line)
            except ValidationError as e:
                raise CorruptStateError(
                    f"{self.path}:{number} is not a valid model record; rerun with --restart"
                ) from e
            if record.fingerprint != self.key:
                raise CorruptStateError(
                    f"{self.path} was written for a different configuration; rerun with --restart"
                )
            records.append(record)
        return records

    def append(self, record: ModelRecord) -> None:
        line = json.dumps(record.model_dump(), sort_keys=True)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
        except OSError as e:
            raise OutputError(f"cannot append to {self.path}: {e}") from e

    def restart(self) -> Path | None:
        """Move the old journal aside so the sweep starts fresh."""
        if not self.path.exists():
            return None
        backup = _backup_file(self.path, suffix="restart")
        self.path.unlink()
        logger.info("journal %s reset (backup: %s)", self.path, backup)
        return backup
