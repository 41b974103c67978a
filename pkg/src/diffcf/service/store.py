"""Directory-per-run persistence with an append-only index.

Every record update is an atomic write-temp-rename; after a restart all
succeeded runs remain retrievable and anything that was in flight comes
back as failed with reason "interrupted".
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from ..errors import AssetNotFoundError
from .schemas import BatchRecordModel, RunRecordModel


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


class RunStore:
    def __init__(self, data_root: Path):
        self.data_root = data_root
        self.runs_dir = data_root / "runs"
        self.batches_dir = data_root / "batches"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self.batches_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._runs: dict[str, RunRecordModel] = {}
        self._batches: dict[str, BatchRecordModel] = {}
        self._counter = 0

    def recover(self) -> None:
        """Reload persisted records; fail anything that was in flight."""
        for record_path in sorted(self.runs_dir.glob("*/record.json")):
            record = RunRecordModel.model_validate_json(record_path.read_text())
            if record.status in ("queued", "running"):
                record.status = "failed"
                record.error = "interrupted"
                record.finished_at = time.time()
                _atomic_write(record_path, record.model_dump_json(indent=2))
            self._runs[record.id] = record
        for record_path in sorted(self.batches_dir.glob("*/record.json")):
            record = BatchRecordModel.model_validate_json(record_path.read_text())
            if record.status in ("queued", "running"):
                record.status = "failed"
                record.error = "interrupted"
                _atomic_write(record_path, record.model_dump_json(indent=2))
            self._batches[record.id] = record

    def new_id(self, prefix: str) -> str:
        with self._lock:
            self._counter += 1
            return f"{prefix}-{time.time_ns():019d}-{self._counter:05d}"

    # -- runs ---------------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def create_run(self, record: RunRecordModel) -> None:
        run_dir = self.run_dir(record.id)
        run_dir.mkdir(parents=True, exist_ok=False)
        with self._lock:
            self._runs[record.id] = record
            with open(self.runs_dir / "index.ndjson", "a") as fh:
                fh.write(json.dumps({"id": record.id, "created_at": record.created_at}) + "\n")
        self._persist_run(record)

    def update_run(self, record: RunRecordModel) -> None:
        with self._lock:
            self._runs[record.id] = record
        self._persist_run(record)

    def _persist_run(self, record: RunRecordModel) -> None:
        _atomic_write(self.run_dir(record.id) / "record.json", record.model_dump_json(indent=2))

    def get_run(self, run_id: str) -> RunRecordModel:
        with self._lock:
            record = self._runs.get(run_id)
        if record is None:
            raise AssetNotFoundError(f"unknown run {run_id!r}")
        return record

    def list_runs(self, status: str | None = None) -> list[RunRecordModel]:
        with self._lock:
            records = sorted(self._runs.values(), key=lambda r: r.id)
        if status:
            records = [r for r in records if r.status == status]
        return records

    def append_event(self, run_id: str, event: dict) -> None:
        with open(self.run_dir(run_id) / "events.ndjson", "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def read_events(self, run_id: str) -> list[dict]:
        path = self.run_dir(run_id) / "events.ndjson"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    # -- batches ------------------------------------------------------------

    def batch_dir(self, batch_id: str) -> Path:
        return self.batches_dir / batch_id

    def create_batch(self, record: BatchRecordModel) -> None:
        self.batch_dir(record.id).mkdir(parents=True, exist_ok=False)
        with self._lock:
            self._batches[record.id] = record
        self._persist_batch(record)

    def update_batch(self, record: BatchRecordModel) -> None:
        with self._lock:
            self._batches[record.id] = record
        self._persist_batch(record)

    def _persist_batch(self, record: BatchRecordModel) -> None:
        _atomic_write(self.batch_dir(record.id) / "record.json", record.model_dump_json(indent=2))

    def get_batch(self, batch_id: str) -> BatchRecordModel:
        with self._lock:
            record = self._batches.get(batch_id)
        if record is None:
            raise AssetNotFoundError(f"unknown batch {batch_id!r}")
        return record

    def list_batches(self) -> list[BatchRecordModel]:
        with self._lock:
            return sorted(self._batches.values(), key=lambda r: r.id)
