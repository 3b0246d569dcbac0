"""Durable job persistence: status lifecycle, priorities, and an embedded
append-only store.

The store is a single JSON-lines file of full record snapshots; the latest
snapshot per job_id wins on replay. Every acknowledged write is flushed and
fsync'd before the call returns, so acknowledged state survives a hard kill.
A partially written trailing line (crash mid-append) is skipped on reopen.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import secrets
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import IO, Iterable, Optional

from .circuits import WorkloadDocument, parse_workload, serialize_workload
from .simulator import RNG_ALGORITHM, Counts

log = logging.getLogger(__name__)


class JobStatus(str, enum.Enum):
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"

    @property
    def is_terminal(self) -> bool:
        return self in (JobStatus.COMPLETED, JobStatus.FAILED, JobStatus.CANCELLED)


#: Legal lifecycle edges. QUEUED->FAILED covers admission rejection
#: (unknown device, capability mismatch); terminal states are immutable.
LEGAL_TRANSITIONS: dict[JobStatus, frozenset[JobStatus]] = {
    JobStatus.QUEUED: frozenset({JobStatus.RUNNING, JobStatus.CANCELLED, JobStatus.FAILED}),
    JobStatus.RUNNING: frozenset({JobStatus.COMPLETED, JobStatus.FAILED}),
    JobStatus.COMPLETED: frozenset(),
    JobStatus.FAILED: frozenset(),
    JobStatus.CANCELLED: frozenset(),
}


class Priority(enum.IntEnum):
    """Job priority with total order LOW < MEDIUM < HIGH."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @classmethod
    def parse(cls, name: str) -> "Priority":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown priority {name!r}; expected LOW, MEDIUM or HIGH") from None


class StoreError(Exception):
    """Base class for job-store failures."""


class UnknownJobError(StoreError):
    def __init__(self, job_id: str):
        super().__init__(f"unknown job_id {job_id!r}")
        self.job_id = job_id


class IllegalTransitionError(StoreError):
    def __init__(self, job_id: str, current: JobStatus, new: JobStatus):
        super().__init__(f"job {job_id}: illegal transition {current.value} -> {new.value}")
        self.current = current
        self.new = new


_B32_ALPHABET = "0123456789abcdefghjkmnpqrstvwxyz"


def new_job_id() -> str:
    """Time-ordered random 128-bit identifier (48-bit millisecond timestamp,
    80 random bits), URL-safe base32, lexicographically sortable by time."""
    value = ((time.time_ns() // 1_000_000) << 80) | secrets.randbits(80)
    chars = []
    for _ in range(26):
        chars.append(_B32_ALPHABET[value & 31])
        value >>= 5
    return "".join(reversed(chars))


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class JobRecord:
    """Persistent job entity. ``result`` is present iff COMPLETED and
    ``error`` iff FAILED; timestamps are UTC with microsecond resolution."""

    job_id: str
    device_id: str
    priority: Priority
    workload: WorkloadDocument
    status: JobStatus
    submitted_at: datetime
    seed: int
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None
    result: Optional[Counts] = None
    error: Optional[str] = None
    rng_algo: str = RNG_ALGORITHM

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "device_id": self.device_id,
            "priority": self.priority.name,
            "workload": serialize_workload(self.workload).decode("utf-8"),
            "status": self.status.value,
            "submitted_at": format_timestamp(self.submitted_at),
            "started_at": format_timestamp(self.started_at) if self.started_at else None,
            "finished_at": format_timestamp(self.finished_at) if self.finished_at else None,
            "result": dict(self.result) if self.result is not None else None,
            "error": self.error,
            "seed": self.seed,
            "rng_algo": self.rng_algo,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JobRecord":
        return cls(
            job_id=obj["job_id"],
            device_id=obj["device_id"],
            priority=Priority.parse(obj["priority"]),
            workload=parse_workload(obj["workload"]),
            status=JobStatus(obj["status"]),
            submitted_at=parse_timestamp(obj["submitted_at"]),
            started_at=parse_timestamp(obj["started_at"]) if obj.get("started_at") else None,
            finished_at=parse_timestamp(obj["finished_at"]) if obj.get("finished_at") else None,
            result=Counts(obj["result"]) if obj.get("result") is not None else None,
            error=obj.get("error"),
            seed=int(obj["seed"]),
            rng_algo=obj.get("rng_algo", RNG_ALGORITHM),
        )


def random_seed() -> int:
    return secrets.randbits(64)


class JobStore:
    """Embedded durable store. All operations are thread-safe; transitions
    are atomic read-modify-writes under a single writer lock.

    ``sync=False`` skips the per-write fsync for throughput-bound tests;
    leave it on wherever durability matters.
    """

    def __init__(self, path: str | os.PathLike, sync: bool = True):
        self.path = os.fspath(path)
        self._sync = sync
        self._lock = threading.RLock()
        self._records: dict[str, JobRecord] = {}
        self._load()
        self._file: IO[str] = open(self.path, "a", encoding="utf-8")

    def _load(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.endswith("\n"):
                    log.warning("%s:%d: dropping partial trailing line", self.path, lineno)
                    break
                line = line.strip()
                if not line:
                    continue
                try:
                    record = JobRecord.from_json(json.loads(line))
                except (ValueError, KeyError) as exc:
                    log.warning("%s:%d: dropping unreadable line (%s)", self.path, lineno, exc)
                    continue
                self._records[record.job_id] = record

    def _append(self, record: JobRecord):
        line = json.dumps(record.to_json(), separators=(",", ":"), allow_nan=False)
        try:
            self._file.write(line + "\n")
            self._file.flush()
            if self._sync:
                os.fsync(self._file.fileno())
        except OSError as exc:
            raise StoreError(f"write to {self.path} failed: {exc}") from exc

    def close(self):
        with self._lock:
            self._file.close()

    def insert_job(
        self,
        workload: WorkloadDocument,
        device_id: str,
        priority: Priority = Priority.LOW,
        seed: Optional[int] = None,
    ) -> JobRecord:
        """Create and durably persist a new QUEUED job; returns the record
        with its freshly generated job_id."""
        if not device_id:
            raise StoreError("device_id must be nonempty")
        record = JobRecord(
            job_id=new_job_id(),
            device_id=device_id,
            priority=priority,
            workload=workload,
            status=JobStatus.QUEUED,
            submitted_at=utcnow(),
            seed=random_seed() if seed is None else int(seed),
        )
        with self._lock:
            self._append(record)
            self._records[record.job_id] = record
        return record

    def transition(
        self,
        job_id: str,
        new_status: JobStatus,
        counts: Optional[Counts] = None,
        error: Optional[str] = None,
    ) -> JobRecord:
        """Atomically move a job along the lifecycle DAG, stamping
        started_at / finished_at and attaching the payload the target
        status requires."""
        with self._lock:
            record = self._records.get(job_id)
            if record is None:
                raise UnknownJobError(job_id)
            if new_status not in LEGAL_TRANSITIONS[record.status]:
                raise IllegalTransitionError(job_id, record.status, new_status)
            if (counts is not None) != (new_status is JobStatus.COMPLETED):
                raise StoreError(f"counts payload is for COMPLETED only, got {new_status.value}")
            if (error is not None) != (new_status is JobStatus.FAILED):
                raise StoreError(f"error payload is for FAILED only, got {new_status.value}")

            now = utcnow()
            updates: dict = {"status": new_status}
            if new_status is JobStatus.RUNNING:
                updates["started_at"] = now
            if new_status.is_terminal:
                updates["finished_at"] = now
            if counts is not None:
                updates["result"] = Counts(counts)
            if error is not None:
                updates["error"] = error
            updated = replace(record, **updates)
            self._append(updated)
            self._records[job_id] = updated
            return updated

    def get_job(self, job_id: str) -> JobRecord:
        with self._lock:
            record = self._records.get(job_id)
            if record is None:
                raise UnknownJobError(job_id)
            return record

    def list_jobs(
        self,
        status: Optional[JobStatus] = None,
        device_id: Optional[str] = None,
        limit: Optional[int] = None,
    ) -> list[JobRecord]:
        """Records matching the filter, most recently submitted first."""
        with self._lock:
            records = [
                r
                for r in self._records.values()
                if (status is None or r.status is status)
                and (device_id is None or r.device_id == device_id)
            ]
        records.sort(key=lambda r: (r.submitted_at, r.job_id), reverse=True)
        if limit is not None:
            records = records[:limit]
        return records

    def requeue_interrupted(self) -> list[str]:
        """Recovery pass run at service startup: every RUNNING job (claimed
        but unfinished when the previous process died) goes back to QUEUED.
        Safe because execution is deterministic by stored seed. This is a
        maintenance edge outside the normal lifecycle DAG."""
        requeued = []
        with self._lock:
            for job_id, record in list(self._records.items()):
                if record.status is JobStatus.RUNNING:
                    updated = replace(record, status=JobStatus.QUEUED, started_at=None)
                    self._append(updated)
                    self._records[job_id] = updated
                    requeued.append(job_id)
        if requeued:
            log.info("requeued %d interrupted job(s)", len(requeued))
        return requeued

    def iter_records(self) -> Iterable[JobRecord]:
        with self._lock:
            return list(self._records.values())

    def dump(self, stream: IO[str]):
        """Export every record as JSON lines for inspection or backup."""
        for record in sorted(self.iter_records(), key=lambda r: (r.submitted_at, r.job_id)):
            stream.write(json.dumps(record.to_json(), separators=(",", ":")) + "\n")
