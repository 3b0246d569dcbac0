"""HTTP cloud-queue service: asynchronous job submission, status polling,
and result retrieval over plain HTTP/1.1 + JSON.

Routes (JSON in, JSON out):

    POST   /v1/work               submit a workload        -> 201 {"job_id": ...}
    GET    /v1/work/{id}          status snapshot          -> 200 / 404
    GET    /v1/work/{id}/results  counts + metadata        -> 200 / 404 / 409
    DELETE /v1/work/{id}          cancel a queued job      -> 200 / 404 / 409
    GET    /v1/devices            device registry snapshot -> 200
    GET    /v1/health             readiness probe          -> 200

Submission never waits on execution: the handler persists the job, admits
it to the scheduler, and answers with the job_id immediately. "Not ready"
results return 409 with the current status so clients poll instead of
blocking the server.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .circuits import Gate, WorkloadError, full_gate_set, parse_workload
from .scheduler import (
    DeviceDescriptor,
    DeviceKind,
    QueuePolicy,
    Scheduler,
    capability_problem,
)
from .store import JobRecord, JobStatus, JobStore, Priority, format_timestamp

log = logging.getLogger(__name__)

DEFAULT_PORT = 8042

#: Environment overrides applied on top of the config file.
ENV_PORT = "CONQURE_PORT"
ENV_STORE = "CONQURE_STORE"


class ConfigError(ValueError):
    """Startup configuration file is missing or malformed."""


@dataclass(frozen=True)
class DeviceConfig:
    descriptor: DeviceDescriptor
    policy: QueuePolicy


@dataclass(frozen=True)
class ServiceConfig:
    store_path: str
    devices: tuple[DeviceConfig, ...]
    port: int = DEFAULT_PORT
    host: str = "127.0.0.1"
    auth_token: Optional[str] = None


def default_device() -> DeviceConfig:
    return DeviceConfig(
        DeviceDescriptor(
            device_id="sim0",
            kind=DeviceKind.SIMULATOR,
            num_qubits=24,
            supported_gates=full_gate_set(),
        ),
        QueuePolicy.PRIORITY_FIFO,
    )


def _parse_device(obj: dict, index: int) -> DeviceConfig:
    ctx = f"devices[{index}]"
    try:
        gates = obj.get("gates")
        supported = (
            frozenset(Gate(g) for g in gates) if gates is not None else full_gate_set()
        )
        descriptor = DeviceDescriptor(
            device_id=obj["id"],
            kind=DeviceKind(obj.get("kind", "simulator")),
            num_qubits=int(obj.get("num_qubits", 24)),
            supported_gates=supported,
            slots=int(obj.get("slots", 1)),
        )
        policy = QueuePolicy(obj.get("policy", "priority_fifo"))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc
    return DeviceConfig(descriptor, policy)


def load_config(path: str | os.PathLike) -> ServiceConfig:
    """Load the startup configuration (JSON; TOML accepted on interpreters
    that ship tomllib). CONQURE_PORT / CONQURE_STORE env vars override the
    file's port and store path."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc

    if path.endswith(".toml"):
        try:
            import tomllib  # Python 3.11+
        except ImportError:
            raise ConfigError(
                "TOML config requires Python 3.11+ (tomllib); use a JSON config on older interpreters"
            ) from None
        try:
            obj = tomllib.loads(raw_bytes.decode("utf-8"))
        except Exception as exc:
            raise ConfigError(f"malformed TOML in {path!r}: {exc}") from exc
    else:
        try:
            obj = json.loads(raw_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed JSON in {path!r}: {exc}") from exc

    if not isinstance(obj, dict):
        raise ConfigError("config root must be an object")
    devices_raw = obj.get("devices")
    if devices_raw is None:
        devices = (default_device(),)
    else:
        if not isinstance(devices_raw, list) or not devices_raw:
            raise ConfigError("'devices' must be a nonempty array")
        devices = tuple(_parse_device(d, i) for i, d in enumerate(devices_raw))

    port = int(os.environ.get(ENV_PORT, obj.get("port", DEFAULT_PORT)))
    store_path = os.environ.get(ENV_STORE, obj.get("store_path"))
    if not store_path:
        raise ConfigError("config must set 'store_path' (or CONQURE_STORE)")
    return ServiceConfig(
        store_path=str(store_path),
        devices=devices,
        port=port,
        host=str(obj.get("host", "127.0.0.1")),
        auth_token=obj.get("auth_token"),
    )


def device_to_json(descriptor: DeviceDescriptor, policy: QueuePolicy) -> dict:
    return {
        "device_id": descriptor.device_id,
        "kind": descriptor.kind.value,
        "num_qubits": descriptor.num_qubits,
        "gates": sorted(g.value for g in descriptor.supported_gates),
        "slots": descriptor.slots,
        "policy": policy.value,
    }


def _timing_json(record: JobRecord) -> dict:
    return {
        "submitted_at": format_timestamp(record.submitted_at),
        "started_at": format_timestamp(record.started_at) if record.started_at else None,
        "finished_at": format_timestamp(record.finished_at) if record.finished_at else None,
    }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "conqure"
    # Headers and body go out as separate small writes; without TCP_NODELAY
    # that pattern hits Nagle + delayed-ACK stalls (~40 ms) on loopback.
    disable_nagle_algorithm = True

    _WORK = re.compile(r"^/v1/work/([0-9a-z]+)$")
    _RESULTS = re.compile(r"^/v1/work/([0-9a-z]+)/results$")

    # -- plumbing -----------------------------------------------------------

    @property
    def service(self) -> "QueueService":
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, code: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, code: int, message: str, **extra):
        self._send_json(code, {"error": message, **extra})

    def _read_body(self) -> Optional[bytes]:
        length = self.headers.get("Content-Length")
        if length is None:
            self._error(400, "missing Content-Length")
            return None
        return self.rfile.read(int(length))

    def _authorized(self) -> bool:
        token = self.service.config.auth_token
        if token is None:
            return True
        header = self.headers.get("Authorization", "")
        if header == f"Bearer {token}":
            return True
        self._error(401, "missing or invalid bearer token")
        return False

    # -- routes -------------------------------------------------------------

    def do_GET(self):
        if not self._authorized():
            return
        if self.path == "/v1/health":
            self._send_json(200, {"status": "ok"})
            return
        if self.path == "/v1/devices":
            self._send_json(
                200,
                {
                    "devices": [
                        device_to_json(d, p) for d, p in self.service.scheduler.devices()
                    ]
                },
            )
            return
        match = self._RESULTS.match(self.path)
        if match:
            self._get_results(match.group(1))
            return
        match = self._WORK.match(self.path)
        if match:
            self._get_status(match.group(1))
            return
        self._error(404, f"no route for GET {self.path}")

    def do_POST(self):
        if not self._authorized():
            return
        if self.path == "/v1/work":
            body = self._read_body()
            if body is not None:
                self._create_work(body)
            return
        self._error(404, f"no route for POST {self.path}")

    def do_DELETE(self):
        if not self._authorized():
            return
        match = self._WORK.match(self.path)
        if match:
            self._cancel(match.group(1))
            return
        self._error(404, f"no route for DELETE {self.path}")

    # -- handlers -----------------------------------------------------------

    def _create_work(self, body: bytes):
        try:
            request = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._error(400, f"request body is not valid JSON: {exc}")
            return
        if not isinstance(request, dict):
            self._error(400, "request body must be a JSON object")
            return

        workload_raw = request.get("workload")
        if workload_raw is None:
            self._error(400, "missing 'workload'")
            return
        # The workload may arrive inline as an object or as its serialized
        # JSON text; both go through the same strict parser.
        if isinstance(workload_raw, dict):
            workload_text = json.dumps(workload_raw)
        elif isinstance(workload_raw, str):
            workload_text = workload_raw
        else:
            self._error(400, "'workload' must be an object or a JSON string")
            return
        try:
            workload = parse_workload(workload_text)
        except WorkloadError as exc:
            self._error(400, f"invalid workload: {exc}")
            return

        device_id = request.get("device_id")
        if not isinstance(device_id, str) or not device_id:
            self._error(400, "missing 'device_id'")
            return
        try:
            priority = Priority.parse(request.get("priority", "LOW"))
        except ValueError as exc:
            self._error(400, str(exc))
            return

        seed: Optional[int] = None
        if "seed" in workload.metadata:
            try:
                seed = int(workload.metadata["seed"])
                if not 0 <= seed < 2**64:
                    raise ValueError
            except ValueError:
                self._error(400, "metadata 'seed' must be a decimal 64-bit unsigned integer")
                return

        service = self.service
        try:
            descriptor = service.scheduler.get_device(device_id)
        except Exception:
            self._error(404, f"unknown device {device_id!r}")
            return
        problem = capability_problem(descriptor, workload.circuit)
        if problem is not None:
            self._error(422, problem)
            return

        try:
            record = service.store.insert_job(workload, device_id, priority, seed=seed)
            service.scheduler.enqueue(record.job_id)
        except Exception as exc:  # storage or admission race
            log.exception("create_work failed")
            self._error(500, f"submission failed: {exc}")
            return
        self._send_json(201, {"job_id": record.job_id})

    def _get_status(self, job_id: str):
        try:
            record = self.service.store.get_job(job_id)
        except Exception:
            self._error(404, f"unknown job_id {job_id!r}")
            return
        payload = {
            "job_id": record.job_id,
            "status": record.status.value,
            "submitted_at": format_timestamp(record.submitted_at),
        }
        if record.status is JobStatus.QUEUED:
            position = self.service.scheduler.queue_position(job_id)
            if position is not None:
                payload["queue_position"] = position
        if record.error is not None:
            payload["error"] = record.error
        self._send_json(200, payload)

    def _get_results(self, job_id: str):
        try:
            record = self.service.store.get_job(job_id)
        except Exception:
            self._error(404, f"unknown job_id {job_id!r}")
            return
        if record.status is JobStatus.COMPLETED:
            self._send_json(
                200,
                {
                    "job_id": record.job_id,
                    "counts": dict(record.result or {}),
                    "seed": record.seed,
                    "device_id": record.device_id,
                    "timing": _timing_json(record),
                },
            )
        elif record.status in (JobStatus.FAILED, JobStatus.CANCELLED):
            payload = {
                "job_id": record.job_id,
                "status": record.status.value,
                "device_id": record.device_id,
                "timing": _timing_json(record),
            }
            if record.error is not None:
                payload["error"] = record.error
            self._send_json(200, payload)
        else:
            self._error(409, "not ready", job_id=record.job_id, status=record.status.value)

    def _cancel(self, job_id: str):
        service = self.service
        try:
            record = service.store.get_job(job_id)
        except Exception:
            self._error(404, f"unknown job_id {job_id!r}")
            return
        try:
            updated = service.store.transition(job_id, JobStatus.CANCELLED)
        except Exception:
            self._error(409, f"job is {record.status.value}; only QUEUED jobs can be cancelled",
                        job_id=job_id, status=record.status.value)
            return
        self._send_json(200, {"job_id": job_id, "status": updated.status.value})


class QueueService:
    """Store + scheduler + HTTP server wired together.

    ``start`` recovers interrupted jobs (RUNNING -> QUEUED), re-admits every
    QUEUED job to its device queue, spawns the workers, and serves requests
    on a background thread. ``port=0`` binds an ephemeral port, exposed via
    ``.port`` after start.
    """

    def __init__(self, config: ServiceConfig, store: Optional[JobStore] = None):
        self.config = config
        self.store = store if store is not None else JobStore(config.store_path)
        self.scheduler = Scheduler(self.store)
        for device in config.devices:
            self.scheduler.register_device(device.descriptor, device.policy)
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._serve_thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        if self._httpd is None:
            raise RuntimeError("service is not started")
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def _recover(self):
        self.store.requeue_interrupted()
        queued = self.store.list_jobs(status=JobStatus.QUEUED)
        for record in sorted(queued, key=lambda r: (r.submitted_at, r.job_id)):
            try:
                self.scheduler.enqueue(record.job_id)
            except Exception as exc:
                log.warning("could not re-admit job %s: %s", record.job_id, exc)

    def start(self):
        self._recover()
        self.scheduler.start()
        self._httpd = ThreadingHTTPServer((self.config.host, self.config.port), _Handler)
        self._httpd.daemon_threads = True
        self._httpd.service = self  # type: ignore[attr-defined]
        self._serve_thread = threading.Thread(
            target=self._httpd.serve_forever, name="conqure-http", daemon=True
        )
        self._serve_thread.start()
        log.info("serving on %s", self.url)

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._serve_thread is not None:
            self._serve_thread.join(timeout=5.0)
            self._serve_thread = None
        self.scheduler.stop()
        self.store.close()
