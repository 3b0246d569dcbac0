"""Offload runtime: a circuit-wrapper object that accumulates gate calls
from host code, serializes mapped parameters across a process boundary, and
parses the counts message back into host data.

Wire protocol (newline-delimited JSON over OS pipes): the host writes one
line per execution, the serialized workload document; the executor answers
with one line, the counts JSON object. A nonzero executor exit status marks
the task failed, with diagnostics on the executor's stderr. The bundled
executor is ``python -m conqure.executor`` (the simulator CLI); anything
speaking the same line protocol can replace it.

Two execution routes share the task surface: SUBPROCESS_PIPE talks to a
local executor process, QUEUE_CLIENT submits through the cloud-queue HTTP
API and polls to completion.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import requests

from .circuits import Circuit, GateOp, WorkloadDocument, serialize_workload
from .simulator import Counts

log = logging.getLogger(__name__)


class ExecutorKind(enum.Enum):
    SUBPROCESS_PIPE = "subprocess_pipe"
    QUEUE_CLIENT = "queue_client"


class Direction(enum.Enum):
    TO_DEVICE = "to_device"
    FROM_DEVICE = "from_device"


@dataclass(frozen=True)
class OffloadMessage:
    direction: Direction
    payload: str


class OffloadError(Exception):
    """Base class for offload failures."""


class TaskStateError(OffloadError):
    """Gate added after measure, or execute before measure."""


class ExecutorSpawnError(OffloadError):
    """The executor process could not be started."""


class ProtocolError(OffloadError):
    """Malformed message on the pipe."""


class RemoteJobError(OffloadError):
    """The queue reported the job FAILED."""


class MultiOffloadError(OffloadError):
    """One or more tasks in a batch failed; successful results are kept."""

    def __init__(self, errors: dict[int, str], results: list[Optional[Counts]]):
        summary = "; ".join(f"task {i}: {msg}" for i, msg in sorted(errors.items()))
        super().__init__(f"{len(errors)} of {len(results)} offload task(s) failed: {summary}")
        self.errors = errors
        self.results = results


@dataclass(frozen=True)
class QueueTarget:
    """Address of a cloud-queue execution target."""

    url: str
    device_id: str
    priority: str = "LOW"
    poll_interval: float = 0.02
    timeout: float = 120.0


class QuantumTask:
    """Circuit under construction plus mapped parameter arrays, bound to a
    logical QPU index. ``measure()`` freezes the gate list; ``frequencies``
    holds the counts after execution (unobserved bitstrings read as 0)."""

    def __init__(self, num_qubits: int, shots: int, device_index: int = 0,
                 seed: Optional[int] = None):
        if device_index < 0:
            raise OffloadError(f"device_index must be >= 0, got {device_index}")
        self.num_qubits = num_qubits
        self.shots = shots
        self.device_index = device_index
        self.seed = seed
        self.mapped_in: dict[str, list[float]] = {}
        self.frequencies: Optional[Counts] = None
        self._ops: list[GateOp] = []
        self._measured = False

    # -- gate-call surface ---------------------------------------------------

    def _append(self, op: GateOp):
        if self._measured:
            raise TaskStateError("cannot add gates after measure()")
        for t in op.targets:
            if t >= self.num_qubits:
                raise TaskStateError(
                    f"qubit index {t} out of range for {self.num_qubits} qubit(s)"
                )
        self._ops.append(op)

    def h(self, q: int):
        self._append(GateOp.h(q))

    def x(self, q: int):
        self._append(GateOp.x(q))

    def rx(self, theta: float, q: int):
        self._append(GateOp.rx(theta, q))

    def ry(self, theta: float, q: int):
        self._append(GateOp.ry(theta, q))

    def rz(self, theta: float, q: int):
        self._append(GateOp.rz(theta, q))

    def cx(self, control: int, target: int):
        self._append(GateOp.cx(control, target))

    def measure(self):
        self._append(GateOp.measure_all())
        self._measured = True

    # -- mapping and serialization --------------------------------------------

    def map_to(self, name: str, values: Sequence[float]):
        """Attach a named parameter array carried to the executor alongside
        the circuit (serialized into workload metadata)."""
        self.mapped_in[name] = [float(v) for v in values]

    @property
    def measured(self) -> bool:
        return self._measured

    def circuit(self) -> Circuit:
        return Circuit(num_qubits=self.num_qubits, ops=tuple(self._ops), shots=self.shots)

    def workload(self) -> WorkloadDocument:
        metadata: dict[str, str] = {}
        if self.seed is not None:
            metadata["seed"] = str(int(self.seed))
        for name, values in self.mapped_in.items():
            metadata[f"map_to.{name}"] = json.dumps(values, separators=(",", ":"))
        return WorkloadDocument(circuit=self.circuit(), metadata=metadata)


def serialize_map_to(values: Mapping[str, Sequence[float]]) -> OffloadMessage:
    """Serialize named parameter arrays for the device. Decimal literals are
    shortest-representation, so the round trip is bit-exact."""
    cleaned = {}
    for name, array in values.items():
        floats = [float(v) for v in array]
        if any(not math.isfinite(v) for v in floats):
            raise ProtocolError(f"mapped array {name!r} contains non-finite values")
        cleaned[name] = floats
    return OffloadMessage(
        Direction.TO_DEVICE, json.dumps(cleaned, separators=(",", ":"), allow_nan=False)
    )


def parse_map_to(message: OffloadMessage | str) -> dict[str, list[float]]:
    """Executor-side inverse of serialize_map_to."""
    payload = message.payload if isinstance(message, OffloadMessage) else message
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed mapped-parameter JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("mapped parameters must be a JSON object")
    out: dict[str, list[float]] = {}
    for name, array in obj.items():
        if not isinstance(array, list) or not all(type(v) in (int, float) for v in array):
            raise ProtocolError(f"mapped array {name!r} must be an array of numbers")
        out[name] = [float(v) for v in array]
    return out


def parse_map_from(message: OffloadMessage | str, expected_shots: Optional[int] = None) -> Counts:
    """Parse a counts message from the device. Unobserved states are simply
    absent and read as 0; when expected_shots is given the counts must sum
    to it exactly."""
    payload = message.payload if isinstance(message, OffloadMessage) else message
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed counts JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("counts message must be a JSON object")
    counts = Counts()
    for key, value in obj.items():
        if not isinstance(key, str) or not key or set(key) - {"0", "1"}:
            raise ProtocolError(f"counts key {key!r} is not a bitstring")
        if type(value) is not int or value < 1:
            raise ProtocolError(f"counts[{key!r}] must be a positive integer, got {value!r}")
        counts[key] = value
    if expected_shots is not None and counts.shots != expected_shots:
        raise ProtocolError(
            f"counts sum {counts.shots} does not match declared shots {expected_shots}"
        )
    return counts


def default_executor_command() -> list[str]:
    """The bundled executor: this repo's simulator CLI speaking the pipe
    protocol on stdio."""
    return [sys.executable, "-m", "conqure.executor"]


class PipeExecutor:
    """A persistent executor process handling many request/response pairs
    over its lifetime. One in-flight request at a time (internally locked)."""

    def __init__(self, command: Optional[Sequence[str]] = None):
        self.command = list(command) if command is not None else default_executor_command()
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as exc:
            raise ExecutorSpawnError(f"cannot spawn executor {self.command}: {exc}") from exc

    def _stderr_tail(self) -> str:
        try:
            data = self._proc.stderr.read() if self._proc.stderr else b""
        except Exception:
            data = b""
        return data.decode("utf-8", errors="replace").strip()[-2000:]

    def execute(self, doc: WorkloadDocument) -> Counts:
        request = serialize_workload(doc)
        with self._lock:
            proc = self._proc
            if proc.poll() is not None:
                raise OffloadError(
                    f"executor exited with status {proc.returncode}: {self._stderr_tail()}"
                )
            try:
                proc.stdin.write(request + b"\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise OffloadError(f"executor pipe broke: {exc}; {self._stderr_tail()}") from exc
            if not line:
                proc.wait(timeout=5.0)
                raise OffloadError(
                    f"executor exited with status {proc.returncode}: {self._stderr_tail()}"
                )
        return parse_map_from(line.decode("utf-8"), expected_shots=doc.circuit.shots)

    def close(self):
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
                proc.wait(timeout=5.0)
            except Exception:
                proc.kill()
                proc.wait(timeout=5.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def _execute_subprocess(task: QuantumTask, command: Optional[Sequence[str]]) -> Counts:
    argv = list(command) if command is not None else default_executor_command()
    doc = task.workload()
    request = serialize_workload(doc)
    try:
        proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE
        )
    except OSError as exc:
        raise ExecutorSpawnError(f"cannot spawn executor {argv}: {exc}") from exc
    try:
        out, err = proc.communicate(request + b"\n", timeout=300.0)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        raise OffloadError(f"executor {argv} timed out") from None
    if proc.returncode != 0:
        raise OffloadError(
            f"executor exited with status {proc.returncode}: "
            f"{err.decode('utf-8', errors='replace').strip()[-2000:]}"
        )
    line = out.split(b"\n", 1)[0].decode("utf-8")
    if not line:
        raise ProtocolError("executor produced no response line")
    return parse_map_from(line, expected_shots=task.shots)


def _execute_queue(task: QuantumTask, target: QueueTarget) -> Counts:
    doc = task.workload()
    session = requests.Session()
    try:
        response = session.post(
            f"{target.url}/v1/work",
            json={
                "workload": serialize_workload(doc).decode("utf-8"),
                "device_id": target.device_id,
                "priority": target.priority,
            },
            timeout=10.0,
        )
    except requests.RequestException as exc:
        raise OffloadError(f"cannot reach queue at {target.url}: {exc}") from exc
    if response.status_code != 201:
        raise OffloadError(f"submission rejected ({response.status_code}): {response.text}")
    job_id = response.json()["job_id"]

    deadline = time.monotonic() + target.timeout
    while True:
        status = session.get(f"{target.url}/v1/work/{job_id}", timeout=10.0).json()["status"]
        if status in ("COMPLETED", "FAILED", "CANCELLED"):
            break
        if time.monotonic() > deadline:
            raise OffloadError(f"job {job_id} did not finish within {target.timeout}s")
        time.sleep(target.poll_interval)

    results = session.get(f"{target.url}/v1/work/{job_id}/results", timeout=10.0)
    payload = results.json()
    if status != "COMPLETED":
        raise RemoteJobError(f"job {job_id} {status}: {payload.get('error', '')}")
    return parse_map_from(
        json.dumps(payload["counts"]), expected_shots=task.shots
    )


def task_execute(
    task: QuantumTask,
    executor: ExecutorKind = ExecutorKind.SUBPROCESS_PIPE,
    target: Optional[Sequence[str] | QueueTarget] = None,
) -> Counts:
    """Execute a finalized task and fill its frequencies slot.

    SUBPROCESS_PIPE spawns a local executor (``target`` is the argv, default
    the bundled simulator CLI) and exchanges one request/response line pair.
    QUEUE_CLIENT submits to the HTTP queue at ``target`` and polls until done.
    """
    if not task.measured:
        raise TaskStateError("task must be finalized with measure() before execute")
    if executor is ExecutorKind.SUBPROCESS_PIPE:
        if target is not None and isinstance(target, QueueTarget):
            raise OffloadError("SUBPROCESS_PIPE target must be an argv sequence")
        counts = _execute_subprocess(task, target)
    elif executor is ExecutorKind.QUEUE_CLIENT:
        if not isinstance(target, QueueTarget):
            raise OffloadError("QUEUE_CLIENT requires a QueueTarget")
        counts = _execute_queue(task, target)
    else:
        raise OffloadError(f"unknown executor kind {executor!r}")
    task.frequencies = counts
    return counts


def run_multi_offload(
    tasks: Sequence[QuantumTask],
    qpu_count: int,
    command: Optional[Sequence[str]] = None,
) -> list[Counts]:
    """Execute a batch of tasks with one worker (and one persistent executor
    process) per logical QPU index: tasks on distinct indices run
    concurrently, tasks sharing an index serialize in input order. Results
    come back in input order. Per-task failures are isolated and collected
    into a MultiOffloadError carrying the surviving results."""
    if qpu_count < 1:
        raise OffloadError(f"qpu_count must be >= 1, got {qpu_count}")
    for i, task in enumerate(tasks):
        if task.device_index >= qpu_count:
            raise OffloadError(
                f"task {i} targets QPU {task.device_index}, only {qpu_count} configured"
            )
    if not tasks:
        return []

    results: list[Optional[Counts]] = [None] * len(tasks)
    errors: dict[int, str] = {}
    by_qpu: dict[int, list[int]] = {}
    for i, task in enumerate(tasks):
        by_qpu.setdefault(task.device_index, []).append(i)

    def qpu_worker(indices: list[int]):
        executor: Optional[PipeExecutor] = None
        try:
            executor = PipeExecutor(command)
        except OffloadError as exc:
            for i in indices:
                errors[i] = str(exc)
            return
        try:
            for i in indices:
                task = tasks[i]
                try:
                    if not task.measured:
                        raise TaskStateError("task must be finalized with measure()")
                    counts = executor.execute(task.workload())
                    task.frequencies = counts
                    results[i] = counts
                except OffloadError as exc:
                    errors[i] = str(exc)
                    # A dead executor poisons the remaining tasks on this
                    # QPU; respawn so they still get a chance.
                    if executor._proc.poll() is not None:
                        executor.close()
                        try:
                            executor = PipeExecutor(command)
                        except OffloadError as spawn_exc:
                            for j in indices[indices.index(i) + 1:]:
                                errors[j] = str(spawn_exc)
                            return
        finally:
            if executor is not None:
                executor.close()

    threads = [
        threading.Thread(target=qpu_worker, args=(indices,), name=f"qpu-{qpu}", daemon=True)
        for qpu, indices in sorted(by_qpu.items())
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    if errors:
        raise MultiOffloadError(errors, results)
    return [r for r in results if r is not None]
