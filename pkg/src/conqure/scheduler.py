"""Device registry, per-device priority queues, and the worker pool that
drives jobs through the simulator backend.

Each registered device owns its queue and one worker thread per slot.
Dequeue order is policy-driven: PRIORITY_FIFO takes the highest priority
first and FIFO by submission time within a level; QUBIT_AFFINITY
additionally prefers, within the top nonempty priority level only, jobs
whose qubit count matches the device's previously executed job (models
avoiding ion retrapping between runs). Claiming a job is atomic: the
winning worker transitions it QUEUED->RUNNING while holding the device
lock, so every job runs at most once. Running jobs are never preempted.
"""

from __future__ import annotations

import bisect
import enum
import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from .circuits import Circuit, Gate
from .simulator import SimConfig, run_circuit
from .store import (
    IllegalTransitionError,
    JobRecord,
    JobStatus,
    JobStore,
    Priority,
)

log = logging.getLogger(__name__)


class DeviceKind(str, enum.Enum):
    SIMULATOR = "simulator"
    HARDWARE_STUB = "hardware_stub"


class QueuePolicy(str, enum.Enum):
    PRIORITY_FIFO = "priority_fifo"
    QUBIT_AFFINITY = "qubit_affinity"


@dataclass(frozen=True)
class DeviceDescriptor:
    """A registered execution target. ``slots`` is the number of jobs the
    device runs concurrently (a QPU runs one circuit at a time)."""

    device_id: str
    kind: DeviceKind
    num_qubits: int
    supported_gates: frozenset[Gate]
    slots: int = 1

    def __post_init__(self):
        if not self.device_id:
            raise ValueError("device_id must be nonempty")
        if self.num_qubits < 1:
            raise ValueError("device num_qubits must be >= 1")
        if self.slots < 1:
            raise ValueError("device slots must be >= 1")
        object.__setattr__(self, "supported_gates", frozenset(self.supported_gates))


class SchedulerError(Exception):
    """Base class for scheduling failures."""


class UnknownDeviceError(SchedulerError):
    def __init__(self, device_id: str):
        super().__init__(f"unknown device {device_id!r}")
        self.device_id = device_id


class DuplicateDeviceError(SchedulerError):
    def __init__(self, device_id: str):
        super().__init__(f"device {device_id!r} is already registered")
        self.device_id = device_id


class AdmissionError(SchedulerError):
    """Job rejected at enqueue time; the job has been marked FAILED."""


@dataclass(order=True)
class _QueueEntry:
    submitted_key: tuple
    seq: int
    job_id: str = field(compare=False)
    num_qubits: int = field(compare=False)


class _DeviceState:
    def __init__(self, descriptor: DeviceDescriptor, policy: QueuePolicy):
        self.descriptor = descriptor
        self.policy = policy
        self.cond = threading.Condition()
        # One FIFO-ordered list per priority level, kept sorted by
        # (submitted_at, seq) so arrival order never matters.
        self.levels: dict[Priority, list[_QueueEntry]] = {p: [] for p in Priority}
        self.last_num_qubits: Optional[int] = None
        self.workers: list[threading.Thread] = []

    def pending(self) -> int:
        return sum(len(v) for v in self.levels.values())


def capability_problem(descriptor: DeviceDescriptor, circuit: Circuit) -> Optional[str]:
    """Why the circuit cannot run on the device, or None if it can."""
    if circuit.num_qubits > descriptor.num_qubits:
        return (
            f"circuit needs {circuit.num_qubits} qubits but device "
            f"'{descriptor.device_id}' has {descriptor.num_qubits}"
        )
    unsupported = circuit.gate_kinds() - descriptor.supported_gates
    if unsupported:
        names = ", ".join(sorted(g.value for g in unsupported))
        return f"device '{descriptor.device_id}' does not support gate(s): {names}"
    return None


class Scheduler:
    """Owns the device registry and worker threads; all queue mutations are
    serialized per device, so claims are linearizable per device."""

    def __init__(self, store: JobStore):
        self._store = store
        self._devices: dict[str, _DeviceState] = {}
        self._registry_lock = threading.Lock()
        self._seq = itertools.count()
        self._stopped = threading.Event()
        self._started = False

    # -- registry ----------------------------------------------------------

    def register_device(
        self, descriptor: DeviceDescriptor, policy: QueuePolicy = QueuePolicy.PRIORITY_FIFO
    ):
        with self._registry_lock:
            if descriptor.device_id in self._devices:
                raise DuplicateDeviceError(descriptor.device_id)
            state = _DeviceState(descriptor, policy)
            self._devices[descriptor.device_id] = state
        if self._started:
            self._spawn_workers(state)
        log.info("registered device %s (%s, %d qubits, %d slot(s), %s)",
                 descriptor.device_id, descriptor.kind.value, descriptor.num_qubits,
                 descriptor.slots, policy.value)

    def devices(self) -> list[tuple[DeviceDescriptor, QueuePolicy]]:
        with self._registry_lock:
            return [(s.descriptor, s.policy) for s in self._devices.values()]

    def get_device(self, device_id: str) -> DeviceDescriptor:
        state = self._devices.get(device_id)
        if state is None:
            raise UnknownDeviceError(device_id)
        return state.descriptor

    # -- queueing ----------------------------------------------------------

    def enqueue(self, job_id: str):
        """Admit a QUEUED job to its target device's queue. Admission
        failures (unknown device, capability mismatch) mark the job FAILED
        and raise AdmissionError."""
        record = self._store.get_job(job_id)
        if record.status is not JobStatus.QUEUED:
            raise SchedulerError(f"job {job_id} is {record.status.value}, not QUEUED")
        state = self._devices.get(record.device_id)
        if state is None:
            message = f"unknown device {record.device_id!r}"
            self._store.transition(job_id, JobStatus.FAILED, error=message)
            raise AdmissionError(message)
        problem = capability_problem(state.descriptor, record.workload.circuit)
        if problem is not None:
            self._store.transition(job_id, JobStatus.FAILED, error=problem)
            raise AdmissionError(problem)
        entry = _QueueEntry(
            submitted_key=(record.submitted_at,),
            seq=next(self._seq),
            job_id=job_id,
            num_qubits=record.workload.circuit.num_qubits,
        )
        with state.cond:
            bisect.insort(state.levels[record.priority], entry)
            state.cond.notify()

    def _select_index(self, state: _DeviceState) -> Optional[tuple[Priority, int]]:
        for priority in (Priority.HIGH, Priority.MEDIUM, Priority.LOW):
            level = state.levels[priority]
            if not level:
                continue
            if state.policy is QueuePolicy.QUBIT_AFFINITY and state.last_num_qubits is not None:
                for i, entry in enumerate(level):
                    if entry.num_qubits == state.last_num_qubits:
                        return priority, i
            return priority, 0
        return None

    def dequeue_next(self, device_id: str) -> Optional[str]:
        """Claim the next job per the device's policy, transitioning it
        QUEUED->RUNNING. Returns None when the queue is empty. Entries whose
        job was cancelled while waiting are discarded and skipped."""
        state = self._devices.get(device_id)
        if state is None:
            raise UnknownDeviceError(device_id)
        with state.cond:
            while True:
                selected = self._select_index(state)
                if selected is None:
                    return None
                priority, index = selected
                entry = state.levels[priority].pop(index)
                try:
                    self._store.transition(entry.job_id, JobStatus.RUNNING)
                except IllegalTransitionError:
                    continue
                state.last_num_qubits = entry.num_qubits
                return entry.job_id

    def queue_position(self, job_id: str) -> Optional[int]:
        """1-based position of a queued job in its device's current dequeue
        order, or None if it is not waiting."""
        record = self._store.get_job(job_id)
        state = self._devices.get(record.device_id)
        if state is None:
            return None
        with state.cond:
            position = 0
            for priority in (Priority.HIGH, Priority.MEDIUM, Priority.LOW):
                for entry in state.levels[priority]:
                    position += 1
                    if entry.job_id == job_id:
                        return position
        return None

    # -- execution ---------------------------------------------------------

    def worker_run(self, device_id: str, job_id: str):
        """Execute one claimed (RUNNING) job on the device's backend and
        persist the terminal outcome. Never raises: simulator failures are
        captured into FAILED so the worker loop survives."""
        state = self._devices.get(device_id)
        if state is None:
            raise UnknownDeviceError(device_id)
        descriptor = state.descriptor
        try:
            record = self._store.get_job(job_id)
            config = SimConfig(seed=record.seed, max_qubits=descriptor.num_qubits)
            counts = run_circuit(record.workload.circuit, config)
            self._store.transition(job_id, JobStatus.COMPLETED, counts=counts)
        except Exception as exc:  # noqa: BLE001 - fault isolation boundary
            log.warning("job %s failed on %s: %s", job_id, device_id, exc)
            try:
                self._store.transition(
                    job_id, JobStatus.FAILED, error=f"{type(exc).__name__}: {exc}"
                )
            except Exception:
                log.exception("could not record failure of job %s", job_id)

    def _worker_loop(self, state: _DeviceState):
        device_id = state.descriptor.device_id
        while not self._stopped.is_set():
            with state.cond:
                while state.pending() == 0 and not self._stopped.is_set():
                    state.cond.wait(timeout=0.5)
                if self._stopped.is_set():
                    return
            job_id = self.dequeue_next(device_id)
            if job_id is not None:
                self.worker_run(device_id, job_id)

    def _spawn_workers(self, state: _DeviceState):
        for slot in range(state.descriptor.slots):
            thread = threading.Thread(
                target=self._worker_loop,
                args=(state,),
                name=f"worker-{state.descriptor.device_id}-{slot}",
                daemon=True,
            )
            state.workers.append(thread)
            thread.start()

    def start(self):
        """Spawn one worker thread per device slot."""
        if self._started:
            return
        self._started = True
        self._stopped.clear()
        with self._registry_lock:
            states = list(self._devices.values())
        for state in states:
            self._spawn_workers(state)

    def stop(self, timeout: float = 5.0):
        self._stopped.set()
        with self._registry_lock:
            states = list(self._devices.values())
        for state in states:
            with state.cond:
                state.cond.notify_all()
        for state in states:
            for thread in state.workers:
                thread.join(timeout=timeout)
            state.workers.clear()
        self._started = False
