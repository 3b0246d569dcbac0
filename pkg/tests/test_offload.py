import json
import sys
import textwrap
import time

import numpy as np
import pytest

from conqure.circuits import parse_workload
from conqure.offload import (
    ExecutorKind,
    ExecutorSpawnError,
    MultiOffloadError,
    OffloadError,
    PipeExecutor,
    ProtocolError,
    QuantumTask,
    QueueTarget,
    RemoteJobError,
    TaskStateError,
    parse_map_from,
    parse_map_to,
    run_multi_offload,
    serialize_map_to,
    task_execute,
)
from conqure.simulator import SimConfig, run_circuit

LISTING6_COUNTS = '{"1011": 8, "0011": 7, "0111": 14, "1001": 7, "0101": 3, "1110": 1, "1111": 60}'

# Listing-5 style first-layer angles plus a second layer.
TASK_ANGLES = [2.858849, 1.445133, 2.136283, 2.293363, 0.25, 1.445133, 2.136283, 2.293363]


def vqe_task(device_index=0, seed=11, shots=100, num_qubits=4, angles=TASK_ANGLES):
    task = QuantumTask(num_qubits=num_qubits, shots=shots, device_index=device_index,
                       seed=seed)
    for q in range(num_qubits):
        task.ry(angles[q], q)
    for i in range(num_qubits - 1):
        task.cx(i, i + 1)
    for q in range(num_qubits):
        task.ry(angles[num_qubits + q], q)
    task.measure()
    task.map_to("angles", angles)
    return task


class TestQuantumTask:
    def test_gate_calls_accumulate(self):
        task = QuantumTask(num_qubits=2, shots=10)
        task.h(0)
        task.cx(0, 1)
        task.measure()
        circuit = task.circuit()
        assert [op.gate.value for op in circuit.ops] == ["h", "cx", "measure_all"]

    def test_ry_literal_angle_preserved(self):
        task = QuantumTask(num_qubits=1, shots=1)
        task.ry(2.858849, 0)
        task.measure()
        assert task.circuit().ops[0].params == (2.858849,)

    def test_bad_cx_rejected(self):
        task = QuantumTask(num_qubits=2, shots=1)
        with pytest.raises(Exception, match="distinct"):
            task.cx(1, 1)

    def test_out_of_range_qubit(self):
        task = QuantumTask(num_qubits=2, shots=1)
        with pytest.raises(TaskStateError, match="out of range"):
            task.h(2)

    def test_gate_after_measure_rejected(self):
        task = QuantumTask(num_qubits=1, shots=1)
        task.measure()
        with pytest.raises(TaskStateError, match="after measure"):
            task.h(0)

    def test_execute_requires_measure(self):
        task = QuantumTask(num_qubits=1, shots=1)
        task.h(0)
        with pytest.raises(TaskStateError, match="measure"):
            task_execute(task)

    def test_workload_carries_seed_and_mapped_arrays(self):
        task = vqe_task(seed=77)
        doc = task.workload()
        assert doc.metadata["seed"] == "77"
        assert json.loads(doc.metadata["map_to.angles"]) == TASK_ANGLES


class TestMapSerialization:
    def test_angles_roundtrip_bit_exact(self):
        values = {"angles": [2.858849, 1.445133], "offsets": [0.1 + 0.2, 1e-17, -3.5]}
        message = serialize_map_to(values)
        assert message.payload == '{"angles":[2.858849,1.445133],"offsets":[0.30000000000000004,1e-17,-3.5]}'
        assert parse_map_to(message) == values

    def test_random_arrays_roundtrip(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            values = {"a": list(rng.uniform(-10, 10, size=rng.integers(1, 8)))}
            assert parse_map_to(serialize_map_to(values)) == values

    def test_nonfinite_rejected(self):
        with pytest.raises(ProtocolError, match="non-finite"):
            serialize_map_to({"a": [float("inf")]})

    def test_listing6_message_parses(self):
        counts = parse_map_from(LISTING6_COUNTS, expected_shots=100)
        assert len(counts) == 7
        assert counts.shots == 100
        assert counts["1111"] == 60
        assert counts["0000"] == 0  # unobserved states read as zero

    def test_truncated_message_is_protocol_error(self):
        with pytest.raises(ProtocolError, match="malformed"):
            parse_map_from('{"00": 3')

    def test_count_sum_mismatch_detected(self):
        with pytest.raises(ProtocolError, match="does not match"):
            parse_map_from('{"00": 3}', expected_shots=5)

    @pytest.mark.parametrize("bad", ['{"02": 3}', '{"": 1}', '{"01": 0}', '{"01": 1.5}', '[1]'])
    def test_malformed_counts_rejected(self, bad):
        with pytest.raises(ProtocolError):
            parse_map_from(bad)


class TestSubprocessPipe:
    def test_vqe_task_executes_end_to_end(self):
        task = vqe_task(shots=100)
        counts = task_execute(task, ExecutorKind.SUBPROCESS_PIPE)
        assert counts.shots == 100
        assert all(len(k) == 4 and set(k) <= {"0", "1"} for k in counts)
        assert task.frequencies == counts

    def test_empty_circuit_five_shots(self):
        task = QuantumTask(num_qubits=1, shots=5, seed=1)
        task.measure()
        counts = task_execute(task, ExecutorKind.SUBPROCESS_PIPE)
        assert counts == {"0": 5}

    def test_pipe_execution_matches_local_simulation(self):
        task = vqe_task(seed=2025)
        counts = task_execute(task, ExecutorKind.SUBPROCESS_PIPE)
        assert counts == run_circuit(task.circuit(), SimConfig(seed=2025))

    def test_missing_executor_binary_is_spawn_error(self):
        task = QuantumTask(num_qubits=1, shots=1, seed=0)
        task.measure()
        with pytest.raises(ExecutorSpawnError):
            task_execute(task, ExecutorKind.SUBPROCESS_PIPE, ["/nonexistent/executor"])

    def test_request_bytes_observed_by_executor_roundtrip(self):
        # The exact bytes written to the pipe parse back to the host's
        # values: params and mapped arrays are equal, not approximately.
        from conqure.circuits import serialize_workload

        rng = np.random.default_rng(10)
        for _ in range(20):
            angles = list(rng.uniform(-7, 7, size=8))
            task = vqe_task(seed=int(rng.integers(2**63)), angles=angles)
            wire = serialize_workload(task.workload())
            observed = parse_workload(wire)
            ry_params = [op.params[0] for op in observed.circuit.ops
                         if op.gate.value == "ry"]
            assert ry_params == angles
            assert json.loads(observed.metadata["map_to.angles"]) == angles


class TestPipeExecutorPersistent:
    def test_many_requests_one_process(self):
        with PipeExecutor() as executor:
            for seed in range(5):
                task = vqe_task(seed=seed, shots=50)
                counts = executor.execute(task.workload())
                assert counts.shots == 50
                assert counts == run_circuit(task.circuit(), SimConfig(seed=seed))

    def test_executor_death_reported_with_stderr(self):
        executor = PipeExecutor()
        task = QuantumTask(num_qubits=30, shots=1, seed=0)  # over the 24-qubit guard
        task.measure()
        with pytest.raises(OffloadError, match="exceeds"):
            executor.execute(task.workload())
        executor.close()


class TestRunMultiOffload:
    def test_empty_task_list(self):
        assert run_multi_offload([], qpu_count=3) == []

    def test_results_in_input_order_and_deterministic(self):
        tasks = [vqe_task(device_index=i % 2, seed=100 + i, shots=40) for i in range(6)]
        results = run_multi_offload(tasks, qpu_count=2)
        assert len(results) == 6
        for task, counts in zip(tasks, results):
            assert counts == run_circuit(task.circuit(), SimConfig(seed=task.seed))

    def test_device_index_out_of_range(self):
        task = vqe_task(device_index=3)
        with pytest.raises(OffloadError, match="QPU"):
            run_multi_offload([task], qpu_count=2)

    def test_failed_task_isolated_others_survive(self):
        good_a = vqe_task(device_index=0, seed=1, shots=20)
        too_big = QuantumTask(num_qubits=30, shots=1, device_index=1, seed=2)
        too_big.measure()
        good_b = vqe_task(device_index=2, seed=3, shots=20)
        with pytest.raises(MultiOffloadError) as excinfo:
            run_multi_offload([good_a, too_big, good_b], qpu_count=3)
        error = excinfo.value
        assert set(error.errors) == {1}
        assert error.results[0] == run_circuit(good_a.circuit(), SimConfig(seed=1))
        assert error.results[2] == run_circuit(good_b.circuit(), SimConfig(seed=3))
        assert error.results[1] is None

    def test_executor_crash_poisons_only_its_task(self):
        # Same QPU: a failing task then a good one; the respawned executor
        # still serves the survivor.
        too_big = QuantumTask(num_qubits=30, shots=1, device_index=0, seed=2)
        too_big.measure()
        good = vqe_task(device_index=0, seed=4, shots=20)
        with pytest.raises(MultiOffloadError) as excinfo:
            run_multi_offload([too_big, good], qpu_count=1)
        assert set(excinfo.value.errors) == {0}
        assert excinfo.value.results[1] == run_circuit(good.circuit(), SimConfig(seed=4))


SLEEPY_EXECUTOR = textwrap.dedent(
    """
    import json, sys, time
    log_path = sys.argv[1]
    sleep_s = float(sys.argv[2])
    for line in sys.stdin:
        doc = json.loads(line)
        start = time.monotonic()
        time.sleep(sleep_s)
        end = time.monotonic()
        with open(log_path, "a") as fh:
            fh.write(f"{start} {end}\\n")
        sys.stdout.write(json.dumps({"0": doc["shots"]}) + "\\n")
        sys.stdout.flush()
    """
)


def max_overlap(intervals):
    events = []
    for start, end in intervals:
        events.append((start, 1))
        events.append((end, -1))
    events.sort()
    live = peak = 0
    for _, delta in events:
        live += delta
        peak = max(peak, live)
    return peak


class TestConcurrencyShape:
    def _run(self, tmp_path, num_tasks, qpu_count, sleep_s=0.15):
        log_path = tmp_path / "intervals.log"
        command = [sys.executable, "-c", SLEEPY_EXECUTOR, str(log_path), str(sleep_s)]
        tasks = []
        for i in range(num_tasks):
            task = QuantumTask(num_qubits=1, shots=1, device_index=i % qpu_count, seed=0)
            task.measure()
            tasks.append(task)
        results = run_multi_offload(tasks, qpu_count=qpu_count, command=command)
        assert all(counts == {"0": 1} for counts in results)
        intervals = [
            tuple(float(x) for x in line.split())
            for line in log_path.read_text().strip().splitlines()
        ]
        assert len(intervals) == num_tasks
        return intervals

    def test_distinct_indices_run_concurrently(self, tmp_path):
        intervals = self._run(tmp_path, num_tasks=4, qpu_count=4)
        assert max_overlap(intervals) == 4  # min(task count, qpu count)

    def test_shared_index_serializes(self, tmp_path):
        intervals = self._run(tmp_path, num_tasks=4, qpu_count=1)
        assert max_overlap(intervals) == 1

    def test_mixed_assignment_caps_at_qpu_count(self, tmp_path):
        intervals = self._run(tmp_path, num_tasks=6, qpu_count=2)
        assert max_overlap(intervals) == 2


class TestQueueClient:
    def test_task_executes_via_cloud_queue(self, service_url):
        task = vqe_task(seed=909, shots=60)
        target = QueueTarget(url=service_url, device_id="sim0")
        counts = task_execute(task, ExecutorKind.QUEUE_CLIENT, target)
        assert counts.shots == 60
        # Seed rides in metadata, so the remote execution is reproducible.
        assert counts == run_circuit(task.circuit(), SimConfig(seed=909))

    def test_remote_failure_propagates(self, service_url):
        task = QuantumTask(num_qubits=30, shots=1, device_index=0, seed=0)
        task.measure()
        target = QueueTarget(url=service_url, device_id="sim0")
        with pytest.raises(OffloadError):
            task_execute(task, ExecutorKind.QUEUE_CLIENT, target)

    def test_queue_client_requires_queue_target(self):
        task = QuantumTask(num_qubits=1, shots=1, seed=0)
        task.measure()
        with pytest.raises(OffloadError, match="QueueTarget"):
            task_execute(task, ExecutorKind.QUEUE_CLIENT, None)
