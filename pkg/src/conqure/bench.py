"""API latency benchmark: per-call wall time of create_work and get_results
against a running service, across GHZ workload sizes.

Every sample is one full HTTP round trip on a keep-alive session. Jobs are
tiny GHZ circuits so the queue drains quickly; the get_results sample is
taken only after the job reports COMPLETED, mirroring how clients poll.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from typing import IO, Sequence

import requests

from .circuits import build_ghz, serialize_workload, WorkloadDocument


class BenchError(Exception):
    pass


@dataclass(frozen=True)
class LatencySample:
    num_qubits: int
    call: str  # "create_work" | "get_results"
    latency_ms: float


@dataclass(frozen=True)
class LatencySummary:
    call: str
    num_qubits: int | None  # None = pooled over all sizes
    samples: int
    median_ms: float
    q1_ms: float
    q3_ms: float
    min_ms: float
    max_ms: float


def _summarize(call: str, num_qubits: int | None, values: list[float]) -> LatencySummary:
    values = sorted(values)
    if len(values) >= 4:
        quartiles = statistics.quantiles(values, n=4)
        q1, q3 = quartiles[0], quartiles[2]
    else:
        q1 = q3 = statistics.median(values)
    return LatencySummary(
        call=call,
        num_qubits=num_qubits,
        samples=len(values),
        median_ms=statistics.median(values),
        q1_ms=q1,
        q3_ms=q3,
        min_ms=values[0],
        max_ms=values[-1],
    )


@dataclass(frozen=True)
class BenchResult:
    samples: tuple[LatencySample, ...]

    def summaries(self) -> list[LatencySummary]:
        out = []
        for call in ("create_work", "get_results"):
            pooled = [s.latency_ms for s in self.samples if s.call == call]
            if pooled:
                out.append(_summarize(call, None, pooled))
            sizes = sorted({s.num_qubits for s in self.samples if s.call == call})
            for size in sizes:
                values = [
                    s.latency_ms
                    for s in self.samples
                    if s.call == call and s.num_qubits == size
                ]
                out.append(_summarize(call, size, values))
        return out

    def median_ms(self, call: str) -> float:
        values = [s.latency_ms for s in self.samples if s.call == call]
        if not values:
            raise BenchError(f"no samples for {call!r}")
        return statistics.median(values)

    def write_csv(self, stream: IO[str]):
        writer = csv.writer(stream)
        writer.writerow(["num_qubits", "call", "latency_ms"])
        for sample in self.samples:
            writer.writerow([sample.num_qubits, sample.call, f"{sample.latency_ms:.4f}"])


def run_latency_bench(
    url: str,
    device_id: str = "sim0",
    sizes: Sequence[int] = tuple(range(2, 9)),
    repetitions: int = 1000,
    shots: int = 30,
    wait_timeout: float = 30.0,
) -> BenchResult:
    """Measure create_work and get_results latency ``repetitions`` times per
    GHZ size. Returns all raw samples, box-plot ready."""
    if repetitions < 1:
        raise BenchError(f"repetitions must be >= 1, got {repetitions}")
    session = requests.Session()
    samples: list[LatencySample] = []
    workloads = {
        n: serialize_workload(WorkloadDocument(circuit=build_ghz(n, shots))).decode("utf-8")
        for n in sizes
    }
    for n in sizes:
        body = {"workload": workloads[n], "device_id": device_id, "priority": "LOW"}
        for _ in range(repetitions):
            t0 = time.perf_counter()
            response = session.post(f"{url}/v1/work", json=body, timeout=10.0)
            create_ms = (time.perf_counter() - t0) * 1e3
            if response.status_code != 201:
                raise BenchError(
                    f"create_work rejected ({response.status_code}): {response.text}"
                )
            job_id = response.json()["job_id"]
            samples.append(LatencySample(n, "create_work", create_ms))

            deadline = time.monotonic() + wait_timeout
            while True:
                status = session.get(f"{url}/v1/work/{job_id}", timeout=10.0).json()["status"]
                if status == "COMPLETED":
                    break
                if status in ("FAILED", "CANCELLED"):
                    raise BenchError(f"bench job {job_id} ended {status}")
                if time.monotonic() > deadline:
                    raise BenchError(f"bench job {job_id} stuck in {status}")
                time.sleep(0.001)

            t0 = time.perf_counter()
            response = session.get(f"{url}/v1/work/{job_id}/results", timeout=10.0)
            results_ms = (time.perf_counter() - t0) * 1e3
            if response.status_code != 200:
                raise BenchError(
                    f"get_results failed ({response.status_code}): {response.text}"
                )
            samples.append(LatencySample(n, "get_results", results_ms))
    return BenchResult(samples=tuple(samples))
