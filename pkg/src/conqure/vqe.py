"""Parallel VQE max-cut harness: cost evaluation from measured counts, a
simultaneous-perturbation (SPSA) classical optimizer, serial or multi-QPU
orchestration over the offload runtime, and convergence tracing.

Each instance is fully deterministic under its seed: the perturbation
stream, every per-evaluation sampling seed, and the initial angles all
derive from it, so running the same instances serially or across QPU
workers yields identical traces (only wall-clock timing differs).
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .offload import PipeExecutor, QuantumTask
from .simulator import Counts

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, *parts: int | str) -> int:
    """Deterministic 64-bit seed derivation, stable across platforms. Used
    to give every evaluation and every RNG stream its own seed from one
    instance seed."""
    h = _splitmix64(base & _MASK64)
    for part in parts:
        if isinstance(part, str):
            for byte in part.encode("utf-8"):
                h = _splitmix64(h ^ byte)
        else:
            h = _splitmix64(h ^ (int(part) & _MASK64))
    return h


class VqeError(Exception):
    pass


class VqeInstanceError(VqeError):
    """An instance's executor failed; carries the trace gathered so far."""

    def __init__(self, message: str, partial: tuple["IterationRecord", ...]):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class Graph:
    """Undirected graph on vertices 0..num_vertices-1, unit edge weights."""

    num_vertices: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.num_vertices < 1:
            raise VqeError(f"num_vertices must be >= 1, got {self.num_vertices}")
        normalized = set()
        for edge in self.edges:
            i, j = edge
            if i == j:
                raise VqeError(f"self-loop on vertex {i}")
            if not (0 <= i < self.num_vertices and 0 <= j < self.num_vertices):
                raise VqeError(f"edge {edge} out of range for {self.num_vertices} vertices")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def random_graph(num_vertices: int, edge_prob: float, seed: int) -> Graph:
    """Erdos-Renyi style graph from a Philox stream; same (n, p, seed)
    always yields the same edge set."""
    rng = np.random.Generator(np.random.Philox(seed))
    edges = set()
    for i in range(num_vertices):
        for j in range(i + 1, num_vertices):
            if rng.random() < edge_prob:
                edges.add((i, j))
    return Graph(num_vertices, frozenset(edges))


#: The frozen 7-vertex benchmark graph (drawn once via random_graph(7, 0.5,
#: seed=7) and committed as a literal). Its exhaustively-verified optimum is
#: a cut of 9 edges, first achieved by bitstring "0001101".
DEMO_GRAPH = Graph(
    num_vertices=7,
    edges=frozenset(
        {(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (1, 4), (2, 4),
         (2, 5), (2, 6), (3, 4), (3, 6)}
    ),
)


def cut_value(bitstring: str, graph: Graph) -> int:
    """Number of edges crossing the partition encoded by the bitstring.
    Vertex v is read at string position (num_vertices - 1 - v), matching the
    simulator's qubit convention."""
    n = graph.num_vertices
    if len(bitstring) != n:
        raise VqeError(f"bitstring length {len(bitstring)} != {n} vertices")
    return sum(1 for i, j in graph.edges if bitstring[n - 1 - i] != bitstring[n - 1 - j])


def maxcut_cost(counts: Counts, graph: Graph) -> float:
    """Cost = -E[cut] over the measured distribution; always in [-|E|, 0]."""
    total = sum(counts.values())
    if total <= 0:
        raise VqeError("counts must be nonempty")
    acc = 0.0
    for bitstring, count in counts.items():
        acc += count * cut_value(bitstring, graph)
    return -acc / total


def brute_force_maxcut(graph: Graph) -> tuple[int, str]:
    """Exact maximum cut by exhaustive enumeration of all 2^n partitions
    (guarded at 20 vertices). Ties break to the lexicographically smallest
    bitstring."""
    n = graph.num_vertices
    if n > 20:
        raise VqeError(f"brute force capped at 20 vertices, got {n}")
    assignments = np.arange(2**n, dtype=np.int64)
    cuts = np.zeros(2**n, dtype=np.int64)
    for i, j in graph.edges:
        cuts += (assignments >> i ^ assignments >> j) & 1
    best = int(np.argmax(cuts))  # first occurrence = lexicographically smallest
    return int(cuts[best]), format(best, f"0{n}b")


@dataclass(frozen=True)
class SpsaSchedule:
    """Gain sequences for simultaneous-perturbation stochastic approximation:
    step a_k = a / (k + 1 + A)^alpha, probe c_k = c / (k + 1)^gamma."""

    a: float = 1.2
    c: float = 0.25
    big_a: float = 5.0
    alpha: float = 0.602
    gamma: float = 0.101

    def step(self, k: int) -> float:
        return self.a / (k + 1 + self.big_a) ** self.alpha

    def probe(self, k: int) -> float:
        return self.c / (k + 1) ** self.gamma


@dataclass(frozen=True)
class VqeRunConfig:
    """One VQE instance: the problem graph, starting point, sampling budget,
    iteration budget, and the seed everything derives from."""

    graph: Graph
    initial_angles: tuple[float, ...]
    shots: int = 1000
    max_iterations: int = 100
    seed: int = 0
    spsa: SpsaSchedule = field(default_factory=SpsaSchedule)
    convergence_tol: float = 1e-3
    patience: int = 10

    def __post_init__(self):
        object.__setattr__(self, "initial_angles", tuple(float(a) for a in self.initial_angles))
        if len(self.initial_angles) != 2 * self.graph.num_vertices:
            raise VqeError(
                f"{self.graph.num_vertices}-vertex instance takes "
                f"{2 * self.graph.num_vertices} angles, got {len(self.initial_angles)}"
            )
        if self.shots < 1 or self.max_iterations < 1:
            raise VqeError("shots and max_iterations must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    angles: tuple[float, ...]
    cost: float
    elapsed_ms: float


@dataclass(frozen=True)
class ConvergenceTrace:
    """Per-iteration history plus the best point found. ``result_key`` is
    the deterministic content (timing excluded) and is bit-identical across
    serial and parallel execution of the same config."""

    seed: int
    records: tuple[IterationRecord, ...]
    best_cost: float
    best_angles: tuple[float, ...]
    best_bitstring: str
    wall_time_s: float

    @property
    def best_expected_cut(self) -> float:
        return -self.best_cost

    def result_key(self) -> tuple:
        return (
            self.seed,
            tuple((r.iteration, r.angles, r.cost) for r in self.records),
            self.best_cost,
            self.best_angles,
            self.best_bitstring,
        )


TaskRunner = Callable[[QuantumTask], Counts]


def subprocess_runner(command: Optional[Sequence[str]] = None) -> TaskRunner:
    """Runner that spawns one executor process per evaluation."""
    from .offload import ExecutorKind, task_execute

    def run(task: QuantumTask) -> Counts:
        return task_execute(task, ExecutorKind.SUBPROCESS_PIPE, command)

    return run


def pooled_runner(executor: PipeExecutor) -> TaskRunner:
    """Runner that reuses a persistent executor process."""

    def run(task: QuantumTask) -> Counts:
        counts = executor.execute(task.workload())
        task.frequencies = counts
        return counts

    return run


def _build_task(
    config: VqeRunConfig, angles: np.ndarray, eval_seed: int, device_index: int
) -> QuantumTask:
    n = config.graph.num_vertices
    task = QuantumTask(num_qubits=n, shots=config.shots, device_index=device_index,
                       seed=eval_seed)
    for q in range(n):
        task.ry(float(angles[q]), q)
    for i in range(n - 1):
        task.cx(i, i + 1)
    for q in range(n):
        task.ry(float(angles[n + q]), q)
    task.measure()
    task.map_to("angles", [float(a) for a in angles])
    return task


def run_vqe_instance(
    config: VqeRunConfig,
    run_task: TaskRunner,
    device_index: int = 0,
) -> ConvergenceTrace:
    """One full optimization: evaluate the ansatz, take an SPSA step, repeat
    until the best cost stops improving (convergence_tol over patience
    iterations) or the iteration budget runs out."""
    graph = config.graph
    dim = 2 * graph.num_vertices
    schedule = config.spsa
    rng = np.random.Generator(np.random.Philox(derive_seed(config.seed, "spsa")))
    angles = np.array(config.initial_angles, dtype=np.float64)

    records: list[IterationRecord] = []
    best_cost = math.inf
    best_angles = angles.copy()
    best_counts: Optional[Counts] = None
    stall = 0
    start = time.perf_counter()

    def evaluate(point: np.ndarray, eval_seed: int) -> tuple[float, Counts]:
        task = _build_task(config, point, eval_seed, device_index)
        try:
            counts = run_task(task)
        except Exception as exc:
            raise VqeInstanceError(
                f"executor failed at iteration {len(records)}: {exc}", tuple(records)
            ) from exc
        return maxcut_cost(counts, graph), counts

    for k in range(config.max_iterations):
        c_k = schedule.probe(k)
        a_k = schedule.step(k)
        delta = rng.integers(0, 2, size=dim).astype(np.float64) * 2.0 - 1.0
        cost_plus, _ = evaluate(angles + c_k * delta, derive_seed(config.seed, "eval", k, 0))
        cost_minus, _ = evaluate(angles - c_k * delta, derive_seed(config.seed, "eval", k, 1))
        gradient = (cost_plus - cost_minus) / (2.0 * c_k) * delta
        angles = angles - a_k * gradient

        cost, counts = evaluate(angles, derive_seed(config.seed, "eval", k, 2))
        records.append(
            IterationRecord(
                iteration=k,
                angles=tuple(float(a) for a in angles),
                cost=cost,
                elapsed_ms=(time.perf_counter() - start) * 1e3,
            )
        )
        if best_cost - cost >= config.convergence_tol:
            stall = 0
        else:
            stall += 1
        if cost < best_cost:
            best_cost = cost
            best_angles = angles.copy()
            best_counts = counts
        if stall >= config.patience:
            break

    assert best_counts is not None
    top = max(best_counts.values())
    best_bitstring = min(b for b, c in best_counts.items() if c == top)
    return ConvergenceTrace(
        seed=config.seed,
        records=tuple(records),
        best_cost=best_cost,
        best_angles=tuple(float(a) for a in best_angles),
        best_bitstring=best_bitstring,
        wall_time_s=time.perf_counter() - start,
    )


def make_instance_configs(
    graph: Graph,
    instances: int,
    base_seed: int,
    shots: int = 1000,
    max_iterations: int = 100,
    spsa: Optional[SpsaSchedule] = None,
) -> list[VqeRunConfig]:
    """Multi-start configs: instance i gets its own derived seed and its own
    uniformly random initial angles in [0, 2*pi)."""
    if instances < 1:
        raise VqeError(f"instances must be >= 1, got {instances}")
    configs = []
    for i in range(instances):
        seed = derive_seed(base_seed, "instance", i)
        init_rng = np.random.Generator(np.random.Philox(derive_seed(seed, "init")))
        initial = init_rng.uniform(0.0, 2.0 * math.pi, size=2 * graph.num_vertices)
        configs.append(
            VqeRunConfig(
                graph=graph,
                initial_angles=tuple(float(a) for a in initial),
                shots=shots,
                max_iterations=max_iterations,
                seed=seed,
                spsa=spsa if spsa is not None else SpsaSchedule(),
            )
        )
    return configs


@dataclass(frozen=True)
class VqeBatchResult:
    """Traces for a batch of instances (None where an instance failed),
    per-instance errors, and the batch wall time."""

    traces: tuple[Optional[ConvergenceTrace], ...]
    errors: dict[int, str]
    qpu_count: int
    wall_time_s: float

    @property
    def best_index(self) -> int:
        candidates = [(t.best_cost, i) for i, t in enumerate(self.traces) if t is not None]
        if not candidates:
            raise VqeError("every instance failed")
        return min(candidates)[1]

    @property
    def best_trace(self) -> ConvergenceTrace:
        trace = self.traces[self.best_index]
        assert trace is not None
        return trace


def run_parallel_vqe(
    configs: Sequence[VqeRunConfig],
    qpu_count: int,
    command: Optional[Sequence[str]] = None,
) -> VqeBatchResult:
    """Run a batch of VQE instances over ``qpu_count`` QPU workers, one
    persistent executor process per worker; instance i runs on QPU
    i % qpu_count, instances sharing a QPU serialize in index order.
    ``qpu_count=1`` is the serial baseline. Per-instance failures are
    isolated; surviving traces are returned in input order."""
    if not configs:
        raise VqeError("configs must be nonempty")
    if qpu_count < 1:
        raise VqeError(f"qpu_count must be >= 1, got {qpu_count}")

    traces: list[Optional[ConvergenceTrace]] = [None] * len(configs)
    errors: dict[int, str] = {}
    by_qpu: dict[int, list[int]] = {}
    for i in range(len(configs)):
        by_qpu.setdefault(i % qpu_count, []).append(i)

    def qpu_worker(qpu: int, indices: list[int]):
        try:
            executor = PipeExecutor(command)
        except Exception as exc:
            for i in indices:
                errors[i] = f"executor spawn failed: {exc}"
            return
        try:
            runner = pooled_runner(executor)
            for i in indices:
                try:
                    traces[i] = run_vqe_instance(configs[i], runner, device_index=qpu)
                except VqeInstanceError as exc:
                    errors[i] = str(exc)
        finally:
            executor.close()

    start = time.perf_counter()
    threads = [
        threading.Thread(target=qpu_worker, args=(qpu, indices), name=f"vqe-qpu-{qpu}",
                         daemon=True)
        for qpu, indices in sorted(by_qpu.items())
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    wall = time.perf_counter() - start

    return VqeBatchResult(
        traces=tuple(traces), errors=errors, qpu_count=qpu_count, wall_time_s=wall
    )
