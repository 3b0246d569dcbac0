"""conqure: a self-contained co-execution stack for quantum-classical
workloads — cloud queue service, circuit IR, seeded statevector simulator,
pipe-based offload runtime, and a parallel VQE max-cut harness."""

__version__ = "0.1.0"

from .circuits import (
    Circuit,
    Gate,
    GateOp,
    WorkloadDocument,
    WorkloadError,
    WorkloadSyntaxError,
    WorkloadValidationError,
    build_ghz,
    build_vqe_ansatz,
    full_gate_set,
    parse_workload,
    serialize_workload,
)
from .offload import (
    ExecutorKind,
    MultiOffloadError,
    OffloadError,
    PipeExecutor,
    QuantumTask,
    QueueTarget,
    parse_map_from,
    parse_map_to,
    run_multi_offload,
    serialize_map_to,
    task_execute,
)
from .scheduler import (
    DeviceDescriptor,
    DeviceKind,
    QueuePolicy,
    Scheduler,
    SchedulerError,
)
from .service import QueueService, ServiceConfig, load_config
from .simulator import (
    Counts,
    RNG_ALGORITHM,
    SimConfig,
    StateVector,
    apply_gate,
    cx_replacement,
    exact_distribution,
    run_circuit,
    zero_state,
)
from .store import JobRecord, JobStatus, JobStore, Priority
from .vqe import (
    ConvergenceTrace,
    DEMO_GRAPH,
    Graph,
    SpsaSchedule,
    VqeRunConfig,
    brute_force_maxcut,
    cut_value,
    make_instance_configs,
    maxcut_cost,
    random_graph,
    run_parallel_vqe,
    run_vqe_instance,
)

__all__ = [
    "__version__",
    "Circuit", "Gate", "GateOp", "WorkloadDocument", "WorkloadError",
    "WorkloadSyntaxError", "WorkloadValidationError", "build_ghz",
    "build_vqe_ansatz", "full_gate_set", "parse_workload", "serialize_workload",
    "ExecutorKind", "MultiOffloadError", "OffloadError", "PipeExecutor",
    "QuantumTask", "QueueTarget", "parse_map_from", "parse_map_to",
    "run_multi_offload", "serialize_map_to", "task_execute",
    "DeviceDescriptor", "DeviceKind", "QueuePolicy", "Scheduler", "SchedulerError",
    "QueueService", "ServiceConfig", "load_config",
    "Counts", "RNG_ALGORITHM", "SimConfig", "StateVector", "apply_gate",
    "cx_replacement", "exact_distribution", "run_circuit", "zero_state",
    "JobRecord", "JobStatus", "JobStore", "Priority",
    "ConvergenceTrace", "DEMO_GRAPH", "Graph", "SpsaSchedule", "VqeRunConfig",
    "brute_force_maxcut", "cut_value", "make_instance_configs", "maxcut_cost",
    "random_graph", "run_parallel_vqe", "run_vqe_instance",
]
