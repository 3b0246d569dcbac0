"""Shared test helpers: a random circuit generator and an independent
dense-unitary oracle.

The oracle builds every gate as an explicit 2^n x 2^n matrix from first
principles (kron products and permutation matrices) and multiplies them
out, sharing no code with the simulator's in-place amplitude updates.
"""

from __future__ import annotations

import math

import numpy as np

from conqure.circuits import Circuit, Gate, GateOp, WorkloadDocument

UNITARY_GATES = (Gate.H, Gate.X, Gate.RX, Gate.RY, Gate.RZ, Gate.CX)


def random_gate_op(rng: np.random.Generator, num_qubits: int) -> GateOp:
    pool = [g for g in UNITARY_GATES if g is not Gate.CX or num_qubits >= 2]
    gate = pool[rng.integers(len(pool))]
    if gate is Gate.CX:
        control, target = rng.choice(num_qubits, size=2, replace=False)
        return GateOp.cx(int(control), int(target))
    qubit = int(rng.integers(num_qubits))
    if gate in (Gate.RX, Gate.RY, Gate.RZ):
        theta = float(rng.uniform(-2 * math.pi, 2 * math.pi))
        return GateOp(gate, (qubit,), (theta,))
    return GateOp(gate, (qubit,))


def random_circuit(
    rng: np.random.Generator,
    num_qubits: int,
    num_gates: int,
    shots: int = 100,
    measured: bool = True,
) -> Circuit:
    ops = [random_gate_op(rng, num_qubits) for _ in range(num_gates)]
    if measured:
        ops.append(GateOp.measure_all())
    return Circuit(num_qubits=num_qubits, ops=tuple(ops), shots=shots)


def random_workload(rng: np.random.Generator) -> WorkloadDocument:
    num_qubits = int(rng.integers(1, 7))
    num_gates = int(rng.integers(0, 20))
    shots = int(rng.integers(1, 5000))
    circuit = random_circuit(rng, num_qubits, num_gates, shots=shots,
                             measured=bool(rng.integers(2)))
    n_meta = int(rng.integers(0, 4))
    metadata = {f"k{i}": f"value-{int(rng.integers(1000))}" for i in range(n_meta)}
    return WorkloadDocument(circuit=circuit, metadata=metadata)


# -- dense-unitary oracle -----------------------------------------------------


def _oracle_single_qubit(op: GateOp) -> np.ndarray:
    if op.gate is Gate.H:
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    if op.gate is Gate.X:
        return np.array([[0, 1], [1, 0]], dtype=complex)
    theta = op.params[0]
    half = theta / 2
    if op.gate is Gate.RX:
        return np.array(
            [[math.cos(half), -1j * math.sin(half)],
             [-1j * math.sin(half), math.cos(half)]], dtype=complex)
    if op.gate is Gate.RY:
        return np.array(
            [[math.cos(half), -math.sin(half)],
             [math.sin(half), math.cos(half)]], dtype=complex)
    if op.gate is Gate.RZ:
        return np.array(
            [[complex(math.cos(-half), math.sin(-half)), 0],
             [0, complex(math.cos(half), math.sin(half))]], dtype=complex)
    raise AssertionError(op.gate)


def oracle_gate_unitary(op: GateOp, num_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n matrix for one gate; qubit q is bit q of the index."""
    if op.gate is Gate.CX:
        control, target = op.targets
        dim = 2**num_qubits
        matrix = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            row = col ^ (1 << target) if (col >> control) & 1 else col
            matrix[row, col] = 1.0
        return matrix
    (qubit,) = op.targets
    return np.kron(
        np.kron(np.eye(2 ** (num_qubits - 1 - qubit)), _oracle_single_qubit(op)),
        np.eye(2**qubit),
    )


def oracle_circuit_unitary(circuit: Circuit) -> np.ndarray:
    unitary = np.eye(2**circuit.num_qubits, dtype=complex)
    for op in circuit.ops:
        if op.gate is Gate.MEASURE_ALL:
            break
        unitary = oracle_gate_unitary(op, circuit.num_qubits) @ unitary
    return unitary


def oracle_final_state(circuit: Circuit) -> np.ndarray:
    ground = np.zeros(2**circuit.num_qubits, dtype=complex)
    ground[0] = 1.0
    return oracle_circuit_unitary(circuit) @ ground


def oracle_distribution(circuit: Circuit) -> dict[str, float]:
    state = oracle_final_state(circuit)
    n = circuit.num_qubits
    return {format(i, f"0{n}b"): float(abs(a) ** 2) for i, a in enumerate(state)}
