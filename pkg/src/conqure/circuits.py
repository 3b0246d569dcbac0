"""Circuit IR, the workload document format, and canonical circuit builders.

The workload document is the unit of quantum work a client submits to the
queue and the request payload of the executor pipe protocol. Its canonical
form is a single compact UTF-8 JSON object::

    {"version":"1","shots":30,"num_qubits":4,
     "ops":[{"gate":"h","targets":[0]},
            {"gate":"ry","targets":[1],"params":[1.445133]},
            {"gate":"cx","targets":[0,1]},
            {"gate":"measure_all"}],
     "metadata":{}}

``params`` is omitted when empty, ``targets`` is omitted for ``measure_all``,
gate names are lowercase, and angles print in Python's shortest
round-trip-exact decimal representation. ``parse_workload`` and
``serialize_workload`` are exact inverses on valid documents.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence


class Gate(str, enum.Enum):
    """Gate vocabulary. Values are the lowercase wire names."""

    H = "h"
    X = "x"
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    CX = "cx"
    MEASURE_ALL = "measure_all"


ROTATION_GATES = frozenset({Gate.RX, Gate.RY, Gate.RZ})
SINGLE_QUBIT_GATES = frozenset({Gate.H, Gate.X, Gate.RX, Gate.RY, Gate.RZ})

#: Number of qubit targets each gate takes.
_TARGET_ARITY = {
    Gate.H: 1,
    Gate.X: 1,
    Gate.RX: 1,
    Gate.RY: 1,
    Gate.RZ: 1,
    Gate.CX: 2,
    Gate.MEASURE_ALL: 0,
}


def full_gate_set() -> frozenset[Gate]:
    """Every gate kind, for devices with no restrictions."""
    return frozenset(Gate)


class WorkloadError(ValueError):
    """Base class for workload document errors."""


class WorkloadSyntaxError(WorkloadError):
    """Document is not well-formed JSON. Carries the byte offset and
    line/column of the first error."""

    def __init__(self, message: str, *, line: int, column: int, pos: int):
        super().__init__(f"{message} (line {line}, column {column}, offset {pos})")
        self.line = line
        self.column = column
        self.pos = pos


class WorkloadValidationError(WorkloadError):
    """Document is well-formed JSON but violates a structural invariant."""


@dataclass(frozen=True)
class GateOp:
    """One gate application: a kind, its qubit targets, and its angles.

    Targets hold one index for single-qubit gates, ``(control, target)``
    for CX, and nothing for MEASURE_ALL. Rotations carry exactly one
    angle in radians; all other kinds carry none.
    """

    gate: Gate
    targets: tuple[int, ...] = ()
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        arity = _TARGET_ARITY[self.gate]
        if len(self.targets) != arity:
            raise WorkloadValidationError(
                f"gate '{self.gate.value}' takes {arity} target(s), got {len(self.targets)}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise WorkloadValidationError(
                f"gate '{self.gate.value}' targets must be distinct, got {list(self.targets)}"
            )
        if any(t < 0 for t in self.targets):
            raise WorkloadValidationError(
                f"gate '{self.gate.value}' targets must be non-negative, got {list(self.targets)}"
            )
        want_params = 1 if self.gate in ROTATION_GATES else 0
        if len(self.params) != want_params:
            raise WorkloadValidationError(
                f"gate '{self.gate.value}' takes {want_params} param(s), got {len(self.params)}"
            )
        if any(not math.isfinite(p) for p in self.params):
            raise WorkloadValidationError(
                f"gate '{self.gate.value}' angle must be finite, got {list(self.params)}"
            )

    # Shorthand constructors mirroring the host-code gate-call surface.
    @classmethod
    def h(cls, q: int) -> "GateOp":
        return cls(Gate.H, (q,))

    @classmethod
    def x(cls, q: int) -> "GateOp":
        return cls(Gate.X, (q,))

    @classmethod
    def rx(cls, theta: float, q: int) -> "GateOp":
        return cls(Gate.RX, (q,), (theta,))

    @classmethod
    def ry(cls, theta: float, q: int) -> "GateOp":
        return cls(Gate.RY, (q,), (theta,))

    @classmethod
    def rz(cls, theta: float, q: int) -> "GateOp":
        return cls(Gate.RZ, (q,), (theta,))

    @classmethod
    def cx(cls, control: int, target: int) -> "GateOp":
        return cls(Gate.CX, (control, target))

    @classmethod
    def measure_all(cls) -> "GateOp":
        return cls(Gate.MEASURE_ALL)


@dataclass(frozen=True)
class Circuit:
    """An ordered gate sequence over ``num_qubits`` qubits, run for ``shots``.

    At most one MEASURE_ALL may appear and it must be the final op.
    """

    num_qubits: int
    ops: tuple[GateOp, ...]
    shots: int

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if not isinstance(self.num_qubits, int) or self.num_qubits < 1:
            raise WorkloadValidationError(f"num_qubits must be a positive integer, got {self.num_qubits!r}")
        if not isinstance(self.shots, int) or self.shots < 1:
            raise WorkloadValidationError(f"shots must be a positive integer, got {self.shots!r}")
        for i, op in enumerate(self.ops):
            if op.gate is Gate.MEASURE_ALL and i != len(self.ops) - 1:
                raise WorkloadValidationError(f"op {i}: measure_all must be the final op")
            for t in op.targets:
                if t >= self.num_qubits:
                    raise WorkloadValidationError(
                        f"op {i}: qubit index {t} out of range for {self.num_qubits} qubit(s)"
                    )

    @property
    def has_measurement(self) -> bool:
        return bool(self.ops) and self.ops[-1].gate is Gate.MEASURE_ALL

    def gate_kinds(self) -> frozenset[Gate]:
        return frozenset(op.gate for op in self.ops)


@dataclass(frozen=True)
class WorkloadDocument:
    """Versioned envelope around a circuit plus free-form string metadata."""

    circuit: Circuit
    metadata: Mapping[str, str] = field(default_factory=dict)
    version: str = "1"

    def __post_init__(self):
        if self.version != "1":
            raise WorkloadValidationError(f"unsupported workload version {self.version!r}")
        meta = dict(self.metadata)
        for k, v in meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise WorkloadValidationError(
                    f"metadata entries must map string to string, got {k!r}: {v!r}"
                )
        object.__setattr__(self, "metadata", meta)


def _require(cond: bool, message: str):
    if not cond:
        raise WorkloadValidationError(message)


def _expect_int(obj: dict, key: str, context: str) -> int:
    _require(key in obj, f"{context}: missing '{key}'")
    value = obj[key]
    _require(type(value) is int, f"{context}: '{key}' must be an integer, got {value!r}")
    return value


def _parse_op(raw: object, index: int) -> GateOp:
    ctx = f"ops[{index}]"
    _require(isinstance(raw, dict), f"{ctx}: must be an object")
    assert isinstance(raw, dict)
    extra = set(raw) - {"gate", "targets", "params"}
    _require(not extra, f"{ctx}: unknown key(s) {sorted(extra)}")
    _require("gate" in raw, f"{ctx}: missing 'gate'")
    name = raw["gate"]
    _require(isinstance(name, str), f"{ctx}: 'gate' must be a string")
    try:
        gate = Gate(name)
    except ValueError:
        raise WorkloadValidationError(f"{ctx}: unknown gate {name!r}") from None

    targets_raw = raw.get("targets", [])
    _require(isinstance(targets_raw, list), f"{ctx}: 'targets' must be an array")
    targets = []
    for t in targets_raw:
        _require(type(t) is int, f"{ctx}: targets must be integers, got {t!r}")
        targets.append(t)
    if gate is Gate.MEASURE_ALL:
        _require("targets" not in raw, f"{ctx}: measure_all takes no 'targets'")

    params_raw = raw.get("params", [])
    _require(isinstance(params_raw, list), f"{ctx}: 'params' must be an array")
    params = []
    for p in params_raw:
        _require(type(p) in (int, float), f"{ctx}: params must be numbers, got {p!r}")
        params.append(float(p))
    if gate not in ROTATION_GATES:
        _require("params" not in raw, f"{ctx}: gate '{gate.value}' takes no 'params'")

    try:
        return GateOp(gate, tuple(targets), tuple(params))
    except WorkloadValidationError as exc:
        raise WorkloadValidationError(f"{ctx}: {exc}") from None


def parse_workload(text: bytes | str) -> WorkloadDocument:
    """Parse and validate a workload document.

    Raises WorkloadSyntaxError (position-annotated) for malformed JSON and
    WorkloadValidationError for structurally invalid documents.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WorkloadSyntaxError(
                f"document is not valid UTF-8: {exc.reason}",
                line=1, column=exc.start + 1, pos=exc.start,
            ) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorkloadSyntaxError(exc.msg, line=exc.lineno, column=exc.colno, pos=exc.pos) from None

    _require(isinstance(obj, dict), "document must be a JSON object")
    extra = set(obj) - {"version", "shots", "num_qubits", "ops", "metadata"}
    _require(not extra, f"unknown top-level key(s) {sorted(extra)}")

    _require("version" in obj, "missing 'version'")
    version = obj["version"]
    _require(isinstance(version, str), f"'version' must be a string, got {version!r}")
    _require(version == "1", f"unsupported workload version {version!r}")

    shots = _expect_int(obj, "shots", "document")
    _require(shots >= 1, f"shots must be >= 1, got {shots}")
    num_qubits = _expect_int(obj, "num_qubits", "document")
    _require(num_qubits >= 1, f"num_qubits must be >= 1, got {num_qubits}")

    _require("ops" in obj, "missing 'ops'")
    ops_raw = obj["ops"]
    _require(isinstance(ops_raw, list), "'ops' must be an array")
    ops = tuple(_parse_op(o, i) for i, o in enumerate(ops_raw))

    metadata_raw = obj.get("metadata", {})
    _require(isinstance(metadata_raw, dict), "'metadata' must be an object")
    for k, v in metadata_raw.items():
        _require(isinstance(v, str), f"metadata[{k!r}] must be a string, got {v!r}")

    circuit = Circuit(num_qubits=num_qubits, ops=ops, shots=shots)
    return WorkloadDocument(circuit=circuit, metadata=metadata_raw)


def _op_to_json(op: GateOp) -> dict:
    out: dict = {"gate": op.gate.value}
    if op.gate is not Gate.MEASURE_ALL:
        out["targets"] = list(op.targets)
    if op.params:
        out["params"] = list(op.params)
    return out


def workload_to_dict(doc: WorkloadDocument) -> dict:
    """Canonical JSON object form: fixed key order, metadata sorted."""
    return {
        "version": doc.version,
        "shots": doc.circuit.shots,
        "num_qubits": doc.circuit.num_qubits,
        "ops": [_op_to_json(op) for op in doc.circuit.ops],
        "metadata": {k: doc.metadata[k] for k in sorted(doc.metadata)},
    }


def serialize_workload(doc: WorkloadDocument) -> bytes:
    """Canonical single-line UTF-8 encoding; exact inverse of parse_workload."""
    return json.dumps(
        workload_to_dict(doc), separators=(",", ":"), allow_nan=False
    ).encode("utf-8")


def build_ghz(num_qubits: int, shots: int) -> Circuit:
    """GHZ state preparation: H on qubit 0, a CX chain, and a final measurement.

    Produces n+1 ops; circuit size grows linearly with qubit count.
    """
    if num_qubits < 1:
        raise WorkloadValidationError(f"num_qubits must be >= 1, got {num_qubits}")
    ops = [GateOp.h(0)]
    ops += [GateOp.cx(i, i + 1) for i in range(num_qubits - 1)]
    ops.append(GateOp.measure_all())
    return Circuit(num_qubits=num_qubits, ops=tuple(ops), shots=shots)


def build_vqe_ansatz(num_qubits: int, angles: Sequence[float], shots: int) -> Circuit:
    """Hardware-efficient ansatz: an RY layer, a CX chain, a second RY layer,
    then a final measurement.

    Takes exactly 2*num_qubits angles (first layer then second layer). Note
    there is deliberately no leading Hadamard; see README for the rationale.
    """
    if num_qubits < 1:
        raise WorkloadValidationError(f"num_qubits must be >= 1, got {num_qubits}")
    angles = [float(a) for a in angles]
    if len(angles) != 2 * num_qubits:
        raise WorkloadValidationError(
            f"ansatz on {num_qubits} qubit(s) takes {2 * num_qubits} angles, got {len(angles)}"
        )
    ops = [GateOp.ry(angles[q], q) for q in range(num_qubits)]
    ops += [GateOp.cx(i, i + 1) for i in range(num_qubits - 1)]
    ops += [GateOp.ry(angles[num_qubits + q], q) for q in range(num_qubits)]
    ops.append(GateOp.measure_all())
    return Circuit(num_qubits=num_qubits, ops=tuple(ops), shots=shots)
