"""Pipe executor: the bundled execution backend for the offload runtime.

Reads one serialized workload document per line on stdin, simulates it, and
writes the counts JSON as one line on stdout (the standard device-to-host
frequency message, e.g. ``{"0011": 7, "1111": 60}``). Runs until stdin
closes. Any error writes a diagnostic to stderr and exits nonzero, which
the host treats as task failure.

The sampling seed comes from the workload's ``seed`` metadata entry when
present; otherwise a fresh random seed is drawn (executions are then not
reproducible, which callers wanting determinism avoid by always setting
the seed).
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from typing import IO

from .circuits import WorkloadError, parse_workload
from .simulator import SimConfig, run_circuit


class ExecutorFailure(Exception):
    pass


def handle_request(line: bytes, max_qubits: int) -> str:
    try:
        doc = parse_workload(line)
    except WorkloadError as exc:
        raise ExecutorFailure(f"bad request: {exc}") from None
    seed_text = doc.metadata.get("seed")
    if seed_text is not None:
        try:
            seed = int(seed_text)
            if not 0 <= seed < 2**64:
                raise ValueError
        except ValueError:
            raise ExecutorFailure(
                f"bad request: metadata seed {seed_text!r} is not a 64-bit unsigned integer"
            ) from None
    else:
        seed = secrets.randbits(64)
    try:
        counts = run_circuit(doc.circuit, SimConfig(seed=seed, max_qubits=max_qubits))
    except Exception as exc:
        raise ExecutorFailure(f"simulation failed: {exc}") from None
    return json.dumps({k: counts[k] for k in sorted(counts)})


def serve(stdin: IO[bytes], stdout: IO[bytes], max_qubits: int) -> None:
    for line in stdin:
        if not line.strip():
            continue
        response = handle_request(line, max_qubits)
        stdout.write(response.encode("utf-8") + b"\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="conqure-executor",
        description="simulator execution backend speaking the line-delimited pipe protocol",
    )
    parser.add_argument("--max-qubits", type=int, default=24,
                        help="dense statevector qubit guard (default 24)")
    args = parser.parse_args(argv)
    try:
        serve(sys.stdin.buffer, sys.stdout.buffer, args.max_qubits)
    except ExecutorFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
