import type { GateOpJson, WorkloadDocument } from './types.js';
import { ConqureError } from './errors.js';

/**
 * Builds workload documents gate by gate, so no external quantum framework
 * is needed to submit work. Mirrors the service's gate vocabulary: h, x,
 * rx, ry, rz, cx, measure_all.
 *
 *     const workload = new CircuitBuilder(4)
 *       .h(0).cx(0, 1).cx(1, 2).cx(2, 3)
 *       .measureAll()
 *       .toWorkload(30);
 */
export class CircuitBuilder {
  readonly numQubits: number;
  private readonly ops: GateOpJson[] = [];
  private measured = false;

  constructor(numQubits: number) {
    if (!Number.isInteger(numQubits) || numQubits < 1) {
      throw new ConqureError(`numQubits must be a positive integer, got ${numQubits}`);
    }
    this.numQubits = numQubits;
  }

  private checkQubit(q: number): void {
    if (!Number.isInteger(q) || q < 0 || q >= this.numQubits) {
      throw new ConqureError(`qubit index ${q} out of range for ${this.numQubits} qubit(s)`);
    }
    if (this.measured) {
      throw new ConqureError('cannot add gates after measureAll()');
    }
  }

  private checkAngle(theta: number): void {
    if (!Number.isFinite(theta)) {
      throw new ConqureError(`angle must be finite, got ${theta}`);
    }
  }

  h(q: number): this {
    this.checkQubit(q);
    this.ops.push({ gate: 'h', targets: [q] });
    return this;
  }

  x(q: number): this {
    this.checkQubit(q);
    this.ops.push({ gate: 'x', targets: [q] });
    return this;
  }

  rx(theta: number, q: number): this {
    this.checkQubit(q);
    this.checkAngle(theta);
    this.ops.push({ gate: 'rx', targets: [q], params: [theta] });
    return this;
  }

  ry(theta: number, q: number): this {
    this.checkQubit(q);
    this.checkAngle(theta);
    this.ops.push({ gate: 'ry', targets: [q], params: [theta] });
    return this;
  }

  rz(theta: number, q: number): this {
    this.checkQubit(q);
    this.checkAngle(theta);
    this.ops.push({ gate: 'rz', targets: [q], params: [theta] });
    return this;
  }

  cx(control: number, target: number): this {
    this.checkQubit(control);
    this.checkQubit(target);
    if (control === target) {
      throw new ConqureError(`cx control and target must differ, got ${control}`);
    }
    this.ops.push({ gate: 'cx', targets: [control, target] });
    return this;
  }

  measureAll(): this {
    if (this.measured) {
      throw new ConqureError('measureAll() may only be called once');
    }
    this.ops.push({ gate: 'measure_all' });
    this.measured = true;
    return this;
  }

  /** Assemble the workload document. Key order matches the canonical form. */
  toWorkload(shots: number, metadata: Record<string, string> = {}): WorkloadDocument {
    if (!Number.isInteger(shots) || shots < 1) {
      throw new ConqureError(`shots must be a positive integer, got ${shots}`);
    }
    return {
      version: '1',
      shots,
      num_qubits: this.numQubits,
      ops: this.ops.map((op) => ({ ...op })),
      metadata: { ...metadata },
    };
  }
}

/** GHZ preparation: H on qubit 0, a CX chain, and a final measurement. */
export function buildGhz(numQubits: number): CircuitBuilder {
  const builder = new CircuitBuilder(numQubits);
  builder.h(0);
  for (let i = 0; i < numQubits - 1; i++) {
    builder.cx(i, i + 1);
  }
  return builder.measureAll();
}
