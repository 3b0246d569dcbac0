/** Wire types shared with the queue service. */

export type JobStatus = 'QUEUED' | 'RUNNING' | 'COMPLETED' | 'FAILED' | 'CANCELLED';

export const TERMINAL_STATUSES: ReadonlySet<JobStatus> = new Set([
  'COMPLETED',
  'FAILED',
  'CANCELLED',
]);

export type Priority = 'LOW' | 'MEDIUM' | 'HIGH';

export type GateName = 'h' | 'x' | 'rx' | 'ry' | 'rz' | 'cx' | 'measure_all';

export interface GateOpJson {
  gate: GateName;
  targets?: number[];
  params?: number[];
}

/** The workload document: one circuit plus free-form string metadata. */
export interface WorkloadDocument {
  version: '1';
  shots: number;
  num_qubits: number;
  ops: GateOpJson[];
  metadata: Record<string, string>;
}

/** Histogram of measured bitstrings; unobserved bitstrings are absent. */
export type CountsMap = Record<string, number>;

export interface WorkStatus {
  job_id: string;
  status: JobStatus;
  submitted_at: string;
  queue_position?: number;
  error?: string;
}

export interface JobTiming {
  submitted_at: string;
  started_at: string | null;
  finished_at: string | null;
}

export interface WorkResults {
  job_id: string;
  counts: CountsMap;
  seed: number;
  device_id: string;
  timing: JobTiming;
}

export interface DeviceInfo {
  device_id: string;
  kind: string;
  num_qubits: number;
  gates: string[];
  slots: number;
  policy: string;
}

/** Count for a bitstring, treating unobserved outcomes as 0. */
export function countOf(counts: CountsMap, bitstring: string): number {
  return counts[bitstring] ?? 0;
}

export function totalShots(counts: CountsMap): number {
  return Object.values(counts).reduce((acc, n) => acc + n, 0);
}
