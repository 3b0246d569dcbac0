export { UserClient, type UserClientOptions } from './client.js';
export { CircuitBuilder, buildGhz } from './circuit.js';
export {
  ConqureError,
  HttpStatusError,
  NotFoundError,
  NotReadyError,
  PollTimeoutError,
  TransportError,
  ValidationError,
} from './errors.js';
export {
  countOf,
  totalShots,
  TERMINAL_STATUSES,
  type CountsMap,
  type DeviceInfo,
  type GateName,
  type GateOpJson,
  type JobStatus,
  type JobTiming,
  type Priority,
  type WorkResults,
  type WorkStatus,
  type WorkloadDocument,
} from './types.js';
