import type { JobStatus } from './types.js';

/** Base class for every error the SDK raises deliberately. */
export class ConqureError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** Network-level failure: the service could not be reached at all. */
export class TransportError extends ConqureError {
  override readonly cause?: unknown;

  constructor(message: string, cause?: unknown) {
    super(message);
    this.cause = cause;
  }
}

/** The server answered with an HTTP error status. */
export class HttpStatusError extends ConqureError {
  readonly status: number;
  readonly serverMessage: string;

  constructor(status: number, serverMessage: string) {
    super(`HTTP ${status}: ${serverMessage}`);
    this.status = status;
    this.serverMessage = serverMessage;
  }
}

/** Unknown job or device (HTTP 404). */
export class NotFoundError extends HttpStatusError {
  constructor(serverMessage: string) {
    super(404, serverMessage);
  }
}

/** Rejected workload or request (HTTP 400/422), message from the server. */
export class ValidationError extends HttpStatusError {
  constructor(status: number, serverMessage: string) {
    super(status, serverMessage);
  }
}

/** Results requested before the job finished (HTTP 409). */
export class NotReadyError extends HttpStatusError {
  readonly jobStatus?: JobStatus;

  constructor(serverMessage: string, jobStatus?: JobStatus) {
    super(409, serverMessage);
    this.jobStatus = jobStatus;
  }
}

/** waitUntilDone gave up before the job reached a terminal status. */
export class PollTimeoutError extends ConqureError {
  readonly jobId: string;
  readonly lastStatus: JobStatus;

  constructor(jobId: string, lastStatus: JobStatus, timeoutSec: number) {
    super(`job ${jobId} still ${lastStatus} after ${timeoutSec}s`);
    this.jobId = jobId;
    this.lastStatus = lastStatus;
  }
}
