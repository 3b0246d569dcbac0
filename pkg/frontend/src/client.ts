import {
  HttpStatusError,
  NotFoundError,
  NotReadyError,
  PollTimeoutError,
  TransportError,
  ValidationError,
} from './errors.js';
import {
  TERMINAL_STATUSES,
  type CountsMap,
  type DeviceInfo,
  type JobStatus,
  type Priority,
  type WorkResults,
  type WorkStatus,
  type WorkloadDocument,
} from './types.js';

export interface UserClientOptions {
  /** Per-request timeout in seconds (default 10). */
  timeoutSec?: number;
  /** Delay between status polls in seconds (default 0.05). */
  pollIntervalSec?: number;
}

const DEFAULT_URL = 'http://127.0.0.1:8042';

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Client for the conqure cloud queue. The server is the source of truth:
 * this class only serializes requests and parses responses, never
 * post-processes counts.
 *
 *     const client = new UserClient();
 *     const workId = await client.createWork(workload, 'sim0', 'LOW');
 *     await client.waitUntilDone(workId);
 *     const results = await client.getResults(workId);
 *
 * Not safe to share across concurrent mutation of its options; create one
 * per logical task or guard externally.
 */
export class UserClient {
  readonly baseUrl: string;
  readonly timeoutSec: number;
  readonly pollIntervalSec: number;

  constructor(baseUrl?: string, options: UserClientOptions = {}) {
    this.baseUrl = (baseUrl ?? process.env.CONQURE_URL ?? DEFAULT_URL).replace(/\/+$/, '');
    this.timeoutSec = options.timeoutSec ?? 10;
    this.pollIntervalSec = options.pollIntervalSec ?? 0.05;
    if (this.pollIntervalSec <= 0) {
      throw new ValidationError(400, `pollIntervalSec must be > 0, got ${this.pollIntervalSec}`);
    }
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
        signal: AbortSignal.timeout(this.timeoutSec * 1000),
      });
    } catch (cause) {
      throw new TransportError(`cannot reach ${this.baseUrl}: ${String(cause)}`, cause);
    }
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      payload = {};
    }
    if (response.ok) {
      return payload;
    }
    const message =
      typeof payload === 'object' && payload !== null && 'error' in payload
        ? String((payload as { error: unknown }).error)
        : response.statusText;
    if (response.status === 404) {
      throw new NotFoundError(message);
    }
    if (response.status === 409) {
      const status =
        typeof payload === 'object' && payload !== null && 'status' in payload
          ? ((payload as { status: JobStatus }).status)
          : undefined;
      throw new NotReadyError(message, status);
    }
    if (response.status === 400 || response.status === 422) {
      throw new ValidationError(response.status, message);
    }
    throw new HttpStatusError(response.status, message);
  }

  /**
   * Submit a workload (document object or its serialized JSON text) to a
   * device; resolves to the work id as soon as the server acknowledges,
   * without waiting for execution.
   */
  async createWork(
    workload: WorkloadDocument | string,
    deviceId: string,
    priority: Priority = 'LOW',
  ): Promise<string> {
    const payload = await this.request('POST', '/v1/work', {
      workload,
      device_id: deviceId,
      priority,
    });
    return (payload as { job_id: string }).job_id;
  }

  async getStatus(workId: string): Promise<WorkStatus> {
    return (await this.request('GET', `/v1/work/${workId}`)) as WorkStatus;
  }

  /**
   * Poll until the job reaches a terminal status and return it. A FAILED
   * or CANCELLED outcome is a status, not an exception.
   */
  async waitUntilDone(workId: string, timeoutSec = 300): Promise<JobStatus> {
    const deadline = Date.now() + timeoutSec * 1000;
    let status = (await this.getStatus(workId)).status;
    while (!TERMINAL_STATUSES.has(status)) {
      if (Date.now() > deadline) {
        throw new PollTimeoutError(workId, status, timeoutSec);
      }
      await sleep(this.pollIntervalSec * 1000);
      status = (await this.getStatus(workId)).status;
    }
    return status;
  }

  /** Fetch counts and metadata of a completed job (NotReadyError while pending). */
  async getResults(workId: string): Promise<WorkResults> {
    return (await this.request('GET', `/v1/work/${workId}/results`)) as WorkResults;
  }

  async listDevices(): Promise<DeviceInfo[]> {
    const payload = (await this.request('GET', '/v1/devices')) as { devices: DeviceInfo[] };
    return payload.devices;
  }

  /** Cancel a queued job; rejects with NotReadyError once it left the queue. */
  async cancelWork(workId: string): Promise<JobStatus> {
    const payload = (await this.request('DELETE', `/v1/work/${workId}`)) as {
      status: JobStatus;
    };
    return payload.status;
  }
}

export type { CountsMap };
