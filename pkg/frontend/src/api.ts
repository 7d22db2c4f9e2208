/** Thin fetch wrapper for the verification service's HTTP API. */

export interface ErrorDoc {
  line: number;
  column: number;
  code: number;
  message: string;
}

export interface JobStatus {
  job_id: string;
  state: string;
  progress_percent: number;
  pass: string | null;
  errors: ErrorDoc[] | null;
  failure_reason: string | null;
  poll_hint_ms?: number;
}

export const TERMINAL_STATES = new Set([
  "succeeded",
  "completed_with_errors",
  "failed",
  "canceled",
]);

/** HTTP error response carrying the server's machine-readable reason. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly reason: string,
    readonly detail: string,
  ) {
    super(`${reason}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private readonly serverUrl: string,
    private readonly token: string,
    private readonly toolchainVersion = "builtin-1.0",
  ) {}

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<any> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await fetch(this.serverUrl.replace(/\/$/, "") + path, init);
    } catch {
      throw new Error(`cannot reach ${this.serverUrl}`);
    }
    if (!response.ok) {
      const doc = await response.json().catch(() => ({}));
      throw new ApiError(
        response.status,
        doc.reason ?? "error",
        doc.detail ?? response.statusText,
      );
    }
    return response.json();
  }

  async submitVerify(filename: string, text: string): Promise<string> {
    const doc = await this.request("POST", "/api/v1/jobs", {
      command: "verifier",
      toolchain_version: this.toolchainVersion,
      source: { kind: "inline", filename, text },
    });
    return doc.job_id as string;
  }

  status(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/api/v1/jobs/${jobId}`);
  }

  async cancel(jobId: string): Promise<boolean> {
    const doc = await this.request("DELETE", `/api/v1/jobs/${jobId}`);
    return doc.canceled as boolean;
  }

  async formatText(text: string): Promise<string> {
    const doc = await this.request("POST", "/api/v1/format", { text });
    return doc.formatted as string;
  }
}
