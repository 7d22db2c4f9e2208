/** Editor state machine, kept free of DOM so it is testable headless.
 *
 * One session holds one article buffer and at most one active job. The
 * poll loop is a single sequential async task, so there is never more
 * than one in-flight status request. Markers always come from the last
 * terminal status and are cleared the moment the buffer is edited.
 */

import { ApiError, TERMINAL_STATES, type JobStatus } from "./api.js";
import { markersFromStatus, type Marker } from "./markers.js";

export interface JobApi {
  submitVerify(filename: string, text: string): Promise<string>;
  status(jobId: string): Promise<JobStatus>;
  cancel(jobId: string): Promise<boolean>;
  formatText(text: string): Promise<string>;
}

export interface Banner {
  text: string;
  kind: "info" | "error";
}

export interface SessionOptions {
  filename?: string;
  defaultPollMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onChange?: () => void;
}

const DEFAULT_POLL_MS = 500;

function defaultSleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class EditorSession {
  buffer = "";
  activeJob: string | null = null;
  lastStatus: JobStatus | null = null;
  markers: Marker[] = [];
  banner: Banner | null = null;
  /** Rendered progress; never decreases within one verification. */
  progressPercent = 0;

  private readonly filename: string;
  private readonly defaultPollMs: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly onChange: () => void;

  constructor(
    private readonly api: JobApi,
    options: SessionOptions = {},
  ) {
    this.filename = options.filename ?? "article.miz";
    this.defaultPollMs = options.defaultPollMs ?? DEFAULT_POLL_MS;
    this.sleep = options.sleep ?? defaultSleep;
    this.onChange = options.onChange ?? (() => {});
  }

  // Set from the moment a submission starts until the job id is known;
  // without it two rapid start calls could both pass the activeJob check
  // and submit twice.
  private starting = false;

  get busy(): boolean {
    return this.starting || this.activeJob !== null;
  }

  /** Replace the buffer; stale markers must never survive an edit. */
  edit(text: string): void {
    this.buffer = text;
    if (this.markers.length > 0) this.markers = [];
    this.onChange();
  }

  async startVerification(): Promise<void> {
    if (this.busy) return;
    this.starting = true;
    this.banner = { text: "Verifying…", kind: "info" };
    this.progressPercent = 0;
    this.lastStatus = null;
    this.markers = [];
    this.onChange();
    let jobId: string;
    try {
      jobId = await this.api.submitVerify(this.filename, this.buffer);
    } catch (err) {
      this.starting = false;
      this.banner = { text: describe(err), kind: "error" };
      this.onChange();
      return;
    }
    this.activeJob = jobId;
    this.starting = false;
    this.onChange();
    await this.pollLoop(jobId);
  }

  async cancelActive(): Promise<void> {
    if (this.activeJob === null) return;
    try {
      await this.api.cancel(this.activeJob);
    } catch (err) {
      this.banner = { text: describe(err), kind: "error" };
      this.onChange();
    }
    // The poll loop observes the canceled state and finishes normally.
  }

  async formatBuffer(): Promise<void> {
    try {
      const formatted = await this.api.formatText(this.buffer);
      this.buffer = formatted;
      this.banner = null;
    } catch (err) {
      this.banner = { text: describe(err), kind: "error" };
    }
    this.onChange();
  }

  private async pollLoop(jobId: string): Promise<void> {
    let doc: JobStatus;
    for (;;) {
      try {
        doc = await this.api.status(jobId);
      } catch (err) {
        const expired = err instanceof ApiError && err.status === 404;
        this.banner = {
          text: expired ? "Job expired on the server" : describe(err),
          kind: "error",
        };
        this.activeJob = null;
        this.onChange();
        return;
      }
      this.lastStatus = doc;
      this.progressPercent = Math.max(
        this.progressPercent,
        doc.progress_percent ?? 0,
      );
      this.onChange();
      if (TERMINAL_STATES.has(doc.state)) break;
      await this.sleep(doc.poll_hint_ms ?? this.defaultPollMs);
    }
    this.markers = markersFromStatus(doc);
    this.activeJob = null;
    this.banner = bannerFor(doc);
    this.onChange();
  }
}

function bannerFor(doc: JobStatus): Banner {
  switch (doc.state) {
    case "succeeded":
      return { text: "Succeeded", kind: "info" };
    case "completed_with_errors": {
      const n = doc.errors?.length ?? 0;
      return { text: `${n} error${n === 1 ? "" : "s"}`, kind: "error" };
    }
    case "canceled":
      return { text: "Canceled", kind: "info" };
    default:
      return {
        text: `Failed: ${doc.failure_reason ?? "unknown reason"}`,
        kind: "error",
      };
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
