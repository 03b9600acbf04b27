/**
 * Session controller: the DOM-free state machine behind the console.
 *
 * Polls status while training, fetches the outstanding batch when the
 * service is awaiting labels, tracks per-sample selections (persisted to
 * storage so a refresh mid-batch loses nothing), and submits exactly the
 * user's choices.  One mutation is in flight at a time; a 409 means the
 * authoritative state moved on, so the controller refetches it.
 */

import {
  AnnotationApi,
  ApiError,
  HistoryPoint,
  Phase,
  QueryBatch,
} from "./api.js";

export interface SessionView {
  sessionId: string;
  phase: Phase | "connecting";
  strategy: string;
  batch: QueryBatch | null;
  chosen: ReadonlyMap<number, number>;
  history: HistoryPoint[];
  nLabeled: number;
  nUnlabeled: number;
  paused: boolean;
  submitting: boolean;
  error: string | null;
}

export type ViewListener = (view: SessionView) => void;

const SUBMIT_RETRIES = 3;
const RETRY_BACKOFF_MS = 500;

export class SessionController {
  private phase: Phase | "connecting" = "connecting";
  private strategy = "";
  private batch: QueryBatch | null = null;
  private chosen = new Map<number, number>();
  private history: HistoryPoint[] = [];
  private nLabeled = 0;
  private nUnlabeled = 0;
  private paused = false;
  private submitting = false;
  private error: string | null = null;
  private listeners: ViewListener[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: AnnotationApi,
    readonly sessionId: string,
    private readonly storage: Storage | null = null,
    private readonly pollIntervalMs: number = 2000,
  ) {}

  get view(): SessionView {
    return {
      sessionId: this.sessionId,
      phase: this.phase,
      strategy: this.strategy,
      batch: this.batch,
      chosen: this.chosen,
      history: this.history,
      nLabeled: this.nLabeled,
      nUnlabeled: this.nUnlabeled,
      paused: this.paused,
      submitting: this.submitting,
      error: this.error,
    };
  }

  onChange(listener: ViewListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    const snapshot = this.view;
    for (const listener of this.listeners) {
      listener(snapshot);
    }
  }

  /** True once every sample in the batch has a chosen label. */
  get complete(): boolean {
    return (
      this.batch !== null &&
      this.batch.items.every((item) => this.chosen.has(item.index))
    );
  }

  choose(index: number, label: number): void {
    if (this.batch === null) return;
    const classCount = this.batch.class_names.length;
    if (label < 0 || label >= classCount) return;
    this.chosen.set(index, label);
    this.persistSelections();
    this.emit();
  }

  clearChoice(index: number): void {
    this.chosen.delete(index);
    this.persistSelections();
    this.emit();
  }

  private storageKey(batchId: string): string {
    return `annotation:${this.sessionId}:${batchId}`;
  }

  private persistSelections(): void {
    if (!this.storage || !this.batch) return;
    this.storage.setItem(
      this.storageKey(this.batch.batch_id),
      JSON.stringify([...this.chosen.entries()]),
    );
  }

  private restoreSelections(batchId: string): void {
    this.chosen = new Map();
    if (!this.storage) return;
    const raw = this.storage.getItem(this.storageKey(batchId));
    if (!raw) return;
    try {
      for (const [index, label] of JSON.parse(raw) as [number, number][]) {
        this.chosen.set(index, label);
      }
    } catch {
      this.storage.removeItem(this.storageKey(batchId));
    }
  }

  /** Poll status; on awaiting-labels fetch the batch (idempotent server-side). */
  async refresh(): Promise<void> {
    try {
      const status = await this.api.getStatus(this.sessionId);
      this.phase = status.phase;
      this.strategy = status.strategy;
      this.history = status.history;
      this.nLabeled = status.n_labeled;
      this.nUnlabeled = status.n_unlabeled;
      this.error = status.error;
      if (status.phase === "awaiting-labels") {
        if (this.batch === null) {
          const batch = await this.api.getBatch(this.sessionId);
          this.batch = batch;
          this.restoreSelections(batch.batch_id);
        }
      } else {
        this.batch = null;
      }
      this.emit();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        return; // training raced us; next poll settles it
      }
      this.error = err instanceof Error ? err.message : String(err);
      this.emit();
    }
  }

  /**
   * Submit the chosen labels for the outstanding batch.  Retries transient
   * network failures with backoff; a 409 (stale or duplicate) refetches the
   * authoritative state instead of resubmitting.
   */
  async submit(): Promise<boolean> {
    if (!this.batch || !this.complete || this.submitting) {
      return false;
    }
    const batchId = this.batch.batch_id;
    const labels = this.batch.items.map((item) => ({
      index: item.index,
      label: this.chosen.get(item.index)!,
    }));
    this.submitting = true;
    this.emit();
    try {
      for (let attempt = 0; ; attempt++) {
        try {
          await this.api.submitLabels(this.sessionId, batchId, labels);
          break;
        } catch (err) {
          if (err instanceof ApiError) {
            if (err.status === 409) break; // already ingested or stale
            throw err;
          }
          if (attempt >= SUBMIT_RETRIES) throw err;
          await sleep(RETRY_BACKOFF_MS * (attempt + 1));
        }
      }
      this.storage?.removeItem(this.storageKey(batchId));
      this.batch = null;
      this.chosen = new Map();
      await this.refresh();
      return true;
    } catch (err) {
      this.error = err instanceof Error ? err.message : String(err);
      this.emit();
      return false;
    } finally {
      this.submitting = false;
      this.emit();
    }
  }

  startPolling(): void {
    if (this.timer !== null) return;
    void this.refresh();
    this.timer = setInterval(() => {
      if (!this.paused && this.phase !== "finished") {
        void this.refresh();
      }
    }, this.pollIntervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  setPaused(paused: boolean): void {
    this.paused = paused;
    this.emit();
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
