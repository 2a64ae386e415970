/** Orchestrates the scrub-enhance-rate-finetune loop against the service.
 *
 * Scrubbing contract: slider changes are debounced (150 ms); at most one
 * enhance request is in flight; a newer request aborts the older one and a
 * stale response can never overwrite a newer preview (ticket gate).
 */

import { ApiError, OfflineError, ToneguideClient } from "./api";
import { debounce, Debounced, LatestGate } from "./debounce";
import { clampRounds, clampScore, Store } from "./state";

export const DEBOUNCE_MS = 150;
export const FINETUNE_POLL_MS = 500;

export type PresentFn = (blob: Blob) => void;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export interface ControllerOptions {
  debounceMs?: number;
  pollMs?: number;
}

export class StudioController {
  private readonly gate = new LatestGate();
  private readonly schedulePreview: Debounced<[]>;
  private readonly pollMs: number;
  private inflight: AbortController | null = null;
  private finetunePending = false;

  constructor(
    private readonly client: ToneguideClient,
    readonly store: Store,
    private readonly present: PresentFn,
    options: ControllerOptions = {},
  ) {
    this.schedulePreview = debounce(() => {
      void this.requestPreview();
    }, options.debounceMs ?? DEBOUNCE_MS);
    this.pollMs = options.pollMs ?? FINETUNE_POLL_MS;
  }

  async upload(png: Blob | ArrayBuffer | Uint8Array): Promise<void> {
    try {
      const result = await this.client.uploadImage(png);
      this.store.update({ imageId: result.imageId, error: null, online: true });
      await this.requestPreview();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Slider input: the position is the score, stored verbatim. */
  onScoreInput(score: number): void {
    const state = this.store.get();
    this.store.update({ score: clampScore(state, score) });
    this.schedulePreview();
  }

  setRounds(rounds: number): void {
    this.store.update({ rounds: clampRounds(rounds) });
    this.schedulePreview();
  }

  setLabelMode(mode: "auto" | number): void {
    this.store.update({ labelMode: mode });
    this.schedulePreview();
  }

  setAdvanced(advanced: boolean): void {
    const state = this.store.update({ advanced });
    const clamped = clampScore(state, state.score);
    if (clamped !== state.score) {
      this.store.update({ score: clamped });
      this.schedulePreview();
    }
  }

  setView(view: "after" | "before" | "side"): void {
    this.store.update({ view });
  }

  /** Immediate re-enhance at the current settings (used after fine-tuning). */
  async refreshPreview(): Promise<void> {
    this.schedulePreview.cancel();
    await this.requestPreview();
  }

  private async requestPreview(): Promise<void> {
    const state = this.store.get();
    if (state.imageId === null) return;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const ticket = this.gate.issue();
    this.store.update({ busy: true });
    try {
      const blob = await this.client.enhance(
        {
          imageId: state.imageId,
          score: state.score,
          label: state.labelMode,
          rounds: state.rounds,
        },
        controller.signal,
      );
      if (!this.gate.isCurrent(ticket)) return;
      this.present(blob);
      this.store.update({
        busy: false,
        error: null,
        online: true,
        previewStamp: this.store.get().previewStamp + 1,
      });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      if (!this.gate.isCurrent(ticket)) return;
      this.store.update({ busy: false });
      this.fail(err);
    }
  }

  async submitRating(rating: number): Promise<void> {
    const state = this.store.get();
    if (state.imageId === null) return;
    try {
      const result = await this.client.submitRating(state.imageId, rating, state.score);
      this.store.update({
        error: null,
        online: true,
        ratings: [
          ...this.store.get().ratings,
          { rating, scoreContext: state.score, count: result.count },
        ],
      });
    } catch (err) {
      this.fail(err);
    }
  }

  async startFinetune(epochs?: number): Promise<void> {
    if (this.finetunePending || this.store.get().finetune.running) return;
    this.finetunePending = true;
    try {
      await this.client.startFinetune(epochs);
      this.store.update({
        finetune: { ...this.store.get().finetune, running: true, error: null },
      });
      await this.pollFinetune();
    } catch (err) {
      this.fail(err);
    } finally {
      this.finetunePending = false;
    }
  }

  private async pollFinetune(): Promise<void> {
    for (;;) {
      await sleep(this.pollMs);
      let info;
      try {
        info = await this.client.getModel();
      } catch (err) {
        this.fail(err);
        return;
      }
      this.store.update({
        finetune: {
          running: info.finetune.running,
          epochsDone: info.finetune.epochs_done,
          epochsTotal: info.finetune.epochs_total,
          completedRuns: info.finetune.completed_runs,
          error: info.finetune.error,
        },
      });
      if (!info.finetune.running) break;
    }
    const status = this.store.get().finetune;
    if (status.error !== null) {
      this.store.update({ error: `fine-tune failed: ${status.error}` });
      return;
    }
    await this.refreshPreview();
  }

  async checkHealth(): Promise<void> {
    const ok = await this.client.healthz();
    this.store.update({ online: ok });
  }

  private fail(err: unknown): void {
    if (err instanceof OfflineError) {
      this.store.update({ online: false });
    } else if (err instanceof ApiError) {
      this.store.update({ error: err.message });
    } else {
      this.store.update({ error: String(err) });
    }
  }
}
