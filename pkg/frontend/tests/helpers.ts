import type { EnhanceParams, ModelInfo } from "../src/api";

export interface PendingEnhance {
  params: EnhanceParams;
  signal?: AbortSignal;
  resolve(blob: Blob): void;
  reject(err: unknown): void;
}

/** Scriptable stand-in for the HTTP client. */
export class FakeClient {
  enhanceCalls: PendingEnhance[] = [];
  manual = false;
  enhanceError: unknown = null;
  modelQueue: ModelInfo[] = [];
  ratings: Array<{ imageId: string; rating: number; scoreContext: number }> = [];
  finetuneStarts = 0;
  healthy = true;

  async uploadImage() {
    return { imageId: "img-0001", width: 8, height: 8 };
  }

  enhance(params: EnhanceParams, signal?: AbortSignal): Promise<Blob> {
    if (this.enhanceError !== null) return Promise.reject(this.enhanceError);
    const index = this.enhanceCalls.length;
    return new Promise<Blob>((resolve, reject) => {
      this.enhanceCalls.push({ params, signal, resolve, reject });
      if (!this.manual) resolve(new Blob([`resp-${index}`]));
    });
  }

  async submitRating(imageId: string, rating: number, scoreContext: number) {
    this.ratings.push({ imageId, rating, scoreContext });
    return { count: this.ratings.length };
  }

  async startFinetune(epochs?: number) {
    this.finetuneStarts += 1;
    return { started: true, epochs: epochs ?? 10 };
  }

  async getModel(): Promise<ModelInfo> {
    const next = this.modelQueue.shift();
    if (next === undefined) throw new Error("modelQueue exhausted");
    return next;
  }

  async healthz() {
    return this.healthy;
  }
}

export function modelInfo(finetune: Partial<ModelInfo["finetune"]>): ModelInfo {
  return {
    version: 1,
    arch: {},
    score_range: [-1, 1],
    label_range: [1, 10],
    metadata: {},
    finetune: {
      running: false,
      epochs_done: 0,
      epochs_total: 0,
      completed_runs: 0,
      error: null,
      ...finetune,
    },
    ratings_collected: 0,
    images_stored: 1,
  };
}
