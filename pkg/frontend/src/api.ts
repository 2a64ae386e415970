/** Typed client for the toneguide HTTP service. */

export interface UploadResult {
  imageId: string;
  width: number;
  height: number;
}

export interface EnhanceParams {
  imageId: string;
  score: number;
  /** 1..10 pins a tone cluster, "auto" resolves from the image, null skips it. */
  label?: number | "auto" | null;
  rounds?: number;
}

export interface FinetuneStatus {
  running: boolean;
  epochs_done: number;
  epochs_total: number;
  completed_runs: number;
  error: string | null;
}

export interface ModelInfo {
  version: number;
  arch: Record<string, unknown>;
  score_range: [number, number];
  label_range: [number, number];
  metadata: Record<string, unknown>;
  finetune: FinetuneStatus;
  ratings_collected: number;
  images_stored: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** Network-level failure (service unreachable), distinct from an HTTP error. */
export class OfflineError extends Error {
  constructor(cause: unknown) {
    super("service unreachable");
    this.name = "OfflineError";
    this.cause = cause;
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body.detail === "string") return body.detail;
    if (Array.isArray(body.detail)) {
      return body.detail
        .map((item: { msg?: string }) => item.msg ?? JSON.stringify(item))
        .join("; ");
    }
  } catch {
    // fall through to the status line
  }
  return `${response.status} ${response.statusText}`;
}

export class ToneguideClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request(path: string, init: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      if (cause instanceof DOMException && cause.name === "AbortError") throw cause;
      throw new OfflineError(cause);
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  /** Uploads PNG bytes as a raw body; the service also accepts multipart and base64. */
  async uploadImage(png: Blob | ArrayBuffer | Uint8Array): Promise<UploadResult> {
    const body = png instanceof Blob ? png : new Blob([png as BlobPart]);
    const response = await this.request("/images", {
      method: "POST",
      headers: { "content-type": "image/png" },
      body,
    });
    const data = await response.json();
    return { imageId: data.image_id, width: data.width, height: data.height };
  }

  async enhance(params: EnhanceParams, signal?: AbortSignal): Promise<Blob> {
    if (!Number.isFinite(params.score)) {
      throw new ApiError(422, "score must be finite");
    }
    const response = await this.request("/enhance", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image_id: params.imageId,
        score: params.score,
        label: params.label ?? "auto",
        rounds: params.rounds ?? 1,
      }),
      signal,
    });
    return response.blob();
  }

  async submitRating(
    imageId: string,
    rating: number,
    scoreContext: number,
  ): Promise<{ count: number }> {
    const response = await this.request("/ratings", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image_id: imageId,
        rating,
        score_context: scoreContext,
      }),
    });
    return response.json();
  }

  async startFinetune(epochs?: number): Promise<{ started: boolean; epochs: number }> {
    const response = await this.request("/finetune", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(epochs === undefined ? {} : { epochs }),
    });
    return response.json();
  }

  async getModel(): Promise<ModelInfo> {
    const response = await this.request("/model", { method: "GET" });
    return response.json();
  }

  async healthz(): Promise<boolean> {
    try {
      const response = await this.request("/healthz", { method: "GET" });
      return (await response.text()).trim() === "ok";
    } catch {
      return false;
    }
  }
}
