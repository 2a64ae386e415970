/** Single mutable view-state store with change notification. */

export const GUIDE_RANGE: [number, number] = [-1, 1];
export const EXTENDED_RANGE: [number, number] = [-2.5, 2.5];
export const RATING_RANGE: [number, number] = [-2.5, 2.5];

export type LabelMode = "auto" | number;
export type ViewMode = "after" | "before" | "side";

export interface SessionRating {
  rating: number;
  scoreContext: number;
  count: number;
}

export interface FinetuneView {
  running: boolean;
  epochsDone: number;
  epochsTotal: number;
  completedRuns: number;
  error: string | null;
}

export interface ViewState {
  imageId: string | null;
  /** Slider position IS the request score; no rescaling anywhere. */
  score: number;
  labelMode: LabelMode;
  rounds: number;
  advanced: boolean;
  view: ViewMode;
  online: boolean;
  busy: boolean;
  error: string | null;
  ratings: SessionRating[];
  finetune: FinetuneView;
  /** Bumped each time a new preview blob is presented. */
  previewStamp: number;
}

export function initialState(): ViewState {
  return {
    imageId: null,
    score: 0,
    labelMode: "auto",
    rounds: 1,
    advanced: false,
    view: "after",
    online: true,
    busy: false,
    error: null,
    ratings: [],
    finetune: {
      running: false,
      epochsDone: 0,
      epochsTotal: 0,
      completedRuns: 0,
      error: null,
    },
    previewStamp: 0,
  };
}

export function activeRange(state: ViewState): [number, number] {
  return state.advanced ? EXTENDED_RANGE : GUIDE_RANGE;
}

export function clampScore(state: ViewState, score: number): number {
  const [lo, hi] = activeRange(state);
  return Math.min(hi, Math.max(lo, score));
}

export function clampRounds(rounds: number): number {
  return Math.max(1, Math.round(rounds));
}

type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState = initialState();
  private listeners = new Set<Listener>();

  get(): ViewState {
    return this.state;
  }

  update(patch: Partial<ViewState>): ViewState {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    listener(this.state);
    return () => this.listeners.delete(listener);
  }
}
