import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiError, OfflineError, ToneguideClient } from "../src/api";
import { StudioController } from "../src/controller";
import { Store } from "../src/state";
import { FakeClient, modelInfo } from "./helpers";

function setup(options: { manual?: boolean } = {}) {
  const client = new FakeClient();
  client.manual = options.manual ?? false;
  const store = new Store();
  const presented: Blob[] = [];
  const controller = new StudioController(
    client as unknown as ToneguideClient,
    store,
    (blob) => presented.push(blob),
    { debounceMs: 150, pollMs: 100 },
  );
  return { client, store, presented, controller };
}

describe("StudioController scrubbing", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("issues no request without an uploaded image", async () => {
    const { client, controller } = setup();
    controller.onScoreInput(0.5);
    await vi.advanceTimersByTimeAsync(1000);
    expect(client.enhanceCalls).toHaveLength(0);
  });

  it("upload requests an immediate preview", async () => {
    const { client, controller, presented, store } = setup();
    await controller.upload(new Uint8Array([1]));
    expect(client.enhanceCalls).toHaveLength(1);
    expect(presented).toHaveLength(1);
    expect(store.get().imageId).toBe("img-0001");
  });

  it("collapses a rapid scrub into a single debounced request at the last score", async () => {
    const { client, controller } = setup();
    await controller.upload(new Uint8Array([1]));
    for (let i = 0; i <= 10; i++) {
      controller.onScoreInput(-1 + i * 0.1);
      await vi.advanceTimersByTimeAsync(20);
    }
    expect(client.enhanceCalls).toHaveLength(1);
    await vi.advanceTimersByTimeAsync(150);
    expect(client.enhanceCalls).toHaveLength(2);
    expect(client.enhanceCalls[1]!.params.score).toBeCloseTo(0, 12);
  });

  it("waits out the full debounce interval", async () => {
    const { client, controller } = setup();
    await controller.upload(new Uint8Array([1]));
    controller.onScoreInput(0.3);
    await vi.advanceTimersByTimeAsync(149);
    expect(client.enhanceCalls).toHaveLength(1);
    await vi.advanceTimersByTimeAsync(1);
    expect(client.enhanceCalls).toHaveLength(2);
  });

  it("renders only the latest response when completions arrive out of order", async () => {
    const { client, controller, presented } = setup({ manual: true });
    const upload = controller.upload(new Uint8Array([1]));
    await vi.advanceTimersByTimeAsync(0);
    client.enhanceCalls[0]!.resolve(new Blob(["resp-0"]));
    await upload;

    controller.onScoreInput(0.5);
    await vi.advanceTimersByTimeAsync(150);
    controller.onScoreInput(1.0);
    await vi.advanceTimersByTimeAsync(150);
    expect(client.enhanceCalls).toHaveLength(3);

    // the older request was superseded and its transport told to abort
    expect(client.enhanceCalls[1]!.signal?.aborted).toBe(true);

    // resolve old then new; only the new one may be painted
    client.enhanceCalls[1]!.resolve(new Blob(["stale"]));
    client.enhanceCalls[2]!.resolve(new Blob(["fresh"]));
    await vi.advanceTimersByTimeAsync(0);

    expect(presented).toHaveLength(2);
    expect(await presented[1]!.text()).toBe("fresh");
  });

  it("slider position is sent as the score unchanged", async () => {
    const { client, controller } = setup();
    await controller.upload(new Uint8Array([1]));
    controller.onScoreInput(-0.37);
    await vi.advanceTimersByTimeAsync(150);
    expect(client.enhanceCalls[1]!.params.score).toBe(-0.37);
  });

  it("clamps the score to the guide range until advanced mode is on", async () => {
    const { controller, store } = setup();
    controller.onScoreInput(2.2);
    expect(store.get().score).toBe(1);
    controller.setAdvanced(true);
    controller.onScoreInput(2.2);
    expect(store.get().score).toBe(2.2);
    controller.setAdvanced(false);
    expect(store.get().score).toBe(1);
  });

  it("an HTTP error surfaces non-modally and clears busy", async () => {
    const { client, controller, store } = setup();
    await controller.upload(new Uint8Array([1]));
    client.enhanceError = new ApiError(422, "score must be finite");
    controller.onScoreInput(0.9);
    await vi.advanceTimersByTimeAsync(150);
    expect(store.get().error).toBe("score must be finite");
    expect(store.get().busy).toBe(false);
    expect(store.get().online).toBe(true);
  });

  it("a network failure flips the online flag", async () => {
    const { client, controller, store } = setup();
    await controller.upload(new Uint8Array([1]));
    client.enhanceError = new OfflineError(new TypeError("refused"));
    controller.onScoreInput(0.9);
    await vi.advanceTimersByTimeAsync(150);
    expect(store.get().online).toBe(false);
  });
});

describe("StudioController ratings and fine-tune", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("submits the rating with the current score as context", async () => {
    const { client, controller, store } = setup();
    await controller.upload(new Uint8Array([1]));
    controller.onScoreInput(0.6);
    await vi.advanceTimersByTimeAsync(150);
    await controller.submitRating(1.5);
    expect(client.ratings).toEqual([
      { imageId: "img-0001", rating: 1.5, scoreContext: 0.6 },
    ]);
    expect(store.get().ratings).toHaveLength(1);
    expect(store.get().ratings[0]).toMatchObject({ rating: 1.5, scoreContext: 0.6 });
  });

  it("polls until the fine-tune finishes, then refreshes the preview", async () => {
    const { client, controller, store } = setup();
    await controller.upload(new Uint8Array([1]));
    client.modelQueue = [
      modelInfo({ running: true, epochs_done: 1, epochs_total: 2 }),
      modelInfo({ running: true, epochs_done: 2, epochs_total: 2 }),
      modelInfo({ running: false, epochs_done: 2, epochs_total: 2, completed_runs: 1 }),
    ];
    const done = controller.startFinetune(2);
    await vi.advanceTimersByTimeAsync(100);
    expect(store.get().finetune.running).toBe(true);
    expect(store.get().finetune.epochsDone).toBe(1);
    const before = client.enhanceCalls.length;
    await vi.advanceTimersByTimeAsync(300);
    await done;
    expect(store.get().finetune.running).toBe(false);
    expect(store.get().finetune.completedRuns).toBe(1);
    expect(client.enhanceCalls.length).toBe(before + 1);
  });

  it("does not start a second fine-tune while one runs", async () => {
    const { client, controller } = setup();
    await controller.upload(new Uint8Array([1]));
    client.modelQueue = [modelInfo({ running: false, completed_runs: 1 })];
    const first = controller.startFinetune();
    const second = controller.startFinetune();
    await vi.advanceTimersByTimeAsync(200);
    await Promise.all([first, second]);
    expect(client.finetuneStarts).toBe(1);
  });

  it("surfaces a failed fine-tune without refreshing the preview", async () => {
    const { client, controller, store } = setup();
    await controller.upload(new Uint8Array([1]));
    client.modelQueue = [
      modelInfo({ running: false, error: "NonFiniteLoss: loss diverged" }),
    ];
    const before = client.enhanceCalls.length;
    const done = controller.startFinetune();
    await vi.advanceTimersByTimeAsync(200);
    await done;
    expect(store.get().error).toContain("fine-tune failed");
    expect(client.enhanceCalls.length).toBe(before);
  });
});
