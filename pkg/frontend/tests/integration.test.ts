/**
 * End-to-end loop against a real service process running a small trained
 * checkpoint: upload, score-0 pixel diff, deterministic enhancement, rating
 * capture into the live CSV, finetune-and-swap, preview refresh.
 */
import { ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { PNG } from "pngjs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, ToneguideClient } from "../src/api";
import { meanAbsDiffPerChannel } from "../src/pixeldiff";

const HERE = dirname(fileURLToPath(import.meta.url));
const PYTHON = process.env.TONEGUIDE_PYTHON ?? "python3";

let workDir: string;
let server: ChildProcess | null = null;
let serverLog = "";
let client: ToneguideClient;
let ratingsCsv: string;
let rawPng: Buffer;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function decode(buffer: Buffer): { data: Uint8Array; channels: 4 } {
  const png = PNG.sync.read(buffer);
  return { data: new Uint8Array(png.data), channels: 4 };
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "toneguide-ui-"));
  const fixture = spawnSync(
    PYTHON,
    [join(HERE, "fixtures", "make_service_fixture.py"), workDir],
    { encoding: "utf8" },
  );
  if (fixture.status !== 0) {
    throw new Error(`fixture build failed: ${fixture.stderr}`);
  }
  const paths = JSON.parse(fixture.stdout.trim());
  rawPng = readFileSync(paths.png);
  ratingsCsv = join(workDir, "live_ratings.csv");

  const port = 18000 + (process.pid % 1000);
  server = spawn(
    PYTHON,
    [
      "-m",
      "toneguide.cli",
      "serve",
      "--model",
      paths.model,
      "--port",
      String(port),
      "--ratings",
      ratingsCsv,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  server.stderr?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));

  client = new ToneguideClient(`http://127.0.0.1:${port}`);
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    if (await client.healthz()) return;
    if (server.exitCode !== null) break;
    await sleep(250);
  }
  throw new Error(`service did not come up:\n${serverLog}`);
}, 180_000);

afterAll(async () => {
  if (server !== null && server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((resolve) => server?.once("exit", resolve));
  }
  rmSync(workDir, { recursive: true, force: true });
});

describe("service loop", () => {
  let imageId: string;
  let enhancedAtScore: Buffer;

  it("uploads the raw PNG", async () => {
    const result = await client.uploadImage(rawPng);
    imageId = result.imageId;
    expect(result.width).toBe(64);
    expect(result.height).toBe(64);
  });

  it("score-0 preview matches the original (mean pixel diff < 0.02)", async () => {
    const blob = await client.enhance({ imageId, score: 0 });
    const out = decode(Buffer.from(await blob.arrayBuffer()));
    const diff = meanAbsDiffPerChannel(out, decode(rawPng));
    for (const channel of diff) {
      expect(channel).toBeLessThan(0.02);
    }
  });

  it("the same request twice returns byte-identical previews", async () => {
    const first = Buffer.from(await (await client.enhance({ imageId, score: 0.7 })).arrayBuffer());
    const second = Buffer.from(
      await (await client.enhance({ imageId, score: 0.7 })).arrayBuffer(),
    );
    expect(first.equals(second)).toBe(true);
    enhancedAtScore = first;
  });

  it("rejects an unknown image id with 404", async () => {
    const err = (await client
      .enhance({ imageId: "img-9999", score: 0 })
      .catch((e: unknown) => e)) as ApiError;
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
  });

  it("a submitted rating lands in the live ratings CSV", async () => {
    const result = await client.submitRating(imageId, 1.5, 0.7);
    expect(result.count).toBe(1);
    const csv = readFileSync(ratingsCsv, "utf8");
    const lines = csv.trim().split("\n");
    expect(lines[0]).toContain("subject_id");
    expect(lines[1]).toContain("live");
    expect(lines[1]).toContain(imageId);
    expect(lines[1]).toContain("1.5");
  });

  it("fine-tuning completes, swaps the model, and the preview refreshes", async () => {
    const before = await client.getModel();
    const epochsBefore = Number(before.metadata.epochs);
    await client.startFinetune(2);

    const deadline = Date.now() + 120_000;
    let info = await client.getModel();
    while (info.finetune.running && Date.now() < deadline) {
      await sleep(500);
      info = await client.getModel();
    }
    expect(info.finetune.running).toBe(false);
    expect(info.finetune.error).toBeNull();
    expect(info.finetune.completed_runs).toBe(1);
    expect(Number(info.metadata.epochs)).toBe(epochsBefore + 2);

    const refreshed = Buffer.from(
      await (await client.enhance({ imageId, score: 0.7 })).arrayBuffer(),
    );
    expect(refreshed.equals(enhancedAtScore)).toBe(false);
  }, 150_000);
});
