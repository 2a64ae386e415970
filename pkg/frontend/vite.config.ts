/// <reference types="vitest" />
import { defineConfig } from "vitest/config";

export default defineConfig({
  build: {
    target: "es2022",
  },
  test: {
    environment: "node",
    testTimeout: 120_000,
    hookTimeout: 240_000,
  },
});
