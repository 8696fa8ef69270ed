import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // the integration test boots a real judging server and waits for verdicts
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
