import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // The end-to-end test boots a real verification server and polls it.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
