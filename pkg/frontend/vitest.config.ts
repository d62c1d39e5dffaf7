import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    // the e2e file trains a toy model and boots the real server
    testTimeout: 120_000,
    hookTimeout: 240_000,
  },
});
