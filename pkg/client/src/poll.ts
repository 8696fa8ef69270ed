import { PollTimeoutError } from "./errors.js";

export const DEFAULT_POLL_INTERVAL_MS = 2_000;
export const DEFAULT_POLL_CAP_MS = 600_000;

/**
 * Call `fn` until `done(result)` holds, pausing `intervalMs` between calls.
 * Gives up with PollTimeoutError once `capMs` has elapsed.
 */
export async function pollUntil<T>(
  fn: () => Promise<T>,
  done: (result: T) => boolean,
  intervalMs: number = DEFAULT_POLL_INTERVAL_MS,
  capMs: number = DEFAULT_POLL_CAP_MS,
): Promise<T> {
  const start = Date.now();
  while (true) {
    const result = await fn();
    if (done(result)) return result;
    if (Date.now() - start >= capMs) {
      throw new PollTimeoutError(`still not terminal after ${capMs}ms`);
    }
    await new Promise((r) => setTimeout(r, intervalMs));
  }
}
