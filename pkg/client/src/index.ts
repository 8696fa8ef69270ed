export { ArenaSession } from "./session.js";
export type { SessionOptions } from "./session.js";
export {
  ArenaApiError,
  AttemptExhaustedError,
  AuthenticationError,
  ForbiddenError,
  NetworkError,
  NotFoundError,
  PollTimeoutError,
  ServerError,
  ValidationError,
} from "./errors.js";
export {
  DEFAULT_MAX_ATTEMPTS,
  DEFAULT_RETRY_BASE_MS,
  DEFAULT_TIMEOUT_MS,
} from "./http.js";
export { DEFAULT_POLL_CAP_MS, DEFAULT_POLL_INTERVAL_MS, pollUntil } from "./poll.js";
export * from "./types.js";
