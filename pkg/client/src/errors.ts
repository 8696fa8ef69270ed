/** Base class for any non-2xx answer from the service. */
export class ArenaApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
    public readonly method: string,
    public readonly path: string,
  ) {
    super(`${method} ${path} -> ${status}: ${detail}`);
    this.name = new.target.name;
  }
}

/** 400: the request body or parameters were rejected. */
export class ValidationError extends ArenaApiError {}

/** 401: missing, malformed, revoked token, or bad credentials. */
export class AuthenticationError extends ArenaApiError {}

/** 403: the account's group may not perform this operation. */
export class ForbiddenError extends ArenaApiError {}

/** 404: unknown resource, or one this account may not see. */
export class NotFoundError extends ArenaApiError {}

/** 409: the single submission attempt for this problem is spent. */
export class AttemptExhaustedError extends ArenaApiError {}

/** 5xx: the service failed; safe requests are retried before this surfaces. */
export class ServerError extends ArenaApiError {}

/** The request never produced an HTTP response (refused, reset, timed out). */
export class NetworkError extends Error {
  constructor(message: string, options?: { cause?: unknown }) {
    super(message, options);
    this.name = "NetworkError";
  }
}

/** submission(sid, { wait: true }) gave up before the verdict went terminal. */
export class PollTimeoutError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PollTimeoutError";
  }
}

export function errorForStatus(
  status: number,
  detail: string,
  method: string,
  path: string,
): ArenaApiError {
  const args = [status, detail, method, path] as const;
  if (status === 400) return new ValidationError(...args);
  if (status === 401) return new AuthenticationError(...args);
  if (status === 403) return new ForbiddenError(...args);
  if (status === 404) return new NotFoundError(...args);
  if (status === 409) return new AttemptExhaustedError(...args);
  if (status >= 500) return new ServerError(...args);
  return new ArenaApiError(...args);
}
