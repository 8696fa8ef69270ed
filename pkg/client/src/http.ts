import { errorForStatus, NetworkError } from "./errors.js";

export const DEFAULT_TIMEOUT_MS = 30_000;
export const DEFAULT_MAX_ATTEMPTS = 3;
export const DEFAULT_RETRY_BASE_MS = 250;

export interface HttpOptions {
  timeoutMs?: number;
  maxAttempts?: number;
  retryBaseMs?: number;
}

export interface RequestSpec {
  method: "GET" | "POST";
  path: string;
  token?: string;
  body?: unknown;
  query?: Record<string, string | number | undefined>;
}

function sleep(ms: number) {
  return new Promise((r) => setTimeout(r, ms));
}

/** Submitting consumes a machine account's only attempt; a duplicate send is
 *  not a recoverable hiccup, so this path is excluded from retries outright. */
export function retriable(spec: RequestSpec): boolean {
  return !(spec.method === "POST" && spec.path.startsWith("/api/submission"));
}

async function readDetail(res: Response): Promise<string> {
  const text = await res.text().catch(() => "");
  try {
    const doc = JSON.parse(text);
    if (doc && typeof doc.detail === "string") return doc.detail;
  } catch {
    // non-JSON error body, fall through to the raw text
  }
  return text.slice(0, 200) || res.statusText;
}

export async function request<T>(
  base: string,
  spec: RequestSpec,
  opts: HttpOptions = {},
): Promise<T> {
  const {
    timeoutMs = DEFAULT_TIMEOUT_MS,
    maxAttempts = DEFAULT_MAX_ATTEMPTS,
    retryBaseMs = DEFAULT_RETRY_BASE_MS,
  } = opts;

  const url = new URL(spec.path, base);
  for (const [key, value] of Object.entries(spec.query ?? {})) {
    if (value !== undefined) url.searchParams.set(key, String(value));
  }

  const headers: Record<string, string> = { accept: "application/json" };
  if (spec.token) headers["authorization"] = `Token ${spec.token}`;
  if (spec.body !== undefined) headers["content-type"] = "application/json";

  const attempts = retriable(spec) ? maxAttempts : 1;
  let attempt = 0;
  while (true) {
    const ctrl = new AbortController();
    const timer = setTimeout(() => ctrl.abort(), timeoutMs);
    let res: Response;
    try {
      res = await fetch(url, {
        method: spec.method,
        headers,
        body: spec.body !== undefined ? JSON.stringify(spec.body) : undefined,
        signal: ctrl.signal,
      });
    } catch (err: any) {
      clearTimeout(timer);
      if (err?.name === "AbortError" || err?.name === "TimeoutError") {
        throw new NetworkError(
          `${spec.method} ${spec.path} timed out after ${timeoutMs}ms`,
          { cause: err },
        );
      }
      throw new NetworkError(`${spec.method} ${spec.path} failed: ${err?.message ?? err}`, {
        cause: err,
      });
    }
    clearTimeout(timer);

    if (res.status >= 500 && attempt < attempts - 1) {
      await res.body?.cancel().catch(() => {});
      await sleep(retryBaseMs * 2 ** attempt);
      attempt++;
      continue;
    }
    if (!res.ok) {
      throw errorForStatus(res.status, await readDetail(res), spec.method, spec.path);
    }
    return (await res.json()) as T;
  }
}
