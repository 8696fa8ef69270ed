import { inspect } from "node:util";

import { request, HttpOptions } from "./http.js";
import { pollUntil, DEFAULT_POLL_INTERVAL_MS, DEFAULT_POLL_CAP_MS } from "./poll.js";
import {
  ProblemDetail,
  ProblemList,
  RankingRow,
  SubmissionDetail,
  SubmissionMode,
  TERMINAL_VERDICTS,
} from "./types.js";

export interface SessionOptions extends HttpOptions {
  /** Base URL of the service; falls back to ARENA_SERVER. */
  server?: string;
  /** Bearer token; falls back to ARENA_TOKEN. Unset is fine for authenticate(). */
  token?: string;
  pollIntervalMs?: number;
  pollCapMs?: number;
}

interface RankingResponse {
  entries: RankingRow[];
}

const REDACTED = "[redacted]";

/**
 * One authenticated connection to the service. Calls map 1:1 onto API
 * operations and block until the response is in; judging is followed with
 * `submission(sid, { wait: true })`. GETs are retried on 5xx with exponential
 * backoff; a submission POST is sent exactly once, no matter what.
 */
export class ArenaSession {
  readonly server: string;
  private token: string;
  private readonly http: HttpOptions;
  private readonly pollIntervalMs: number;
  private readonly pollCapMs: number;

  constructor(opts: SessionOptions = {}) {
    const server = opts.server ?? process.env.ARENA_SERVER;
    if (!server) {
      throw new Error("no server given (pass server or set ARENA_SERVER)");
    }
    this.server = server.endsWith("/") ? server : server + "/";
    this.token = opts.token ?? process.env.ARENA_TOKEN ?? "";
    this.http = {
      timeoutMs: opts.timeoutMs,
      maxAttempts: opts.maxAttempts,
      retryBaseMs: opts.retryBaseMs,
    };
    this.pollIntervalMs = opts.pollIntervalMs ?? DEFAULT_POLL_INTERVAL_MS;
    this.pollCapMs = opts.pollCapMs ?? DEFAULT_POLL_CAP_MS;
  }

  /** Trade credentials for a fresh token (revoking any previous one). */
  static async authenticate(
    name: string,
    secret: string,
    opts: SessionOptions = {},
  ): Promise<ArenaSession> {
    // empty token: the login route is open and ARENA_TOKEN must not leak in
    const session = new ArenaSession({ ...opts, token: "" });
    const doc = await session.call<{ token: string }>({
      method: "POST",
      path: "/api/authentication/",
      body: { name, secret },
    });
    session.token = doc.token;
    return session;
  }

  problems(opts: { offset?: number; limit?: number } = {}): Promise<ProblemList> {
    return this.call({ method: "GET", path: "/api/problem/", query: opts });
  }

  problem(pid: string): Promise<ProblemDetail> {
    return this.call({ method: "GET", path: `/api/problem/${pid}/` });
  }

  /** Returns the new submission id; the verdict starts out Queued. */
  async submit(
    pid: string,
    source: string,
    language: string,
    mode: SubmissionMode = "code",
  ): Promise<string> {
    const doc = await this.call<{ submission_id: string }>({
      method: "POST",
      path: "/api/submission",
      body: { pid, language, mode, source },
    });
    return doc.submission_id;
  }

  async submission(sid: string, opts: { wait?: boolean } = {}): Promise<SubmissionDetail> {
    const fetchOne = () =>
      this.call<SubmissionDetail>({ method: "GET", path: `/api/submission/${sid}` });
    if (!opts.wait) return fetchOne();
    return pollUntil(
      fetchOne,
      (sub) => TERMINAL_VERDICTS.has(sub.verdict),
      this.pollIntervalMs,
      this.pollCapMs,
    );
  }

  async ranking(): Promise<RankingRow[]> {
    const doc = await this.call<RankingResponse>({ method: "GET", path: "/api/ranking" });
    return doc.entries;
  }

  private call<T>(spec: {
    method: "GET" | "POST";
    path: string;
    body?: unknown;
    query?: Record<string, string | number | undefined>;
  }): Promise<T> {
    return request<T>(this.server, { ...spec, token: this.token || undefined }, this.http);
  }

  // The token must never leak through logging or serialization.

  toString(): string {
    return `ArenaSession(${this.server}, token=${REDACTED})`;
  }

  toJSON(): Record<string, string> {
    return { server: this.server, token: REDACTED };
  }

  [inspect.custom](): string {
    return this.toString();
  }
}
