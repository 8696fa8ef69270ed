// Wire records as the server sends them. Scores arrive as 2-decimal strings,
// not numbers: the service rounds once at the boundary and so do we (never).

export type SubmissionMode = "code" | "prompt";

export type Verdict =
  | "Queued"
  | "Judging"
  | "Accepted"
  | "WrongAnswer"
  | "TimeLimitExceeded"
  | "MemoryLimitExceeded"
  | "RuntimeError"
  | "CompileError"
  | "InternalError";

/** Verdicts a submission can never leave. */
export const TERMINAL_VERDICTS: ReadonlySet<string> = new Set([
  "Accepted",
  "WrongAnswer",
  "TimeLimitExceeded",
  "MemoryLimitExceeded",
  "RuntimeError",
  "CompileError",
  "InternalError",
]);

export interface ProblemStats {
  solved_count: number;
  attempted_count: number;
  /** 2-decimal percentage, null until someone has attempted the problem. */
  acceptance_rate: string | null;
}

export interface ProblemSummary {
  pid: string;
  title: string;
}

export interface ProblemList {
  problems: ProblemSummary[];
  total: number;
}

export interface ProblemDetail {
  pid: string;
  title: string;
  statement: string;
  difficulty: string;
  bps: string;
  cpu_limit_ms: number;
  memory_limit_kib: number;
  status: string;
  case_count: number;
  stats: ProblemStats;
}

export interface CaseResult {
  case_id: string;
  outcome: string;
  cpu_ms: number;
  memory_kib: number;
  stderr_excerpt: string;
}

export interface SubmissionSummary {
  sid: string;
  pid: string;
  uid: string;
  user: string;
  language: string;
  mode: string;
  verdict: Verdict;
  submitted_at: string;
  total_cpu_ms: number | null;
}

export interface SubmissionList {
  submissions: SubmissionSummary[];
  total: number;
}

export interface SubmissionDetail extends SubmissionSummary {
  source: string;
  /** Code a generator backend produced from a prompt; null for code submissions. */
  resolved_code: string | null;
  case_results: CaseResult[];
  peak_memory_kib: number;
  diagnostic: string | null;
}

export interface RankingRow {
  rank: number;
  user: string;
  dp: string;
  pass: string;
}
