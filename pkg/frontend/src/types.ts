// Payload shapes of the dashql service API (snake_case like the engine).

export interface StatementEntry {
  index: number;
  kind: string | null;
  loc: [number, number];
  synthetic: boolean;
  produces: string | null;
  error: string | null;
  task_status: string | null;
}

export interface DiffEntry {
  prev: number | null;
  next: number | null;
  verdict: "EQUAL" | "UPDATED" | "NEW" | "DELETED";
  similarity: number;
}

export interface TaskReportEntry {
  id: number;
  kind: string;
  origin_statement: number | null;
  status: string;
  migrated: boolean;
  artifact: string | null;
  drop_target: string | null;
  error: string | null;
  duration_ms: number;
}

export interface InputDescriptor {
  name: string;
  type: string; // VARCHAR | INTERVAL | BIGINT | DOUBLE | TIMESTAMP | BOOLEAN | FILE
  component: string | null;
  value: unknown;
}

export interface ScriptResponse {
  generation: number;
  statements: StatementEntry[];
  diagnostics: string[];
  diff: DiffEntry[];
  tasks: TaskReportEntry[];
  inputs: InputDescriptor[];
}

export interface TableArtifact {
  kind: "table";
  relation: string;
  schema: [string, string][];
  row_count: number;
}

export interface ChartSpec {
  mark?: string | { type?: string; [key: string]: unknown };
  title?: string;
  encoding?: Record<string, EncodingChannel>;
  data?: { values?: Record<string, unknown>[]; name?: string };
  [key: string]: unknown;
}

export interface EncodingChannel {
  field?: string;
  type?: string;
  title?: string;
  scale?: { domain?: unknown[] };
  axis?: { tickCount?: number };
  stack?: boolean;
}

export interface OutputEntry {
  statement: number;
  kind: string | null;
  status: string;
  synthetic: boolean;
  error: string | null;
  chart?: ChartSpec;
  table?: TableArtifact;
  reduced?: boolean;
  input?: { name: string; type: string; component: string | null };
  relation?: { schema: [string, string][]; rows: Record<string, unknown>[]; row_count: number };
}

export interface TablePage {
  relation: string;
  offset: number;
  schema: [string, string][];
  rows: Record<string, unknown>[];
}

export interface TaskEvent {
  seq: number;
  task: number;
  kind: string;
  statement: number | null;
  status: string;
  artifact: string | null;
  error: string | null;
}

export interface ExpandResponse {
  statement: number;
  text: string;
  loc: [number, number];
}
