/** Wire types mirroring the service JSON exactly; the UI adds nothing. */

export interface QueryStatus {
  state: "planning" | "validating" | "executing" | "done" | "failed";
  progress: { done: number; total: number };
  issues: { issues: ValidationIssue[] } | null;
}

export interface ValidationIssue {
  severity: string;
  category: string;
  step_ids: string[];
  message: string;
}

export interface TerminalResult {
  kind: string;
  value: unknown;
  provenance: string[];
}

export interface QueryResult {
  terminals: Record<string, TerminalResult[]>;
  failures: Record<string, string>;
}

export interface TraceRecord {
  exec_id: string;
  origin_step_id: string;
  op_name: string;
  instance_index: number | null;
  dependencies: string[];
  status: string;
  inputs_digest: string;
  output_digest: string | null;
  error: string | null;
  tokens: { input: number; output: number; calls: number; embeds: number };
  wall_time_ms: number;
}

export interface TraceDocument {
  execution_id: string;
  records: TraceRecord[];
  statuses: Record<string, string>;
  failures: Record<string, string>;
}

export interface TaxonomyNode {
  node_id: string;
  name: string;
  description: string;
  signature: string[] | null;
  papers: string[];
  children: TaxonomyNode[];
}

export interface TaxonomyView {
  kind: string;
  root: TaxonomyNode;
}

export interface MatrixCell {
  row: string;
  col: string;
  papers: string[];
  count: number;
  summary: string;
}

export interface MatrixView {
  rows: string[];
  cols: string[];
  cells: MatrixCell[];
}

export interface TrendLeaf {
  node_id: string;
  name: string;
  yearly_counts: Record<string, number>;
  citation_series: Record<string, number>;
  rank: number | null;
  narrative: string;
  degraded: boolean;
}

export interface TrendReport {
  leaves: TrendLeaf[];
}

export interface IdeaProposal {
  problem_node: string;
  method_node: string;
  stage1_score: number;
  proposal: Record<string, string>;
}

export interface MilestoneEntry {
  paper_id: string;
  dimensions: Record<string, number>;
  delayed_boost: number;
  composite: number;
  summary: string;
}

export interface MilestoneView {
  milestones: MilestoneEntry[];
}

export interface SessionTurn {
  query: string;
  execution_id: string;
  plan_digest: string;
  result_digest: string;
}

export interface SessionView {
  session_id: string;
  turns: SessionTurn[];
}
