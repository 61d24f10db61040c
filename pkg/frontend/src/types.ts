// Payload shapes of the translation service API (schema v1).

export interface MappingEntry {
  target_span: [number, number];
  target_line: number;
  source_span: [number, number] | null;
  source_line: number | null;
  rule_id: string;
  step: number;
}

export interface CandidateView {
  v: number;
  index: number;
  text: string;
  mapping: MappingEntry[];
}

export interface StuckPrompt {
  span: [number, number] | null;
  kind: string;
  line: number | null;
  snippet: string;
}

export interface Outcome {
  status: "success" | "stuck" | "exhausted";
  retries: number;
  candidate_count: number;
  candidate_index?: number;
  target_text?: string;
  bloat?: number;
  prompt?: StuckPrompt;
  reports: { verdict: string; line: number | null; message: string }[];
}

export interface SessionCreated {
  v: number;
  session_id: string;
  outcome: Outcome;
}

export interface CaptureInfo {
  position: number;
  mode: string;
}

export interface ReferenceInfo {
  position: number;
  mode: string;
  capture_index: number;
}

export interface RulePayload {
  rule_id: string;
  provenance: string;
  text: string;
  captures: CaptureInfo[];
  references: ReferenceInfo[];
}

export interface SnippetsResponse {
  v: number;
  rule: RulePayload;
  notes: string[];
  ambiguous: [number, number[]][];
  outcome: Outcome;
}
