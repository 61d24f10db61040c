// Snippet-submission flow for teaching a rule at a stuck prompt.

import type { Outcome, RulePayload, SnippetsResponse, StuckPrompt } from "./types.js";

export interface SnippetFormState {
  prompt: StuckPrompt | null;
  srcLines: string;
  trgLines: string;
  error: string | null;
  inferredRule: RulePayload | null;
  resumedOutcome: Outcome | null;
}

export function emptyForm(prompt: StuckPrompt | null): SnippetFormState {
  return {
    prompt,
    srcLines: "",
    trgLines: "",
    error: null,
    inferredRule: null,
    resumedOutcome: null,
  };
}

/** Client-side sanity check mirroring the snippet-pair invariants: equal
 * non-empty line counts, at most two lines per side. */
export function validateForm(state: SnippetFormState): string | null {
  const src = nonEmptyLines(state.srcLines);
  const trg = nonEmptyLines(state.trgLines);
  if (src.length === 0 || trg.length === 0) {
    return "both sides need at least one snippet line";
  }
  if (src.length !== trg.length) {
    return `line counts differ: ${src.length} source vs ${trg.length} target`;
  }
  if (src.length > 2) {
    return "at most two snippet lines per side";
  }
  return null;
}

export function nonEmptyLines(text: string): string[] {
  return text.split("\n").filter((ln) => ln.trim().length > 0);
}

export function applyResponse(state: SnippetFormState, resp: SnippetsResponse): SnippetFormState {
  return {
    ...state,
    error: null,
    inferredRule: resp.rule,
    resumedOutcome: resp.outcome,
  };
}

export function applyError(state: SnippetFormState, message: string): SnippetFormState {
  return { ...state, error: message, inferredRule: null, resumedOutcome: null };
}

/** The rule's target side as displayed in the teaching panel. */
export function displayedRhs(rule: RulePayload): string {
  const text = rule.text;
  const marker = "(fragment ";
  const first = text.indexOf(marker);
  const second = text.indexOf(marker, first + marker.length);
  return second >= 0 ? text.slice(second, text.length - 1) : text;
}
