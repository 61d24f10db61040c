// Translation inspector state: candidate navigation and hover resolution.
// Hover answers come verbatim from the service's rule mapping; nothing is
// recomputed on the client.

import type { CandidateView, MappingEntry } from "./types.js";

export interface HoverResolution {
  sourceSpan: [number, number] | null;
  sourceLine: number | null;
  ruleId: string;
}

export class InspectorState {
  sessionId: string;
  candidateCount: number;
  current: number;
  view: CandidateView | null = null;
  hover: HoverResolution | null = null;

  constructor(sessionId: string, candidateCount: number) {
    this.sessionId = sessionId;
    this.candidateCount = candidateCount;
    this.current = candidateCount;
  }

  setView(view: CandidateView): void {
    this.view = view;
    this.current = view.index;
    this.hover = null;
  }

  /** Mapping entries whose printed tokens lie on a translated line. */
  entriesOnLine(line: number): MappingEntry[] {
    if (!this.view) return [];
    return this.view.mapping.filter((e) => e.target_line === line);
  }

  /** Resolve a hover at a target-text offset to its source span and rule. */
  resolveHoverAt(offset: number): HoverResolution | null {
    if (!this.view) return null;
    let best: MappingEntry | null = null;
    for (const entry of this.view.mapping) {
      const [start, end] = entry.target_span;
      if (offset < start || offset >= end) continue;
      if (best === null || span(entry) < span(best)) best = entry;
    }
    this.hover = best
      ? { sourceSpan: best.source_span, sourceLine: best.source_line, ruleId: best.rule_id }
      : null;
    return this.hover;
  }

  /** Resolve a hover on a whole translated line: the derivation step whose
   * tokens cover the most of that line, i.e. the rule that produced the
   * construct rather than an inner identifier. */
  resolveHoverLine(line: number): HoverResolution | null {
    const entries = this.entriesOnLine(line);
    if (entries.length === 0) {
      this.hover = null;
      return null;
    }
    const coverage = new Map<number, number>();
    for (const e of entries) {
      coverage.set(e.step, (coverage.get(e.step) ?? 0) + span(e));
    }
    let bestStep = entries[0].step;
    for (const [step, width] of coverage) {
      if (width > (coverage.get(bestStep) ?? 0)) bestStep = step;
    }
    const best = entries.find((e) => e.step === bestStep)!;
    this.hover = {
      sourceSpan: best.source_span,
      sourceLine: best.source_line,
      ruleId: best.rule_id,
    };
    return this.hover;
  }

  stepCandidate(delta: number): number {
    const next = Math.min(Math.max(this.current + delta, 1), this.candidateCount);
    this.current = next;
    return next;
  }
}

function span(e: MappingEntry): number {
  return e.target_span[1] - e.target_span[0];
}

/** Lines of translated text annotated with their mapping entries. */
export function annotateLines(view: CandidateView): { text: string; entries: MappingEntry[] }[] {
  const lines = view.text.split("\n");
  return lines.map((text, i) => ({
    text,
    entries: view.mapping.filter((e) => e.target_line === i + 1),
  }));
}
