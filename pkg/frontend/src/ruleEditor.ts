// Rule editor state: re-linking references to captures by click.
// Saving requires every reference linked to an existing capture.

import type { CaptureInfo, ReferenceInfo, RulePayload } from "./types.js";

export interface EditorState {
  rule: RulePayload;
  version: number;
  links: Map<number, number>; // reference position -> capture index
  ambiguous: Map<number, number[]>; // reference position -> candidate captures
  dirty: boolean;
}

export function openEditor(rule: RulePayload, version: number,
                           ambiguous: [number, number[]][] = []): EditorState {
  const links = new Map<number, number>();
  for (const ref of rule.references) {
    links.set(ref.position, ref.capture_index);
  }
  return {
    rule,
    version,
    links,
    ambiguous: new Map(ambiguous),
    dirty: false,
  };
}

export function setLink(state: EditorState, refPosition: number, captureIndex: number): EditorState {
  const links = new Map(state.links);
  links.set(refPosition, captureIndex);
  return { ...state, links, dirty: true };
}

export function clearLink(state: EditorState, refPosition: number): EditorState {
  const links = new Map(state.links);
  links.delete(refPosition);
  return { ...state, links, dirty: true };
}

/** Swap an ambiguous reference to its next recorded alternative. */
export function cycleAmbiguous(state: EditorState, refPosition: number): EditorState {
  const options = state.ambiguous.get(refPosition);
  if (!options || options.length < 2) return state;
  const current = state.links.get(refPosition);
  const at = options.indexOf(current ?? -1);
  const next = options[(at + 1) % options.length];
  return setLink(state, refPosition, next);
}

export interface LinkProblem {
  refPosition: number;
  reason: string;
}

export function linkProblems(state: EditorState): LinkProblem[] {
  const problems: LinkProblem[] = [];
  const captures = new Map<number, CaptureInfo>(
    state.rule.captures.map((c) => [c.position, c]));
  for (const ref of state.rule.references) {
    const target = state.links.get(ref.position);
    if (target === undefined) {
      problems.push({ refPosition: ref.position, reason: "reference is not linked" });
      continue;
    }
    const capture = captures.get(target);
    if (!capture) {
      problems.push({
        refPosition: ref.position,
        reason: `capture ${target} does not exist`,
      });
    } else if (capture.mode !== ref.mode) {
      problems.push({
        refPosition: ref.position,
        reason: `mode mismatch: reference ${ref.mode} vs capture ${capture.mode}`,
      });
    }
  }
  return problems;
}

export function canSave(state: EditorState): boolean {
  return linkProblems(state).length === 0;
}

/** PATCH body for the service; only valid when canSave holds. */
export function buildPatch(state: EditorState): {
  v: number; version: number; links: Record<number, number>;
} {
  const links: Record<number, number> = {};
  for (const [pos, idx] of state.links) {
    links[pos] = idx;
  }
  return { v: 1, version: state.version, links };
}
