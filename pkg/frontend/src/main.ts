// Browser wiring: two-pane inspector, candidate stepper, snippet form and
// rule editor dialog. All data comes from the session service.

import { ApiError, Client } from "./api.js";
import { InspectorState, annotateLines } from "./inspector.js";
import {
  SnippetFormState,
  applyError,
  applyResponse,
  displayedRhs,
  emptyForm,
  validateForm,
} from "./snippets.js";
import {
  EditorState,
  buildPatch,
  canSave,
  cycleAmbiguous,
  linkProblems,
  openEditor,
  setLink,
} from "./ruleEditor.js";
import type { SessionCreated } from "./types.js";

const client = new Client();

let inspector: InspectorState | null = null;
let form: SnippetFormState = emptyForm(null);
let editor: EditorState | null = null;
let activeRuleset = "corpus";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

async function startSession(): Promise<void> {
  const source = el<HTMLTextAreaElement>("source").value;
  const driver = el<HTMLTextAreaElement>("driver").value || undefined;
  activeRuleset = el<HTMLSelectElement>("ruleset").value;
  let created: SessionCreated;
  try {
    created = await client.createSession(source, activeRuleset, driver);
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
    return;
  }
  inspector = new InspectorState(created.session_id, created.outcome.candidate_count);
  form = emptyForm(created.outcome.prompt ?? null);
  renderOutcome(created);
  if (created.outcome.candidate_count > 0) {
    await showCandidate(created.outcome.candidate_index ?? created.outcome.candidate_count);
  }
  renderPrompt();
}

async function showCandidate(index: number): Promise<void> {
  if (!inspector) return;
  const view = await client.getCandidate(inspector.sessionId, index);
  inspector.setView(view);
  const pane = el<HTMLDivElement>("target-pane");
  pane.innerHTML = "";
  annotateLines(view).forEach((line, i) => {
    const div = document.createElement("div");
    div.className = "line";
    div.textContent = line.text || " ";
    div.addEventListener("mouseenter", () => {
      const hover = inspector!.resolveHoverLine(i + 1);
      renderHover(hover?.sourceLine ?? null, hover?.ruleId ?? null);
    });
    pane.appendChild(div);
  });
  el<HTMLSpanElement>("candidate-label").textContent =
    `candidate ${index} / ${inspector.candidateCount}`;
}

function renderHover(sourceLine: number | null, ruleId: string | null): void {
  const pane = el<HTMLDivElement>("source-pane");
  for (const child of Array.from(pane.children)) {
    child.classList.remove("highlight");
  }
  if (sourceLine !== null) {
    const target = pane.children.item(sourceLine - 1);
    target?.classList.add("highlight");
  }
  el<HTMLSpanElement>("rule-badge").textContent = ruleId ? `rule ${ruleId}` : "";
}

function renderSource(): void {
  const pane = el<HTMLDivElement>("source-pane");
  pane.innerHTML = "";
  for (const line of el<HTMLTextAreaElement>("source").value.split("\n")) {
    const div = document.createElement("div");
    div.className = "line";
    div.textContent = line || " ";
    pane.appendChild(div);
  }
}

function renderOutcome(created: SessionCreated): void {
  const o = created.outcome;
  el<HTMLDivElement>("status").textContent =
    `${o.status} after ${o.retries} candidate(s)` +
    (o.bloat ? `, bloat ${o.bloat}` : "");
  renderSource();
}

function renderPrompt(): void {
  const box = el<HTMLDivElement>("prompt-box");
  if (!form.prompt) {
    box.hidden = true;
    return;
  }
  box.hidden = false;
  el<HTMLDivElement>("prompt-text").textContent =
    `cannot translate ${form.prompt.kind} at line ${form.prompt.line}: ` +
    form.prompt.snippet;
}

async function submitSnippets(): Promise<void> {
  if (!inspector) return;
  form.srcLines = el<HTMLTextAreaElement>("snippet-src").value;
  form.trgLines = el<HTMLTextAreaElement>("snippet-trg").value;
  const problem = validateForm(form);
  if (problem) {
    form = applyError(form, problem);
    el<HTMLDivElement>("snippet-error").textContent = problem;
    return;
  }
  try {
    const resp = await client.submitSnippets(inspector.sessionId, form.srcLines, form.trgLines);
    form = applyResponse(form, resp);
    el<HTMLDivElement>("snippet-error").textContent = "";
    el<HTMLDivElement>("inferred-rule").textContent = displayedRhs(resp.rule);
    el<HTMLButtonElement>("open-editor").onclick = () => {
      editor = openEditor(resp.rule, 1, resp.ambiguous);
      renderEditor();
    };
    form.prompt = resp.outcome.prompt ?? null;
    renderPrompt();
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    form = applyError(form, message);
    el<HTMLDivElement>("snippet-error").textContent = message;
  }
}

function renderEditor(): void {
  const box = el<HTMLDivElement>("editor-box");
  if (!editor) {
    box.hidden = true;
    return;
  }
  box.hidden = false;
  el<HTMLPreElement>("editor-rule").textContent = editor.rule.text;
  const list = el<HTMLDivElement>("editor-links");
  list.innerHTML = "";
  for (const ref of editor.rule.references) {
    const row = document.createElement("div");
    const current = editor.links.get(ref.position);
    row.textContent = `reference ${ref.position} (${ref.mode}) -> capture ${current ?? "?"}`;
    row.addEventListener("click", () => {
      if (!editor) return;
      editor = cycleAmbiguous(editor, ref.position);
      const captures = editor.rule.captures.filter((c) => c.mode === ref.mode);
      if (captures.length > 0 && !editor.ambiguous.has(ref.position)) {
        const cur = editor.links.get(ref.position);
        const at = captures.findIndex((c) => c.position === cur);
        editor = setLink(editor, ref.position, captures[(at + 1) % captures.length].position);
      }
      renderEditor();
    });
    list.appendChild(row);
  }
  const problems = linkProblems(editor);
  el<HTMLDivElement>("editor-problems").textContent =
    problems.map((p) => `reference ${p.refPosition}: ${p.reason}`).join("; ");
  el<HTMLButtonElement>("editor-save").disabled = !canSave(editor);
}

async function saveEditor(): Promise<void> {
  if (!editor || !canSave(editor)) return;
  const patch = buildPatch(editor);
  try {
    const updated = await client.patchRuleLinks(
      activeRuleset, editor.rule.rule_id, patch.version, patch.links);
    editor = openEditor(updated, updated.version);
    renderEditor();
  } catch (err) {
    el<HTMLDivElement>("editor-problems").textContent =
      err instanceof ApiError ? err.message : String(err);
  }
}

function showError(message: string): void {
  el<HTMLDivElement>("status").textContent = `error: ${message}`;
}

export function wire(): void {
  el<HTMLButtonElement>("start").addEventListener("click", () => void startSession());
  el<HTMLButtonElement>("prev").addEventListener("click", () => {
    if (inspector) void showCandidate(inspector.stepCandidate(-1));
  });
  el<HTMLButtonElement>("next").addEventListener("click", () => {
    if (inspector) void showCandidate(inspector.stepCandidate(1));
  });
  el<HTMLButtonElement>("snippet-submit").addEventListener("click", () => void submitSnippets());
  el<HTMLButtonElement>("editor-save").addEventListener("click", () => void saveEditor());
}

if (typeof document !== "undefined" && document.getElementById("start")) {
  wire();
}
