// Thin client over the documented HTTP API; no translation logic here.

import type { CandidateView, RulePayload, SessionCreated, SnippetsResponse } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class Client {
  constructor(private baseUrl: string = "http://127.0.0.1:8642") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const data = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, data.detail ?? resp.statusText);
    }
    return data as T;
  }

  createSession(source: string, rules: string, driver?: string): Promise<SessionCreated> {
    return this.request("POST", "/sessions", { v: 1, source, rules, driver });
  }

  getCandidate(sessionId: string, index: number): Promise<CandidateView> {
    return this.request("GET", `/sessions/${sessionId}/candidates/${index}`);
  }

  submitSnippets(sessionId: string, srcLines: string, trgLines: string): Promise<SnippetsResponse> {
    return this.request("POST", `/sessions/${sessionId}/snippets`, {
      v: 1,
      src_lines: srcLines,
      trg_lines: trgLines,
    });
  }

  submitOverride(sessionId: string, sourceSpan: [number, number], occurrence: number,
                 ruleId: string): Promise<{ outcome: unknown }> {
    return this.request("POST", `/sessions/${sessionId}/overrides`, {
      v: 1,
      overrides: [{ source_span: sourceSpan, occurrence, rule_id: ruleId }],
    });
  }

  getRule(ruleset: string, ruleId: string): Promise<RulePayload & { version: number }> {
    return this.request("GET", `/rulesets/${ruleset}/rules/${ruleId}`);
  }

  patchRuleLinks(ruleset: string, ruleId: string, version: number,
                 links: Record<number, number>): Promise<RulePayload & { version: number }> {
    return this.request("PATCH", `/rulesets/${ruleset}/rules/${ruleId}`, {
      v: 1,
      version,
      links,
    });
  }
}
