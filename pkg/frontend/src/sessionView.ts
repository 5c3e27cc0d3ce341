import type { ApiClient } from "./api.js";
import { pollUntilDone, type Sleep } from "./poll.js";
import { el, escapeHtml } from "./render.js";
import type { QueryResult, QueryStatus, SessionView } from "./types.js";

export interface TurnOutcome {
  executionId: string;
  status: QueryStatus;
  html: string;
}

/**
 * Submit a query, poll to completion, and render the result panel with a
 * trace link; failures surface the validator issues.
 */
export async function runSessionTurn(
  api: ApiClient,
  sessionId: string,
  query: string,
  sleep?: Sleep
): Promise<TurnOutcome> {
  const { execution_id } = await api.submitQuery(sessionId, query);
  const status = await pollUntilDone(api, execution_id, 1000, sleep);
  if (status.state === "failed") {
    return {
      executionId: execution_id,
      status,
      html: renderFailurePanel(query, status),
    };
  }
  const result = await api.result(execution_id);
  return {
    executionId: execution_id,
    status,
    html: renderResultPanel(query, execution_id, result),
  };
}

export function renderResultPanel(
  query: string,
  executionId: string,
  result: QueryResult
): string {
  const terminals = Object.entries(result.terminals).flatMap(([step, outs]) =>
    outs.map((out) =>
      el("section", { class: "terminal", "data-step": step }, [
        el(
          "pre",
          { class: "value" },
          escapeHtml(
            typeof out.value === "string"
              ? out.value
              : JSON.stringify(out.value, null, 2)
          )
        ),
        el(
          "ul",
          { class: "provenance" },
          out.provenance.map((src) => el("li", {}, escapeHtml(src)))
        ),
      ])
    )
  );
  return el("article", { class: "turn done" }, [
    el("h2", { class: "query" }, escapeHtml(query)),
    ...terminals,
    el(
      "a",
      { class: "trace-link", href: `#/trace/${executionId}` },
      "view execution trace"
    ),
  ]);
}

export function renderFailurePanel(query: string, status: QueryStatus): string {
  const issues = status.issues?.issues ?? [];
  return el("article", { class: "turn failed" }, [
    el("h2", { class: "query" }, escapeHtml(query)),
    el("p", { class: "state" }, "failed"),
    el(
      "ul",
      { class: "issues" },
      issues.map((issue) =>
        el(
          "li",
          { class: `issue ${issue.category}` },
          escapeHtml(`${issue.category}: ${issue.message}`)
        )
      )
    ),
  ]);
}

/** Chat-like history; every field shown is a session API value. */
export function renderSessionHistory(view: SessionView): string {
  return el("ol", { class: "session", "data-session": view.session_id },
    view.turns.map((turn) =>
      el("li", { class: "turn", "data-execution": turn.execution_id }, [
        el("span", { class: "query" }, escapeHtml(turn.query)),
        el(
          "a",
          { class: "trace-link", href: `#/trace/${turn.execution_id}` },
          "trace"
        ),
      ])
    )
  );
}
