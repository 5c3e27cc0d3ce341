import { el, escapeHtml } from "./render.js";
import type { MilestoneView } from "./types.js";

/** Ranked milestone list; scores and summaries are API fields verbatim. */
export function renderMilestones(view: MilestoneView): string {
  return el(
    "ol",
    { class: "milestones" },
    view.milestones.map((entry) =>
      el("li", { class: "milestone", "data-paper": entry.paper_id }, [
        el("span", { class: "paper" }, escapeHtml(entry.paper_id)),
        el(
          "span",
          { class: "composite", "data-composite": entry.composite },
          String(entry.composite)
        ),
        entry.delayed_boost > 0
          ? el(
              "span",
              { class: "boost", "data-boost": entry.delayed_boost },
              "delayed recognition"
            )
          : "",
        el("p", { class: "summary" }, escapeHtml(entry.summary)),
      ])
    )
  );
}
