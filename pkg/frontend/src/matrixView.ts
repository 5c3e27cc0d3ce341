import { el, escapeHtml } from "./render.js";
import type { IdeaProposal, MatrixCell, MatrixView } from "./types.js";

/**
 * Problem x method grid. Cell counts come straight from the API; row and
 * column labels are taxonomy names resolved through the provided index
 * (falling back to the raw node ids, also API values).
 */
export function renderMatrix(
  view: MatrixView,
  names: Map<string, string> = new Map()
): string {
  const cellOf = new Map<string, MatrixCell>();
  for (const cell of view.cells) cellOf.set(`${cell.row}|${cell.col}`, cell);
  const label = (id: string): string => names.get(id) ?? id;

  const header = el("tr", {}, [
    el("th", {}, ""),
    ...view.cols.map((col) =>
      el("th", { "data-node-id": col }, escapeHtml(label(col)))
    ),
  ]);
  const rows = view.rows.map((row) =>
    el("tr", {}, [
      el("th", { "data-node-id": row }, escapeHtml(label(row))),
      ...view.cols.map((col) => {
        const cell = cellOf.get(`${row}|${col}`);
        const count = cell ? cell.count : 0;
        return el(
          "td",
          {
            class: count === 0 ? "cell empty" : "cell",
            "data-row": row,
            "data-col": col,
            "data-count": count,
          },
          String(count)
        );
      }),
    ])
  );
  return el("table", { class: "matrix" }, [header, ...rows]);
}

/**
 * Right-side panel for a clicked cell: filled cells list their papers,
 * empty cells show the idea proposal for that pairing when one exists.
 */
export function renderGapPanel(
  cell: MatrixCell,
  proposals: IdeaProposal[] = [],
  names: Map<string, string> = new Map()
): string {
  const label = (id: string): string => names.get(id) ?? id;
  const title = `${label(cell.row)} x ${label(cell.col)}`;
  if (cell.count > 0) {
    return el("aside", { class: "gap-panel filled" }, [
      el("h3", {}, escapeHtml(title)),
      el(
        "ul",
        { class: "papers" },
        cell.papers.map((pid) => el("li", { "data-paper": pid }, escapeHtml(pid)))
      ),
    ]);
  }
  const proposal = proposals.find(
    (p) => p.problem_node === cell.row && p.method_node === cell.col
  );
  return el("aside", { class: "gap-panel empty" }, [
    el("h3", {}, escapeHtml(title)),
    proposal
      ? el(
          "dl",
          { class: "proposal", "data-score": proposal.stage1_score },
          Object.entries(proposal.proposal).flatMap(([key, value]) => [
            el("dt", {}, escapeHtml(key)),
            el("dd", {}, escapeHtml(value)),
          ])
        )
      : el("p", { class: "no-proposal" }, "unexplored combination"),
  ]);
}
