import { ApiClient } from "./api.js";
import { renderMatrix, renderGapPanel } from "./matrixView.js";
import { renderMilestones } from "./milestoneView.js";
import { el, escapeHtml } from "./render.js";
import { renderSessionHistory } from "./sessionView.js";
import { nameIndex, renderTaxonomyTree } from "./taxonomyView.js";
import { renderTraceDag } from "./traceView.js";
import { renderTrendChart } from "./trendChart.js";

export interface MountPoint {
  innerHTML: string;
}

/**
 * Hash-route composition: every screen is a pure function of the URL plus
 * API state, so any view is reconstructable from a deep link alone.
 *
 * Routes: #/session/<id>, #/taxonomy/<kind>, #/trend, #/matrix,
 *         #/milestones, #/trace/<execution-id>
 */
export async function renderRoute(
  route: string,
  api: ApiClient
): Promise<string> {
  const parts = route.replace(/^#?\//, "").split("/");
  switch (parts[0]) {
    case "session": {
      const view = await api.session(parts[1] ?? "default");
      return renderSessionHistory(view);
    }
    case "taxonomy": {
      const view = await api.taxonomy(parts[1] ?? "problem");
      return renderTaxonomyTree(view, parts[2] ?? null);
    }
    case "trend": {
      const report = await api.trend(parts[1]);
      return renderTrendChart(report);
    }
    case "matrix": {
      const [matrix, problems, methods] = await Promise.all([
        api.matrix(),
        api.taxonomy("problem"),
        api.taxonomy("method"),
      ]);
      const names = new Map([...nameIndex(problems), ...nameIndex(methods)]);
      if (parts.length >= 3) {
        const cell = matrix.cells.find(
          (c) => c.row === parts[1] && c.col === parts[2]
        );
        if (cell) {
          return renderMatrix(matrix, names) + renderGapPanel(cell, [], names);
        }
      }
      return renderMatrix(matrix, names);
    }
    case "milestones": {
      const view = await api.milestones();
      return renderMilestones(view);
    }
    case "trace": {
      const trace = await api.trace(parts[1]);
      return renderTraceDag(trace);
    }
    default:
      return el(
        "nav",
        { class: "home" },
        ["session/default", "taxonomy/problem", "trend", "matrix",
         "milestones"].map((target) =>
          el("a", { href: `#/${target}` }, escapeHtml(target))
        )
      );
  }
}

export function mount(
  root: MountPoint,
  api: ApiClient,
  currentHash: () => string,
  onHashChange: (refresh: () => void) => void
): () => Promise<void> {
  const refresh = async (): Promise<void> => {
    root.innerHTML = await renderRoute(currentHash(), api);
  };
  onHashChange(() => void refresh());
  return refresh;
}
