import { el, escapeHtml } from "./render.js";
import type { TrendLeaf, TrendReport } from "./types.js";

const WIDTH = 480;
const HEIGHT = 200;
const PAD = 30;

/**
 * SVG line chart of publication counts per selected leaf. Every data point
 * carries its API year and count verbatim in data attributes; geometry is
 * presentation only.
 */
export function renderTrendChart(
  report: TrendReport,
  selectedIds: string[] | null = null
): string {
  const leaves = report.leaves.filter(
    (leaf) => selectedIds === null || selectedIds.includes(leaf.node_id)
  );
  if (leaves.length === 0) {
    return el("svg", { class: "trend-chart", width: WIDTH, height: HEIGHT }, [
      el("text", { x: PAD, y: HEIGHT / 2, class: "empty" }, "no selection"),
    ]);
  }
  const years = leaves
    .flatMap((leaf) => Object.keys(leaf.yearly_counts).map(Number))
    .sort((a, b) => a - b);
  const counts = leaves.flatMap((leaf) => Object.values(leaf.yearly_counts));
  const minYear = years.length ? years[0] : 0;
  const maxYear = years.length ? years[years.length - 1] : 1;
  const maxCount = counts.length ? Math.max(...counts) : 1;
  const x = (year: number): number =>
    maxYear === minYear
      ? WIDTH / 2
      : PAD + ((year - minYear) / (maxYear - minYear)) * (WIDTH - 2 * PAD);
  const y = (count: number): number =>
    HEIGHT - PAD - (count / Math.max(1, maxCount)) * (HEIGHT - 2 * PAD);

  const series = leaves.map((leaf) => renderSeries(leaf, x, y));
  return el(
    "svg",
    { class: "trend-chart", width: WIDTH, height: HEIGHT, role: "img" },
    series
  );
}

function renderSeries(
  leaf: TrendLeaf,
  x: (year: number) => number,
  y: (count: number) => number
): string {
  const points = Object.entries(leaf.yearly_counts)
    .map(([year, count]) => ({ year: Number(year), count }))
    .sort((a, b) => a.year - b.year);
  const path = points.map((p) => `${x(p.year)},${y(p.count)}`).join(" ");
  const markers = points.map((p) =>
    el("circle", {
      cx: x(p.year),
      cy: y(p.count),
      r: 3,
      class: "point",
      "data-node-id": leaf.node_id,
      "data-year": p.year,
      "data-count": p.count,
    })
  );
  return el("g", { class: "series", "data-node-id": leaf.node_id }, [
    points.length > 1
      ? el("polyline", { points: path, fill: "none", class: "line" })
      : "",
    ...markers,
    el(
      "text",
      { class: "label", "data-node-id": leaf.node_id },
      escapeHtml(leaf.name)
    ),
  ]);
}

/** Narrative panel for one leaf: rank and narrative are API fields. */
export function renderTrendPanel(leaf: TrendLeaf): string {
  return el("aside", { class: "trend-panel", "data-node-id": leaf.node_id }, [
    el("h3", {}, escapeHtml(leaf.name)),
    leaf.rank === null
      ? ""
      : el("span", { class: "rank", "data-rank": leaf.rank }, `#${leaf.rank}`),
    el("p", { class: "narrative" }, escapeHtml(leaf.narrative)),
    leaf.degraded ? el("p", { class: "degraded" }, "counts only") : "",
  ]);
}
