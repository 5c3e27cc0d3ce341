import { el, escapeHtml } from "./render.js";
import type { TraceDocument, TraceRecord } from "./types.js";

/**
 * Execution-DAG rendering. Nodes are placed in topological layers (layout
 * only); statuses, digests, and token stats are API fields verbatim, and
 * cache-hit nodes get a distinct badge.
 */
export function renderTraceDag(trace: TraceDocument): string {
  const layers = topologicalLayers(trace.records);
  const nodes = layers.map((layer, depth) =>
    el(
      "div",
      { class: "layer", "data-depth": depth },
      layer.map(renderNodeBadge)
    )
  );
  const edges = trace.records.flatMap((record) =>
    record.dependencies.map((dep) =>
      el("li", { class: "edge", "data-from": dep, "data-to": record.exec_id },
         `${escapeHtml(dep)} -> ${escapeHtml(record.exec_id)}`)
    )
  );
  return el("div", { class: "trace", "data-execution": trace.execution_id }, [
    el("div", { class: "dag" }, nodes),
    el("ul", { class: "edges" }, edges),
  ]);
}

function renderNodeBadge(record: TraceRecord): string {
  const classes = ["exec-node", `status-${record.status}`];
  if (record.status === "cache-hit") classes.push("badge-cache");
  return el(
    "div",
    { class: classes.join(" "), "data-exec-id": record.exec_id },
    [
      el("span", { class: "op" }, escapeHtml(record.op_name)),
      el("span", { class: "status" }, escapeHtml(record.status)),
      record.instance_index === null
        ? ""
        : el("span", { class: "instance" }, `#${record.instance_index}`),
    ]
  );
}

/** Detail card shown when a node is clicked: digests and timings verbatim. */
export function renderNodeDetails(record: TraceRecord): string {
  return el("dl", { class: "node-details", "data-exec-id": record.exec_id }, [
    el("dt", {}, "inputs digest"),
    el("dd", { class: "inputs-digest" }, escapeHtml(record.inputs_digest)),
    el("dt", {}, "output digest"),
    el("dd", { class: "output-digest" },
       escapeHtml(record.output_digest ?? "none")),
    el("dt", {}, "wall time (ms)"),
    el("dd", { class: "wall-time", "data-ms": record.wall_time_ms },
       String(record.wall_time_ms)),
    el("dt", {}, "tokens in/out"),
    el("dd", { class: "tokens" },
       `${record.tokens.input}/${record.tokens.output}`),
    record.error
      ? el("dd", { class: "error" }, escapeHtml(record.error))
      : "",
  ]);
}

function topologicalLayers(records: TraceRecord[]): TraceRecord[][] {
  const depth = new Map<string, number>();
  const byId = new Map(records.map((r) => [r.exec_id, r]));
  const visit = (id: string): number => {
    const cached = depth.get(id);
    if (cached !== undefined) return cached;
    const record = byId.get(id);
    if (!record) return 0;
    const d = record.dependencies.length
      ? Math.max(...record.dependencies.map(visit)) + 1
      : 0;
    depth.set(id, d);
    return d;
  };
  records.forEach((r) => visit(r.exec_id));
  const layers: TraceRecord[][] = [];
  for (const record of [...records].sort((a, b) =>
    a.exec_id.localeCompare(b.exec_id)
  )) {
    const d = depth.get(record.exec_id) ?? 0;
    while (layers.length <= d) layers.push([]);
    layers[d].push(record);
  }
  return layers;
}
