import { el, escapeHtml } from "./render.js";
import type { TaxonomyNode, TaxonomyView } from "./types.js";

/** Collapsible tree; node names, descriptions, and paper ids are API fields. */
export function renderTaxonomyTree(
  view: TaxonomyView,
  selected: string | null = null
): string {
  return el("div", { class: "taxonomy", "data-kind": view.kind }, [
    renderNode(view.root, selected),
  ]);
}

function renderNode(node: TaxonomyNode, selected: string | null): string {
  const classes = ["node"];
  if (node.node_id === selected) classes.push("selected");
  const papers = node.papers.map((pid) =>
    el("span", { class: "paper", "data-paper": pid }, escapeHtml(pid))
  );
  const children = node.children.map((child) => renderNode(child, selected));
  return el(
    "details",
    { class: classes.join(" "), "data-node-id": node.node_id, open: "" },
    [
      el("summary", {}, [
        el("span", { class: "name" }, escapeHtml(node.name)),
        papers.length ? el("span", { class: "papers" }, papers) : "",
      ]),
      node.description
        ? el("p", { class: "description" }, escapeHtml(node.description))
        : "",
      children.length ? el("div", { class: "children" }, children) : "",
    ]
  );
}

/** The definition panel shown when a subtopic is clicked: pass-through text. */
export function renderNodePanel(node: TaxonomyNode): string {
  return el("aside", { class: "node-panel", "data-node-id": node.node_id }, [
    el("h3", {}, escapeHtml(node.name)),
    el("p", { class: "description" }, escapeHtml(node.description)),
    el(
      "ul",
      { class: "papers" },
      node.papers.map((pid) => el("li", {}, escapeHtml(pid)))
    ),
  ]);
}

/** Flatten the tree into an id -> name map (display lookup, no analytics). */
export function nameIndex(view: TaxonomyView): Map<string, string> {
  const out = new Map<string, string>();
  const walk = (node: TaxonomyNode): void => {
    out.set(node.node_id, node.name);
    node.children.forEach(walk);
  };
  walk(view.root);
  return out;
}
