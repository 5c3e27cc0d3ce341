/** Shared rendering helpers. Renderers are pure string functions over API
 * payloads; every displayed name and number is an API field verbatim. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function el(
  tag: string,
  attrs: Record<string, string | number | null | undefined>,
  children: string[] | string = []
): string {
  const attrText = Object.entries(attrs)
    .filter(([, v]) => v !== null && v !== undefined)
    .map(([k, v]) => `${k}="${escapeHtml(String(v))}"`)
    .join(" ");
  const body = Array.isArray(children) ? children.join("") : children;
  return `<${tag}${attrText ? " " + attrText : ""}>${body}</${tag}>`;
}
