import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient, type FetchLike } from "../src/api.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixture<T>(name: string): T {
  const raw = readFileSync(join(here, "fixtures", `${name}.json`), "utf-8");
  return JSON.parse(raw) as T;
}

/** A fetch stub serving captured service responses by URL. */
export function fixtureFetch(
  overrides: Record<string, unknown> = {}
): { fetch: FetchLike; calls: string[] } {
  const routes: Record<string, unknown> = {
    "POST /queries": { execution_id: "exec-fixture" },
    "GET /queries/exec-fixture": fixture("status"),
    "GET /queries/exec-fixture/result": fixture("result"),
    "GET /queries/exec-fixture/trace": fixture("trace"),
    "GET /taxonomy/problem": fixture("taxonomy"),
    "GET /matrix": fixture("matrix"),
    "GET /trend": fixture("trend"),
    "GET /milestones?top_k=3": fixture("milestones"),
    "GET /sessions/ui": fixture("session"),
    ...overrides,
  };
  const calls: string[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = `${method} ${path}`;
    calls.push(key);
    const payload = routes[key];
    if (payload === undefined) {
      return { ok: false, status: 404, json: async () => ({ detail: key }) };
    }
    return { ok: true, status: 200, json: async () => payload };
  };
  return { fetch: fetchImpl, calls };
}

export function fixtureClient(
  overrides: Record<string, unknown> = {}
): { api: ApiClient; calls: string[] } {
  const { fetch, calls } = fixtureFetch(overrides);
  return { api: new ApiClient("http://service", fetch), calls };
}

/** All attribute values rendered for a given data attribute. */
export function dataValues(html: string, attr: string): string[] {
  const re = new RegExp(`${attr}="([^"]*)"`, "g");
  const out: string[] = [];
  for (const match of html.matchAll(re)) out.push(match[1]);
  return out;
}

export const instantSleep = async (): Promise<void> => {};
