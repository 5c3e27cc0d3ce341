import type { ApiClient } from "./api.js";
import type { QueryStatus } from "./types.js";

const TERMINAL = new Set(["done", "failed"]);

export type Sleep = (ms: number) => Promise<void>;

const realSleep: Sleep = (ms) => new Promise((r) => setTimeout(r, ms));

/**
 * Poll an execution until it reaches a terminal state. The interval matches
 * the service's polling transport decision (1s); tests inject a fake sleep.
 */
export async function pollUntilDone(
  api: ApiClient,
  executionId: string,
  intervalMs = 1000,
  sleep: Sleep = realSleep,
  maxPolls = 600
): Promise<QueryStatus> {
  let status = await api.status(executionId);
  let polls = 0;
  while (!TERMINAL.has(status.state)) {
    if (++polls > maxPolls) {
      throw new Error(`execution ${executionId} still ${status.state} after ${maxPolls} polls`);
    }
    await sleep(intervalMs);
    status = await api.status(executionId);
  }
  return status;
}
