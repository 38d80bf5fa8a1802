import { ApiClient, isDone } from "./api.js";
import type { PortfolioDocument } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  maxAttempts?: number;
  sleep?: (ms: number) => Promise<void>;
}

export type PollResult =
  | { ok: true; doc: PortfolioDocument }
  | { ok: false; error: string };

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

// Polls a single job until it completes; the server error string is passed
// through verbatim on failure.
export async function pollPortfolio(
  client: ApiClient,
  jobId: string,
  opts: PollOptions = {},
): Promise<PollResult> {
  const interval = opts.intervalMs ?? 1000;
  const maxAttempts = opts.maxAttempts ?? 600;
  const sleep = opts.sleep ?? defaultSleep;
  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    const res = await client.getPortfolio(jobId);
    if (isDone(res)) {
      return { ok: true, doc: res };
    }
    if (res.state === "failed") {
      return { ok: false, error: res.error };
    }
    await sleep(interval);
  }
  return { ok: false, error: `job ${jobId} still running after ${maxAttempts} polls` };
}
