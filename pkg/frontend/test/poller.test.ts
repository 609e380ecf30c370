import { describe, expect, it } from "vitest";

import type { FrameResult } from "../src/api.js";
import { FramePoller } from "../src/poller.js";
import type { FrameMeta } from "../src/types.js";

function result(seq: number): FrameResult {
  const meta: FrameMeta = { seq, kind: "intensity", window: null, timestamp: seq, mode: "video" };
  return { meta, blob: new Blob([`frame-${seq}`]) };
}

type Step = number | null | "fail";

/** Run the poller over a scripted poll source: each entry is a frame seq,
 * null (server 204 timeout) or "fail" (transport error).  The poller is
 * stopped once the script is exhausted. */
async function run(script: Step[]) {
  const delivered: number[] = [];
  const errors: unknown[] = [];
  const sleeps: number[] = [];
  const sinces: number[] = [];
  let i = 0;
  let finish!: () => void;
  const exhausted = new Promise<void>((resolve) => {
    finish = resolve;
  });
  const poller: FramePoller = new FramePoller({
    poll: async (since) => {
      if (i >= script.length) {
        poller.requestStop();
        finish();
        return null;
      }
      sinces.push(since);
      const step = script[i++];
      if (step === "fail") {
        throw new Error("connection reset");
      }
      return step === null ? null : result(step);
    },
    onFrame: (meta) => delivered.push(meta.seq),
    onError: (err) => errors.push(err),
    sleep: async (ms) => {
      sleeps.push(ms);
    },
  });
  poller.start();
  await exhausted;
  await poller.stop();
  return { delivered, errors, sleeps, sinces, poller };
}

describe("frame poller", () => {
  it("delivers frames strictly in sequence order", async () => {
    const { delivered } = await run([1, 2, 5, 9]);
    expect(delivered).toEqual([1, 2, 5, 9]);
  });

  it("drops stale and duplicate responses", async () => {
    const { delivered } = await run([3, 1, 3, 2, 7]);
    expect(delivered).toEqual([3, 7]);
  });

  it("treats 204 timeouts as immediate re-polls without backoff", async () => {
    const { delivered, sleeps } = await run([null, null, 4]);
    expect(delivered).toEqual([4]);
    expect(sleeps).toEqual([]);
  });

  it("backs off exponentially on transport errors and resets on success", async () => {
    const { delivered, sleeps, errors } = await run(["fail", "fail", "fail", 2, "fail"]);
    expect(delivered).toEqual([2]);
    expect(errors).toHaveLength(4);
    expect(sleeps.slice(0, 3)).toEqual([500, 1000, 2000]);
    // the post-success failure starts over at the base delay
    expect(sleeps[3]).toBe(500);
  });

  it("caps the backoff", async () => {
    const script: Step[] = Array(8).fill("fail");
    const { sleeps } = await run(script);
    expect(Math.max(...sleeps)).toBe(8000);
    expect(sleeps.filter((ms) => ms === 8000).length).toBeGreaterThan(1);
  });

  it("advances its since cursor only on accepted frames", async () => {
    const { sinces, poller } = await run([2, 1, 6]);
    expect(sinces).toEqual([-1, 2, 2]);
    expect(poller.lastSeq).toBe(6);
  });
});
