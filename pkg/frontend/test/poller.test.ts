import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { pollJob } from "../src/poller.js";
import type { JobInfo } from "../src/types.js";

function job(status: JobInfo["status"], completed = 0, total = 50): JobInfo {
  return { job_id: "j1", status, progress: { completed, total } };
}

describe("pollJob", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("polls until done and reports progress", async () => {
    const states = [job("queued"), job("running", 10), job("running", 35),
                    job("done", 50)];
    let calls = 0;
    const getJob = vi.fn(async () => states[Math.min(calls++, states.length - 1)]);
    const seen: number[] = [];

    const promise = pollJob(getJob, "j1", {
      intervalMs: 500,
      onProgress: (j) => seen.push(j.progress.completed),
    });
    await vi.advanceTimersByTimeAsync(2000);
    const result = await promise;

    expect(result.status).toBe("done");
    expect(seen).toEqual([0, 10, 35, 50]);
    expect(getJob).toHaveBeenCalledTimes(4);
  });

  it("uses the default 500 ms interval", async () => {
    const states = [job("running"), job("done")];
    let calls = 0;
    const getJob = vi.fn(async () => states[Math.min(calls++, 1)]);
    const promise = pollJob(getJob, "j1");
    await vi.advanceTimersByTimeAsync(499);
    expect(getJob).toHaveBeenCalledTimes(1);
    await vi.advanceTimersByTimeAsync(1);
    await promise;
    expect(getJob).toHaveBeenCalledTimes(2);
  });

  it("rejects with the server reason on failure", async () => {
    const getJob = async () => ({ ...job("failed"), error: "interrupted" });
    await expect(pollJob(getJob, "j1")).rejects.toThrow("interrupted");
  });

  it("rejects when the transport fails", async () => {
    const getJob = async () => {
      throw new Error("ECONNREFUSED");
    };
    await expect(pollJob(getJob, "j1")).rejects.toThrow("ECONNREFUSED");
  });
});
