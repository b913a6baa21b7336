// Poll a generation job until it settles; one in-flight job per tab is
// enforced by the caller disabling the generate button.

import type { JobInfo } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  onProgress?: (job: JobInfo) => void;
}

export function pollJob(
  getJob: (id: string) => Promise<JobInfo>,
  jobId: string,
  opts: PollOptions = {},
): Promise<JobInfo> {
  const interval = opts.intervalMs ?? 500;
  return new Promise((resolve, reject) => {
    const tick = async () => {
      let job: JobInfo;
      try {
        job = await getJob(jobId);
      } catch (err) {
        reject(err);
        return;
      }
      opts.onProgress?.(job);
      if (job.status === "done") {
        resolve(job);
      } else if (job.status === "failed") {
        reject(new Error(job.error || "generation failed"));
      } else {
        setTimeout(tick, interval);
      }
    };
    tick();
  });
}
