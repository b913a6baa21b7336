// Thin fetch client for the service endpoints; all payloads are the JSON
// documents defined by the server.

import type {
  ExpertInfo, GenConfig, JobInfo, LayoutDoc, PlanTraceDoc, TraceStep,
  ValidationReport,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

async function jsonOrThrow(resp: Response): Promise<any> {
  if (resp.ok) return resp.json();
  let detail: unknown = resp.statusText;
  try {
    detail = (await resp.json()).detail ?? detail;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async plan(prompt: string, backend = "rule"):
      Promise<{ layout: LayoutDoc; trace: PlanTraceDoc }> {
    const resp = await fetch(this.url("/v1/plan"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt, backend }),
    });
    return jsonOrThrow(resp);
  }

  async validateLayout(layout: LayoutDoc): Promise<ValidationReport> {
    const resp = await fetch(this.url("/v1/layouts/validate"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ layout }),
    });
    return jsonOrThrow(resp);
  }

  async generate(layout: LayoutDoc, config: Partial<GenConfig>):
      Promise<{ job_id: string }> {
    const resp = await fetch(this.url("/v1/generate"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ layout, config }),
    });
    return jsonOrThrow(resp);
  }

  async getJob(jobId: string): Promise<JobInfo> {
    return jsonOrThrow(await fetch(this.url(`/v1/jobs/${jobId}`)));
  }

  async getExperts(): Promise<ExpertInfo[]> {
    const body = await jsonOrThrow(await fetch(this.url("/v1/experts")));
    return body.experts;
  }

  async getTrace(jobId: string): Promise<TraceStep[]> {
    const resp = await fetch(this.url(`/v1/jobs/${jobId}/trace`));
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    const text = await resp.text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as TraceStep);
  }

  imageUrl(jobId: string): string {
    return this.url(`/v1/jobs/${jobId}/image`);
  }
}
