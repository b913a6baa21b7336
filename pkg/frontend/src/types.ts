// Wire types shared with the service. The layout document is the
// mepg_layout_v1 contract; integer grid coordinates are the source of truth.

export type Box = [number, number, number, number]; // x1, y1, x2, y2

export interface RegionDoc {
  box: Box;
  prompt: string;
  expert_id: string;
  style_tag: string;
}

export interface LayoutDoc {
  schema: "mepg_layout_v1";
  global_prompt: string;
  regions: RegionDoc[];
}

export interface PlanTraceDoc {
  thought: string;
  elements: string[];
  positions: [string, number[]][];
  details: string[];
  backend_used: string;
  fallback_engaged: boolean;
}

export interface TraceStep {
  t: number;
  stage: "local" | "global";
  executed: "local" | "global";
  alphas?: number[];
  expert_ids?: string[];
}

export interface ExpertInfo {
  expert_id: string;
  style_tag: string;
  role: string;
}

export interface JobProgress {
  completed: number;
  total: number;
}

export interface JobInfo {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  progress: JobProgress;
  error?: string | null;
}

export interface GenConfig {
  n_steps: number;
  p1: number;
  k: number;
  interleave_g: number;
  seed: number;
  grid_h: number;
  grid_w: number;
}

export interface Violation {
  code: string;
  message: string;
  region: number | null;
}

export interface ValidationReport {
  ok: boolean;
  violations: Violation[];
  repaired: LayoutDoc | null;
}
