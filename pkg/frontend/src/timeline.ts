// Stage timeline: one cell per denoising step, colored by dominant stage,
// with a marker on interleaved global steps inside the local phase.

import type { TraceStep } from "./types.js";

export interface TimelineSummary {
  localDominant: number;
  globalDominant: number;
  interleaved: number;
  steps: TraceStep[];
}

export function summarizeTimeline(steps: TraceStep[]): TimelineSummary {
  let localDominant = 0;
  let globalDominant = 0;
  let interleaved = 0;
  for (const s of steps) {
    if (s.stage === "local") {
      localDominant++;
      if (s.executed === "global") interleaved++;
    } else {
      globalDominant++;
    }
  }
  return { localDominant, globalDominant, interleaved, steps };
}

export function renderTimeline(el: HTMLElement, steps: TraceStep[]): void {
  const summary = summarizeTimeline(steps);
  el.innerHTML = "";
  const label = document.createElement("div");
  label.className = "timeline-label";
  label.textContent =
    `${summary.localDominant} local-dominant / ${summary.globalDominant} ` +
    `global steps` +
    (summary.interleaved ? ` (${summary.interleaved} interleaved global)` : "");
  el.appendChild(label);

  const row = document.createElement("div");
  row.className = "timeline-row";
  for (const s of steps) {
    const cell = document.createElement("span");
    cell.className = `timeline-cell stage-${s.stage}` +
      (s.stage === "local" && s.executed === "global" ? " interleaved" : "");
    cell.title = `t=${s.t}: stage ${s.stage}, executed ${s.executed}`;
    row.appendChild(cell);
  }
  el.appendChild(row);
}
