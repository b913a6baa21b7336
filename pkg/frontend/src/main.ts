// App wiring: editor canvas, region panel, config controls, plan/generate
// actions, job polling and result display. One in-flight job per tab.

import { ApiClient, ApiError } from "./api.js";
import { CanvasEditor } from "./editor.js";
import {
  MAX_REGIONS, addRegion, constrainBox, emptyLayout, removeRegion,
  serializeLayout, swapRegions,
} from "./layout.js";
import { pollJob } from "./poller.js";
import { renderTimeline } from "./timeline.js";
import type { ExpertInfo, LayoutDoc, PlanTraceDoc } from "./types.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const state = {
  layout: emptyLayout("a scene"),
  experts: [] as ExpertInfo[],
  jobRunning: false,
};

const editor = new CanvasEditor(el<HTMLCanvasElement>("editor"), state.layout);

function banner(kind: "info" | "error", text: string, retry?: () => void): void {
  const box = el<HTMLDivElement>("banner");
  box.className = `banner ${kind}`;
  box.textContent = text;
  if (retry) {
    const btn = document.createElement("button");
    btn.textContent = "retry";
    btn.onclick = retry;
    box.appendChild(btn);
  }
  box.style.display = text ? "block" : "none";
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `HTTP ${err.status}: ${err.message}`;
  return String(err);
}

function renderRegionList(): void {
  const list = el<HTMLDivElement>("regions");
  list.innerHTML = "";
  state.layout.regions.forEach((region, i) => {
    const row = document.createElement("div");
    row.className = "region-row" +
      (editor.selected.includes(i) ? " selected" : "");

    const prompt = document.createElement("input");
    prompt.value = region.prompt;
    prompt.placeholder = "region prompt";
    prompt.onchange = () => {
      region.prompt = prompt.value;
      syncLayout();
    };

    const expert = document.createElement("select");
    const blank = document.createElement("option");
    blank.value = "";
    blank.textContent = "(auto by style)";
    expert.appendChild(blank);
    for (const info of state.experts) {
      const opt = document.createElement("option");
      opt.value = info.expert_id;
      opt.textContent = `${info.expert_id} [${info.style_tag || info.role}]`;
      expert.appendChild(opt);
    }
    expert.value = region.expert_id;
    expert.onchange = () => {
      region.expert_id = expert.value;
      syncLayout();
    };

    const coords = document.createElement("span");
    coords.className = "coords";
    coords.textContent = `(${region.box.join(", ")})`;

    const del = document.createElement("button");
    del.textContent = "x";
    del.title = "remove region";
    del.onclick = () => {
      state.layout = removeRegion(state.layout, i);
      syncLayout();
    };

    row.append(prompt, expert, coords, del);
    row.onclick = (e) => {
      if (e.target === prompt || e.target === expert || e.target === del) return;
      editor.selected = e.shiftKey
        ? [...new Set([...editor.selected, i])]
        : [i];
      editor.render();
      renderRegionList();
      updateButtons();
    };
    list.appendChild(row);
  });
  el<HTMLSpanElement>("region-count").textContent =
    `${state.layout.regions.length}/${MAX_REGIONS}`;
}

function syncLayout(): void {
  editor.setLayout(state.layout);
  renderRegionList();
  el<HTMLTextAreaElement>("layout-json").value = serializeLayout(state.layout);
  updateButtons();
}

function updateButtons(): void {
  el<HTMLButtonElement>("swap").disabled = editor.selected.length !== 2;
  el<HTMLButtonElement>("generate").disabled = state.jobRunning;
  el<HTMLButtonElement>("add-region").disabled =
    state.layout.regions.length >= MAX_REGIONS;
}

function renderPlanTrace(trace: PlanTraceDoc): void {
  const target = el<HTMLDivElement>("plan-trace");
  const positions = trace.positions
    .map(([name, box]) => `${name}: (${box.join(", ")})`)
    .join("\n");
  target.innerHTML = "";
  const steps: [string, string][] = [
    ["0 - analysis", trace.thought],
    ["1 - elements", trace.elements.join(", ")],
    ["2 - coordinates", positions],
    ["3 - details", trace.details.join("\n")],
  ];
  for (const [title, body] of steps) {
    const d = document.createElement("details");
    const s = document.createElement("summary");
    s.textContent = `step ${title}`;
    const pre = document.createElement("pre");
    pre.textContent = body;
    d.append(s, pre);
    d.open = true;
    target.appendChild(d);
  }
  if (trace.fallback_engaged) {
    const note = document.createElement("p");
    note.className = "fallback-note";
    note.textContent =
      `fallback engaged: layout taken from the step-0 draft (${trace.backend_used})`;
    target.appendChild(note);
  }
}

function readConfig() {
  return {
    n_steps: Number(el<HTMLInputElement>("cfg-n").value),
    p1: Number(el<HTMLInputElement>("cfg-p1").value),
    k: Number(el<HTMLInputElement>("cfg-k").value),
    interleave_g: Number(el<HTMLInputElement>("cfg-interleave").value),
    seed: Number(el<HTMLInputElement>("cfg-seed").value),
    grid_h: Number(el<HTMLInputElement>("cfg-grid").value),
    grid_w: Number(el<HTMLInputElement>("cfg-grid").value),
  };
}

async function doPlan(): Promise<void> {
  const prompt = el<HTMLInputElement>("prompt").value;
  banner("info", "planning...");
  try {
    const { layout, trace } = await api.plan(prompt, "rule");
    state.layout = layout;
    syncLayout();
    renderPlanTrace(trace);
    banner("info", "");
  } catch (err) {
    banner("error", describeError(err), doPlan);
  }
}

async function doGenerate(): Promise<void> {
  if (state.jobRunning) return;
  state.layout.global_prompt = el<HTMLInputElement>("prompt").value;
  banner("info", "validating...");
  try {
    const report = await api.validateLayout(state.layout);
    if (!report.ok) {
      banner("error",
             "layout rejected: " +
             report.violations.map((v) => v.message).join("; "));
      return;
    }
    state.jobRunning = true;
    updateButtons();
    banner("info", "generating...");
    const { job_id } = await api.generate(state.layout, readConfig());
    const job = await pollJob((id) => api.getJob(id), job_id, {
      intervalMs: 500,
      onProgress: (j) => {
        const { completed, total } = j.progress;
        el<HTMLSpanElement>("progress").textContent =
          total ? `${completed}/${total}` : j.status;
      },
    });
    const img = el<HTMLImageElement>("result");
    img.src = api.imageUrl(job.job_id) + `?ts=${Date.now()}`;
    img.style.display = "block";
    renderTimeline(el("timeline"), await api.getTrace(job.job_id));
    banner("info", "");
  } catch (err) {
    banner("error", describeError(err), doGenerate);
  } finally {
    state.jobRunning = false;
    updateButtons();
  }
}

function wire(): void {
  el<HTMLButtonElement>("plan").onclick = doPlan;
  el<HTMLButtonElement>("generate").onclick = doGenerate;
  el<HTMLButtonElement>("swap").onclick = () => {
    const [i, j] = editor.selected;
    state.layout = swapRegions(state.layout, i, j);
    syncLayout();
  };
  el<HTMLButtonElement>("add-region").onclick = () => {
    state.layout = addRegion(state.layout, {
      box: constrainBox([350, 350, 650, 650]),
      prompt: "new region",
      expert_id: "",
      style_tag: "",
    });
    syncLayout();
  };
  editor.onChange = () => syncLayout();
  editor.onSelect = () => {
    renderRegionList();
    updateButtons();
  };

  api.getExperts()
    .then((experts) => {
      state.experts = experts;
      renderRegionList();
    })
    .catch((err) => banner("error", describeError(err)));
  syncLayout();
}

wire();
