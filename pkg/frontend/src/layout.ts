// Layout model operations. Every edit runs through constrainBox, which
// mirrors the server's repair rules (integer snap, ordering, canvas clamp,
// minimum size) so a layout built here always passes server validation.

import type { Box, LayoutDoc, RegionDoc } from "./types.js";

export const CANVAS = 1000;
export const MIN_BOX = 10;
export const MAX_REGIONS = 8;

function clamp(v: number, lo: number, hi: number): number {
  return Math.max(lo, Math.min(hi, v));
}

function constrainAxis(a1: number, a2: number): [number, number] {
  a1 = Math.round(a1);
  a2 = Math.round(a2);
  if (a1 > a2) [a1, a2] = [a2, a1];
  a1 = clamp(a1, 0, CANVAS);
  a2 = clamp(a2, 0, CANVAS);
  const deficit = MIN_BOX - (a2 - a1);
  if (deficit > 0) {
    a1 -= Math.floor(deficit / 2);
    a2 += deficit - Math.floor(deficit / 2);
    if (a1 < 0) {
      a2 -= a1;
      a1 = 0;
    }
    if (a2 > CANVAS) {
      a1 -= a2 - CANVAS;
      a2 = CANVAS;
      a1 = Math.max(a1, 0);
    }
  }
  return [a1, a2];
}

/** Snap to integers, order corners, clamp to canvas, enforce MIN_BOX. */
export function constrainBox(box: Box): Box {
  const [x1, x2] = constrainAxis(box[0], box[2]);
  const [y1, y2] = constrainAxis(box[1], box[3]);
  return [x1, y1, x2, y2];
}

export function boxValid(box: Box): boolean {
  const [x1, y1, x2, y2] = box;
  return (
    Number.isInteger(x1) && Number.isInteger(y1) &&
    Number.isInteger(x2) && Number.isInteger(y2) &&
    x1 >= 0 && y1 >= 0 && x2 <= CANVAS && y2 <= CANVAS &&
    x2 - x1 >= MIN_BOX && y2 - y1 >= MIN_BOX
  );
}

export function moveBox(box: Box, dx: number, dy: number): Box {
  const w = box[2] - box[0];
  const h = box[3] - box[1];
  const x1 = clamp(Math.round(box[0] + dx), 0, CANVAS - w);
  const y1 = clamp(Math.round(box[1] + dy), 0, CANVAS - h);
  return [x1, y1, x1 + w, y1 + h];
}

export type Handle =
  | "nw" | "n" | "ne" | "e" | "se" | "s" | "sw" | "w";

export function resizeBox(box: Box, handle: Handle, dx: number, dy: number): Box {
  let [x1, y1, x2, y2] = box;
  if (handle.includes("w")) x1 += dx;
  if (handle.includes("e")) x2 += dx;
  if (handle.includes("n")) y1 += dy;
  if (handle.includes("s")) y2 += dy;
  return constrainBox([x1, y1, x2, y2]);
}

export function emptyLayout(prompt = ""): LayoutDoc {
  return { schema: "mepg_layout_v1", global_prompt: prompt, regions: [] };
}

export function cloneLayout(doc: LayoutDoc): LayoutDoc {
  return {
    schema: "mepg_layout_v1",
    global_prompt: doc.global_prompt,
    regions: doc.regions.map((r) => ({ ...r, box: [...r.box] as Box })),
  };
}

/** Exchange the boxes of two regions; prompts and experts stay put. */
export function swapRegions(doc: LayoutDoc, i: number, j: number): LayoutDoc {
  if (i < 0 || j < 0 || i >= doc.regions.length || j >= doc.regions.length) {
    throw new RangeError(`region indices ${i}, ${j} out of range`);
  }
  const out = cloneLayout(doc);
  const bi = out.regions[i].box;
  out.regions[i].box = out.regions[j].box;
  out.regions[j].box = bi;
  return out;
}

export function addRegion(doc: LayoutDoc, region: RegionDoc): LayoutDoc {
  if (doc.regions.length >= MAX_REGIONS) {
    throw new RangeError(`at most ${MAX_REGIONS} regions`);
  }
  const out = cloneLayout(doc);
  out.regions.push({ ...region, box: constrainBox(region.box) });
  return out;
}

export function removeRegion(doc: LayoutDoc, i: number): LayoutDoc {
  const out = cloneLayout(doc);
  out.regions.splice(i, 1);
  return out;
}

export function serializeLayout(doc: LayoutDoc): string {
  // stable field order so diffs touch only what changed
  return JSON.stringify(
    {
      schema: doc.schema,
      global_prompt: doc.global_prompt,
      regions: doc.regions.map((r) => ({
        box: r.box,
        prompt: r.prompt,
        expert_id: r.expert_id,
        style_tag: r.style_tag,
      })),
    },
    null,
    2,
  );
}

export function parseLayout(text: string): LayoutDoc {
  const doc = JSON.parse(text);
  if (doc?.schema !== "mepg_layout_v1" || !Array.isArray(doc.regions)) {
    throw new Error("not a mepg_layout_v1 document");
  }
  return doc as LayoutDoc;
}

/** Intersection rectangle of two boxes, or null if they do not overlap. */
export function rectIntersection(a: Box, b: Box): Box | null {
  const x1 = Math.max(a[0], b[0]);
  const y1 = Math.max(a[1], b[1]);
  const x2 = Math.min(a[2], b[2]);
  const y2 = Math.min(a[3], b[3]);
  return x1 < x2 && y1 < y2 ? [x1, y1, x2, y2] : null;
}

/** All pairwise overlaps, for the live shading in the editor. */
export function overlapRects(doc: LayoutDoc): Box[] {
  const out: Box[] = [];
  for (let i = 0; i < doc.regions.length; i++) {
    for (let j = i + 1; j < doc.regions.length; j++) {
      const r = rectIntersection(doc.regions[i].box, doc.regions[j].box);
      if (r) out.push(r);
    }
  }
  return out;
}
