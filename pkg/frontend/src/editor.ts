// Canvas layout editor: render + pointer interaction over the 1000x1000
// grid. Grid coordinates are the source of truth; pixels are derived from
// them on every frame, so zooming cannot accumulate rounding drift.

import {
  CANVAS, constrainBox, moveBox, overlapRects, resizeBox, type Handle,
} from "./layout.js";
import type { Box, LayoutDoc } from "./types.js";

const HANDLES: Handle[] = ["nw", "n", "ne", "e", "se", "s", "sw", "w"];
const HANDLE_PX = 7;

export type HitResult =
  | { kind: "handle"; region: number; handle: Handle }
  | { kind: "body"; region: number }
  | { kind: "none" };

export interface DragState {
  region: number;
  mode: "move" | Handle;
  startBox: Box;
  startX: number; // grid units
  startY: number;
}

function handlePoints(box: Box): Record<Handle, [number, number]> {
  const [x1, y1, x2, y2] = box;
  const cx = (x1 + x2) / 2;
  const cy = (y1 + y2) / 2;
  return {
    nw: [x1, y1], n: [cx, y1], ne: [x2, y1], e: [x2, cy],
    se: [x2, y2], s: [cx, y2], sw: [x1, y2], w: [x1, cy],
  };
}

/** Hit-test in grid units; handles win over bodies, later regions on top. */
export function hitTest(
  layout: LayoutDoc, gx: number, gy: number, selected: number[],
  handleRadius: number,
): HitResult {
  for (const i of selected) {
    const region = layout.regions[i];
    if (!region) continue;
    for (const [h, [px, py]] of Object.entries(handlePoints(region.box))) {
      if (Math.abs(gx - px) <= handleRadius && Math.abs(gy - py) <= handleRadius) {
        return { kind: "handle", region: i, handle: h as Handle };
      }
    }
  }
  for (let i = layout.regions.length - 1; i >= 0; i--) {
    const [x1, y1, x2, y2] = layout.regions[i].box;
    if (gx >= x1 && gx < x2 && gy >= y1 && gy < y2) {
      return { kind: "body", region: i };
    }
  }
  return { kind: "none" };
}

/** Apply a drag in grid units to the dragged region's box. */
export function applyDrag(drag: DragState, gx: number, gy: number): Box {
  const dx = gx - drag.startX;
  const dy = gy - drag.startY;
  if (drag.mode === "move") return moveBox(drag.startBox, dx, dy);
  return resizeBox(drag.startBox, drag.mode, dx, dy);
}

const REGION_COLORS = [
  "#4f9dff", "#ff9d4f", "#5fd068", "#eb80ff", "#ffd35f", "#ff6b81",
  "#6bf0e8", "#c0ff6b",
];

export class CanvasEditor {
  layout: LayoutDoc;
  selected: number[] = [];
  onChange: (layout: LayoutDoc) => void = () => {};
  onSelect: (selected: number[]) => void = () => {};
  private drag: DragState | null = null;

  constructor(private canvas: HTMLCanvasElement, layout: LayoutDoc) {
    this.layout = layout;
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
  }

  setLayout(layout: LayoutDoc): void {
    this.layout = layout;
    this.selected = this.selected.filter((i) => i < layout.regions.length);
    this.render();
  }

  private toGrid(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [
      ((e.clientX - rect.left) / rect.width) * CANVAS,
      ((e.clientY - rect.top) / rect.height) * CANVAS,
    ];
  }

  private handleRadius(): number {
    const rect = this.canvas.getBoundingClientRect();
    return (HANDLE_PX / rect.width) * CANVAS;
  }

  private pointerDown(e: PointerEvent): void {
    const [gx, gy] = this.toGrid(e);
    const hit = hitTest(this.layout, gx, gy, this.selected, this.handleRadius());
    if (hit.kind === "none") {
      this.selected = [];
      this.onSelect(this.selected);
      this.render();
      return;
    }
    if (hit.kind === "body") {
      if (e.shiftKey) {
        if (!this.selected.includes(hit.region)) this.selected.push(hit.region);
      } else if (!this.selected.includes(hit.region)) {
        this.selected = [hit.region];
      }
      this.onSelect(this.selected);
      this.drag = {
        region: hit.region, mode: "move",
        startBox: [...this.layout.regions[hit.region].box] as Box,
        startX: gx, startY: gy,
      };
    } else {
      this.drag = {
        region: hit.region, mode: hit.handle,
        startBox: [...this.layout.regions[hit.region].box] as Box,
        startX: gx, startY: gy,
      };
    }
    this.canvas.setPointerCapture(e.pointerId);
    this.render();
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.drag) return;
    const [gx, gy] = this.toGrid(e);
    const box = applyDrag(this.drag, gx, gy);
    this.layout.regions[this.drag.region].box = constrainBox(box);
    this.render();
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.drag) return;
    this.canvas.releasePointerCapture(e.pointerId);
    this.drag = null;
    this.onChange(this.layout);
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    const sx = w / CANVAS;
    const sy = h / CANVAS;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, w, h);

    ctx.strokeStyle = "#232a36";
    for (let g = 0; g <= CANVAS; g += 100) {
      ctx.beginPath();
      ctx.moveTo(g * sx, 0);
      ctx.lineTo(g * sx, h);
      ctx.moveTo(0, g * sy);
      ctx.lineTo(w, g * sy);
      ctx.stroke();
    }

    for (const [x1, y1, x2, y2] of overlapRects(this.layout)) {
      ctx.fillStyle = "rgba(255, 80, 80, 0.18)";
      ctx.fillRect(x1 * sx, y1 * sy, (x2 - x1) * sx, (y2 - y1) * sy);
    }

    this.layout.regions.forEach((region, i) => {
      const [x1, y1, x2, y2] = region.box;
      const color = REGION_COLORS[i % REGION_COLORS.length];
      ctx.fillStyle = color + "22";
      ctx.fillRect(x1 * sx, y1 * sy, (x2 - x1) * sx, (y2 - y1) * sy);
      ctx.strokeStyle = color;
      ctx.lineWidth = this.selected.includes(i) ? 2.5 : 1.2;
      ctx.strokeRect(x1 * sx, y1 * sy, (x2 - x1) * sx, (y2 - y1) * sy);
      ctx.fillStyle = color;
      ctx.font = "12px system-ui";
      ctx.fillText(`${i}: ${region.prompt.slice(0, 28)}`,
                   x1 * sx + 4, y1 * sy + 14);
      if (this.selected.includes(i)) {
        for (const [px, py] of Object.values(handlePoints(region.box))) {
          ctx.fillRect(px * sx - 3, py * sy - 3, 6, 6);
        }
      }
    });
  }
}
