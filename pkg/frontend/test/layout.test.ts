import { describe, expect, it } from "vitest";

import {
  CANVAS, MIN_BOX, addRegion, boxValid, constrainBox, emptyLayout, moveBox,
  overlapRects, parseLayout, rectIntersection, removeRegion, resizeBox,
  serializeLayout, swapRegions,
} from "../src/layout.js";
import type { Box, LayoutDoc } from "../src/types.js";

function twoRegionLayout(): LayoutDoc {
  return {
    schema: "mepg_layout_v1",
    global_prompt: "a window and a bookshelf",
    regions: [
      { box: [0, 0, 450, 1000], prompt: "a window", expert_id: "e1", style_tag: "" },
      { box: [550, 0, 1000, 1000], prompt: "a bookshelf", expert_id: "e2", style_tag: "" },
    ],
  };
}

describe("constrainBox", () => {
  it("snaps to integers and orders corners", () => {
    expect(constrainBox([400.4, 250.2, 0.1, 750.9])).toEqual([0, 250, 400, 751]);
  });

  it("clamps to the canvas", () => {
    expect(constrainBox([-50, -20, 1200, 500])).toEqual([0, 0, 1000, 500]);
  });

  it("enforces the minimum size symmetrically", () => {
    expect(constrainBox([100, 100, 104, 500])).toEqual([97, 100, 107, 500]);
  });

  it("keeps the expansion inside the canvas at edges", () => {
    const [x1, , x2] = constrainBox([0, 0, 4, 500]);
    expect([x1, x2]).toEqual([0, 10]);
  });

  it("always yields a server-valid box", () => {
    let seed = 1234;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2 ** 31;
      return (seed / 2 ** 31) * 1400 - 200;
    };
    for (let i = 0; i < 500; i++) {
      const box = constrainBox([rand(), rand(), rand(), rand()] as Box);
      expect(boxValid(box)).toBe(true);
    }
  });
});

describe("moveBox / resizeBox", () => {
  it("move preserves size and stays inside the canvas", () => {
    const moved = moveBox([900, 900, 1000, 1000], 500, 500);
    expect(moved).toEqual([900, 900, 1000, 1000]);
    const moved2 = moveBox([0, 0, 100, 100], -50, 20);
    expect(moved2).toEqual([0, 20, 100, 120]);
  });

  it("resize below MIN_BOX clamps at MIN_BOX", () => {
    const box = resizeBox([100, 100, 300, 300], "e", -195, 0);
    expect(box[2] - box[0]).toBeGreaterThanOrEqual(MIN_BOX);
    expect(boxValid(box)).toBe(true);
  });

  it("corner drag to midpoint halves the full canvas box", () => {
    const box = resizeBox([0, 0, CANVAS, CANVAS], "se", -500, -500);
    expect(box).toEqual([0, 0, 500, 500]);
  });
});

describe("swapRegions", () => {
  it("exchanges exactly the two box fields in the serialized doc", () => {
    const before = twoRegionLayout();
    const after = swapRegions(before, 0, 1);
    const a = JSON.parse(serializeLayout(before));
    const b = JSON.parse(serializeLayout(after));
    expect(b.regions[0].box).toEqual(a.regions[1].box);
    expect(b.regions[1].box).toEqual(a.regions[0].box);
    // everything else identical
    b.regions[0].box = a.regions[0].box;
    b.regions[1].box = a.regions[1].box;
    expect(b).toEqual(a);
  });

  it("double swap restores the original serialization", () => {
    const lay = twoRegionLayout();
    const twice = swapRegions(swapRegions(lay, 0, 1), 0, 1);
    expect(serializeLayout(twice)).toBe(serializeLayout(lay));
  });

  it("does not mutate its input", () => {
    const lay = twoRegionLayout();
    const snapshot = serializeLayout(lay);
    swapRegions(lay, 0, 1);
    expect(serializeLayout(lay)).toBe(snapshot);
  });

  it("rejects bad indices", () => {
    expect(() => swapRegions(twoRegionLayout(), 0, 5)).toThrow(RangeError);
  });
});

describe("add/remove region", () => {
  it("caps at MAX_REGIONS", () => {
    let lay = emptyLayout();
    for (let i = 0; i < 8; i++) {
      lay = addRegion(lay, {
        box: [0, 0, 100, 100], prompt: `r${i}`, expert_id: "", style_tag: "",
      });
    }
    expect(() => addRegion(lay, {
      box: [0, 0, 100, 100], prompt: "extra", expert_id: "", style_tag: "",
    })).toThrow(RangeError);
  });

  it("removes by index", () => {
    const lay = removeRegion(twoRegionLayout(), 0);
    expect(lay.regions.length).toBe(1);
    expect(lay.regions[0].prompt).toBe("a bookshelf");
  });
});

describe("serialization", () => {
  it("round-trips", () => {
    const lay = twoRegionLayout();
    expect(parseLayout(serializeLayout(lay))).toEqual(lay);
  });

  it("rejects foreign documents", () => {
    expect(() => parseLayout('{"schema": "other"}')).toThrow();
  });
});

describe("overlap shading", () => {
  it("disjoint boxes produce no overlap rects", () => {
    expect(overlapRects(twoRegionLayout())).toEqual([]);
  });

  it("intersection computed for overlapping boxes", () => {
    expect(rectIntersection([0, 0, 600, 1000], [400, 0, 1000, 1000]))
      .toEqual([400, 0, 600, 1000]);
  });
});
