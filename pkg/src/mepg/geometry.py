"""Boxes, layouts, validation/repair, and rasterization onto latent grids.

All coordinates live on an abstract 1000x1000 canvas: x grows left->right,
y grows top->bottom, and the upper bound is inclusive so the full canvas
(0, 0, 1000, 1000) is representable. Interior membership stays half-open
through the cell-center rasterization test.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidBox, RegionIndexError, RepairImpossible, InvalidDocument

CANVAS = 1000
MIN_BOX = 10
MAX_REGIONS = 8

LAYOUT_SCHEMA = "mepg_layout_v1"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in canvas grid units."""

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)


FULL_CANVAS = BoundingBox(0, 0, CANVAS, CANVAS)


@dataclass(frozen=True)
class RegionSpec:
    """A box plus the prompt/expert/style that drive its generation."""

    box: BoundingBox
    prompt: str
    expert_id: str = ""
    style_tag: str = ""


@dataclass
class Layout:
    global_prompt: str
    regions: list[RegionSpec] = field(default_factory=list)

    def copy(self) -> "Layout":
        return Layout(self.global_prompt, list(self.regions))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    region: Optional[int] = None


@dataclass
class ValidationResult:
    ok: bool
    violations: list[Violation]


@dataclass
class RepairPolicy:
    min_box: int = MIN_BOX
    max_regions: int = MAX_REGIONS


@dataclass
class RegionMask:
    """Binary footprint of a box on a grid_h x grid_w latent grid."""

    grid_h: int
    grid_w: int
    cells: np.ndarray  # bool [grid_h, grid_w]

    @property
    def area(self) -> int:
        return int(self.cells.sum())


@dataclass
class CoverageReport:
    grid_h: int
    grid_w: int
    counts: np.ndarray  # int [grid_h, grid_w], regions covering each cell
    covered_fraction: float
    overlaps: list[tuple[int, int, int]]  # (region i, region j, shared cells)

    @property
    def uncovered_cells(self) -> int:
        return int((self.counts == 0).sum())


def validate_box(b: BoundingBox, min_box: int = MIN_BOX) -> ValidationResult:
    """Check box invariants, returning every violation instead of aborting."""
    v: list[Violation] = []
    if b.x1 > b.x2:
        v.append(Violation("inverted_x", f"x1 {b.x1} > x2 {b.x2}"))
    if b.y1 > b.y2:
        v.append(Violation("inverted_y", f"y1 {b.y1} > y2 {b.y2}"))
    if b.x1 == b.x2:
        v.append(Violation("degenerate_x", f"x1 == x2 == {b.x1}"))
    if b.y1 == b.y2:
        v.append(Violation("degenerate_y", f"y1 == y2 == {b.y1}"))
    for name, val in (("x1", b.x1), ("y1", b.y1), ("x2", b.x2), ("y2", b.y2)):
        if not 0 <= val <= CANVAS:
            v.append(Violation("out_of_range", f"{name}={val} outside [0, {CANVAS}]"))
    if b.x1 < b.x2 and b.width < min_box:
        v.append(Violation("below_min_width", f"width {b.width} < {min_box}"))
    if b.y1 < b.y2 and b.height < min_box:
        v.append(Violation("below_min_height", f"height {b.height} < {min_box}"))
    return ValidationResult(not v, v)


def validate_layout(l: Layout, policy: RepairPolicy | None = None) -> ValidationResult:
    policy = policy or RepairPolicy()
    v: list[Violation] = []
    if len(l.regions) > policy.max_regions:
        v.append(Violation("too_many_regions",
                           f"{len(l.regions)} regions > {policy.max_regions}"))
    for i, r in enumerate(l.regions):
        if not r.prompt.strip():
            v.append(Violation("empty_prompt", "region prompt is empty", region=i))
        for bv in validate_box(r.box, policy.min_box).violations:
            v.append(replace(bv, region=i))
    return ValidationResult(not v, v)


def _clamp(val: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, val))


def _repair_axis(a1: int, a2: int, min_box: int) -> tuple[int, int]:
    if a1 > a2:
        a1, a2 = a2, a1
    a1 = _clamp(a1, 0, CANVAS)
    a2 = _clamp(a2, 0, CANVAS)
    deficit = min_box - (a2 - a1)
    if deficit > 0:
        a1 -= deficit // 2
        a2 += deficit - deficit // 2
        if a1 < 0:
            a2 -= a1
            a1 = 0
        if a2 > CANVAS:
            a1 -= a2 - CANVAS
            a2 = CANVAS
            a1 = max(a1, 0)
    return a1, a2


def repair_box(b: BoundingBox, min_box: int = MIN_BOX) -> BoundingBox:
    """Swap inverted coordinates, clamp to canvas, expand to the minimum size."""
    x1, x2 = _repair_axis(b.x1, b.x2, min_box)
    y1, y2 = _repair_axis(b.y1, b.y2, min_box)
    return BoundingBox(x1, y1, x2, y2)


def repair_layout(l: Layout, policy: RepairPolicy | None = None) -> Layout:
    """Return a layout in which every region satisfies the box invariants.

    Boxes are swapped/clamped/expanded, duplicate (box, prompt) regions are
    dropped, regions beyond the cap are truncated; region order is preserved.
    Idempotent by construction. Raises RepairImpossible for an empty prompt:
    there is nothing sensible to synthesize for it.
    """
    policy = policy or RepairPolicy()
    out: list[RegionSpec] = []
    seen: set[tuple[tuple[int, int, int, int], str]] = set()
    for i, r in enumerate(l.regions):
        if not r.prompt.strip():
            raise RepairImpossible(f"region {i} has an empty prompt")
        fixed = replace(r, box=repair_box(r.box, policy.min_box))
        key = (fixed.box.as_tuple(), fixed.prompt)
        if key in seen:
            continue
        seen.add(key)
        out.append(fixed)
    return Layout(l.global_prompt, out[: policy.max_regions])


def cell_centers(grid_h: int, grid_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Canvas-unit coordinates of cell centers: (cy[grid_h], cx[grid_w])."""
    cy = ((np.arange(grid_h, dtype=np.float64) + 0.5) * float(CANVAS)) / grid_h
    cx = ((np.arange(grid_w, dtype=np.float64) + 0.5) * float(CANVAS)) / grid_w
    return cy, cx


def rasterize(b: BoundingBox, grid_h: int, grid_w: int,
              min_box: int = MIN_BOX) -> RegionMask:
    """Set exactly the cells whose centers fall inside the (half-open) box."""
    if grid_h < 1 or grid_w < 1:
        raise InvalidBox(f"grid {grid_h}x{grid_w} must be at least 1x1")
    res = validate_box(b, min_box)
    if not res.ok:
        raise InvalidBox("; ".join(x.message for x in res.violations))
    cy, cx = cell_centers(grid_h, grid_w)
    in_x = (b.x1 <= cx) & (cx < b.x2)
    in_y = (b.y1 <= cy) & (cy < b.y2)
    return RegionMask(grid_h, grid_w, in_y[:, None] & in_x[None, :])


def coverage(l: Layout, grid_h: int, grid_w: int) -> CoverageReport:
    """Per-cell region counts plus pairwise overlap cell counts."""
    masks = [rasterize(r.box, grid_h, grid_w) for r in l.regions]
    counts = np.zeros((grid_h, grid_w), dtype=np.int64)
    for m in masks:
        counts += m.cells
    overlaps = []
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            shared = int((masks[i].cells & masks[j].cells).sum())
            if shared:
                overlaps.append((i, j, shared))
    covered = float((counts > 0).mean()) if counts.size else 0.0
    return CoverageReport(grid_h, grid_w, counts, covered, overlaps)


def swap_regions(l: Layout, i: int, j: int) -> Layout:
    """Exchange the boxes of regions i and j; everything else stays put."""
    n = len(l.regions)
    if not (0 <= i < n and 0 <= j < n):
        raise RegionIndexError(f"region indices ({i}, {j}) out of range for {n} regions")
    regions = list(l.regions)
    regions[i] = replace(regions[i], box=l.regions[j].box)
    regions[j] = replace(regions[j], box=l.regions[i].box)
    return Layout(l.global_prompt, regions)


# --- mepg_layout_v1 serialization ---

def layout_to_dict(l: Layout) -> dict:
    return {
        "schema": LAYOUT_SCHEMA,
        "global_prompt": l.global_prompt,
        "regions": [
            {
                "box": list(r.box.as_tuple()),
                "prompt": r.prompt,
                "expert_id": r.expert_id,
                "style_tag": r.style_tag,
            }
            for r in l.regions
        ],
    }


def _coerce_coord(v, where: str) -> int:
    if isinstance(v, bool):
        raise InvalidDocument(f"{where}: expected integer, got bool")
    if isinstance(v, int):
        return v
    if isinstance(v, float) and v.is_integer():
        return int(v)
    raise InvalidDocument(f"{where}: expected integer coordinate, got {v!r}")


def layout_from_dict(doc: dict) -> Layout:
    """Parse a mepg_layout_v1 document; raises InvalidDocument on bad shape."""
    if not isinstance(doc, dict):
        raise InvalidDocument("layout document must be an object")
    schema = doc.get("schema")
    if schema != LAYOUT_SCHEMA:
        raise InvalidDocument(f"unsupported layout schema {schema!r}")
    prompt = doc.get("global_prompt", "")
    if not isinstance(prompt, str):
        raise InvalidDocument("global_prompt must be a string")
    regions_doc = doc.get("regions", [])
    if not isinstance(regions_doc, list):
        raise InvalidDocument("regions must be a list")
    regions = []
    for i, r in enumerate(regions_doc):
        if not isinstance(r, dict):
            raise InvalidDocument(f"regions[{i}] must be an object")
        box = r.get("box")
        if not (isinstance(box, (list, tuple)) and len(box) == 4):
            raise InvalidDocument(f"regions[{i}].box must be [x1, y1, x2, y2]")
        coords = [_coerce_coord(v, f"regions[{i}].box[{k}]") for k, v in enumerate(box)]
        rprompt = r.get("prompt", "")
        if not isinstance(rprompt, str):
            raise InvalidDocument(f"regions[{i}].prompt must be a string")
        regions.append(RegionSpec(
            box=BoundingBox(*coords),
            prompt=rprompt,
            expert_id=str(r.get("expert_id", "") or ""),
            style_tag=str(r.get("style_tag", "") or ""),
        ))
    return Layout(prompt, regions)
