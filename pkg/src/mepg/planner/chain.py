"""The four-step planning chain and its data-structure transforms.

Step 0 produces an analysis plus a draft layout in one shot; steps 1-3
refine it (elements, boxes, enriched descriptions). If the final transform
cannot build a layout from step 3, the chain falls back to the step-0 draft
and flags it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from ..errors import NoParsableCoordinates, PlanEmpty, TransformError
from ..geometry import (MAX_REGIONS, BoundingBox, Layout, RegionSpec,
                        repair_box, repair_layout, validate_layout)
from .backends import PlannerBackend
from .grammar import STYLE_LEXICON

MAX_ELEMENTS = MAX_REGIONS

_BOX_RE = re.compile(
    r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*,\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")
_LINE_RE = re.compile(r"^\s*(?P<name>[^:|()]+?)\s*:\s*(?P<rest>.+)$")


@dataclass
class DetailRecord:
    element: str
    box: BoundingBox | None
    description: str
    style_tag: str = ""


@dataclass
class PlanTrace:
    """Audit transcript of one chain run."""

    thought: str = ""
    elements: list[str] = field(default_factory=list)
    positions: list[tuple[str, BoundingBox]] = field(default_factory=list)
    details: list[str] = field(default_factory=list)
    backend_used: str = ""
    fallback_engaged: bool = False

    def to_dict(self) -> dict:
        return {
            "thought": self.thought,
            "elements": list(self.elements),
            "positions": [[name, list(box.as_tuple())]
                          for name, box in self.positions],
            "details": list(self.details),
            "backend_used": self.backend_used,
            "fallback_engaged": self.fallback_engaged,
        }


def load_template(name: str) -> str:
    return resources.files("mepg.planner").joinpath(f"prompts/{name}.txt").read_text()


def _dedupe_elements(names: list[str], max_elements: int) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for raw in names:
        name = raw.strip()
        if not name or len(name.split()) > 30:
            continue
        key = name.lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(name)
        if len(out) >= max_elements:
            break
    return out


def parse_detail_lines(text: str,
                       known_boxes: dict[str, BoundingBox] | None = None
                       ) -> list[DetailRecord]:
    """Lenient line parser for the `name: (x1,y1),(x2,y2) | desc | style` wire.

    Lines without a name prefix are dropped; a missing box falls back to the
    step-2 box for that element when one is known, else stays None (which the
    transform treats as an error).
    """
    known = {k.lower(): v for k, v in (known_boxes or {}).items()}
    records: list[DetailRecord] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if not m:
            continue
        name = m.group("name").strip()
        rest = m.group("rest")
        box = None
        bm = _BOX_RE.search(rest)
        if bm:
            box = repair_box(BoundingBox(*(int(g) for g in bm.groups())))
            rest = rest[:bm.start()] + rest[bm.end():]
        elif name.lower() in known:
            box = known[name.lower()]
        pieces = [p.strip() for p in rest.split("|")]
        description = ""
        style = ""
        if len(pieces) >= 2:
            description = pieces[1]
            if len(pieces) >= 3:
                style = pieces[2].lower()
        elif pieces and pieces[0]:
            description = pieces[0]
        if not style:
            for word in re.findall(r"[a-z]+", description.lower()):
                if word in STYLE_LEXICON:
                    style = STYLE_LEXICON[word]
                    break
        records.append(DetailRecord(name, box, description, style))
    return records


def _parse_step0(text: str) -> tuple[str, list[DetailRecord]]:
    thought = text.strip()
    body = ""
    m = re.search(r"THOUGHT:\s*(.*?)(?:^|\n)\s*ELEMENTS:\s*\n?(.*)", text,
                  re.DOTALL)
    if m:
        thought = m.group(1).strip()
        body = m.group(2)
    return thought, parse_detail_lines(body)


# --- chain steps ---

def step0_initial_analysis(prompt: str, backend: PlannerBackend
                           ) -> tuple[str, list[DetailRecord]]:
    instruction = load_template("step0_analysis").format(image_prompt=prompt)
    return _parse_step0(backend.complete(instruction, prompt))


def step1_find_main_elements(prompt: str, thought: str, backend: PlannerBackend,
                             max_elements: int = MAX_ELEMENTS) -> list[str]:
    """Comma-separated element names: trimmed, case-insensitively deduped,
    capped at max_elements."""
    instruction = load_template("step1_elements").format(
        raw_image=prompt, max_elements=max_elements)
    reply = backend.complete(instruction, prompt)
    raw = [piece for chunk in reply.splitlines() for piece in chunk.split(",")]
    return _dedupe_elements(raw, max_elements)


def step1_position_main_elements(prompt: str, elements: list[str],
                                 backend: PlannerBackend) -> str:
    """Raw placement hints; passed through to step 2 without structure."""
    instruction = load_template("step1_positions").format(
        image_prompt=prompt, elements=", ".join(elements))
    return backend.complete(instruction, prompt)


def step2_arrange_elements(elements: list[str], thought: str,
                           positions_hint: str, backend: PlannerBackend,
                           lora_hint: str = "", context: str = ""
                           ) -> list[tuple[str, BoundingBox]]:
    """One repaired box per element, parsed from `name: (x1,y1),(x2,y2)` lines.

    Unparseable lines and unknown element names are dropped; raises
    NoParsableCoordinates if nothing survives.
    """
    if not elements:
        raise NoParsableCoordinates("no elements to arrange")
    instruction = load_template("step2_arrange").format(
        thought=thought, elements=", ".join(elements),
        lora_hint=lora_hint or "(none)", positions_hint=positions_hint or "(none)")
    reply = backend.complete(instruction, context)
    wanted = {e.lower(): e for e in elements}
    out: list[tuple[str, BoundingBox]] = []
    taken: set[str] = set()
    for line in reply.splitlines():
        m = _LINE_RE.match(line)
        if not m:
            continue
        bm = _BOX_RE.search(m.group("rest"))
        if not bm:
            continue
        key = m.group("name").strip().lower()
        if key not in wanted or key in taken:
            continue
        taken.add(key)
        box = repair_box(BoundingBox(*(int(g) for g in bm.groups())))
        out.append((wanted[key], box))
    if not out:
        raise NoParsableCoordinates("no element line parsed into a box")
    return out


def step3_add_details(prompt: str, coordinates: list[tuple[str, BoundingBox]],
                      backend: PlannerBackend) -> list[DetailRecord]:
    coord_lines = "\n".join(
        f"{name}: ({b.x1},{b.y1}),({b.x2},{b.y2})" for name, b in coordinates)
    instruction = load_template("step3_details").format(
        image_prompt=prompt, coordinates=coord_lines)
    reply = backend.complete(instruction, prompt)
    return parse_detail_lines(reply, known_boxes=dict(coordinates))


def transform_data_structure(details: list[DetailRecord], h: int, w: int
                             ) -> Layout:
    """Build the generation layout from detail records.

    Boxes stay in canvas units; (h, w) is the caller's target latent grid for
    later rasterization. Raises TransformError on a record missing its box
    or any usable prompt text.
    """
    if h < 1 or w < 1:
        raise TransformError(f"target grid {h}x{w} must be at least 1x1")
    regions = []
    for rec in details:
        if rec.box is None:
            raise TransformError(f"element {rec.element!r} has no coordinates")
        prompt = rec.description.strip() or rec.element.strip()
        if not prompt:
            raise TransformError("element with neither name nor description")
        regions.append(RegionSpec(box=rec.box, prompt=prompt,
                                  expert_id="", style_tag=rec.style_tag))
    return Layout(global_prompt="", regions=regions)


def transform_lora(lora_data: list[DetailRecord], h: int, w: int) -> Layout:
    """Fallback transform over the step-0 draft records."""
    return transform_data_structure(lora_data, h, w)


def run_enhanced_chain(prompt: str, backend: PlannerBackend,
                       h: int = 32, w: int = 32,
                       max_elements: int = MAX_ELEMENTS
                       ) -> tuple[Layout, PlanTrace]:
    """Execute the full chain; returns a repaired, validated layout + trace."""
    if not prompt.strip():
        raise PlanEmpty("prompt is empty")
    thought, lora_data = step0_initial_analysis(prompt, backend)

    fallback = False
    elements: list[str] = []
    coordinates: list[tuple[str, BoundingBox]] = []
    details: list[DetailRecord] = []
    try:
        elements = step1_find_main_elements(prompt, thought, backend, max_elements)
        if not elements:
            raise TransformError("step 1 produced no elements")
        hint = step1_position_main_elements(prompt, elements, backend)
        lora_hint = "\n".join(
            f"{r.element}: ({r.box.x1},{r.box.y1}),({r.box.x2},{r.box.y2})"
            for r in lora_data if r.box is not None)
        coordinates = step2_arrange_elements(elements, thought, hint, backend,
                                             lora_hint=lora_hint, context=prompt)
        details = step3_add_details(prompt, coordinates, backend)
        layout = transform_data_structure(details, h, w)
    except (TransformError, NoParsableCoordinates):
        try:
            layout = transform_lora(lora_data, h, w)
        except TransformError as exc:
            raise PlanEmpty(f"fallback failed: {exc}") from exc
        if not layout.regions:
            raise PlanEmpty("no elements extractable even by fallback")
        fallback = True
        details = list(lora_data)
        elements = _dedupe_elements([r.element for r in lora_data], max_elements)
        coordinates = [(r.element, r.box) for r in lora_data if r.box is not None]

    layout.global_prompt = prompt
    layout = repair_layout(layout)
    check = validate_layout(layout)
    if not check.ok:
        raise TransformError("planned layout failed validation: "
                             + "; ".join(v.message for v in check.violations))
    trace = PlanTrace(
        thought=thought,
        elements=_dedupe_elements(elements, max_elements),
        positions=coordinates,
        details=[(r.description or r.element) for r in details],
        backend_used=backend.identifier,
        fallback_engaged=fallback,
    )
    return layout, trace
