"""Prompt-to-layout planning: the chain, the rule grammar, and backends."""

from ..errors import GrammarError
from ..geometry import MAX_REGIONS, Layout, RegionSpec, repair_layout
from .backends import (HttpLlmBackend, PlannerBackend, RuleBackend,
                       ScriptedBackend)
from .chain import (DetailRecord, PlanTrace, run_enhanced_chain,
                    step1_find_main_elements, step2_arrange_elements,
                    step3_add_details, transform_data_structure)
from .grammar import POSITION_BOXES, STYLE_LEXICON, clause_boxes, parse_clauses

__all__ = [
    "PlannerBackend", "RuleBackend", "ScriptedBackend", "HttpLlmBackend",
    "PlanTrace", "DetailRecord", "run_enhanced_chain",
    "step1_find_main_elements", "step2_arrange_elements", "step3_add_details",
    "transform_data_structure", "parse_spatial_prompt",
    "POSITION_BOXES", "STYLE_LEXICON",
]


def parse_spatial_prompt(prompt: str) -> tuple[Layout, PlanTrace]:
    """The rule backend as a pure function: grammar parse -> canonical layout.

    Raises GrammarError (with the byte offset of the first unparseable
    token) when the prompt does not fit the clause grammar.
    """
    from .grammar import parse_clauses as _parse, clause_boxes as _boxes

    clauses = _parse(prompt)
    boxes = _boxes(clauses)
    regions = [
        RegionSpec(box=b, prompt=c.text, expert_id="", style_tag=c.style_tag)
        for c, b in zip(clauses, boxes)
    ]
    layout = repair_layout(Layout(global_prompt=prompt, regions=regions))
    seen: set[str] = set()
    elements = []
    for c in clauses:
        if c.noun not in seen:
            seen.add(c.noun)
            elements.append(c.noun)
    trace = PlanTrace(
        thought=f"{len(clauses)} element(s): " + ", ".join(elements) + ".",
        elements=elements[:MAX_REGIONS],
        positions=[(c.noun, b) for c, b in zip(clauses, boxes)],
        details=[c.text for c in clauses],
        backend_used="rule",
        fallback_engaged=False,
    )
    return layout, trace
