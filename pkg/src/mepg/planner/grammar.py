"""Deterministic rule grammar: free text -> canonical boxed layout.

Grammar: clause ("," | "and" clause)*, where a clause is
article? adjectives* noun position-phrase?. Position phrases map to fixed
canonical boxes; clauses with no position tile the canvas into equal
vertical strips in clause order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import GrammarError
from ..geometry import CANVAS, BoundingBox

POSITION_BOXES: dict[str, tuple[int, int, int, int]] = {
    "left": (0, 250, 400, 750),
    "right": (600, 250, 1000, 750),
    "top": (250, 0, 750, 400),
    "bottom": (250, 600, 750, 1000),
    "center": (300, 300, 700, 700),
    "top-left": (0, 0, 450, 450),
    "top-right": (550, 0, 1000, 450),
    "bottom-left": (0, 550, 450, 1000),
    "bottom-right": (550, 550, 1000, 1000),
}

# preposition that introduces each keyword
_PHRASE_PREP = {
    "left": "on", "right": "on",
    "top": "at", "bottom": "at",
    "center": "in",
    "top-left": "in", "top-right": "in",
    "bottom-left": "in", "bottom-right": "in",
}

STYLE_LEXICON: dict[str, str] = {
    "photo": "realism",
    "realistic": "realism",
    "photorealistic": "realism",
    "anime": "anime",
    "cartoon": "anime",
    "manga": "anime",
}

ARTICLES = {"a", "an", "the"}
_PREPOSITIONS = {"on", "at", "in"}

_TOKEN_RE = re.compile(r"[A-Za-z]+(?:-[A-Za-z]+)*|,|\S")


@dataclass
class Token:
    text: str
    offset: int  # byte offset into the utf-8 encoded prompt


@dataclass
class Clause:
    words: list[Token]       # article/adjectives/noun tokens, in order
    position: str | None     # canonical position keyword, if any
    start: int               # byte offset of the clause's first token
    text: str                # raw clause text


@dataclass
class ParsedClause:
    noun: str
    adjectives: list[str]
    position: str | None
    style_tag: str
    text: str


def _byte_offset(prompt: str, char_index: int) -> int:
    return len(prompt[:char_index].encode("utf-8"))


def _lex(prompt: str) -> list[Token]:
    return [Token(m.group(0), _byte_offset(prompt, m.start()))
            for m in _TOKEN_RE.finditer(prompt)]


def _split_clauses(prompt: str, tokens: list[Token]) -> list[list[Token]]:
    groups: list[list[Token]] = []
    current: list[Token] = []
    for tok in tokens:
        if tok.text == "," or tok.text.lower() == "and":
            if current:
                groups.append(current)
                current = []
        else:
            current.append(tok)
    if current:
        groups.append(current)
    return groups


def _parse_clause(prompt: str, toks: list[Token]) -> ParsedClause:
    start = toks[0].offset
    end_tok = toks[-1]
    raw = prompt.encode("utf-8")[start:end_tok.offset + len(end_tok.text.encode("utf-8"))]
    text = raw.decode("utf-8")

    for tok in toks:
        if not re.fullmatch(r"[A-Za-z]+(?:-[A-Za-z]+)*", tok.text):
            raise GrammarError(f"unparseable token {tok.text!r}", tok.offset)

    words = [t for t in toks]
    position = None
    # position phrase must close the clause: <prep> the <keyword>
    for i, tok in enumerate(words):
        low = tok.text.lower()
        if low in _PREPOSITIONS:
            rest = [t.text.lower() for t in words[i:]]
            if (len(rest) == 3 and rest[1] == "the"
                    and rest[2] in POSITION_BOXES
                    and _PHRASE_PREP[rest[2]] == low):
                position = rest[2]
                words = words[:i]
                break
            raise GrammarError(f"unrecognized position phrase near {tok.text!r}",
                               tok.offset)

    content = [t for t in words if t.text.lower() not in ARTICLES]
    if not content:
        raise GrammarError("clause has no noun", start)
    noun = content[-1].text.lower()
    adjectives = [t.text.lower() for t in content[:-1]]
    style = ""
    for word in adjectives + [noun]:
        if word in STYLE_LEXICON:
            style = STYLE_LEXICON[word]
            break
    return ParsedClause(noun, adjectives, position, style, text)


def parse_clauses(prompt: str) -> list[ParsedClause]:
    """Parse the full grammar; raises GrammarError with a byte offset."""
    if not prompt.strip():
        raise GrammarError("empty prompt", 0)
    tokens = _lex(prompt)
    groups = _split_clauses(prompt, tokens)
    if not groups:
        raise GrammarError("no clauses found", 0)
    return [_parse_clause(prompt, g) for g in groups]


def clause_boxes(clauses: list[ParsedClause]) -> list[BoundingBox]:
    """Canonical box per clause; keyword-less clauses share vertical strips."""
    free = [i for i, c in enumerate(clauses) if c.position is None]
    n_free = len(free)
    edges = [i * CANVAS // n_free for i in range(n_free + 1)] if n_free else []
    boxes: list[BoundingBox] = []
    strip = 0
    for c in clauses:
        if c.position is not None:
            boxes.append(BoundingBox(*POSITION_BOXES[c.position]))
        else:
            boxes.append(BoundingBox(edges[strip], 0, edges[strip + 1], CANVAS))
            strip += 1
    return boxes
