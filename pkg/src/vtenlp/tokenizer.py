"""Sentence segmentation and word-level tokenization with fixed-length padding.

Sequences always start with a reserved classification token, which consumes
one slot of the length budget. Overlong content is truncated from the
configured side: right truncation keeps the first tokens, left truncation
keeps the last ones (useful when conclusions sit at the end of a report).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ValidationError

PAD_TOKEN = "[PAD]"
CLS_TOKEN = "[CLS]"

# dotted abbreviations that do not end a sentence, stored without dots
_ABBREVIATIONS = {
    "dr", "mr", "mrs", "ms", "prof", "st", "vs", "eg", "ie", "etc",
    "approx", "fig", "cf", "al", "resp", "pt",
}

# words (decimals like "1.2" stay whole) or single punctuation marks
_WORD_RE = re.compile(r"[A-Za-z0-9]+(?:\.[0-9]+)?|[^\sA-Za-z0-9]")


@dataclass(frozen=True)
class TokenizerConfig:
    max_len: int
    truncate_side: str = "right"
    lowercase: bool = True
    pad_token: str = PAD_TOKEN
    cls_token: str = CLS_TOKEN

    def __post_init__(self):
        if self.max_len < 2:
            raise ValidationError("max_len must be >= 2 (classification token plus content)")
        if self.truncate_side not in ("left", "right"):
            raise ValidationError(f"unknown truncate_side: {self.truncate_side!r}")


DVT_PRESET = TokenizerConfig(max_len=170, truncate_side="right")
PE_PRESET = TokenizerConfig(max_len=512, truncate_side="left")

_PRESETS = {"dvt": DVT_PRESET, "pe": PE_PRESET}


def get_preset(name: str) -> TokenizerConfig:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown tokenizer preset: {name!r}") from None


@dataclass
class TokenSeq:
    """Fixed-length token sequence: [CLS] + content + trailing pads."""

    tokens: list[str]
    cls_present: bool
    original_length: int
    pad_length: int
    source_id: str | None = None

    @property
    def n_valid(self) -> int:
        """Rows that carry signal (classification token + content)."""
        return len(self.tokens) - self.pad_length


def _ends_abbreviation(text: str, start: int, dot: int) -> bool:
    j = dot - 1
    while j >= start and not text[j].isspace():
        j -= 1
    word = text[j + 1 : dot].replace(".", "").lower()
    return word in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split free text into sentences at '.', '!', '?' and newlines.

    Decimal numbers ("1.2 cm") and common dotted abbreviations do not end a
    sentence. Joining the results with single spaces reproduces the input up
    to whitespace.
    """
    sentences: list[str] = []
    start = 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch == "\n":
            piece = text[start:i].strip()
            if piece:
                sentences.append(piece)
            start = i + 1
        elif ch in ".!?":
            nxt = text[i + 1] if i + 1 < n else ""
            if nxt != "" and not nxt.isspace():
                continue  # mid-token mark, e.g. a decimal point
            if ch == "." and _ends_abbreviation(text, start, i):
                continue
            piece = text[start : i + 1].strip()
            if piece:
                sentences.append(piece)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def word_tokens(text: str, lowercase: bool = True) -> list[str]:
    """Word-level tokens split on whitespace and punctuation boundaries."""
    tokens = _WORD_RE.findall(text)
    if lowercase:
        tokens = [t.lower() for t in tokens]
    return tokens


def tokenize(text: str, config: TokenizerConfig) -> TokenSeq:
    """Tokenize, prepend the classification token, truncate and pad.

    Output length is always ``config.max_len``. Content budget is
    ``max_len - 1``; left truncation keeps the last tokens, right truncation
    the first. Pads go only at the tail.
    """
    content = word_tokens(text, config.lowercase)
    original = len(content)
    budget = config.max_len - 1
    if original > budget:
        content = content[-budget:] if config.truncate_side == "left" else content[:budget]
    pad_length = budget - len(content)
    tokens = [config.cls_token] + content + [config.pad_token] * pad_length
    return TokenSeq(
        tokens=tokens,
        cls_present=True,
        original_length=original,
        pad_length=pad_length,
    )
