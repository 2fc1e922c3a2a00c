"""Minority-class text augmentation: synonym replacement and random swapping.

Each synthetic report is built by repeatedly editing one randomly chosen
sentence of a randomly chosen minority-class source report until the target
edit count is reached. The per-edit probability acts as an acceptance gate
on every attempt; the count formula decides when to stop.
"""

from __future__ import annotations

import math
import random
import string
from dataclasses import dataclass
from importlib import resources

from .corpus import LabelScheme, Report
from .errors import AugmentationError, ValidationError
from .seeding import derive_seed
from .tokenizer import split_sentences

MODE_SYNONYM = "synonym_replacement"
MODE_SWAP = "random_swapping"
MODES = (MODE_SYNONYM, MODE_SWAP)

_PUNCT = set(string.punctuation)
# attempts per requested edit before giving up on a degenerate text
_MAX_ATTEMPT_FACTOR = 20


@dataclass(frozen=True)
class AugmentConfig:
    mode: str
    p_replace: float = 0.8
    p_swap: float = 0.2
    aug_min: int = 30
    aug_max: int | None = None
    n: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown augmentation mode: {self.mode!r}")
        for name, p in (("p_replace", self.p_replace), ("p_swap", self.p_swap)):
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {p}")
        if self.aug_min < 1:
            raise ValidationError("aug_min must be >= 1")
        if self.aug_max is not None and self.aug_max < self.aug_min:
            raise ValidationError("aug_max must be >= aug_min")
        if self.n < 0:
            raise ValidationError("n must be >= 0")

    @property
    def mode_probability(self) -> float:
        return self.p_replace if self.mode == MODE_SYNONYM else self.p_swap


class SynonymLexicon:
    """Case-insensitive word -> synonyms mapping."""

    def __init__(self, entries: dict[str, list[str]]):
        self.entries: dict[str, list[str]] = {}
        for word, synonyms in entries.items():
            key = word.lower()
            kept = [s for s in synonyms if s and s.lower() != key]
            if not kept:
                raise ValidationError(f"lexicon entry {word!r} maps only to itself")
            self.entries[key] = kept

    def lookup(self, word: str) -> list[str]:
        return self.entries.get(word.lower(), [])

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_tsv(cls, path) -> "SynonymLexicon":
        """Load ``word<TAB>syn1|syn2|...`` records; blank and # lines skipped."""
        entries: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValidationError(
                        f"lexicon line {line_number}: expected 'word<TAB>synonyms'"
                    )
                word, synonyms = parts
                entries[word.strip()] = [s.strip() for s in synonyms.split("|") if s.strip()]
        return cls(entries)


def default_lexicon() -> SynonymLexicon:
    """The small clinical paraphrase lexicon shipped with the package."""
    path = resources.files("vtenlp.data").joinpath("synonyms.tsv")
    with resources.as_file(path) as real_path:
        return SynonymLexicon.from_tsv(real_path)


def target_edit_count(token_count: int, config: AugmentConfig) -> int:
    """Number of edits for a text of the given length.

    ceil(p * token_count), clamped to [aug_min, aug_max]; without aug_max the
    count is at least aug_min but otherwise uncapped.
    """
    if token_count < 1:
        raise ValidationError("token_count must be >= 1")
    raw = math.ceil(config.mode_probability * token_count)
    if config.aug_max is not None:
        return max(config.aug_min, min(raw, config.aug_max))
    return max(config.aug_min, raw)


def _split_affixes(token: str) -> tuple[str, str, str]:
    i, j = 0, len(token)
    while i < j and token[i] in _PUNCT:
        i += 1
    while j > i and token[j - 1] in _PUNCT:
        j -= 1
    return token[:i], token[i:j], token[j:]


def _match_case(original: str, replacement: str) -> str:
    if original.isupper() and len(original) > 1:
        return replacement.upper()
    if original[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def synonym_replace_sentence(
    tokens: list[str], lexicon: SynonymLexicon, rng: random.Random
) -> list[str]:
    """Replace one randomly chosen token with a random synonym.

    Leading/trailing punctuation on the chosen token is preserved. If the
    chosen token has no lexicon entry the sentence comes back unchanged and
    the caller retries; token count never changes.
    """
    if not tokens:
        raise ValidationError("sentence must be non-empty")
    idx = rng.randrange(len(tokens))
    prefix, core, suffix = _split_affixes(tokens[idx])
    options = lexicon.lookup(core) if core else []
    if not options:
        return list(tokens)
    replacement = rng.choice(options)
    out = list(tokens)
    out[idx] = prefix + _match_case(core, replacement) + suffix
    return out


def random_swap_sentence(tokens: list[str], rng: random.Random) -> list[str] | None:
    """Exchange two random positions; None signals a too-short sentence."""
    if len(tokens) < 2:
        return None
    i, j = rng.sample(range(len(tokens)), 2)
    out = list(tokens)
    out[i], out[j] = out[j], out[i]
    return out


def _augment_one(
    source: Report, serial: int, config: AugmentConfig,
    lexicon: SynonymLexicon, rng: random.Random,
) -> Report:
    sentences = [s.split() for s in split_sentences(source.text)]
    total_tokens = sum(len(s) for s in sentences)
    target = target_edit_count(max(total_tokens, 1), config)
    gate = config.mode_probability

    edits = 0
    attempts = 0
    limit = _MAX_ATTEMPT_FACTOR * target
    while edits < target and attempts < limit:
        attempts += 1
        sentence = sentences[rng.randrange(len(sentences))]
        if config.mode == MODE_SYNONYM:
            if not sentence or rng.random() >= gate:
                continue
            edited = synonym_replace_sentence(sentence, lexicon, rng)
            if edited != sentence:
                sentence[:] = edited
                edits += 1
        else:
            if len(sentence) < 2 or rng.random() >= gate:
                continue
            edited = random_swap_sentence(sentence, rng)
            if edited is not None:
                sentence[:] = edited
                edits += 1

    text = " ".join(" ".join(s) for s in sentences)
    return Report(
        id=f"{source.id}::aug{serial}",
        text=text,
        label=source.label,
        split=source.split,
    )


def augment_corpus(
    reports: list[Report],
    scheme: LabelScheme,
    config: AugmentConfig,
    lexicon: SynonymLexicon,
) -> list[Report]:
    """Produce ``config.n`` synthetic minority-class reports.

    Returns only the additions; every output carries the minority label and
    records its source id. Deterministic in config.seed, with per-sample
    sub-seeds so samples are independent.
    """
    pool = [r for r in reports if r.label == scheme.minority_class]
    if config.n > 0 and not pool:
        raise AugmentationError(
            f"minority class {scheme.minority_class} is empty; nothing to augment"
        )
    out: list[Report] = []
    for serial in range(config.n):
        rng = random.Random(derive_seed(config.seed, "aug", serial))
        source = rng.choice(pool)
        out.append(_augment_one(source, serial, config, lexicon, rng))
    return out
