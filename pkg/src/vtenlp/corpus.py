"""Report records, label schemes, deterministic splitting, synthetic corpora.

The corpus file format is JSON Lines: one record per line with fields
``id``, ``text`` and optionally ``label`` and ``split``; JSON escaping keeps
reports with internal newlines on a single line.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace

from .errors import CorpusParseError, StratificationError, ValidationError
from .seeding import derive_seed
from .tokenizer import word_tokens

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class LabelScheme:
    name: str
    classes: tuple[tuple[int, str], ...]
    minority_class: int

    def __post_init__(self):
        ids = [cid for cid, _ in self.classes]
        if ids != list(range(len(ids))):
            raise ValidationError("class ids must be contiguous 0..k-1")
        if self.minority_class not in ids:
            raise ValidationError(f"minority_class {self.minority_class} not in scheme")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def class_name(self, class_id: int) -> str:
        return dict(self.classes)[class_id]

    def validate_label(self, label: int) -> None:
        if not 0 <= label < self.num_classes:
            raise ValidationError(
                f"label {label} out of range for scheme '{self.name}' "
                f"({self.num_classes} classes)"
            )


PE_SCHEME = LabelScheme("pe", ((0, "No PE"), (1, "PE")), minority_class=1)
DVT_SCHEME = LabelScheme(
    "dvt",
    ((0, "No acute DVT"), (1, "Upper extremity acute DVT"), (2, "Lower extremity acute DVT")),
    minority_class=1,
)

_SCHEMES = {"pe": PE_SCHEME, "dvt": DVT_SCHEME}


def get_scheme(name: str) -> LabelScheme:
    try:
        return _SCHEMES[name]
    except KeyError:
        raise ValidationError(f"unknown label scheme: {name!r}") from None


@dataclass
class Report:
    id: str
    text: str
    label: int | None = None
    split: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError(f"report {self.id!r} has empty text")
        if self.split is not None and self.split not in SPLIT_NAMES:
            raise ValidationError(f"report {self.id!r} has unknown split {self.split!r}")


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float
    validation_fraction_of_train: float
    seed: int
    stratified: bool = True

    def __post_init__(self):
        for name, value in (
            ("test_fraction", self.test_fraction),
            ("validation_fraction_of_train", self.validation_fraction_of_train),
        ):
            if not 0.0 < value < 1.0:
                raise ValidationError(f"{name} must be in (0, 1), got {value}")


@dataclass(frozen=True)
class SynthSpec:
    n_reports: int
    class_proportions: tuple[float, ...]
    mean_length_tokens: int = 80
    negation_rate: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.class_proportions) - 1.0) > 1e-9:
            raise ValidationError("class_proportions must sum to 1")
        if any(p < 0 for p in self.class_proportions):
            raise ValidationError("class_proportions must be non-negative")
        if self.n_reports < len(self.class_proportions):
            raise ValidationError("n_reports must allow at least one report per class")
        if not 0.0 <= self.negation_rate <= 1.0:
            raise ValidationError("negation_rate must be in [0, 1]")
        if self.mean_length_tokens < 1:
            raise ValidationError("mean_length_tokens must be >= 1")


def load_corpus(path, scheme: LabelScheme) -> list[Report]:
    """Parse a JSON-Lines corpus file, validating labels and id uniqueness."""
    reports: list[Report] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_number, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise CorpusParseError(line_number, "record must carry 'id' and 'text'")
            rid = str(record["id"])
            if rid in seen:
                raise ValidationError(f"duplicate report id {rid!r}")
            seen.add(rid)
            label = record.get("label")
            if label is not None:
                if not isinstance(label, int):
                    raise CorpusParseError(line_number, f"label must be an integer, got {label!r}")
                try:
                    scheme.validate_label(label)
                except ValidationError as exc:
                    raise ValidationError(f"report {rid!r}: {exc}") from None
            try:
                reports.append(
                    Report(id=rid, text=str(record["text"]), label=label, split=record.get("split"))
                )
            except ValidationError as exc:
                raise CorpusParseError(line_number, str(exc)) from None
    return reports


def save_corpus(reports: list[Report], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for report in reports:
            record = {"id": report.id, "text": report.text}
            if report.label is not None:
                record["label"] = report.label
            if report.split is not None:
                record["split"] = report.split
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def _largest_remainder(quotas: list[float], total: int) -> list[int]:
    """Integer allocation: floors plus remainders, largest first. Sums to total."""
    floors = [math.floor(q) for q in quotas]
    remaining = total - sum(floors)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:remaining]:
        floors[i] += 1
    return floors


def split_corpus(reports: list[Report], spec: SplitSpec) -> list[Report]:
    """Assign train/validation/test splits, deterministic in (ids, labels, seed).

    Test size is rounded half-up first; validation is carved from the
    remaining train pool. Stratified mode keeps per-class proportions within
    one sample of the corpus proportions in every split.
    """
    if any(r.label is None for r in reports):
        raise ValidationError("all reports must be labeled before splitting")
    ids = [r.id for r in reports]
    if len(set(ids)) != len(ids):
        raise ValidationError("report ids must be unique")

    n = len(reports)
    n_test = _round_half_up(spec.test_fraction * n)
    pool = n - n_test
    n_val = _round_half_up(spec.validation_fraction_of_train * pool)

    ordered = sorted(reports, key=lambda r: r.id)
    rng = random.Random(derive_seed(spec.seed, "split"))
    assignment: dict[str, str] = {}

    if spec.stratified:
        by_class: dict[int, list[Report]] = {}
        for report in ordered:
            by_class.setdefault(report.label, []).append(report)
        for class_id, members in sorted(by_class.items()):
            if len(members) < 3:
                raise StratificationError(
                    f"class {class_id} has {len(members)} member(s); need >= 3 to stratify"
                )
        class_ids = sorted(by_class)
        test_counts = _largest_remainder(
            [n_test * len(by_class[c]) / n for c in class_ids], n_test
        )
        pools = [len(by_class[c]) - t for c, t in zip(class_ids, test_counts)]
        val_counts = _largest_remainder(
            [n_val * p / pool for p in pools], n_val
        ) if pool else [0] * len(class_ids)
        for class_id, t_count, v_count in zip(class_ids, test_counts, val_counts):
            members = list(by_class[class_id])
            rng.shuffle(members)
            for i, member in enumerate(members):
                if i < t_count:
                    assignment[member.id] = "test"
                elif i < t_count + v_count:
                    assignment[member.id] = "validation"
                else:
                    assignment[member.id] = "train"
    else:
        members = list(ordered)
        rng.shuffle(members)
        for i, member in enumerate(members):
            if i < n_test:
                assignment[member.id] = "test"
            elif i < n_test + n_val:
                assignment[member.id] = "validation"
            else:
                assignment[member.id] = "train"

    return [replace(r, split=assignment[r.id]) for r in reports]


# --- synthetic corpus templates ---------------------------------------------
# Positive templates always contain an unnegated finding phrase; negative
# templates only ever mention findings alongside an in-sentence negation, so
# the demonstration ruleset classifies every synthetic report correctly.

_NEUTRAL_SENTENCES = (
    "Heart size is within normal limits.",
    "The thoracic aorta is normal in caliber.",
    "Lungs are clear bilaterally.",
    "There is mild dependent atelectasis.",
    "Visualized osseous structures are unremarkable.",
    "Mild degenerative changes are noted in the spine.",
    "The central airways appear normal.",
    "A few scattered calcified granulomas are present.",
    "The hilar contours are symmetric.",
    "Small hiatal hernia is incidentally noted.",
    "The adrenal glands are normal in appearance.",
    "Prior granulomatous disease is suggested.",
    "The imaged upper abdomen is grossly normal.",
    "Mediastinal lymph nodes do not meet size criteria.",
    "Surgical clips are seen in the right upper quadrant.",
    "There is minimal bibasilar scarring.",
    "The esophagus is normal in course and caliber.",
    "Cardiac chambers are normal in size.",
)

_PE_OPENING = (
    "Contrast enhanced CT of the chest was performed.",
    "CT pulmonary angiography was obtained with adequate opacification.",
    "Axial images of the chest were acquired after contrast administration.",
)

_PE_FINDING = (
    "There is a small filling defect within the subsegmental branch of the "
    "left lower lobe pulmonary artery.",
    "A large filling defect is demonstrated in the right segmental pulmonary artery.",
    "Filling defect is identified within segmental branches of both lower lobes.",
    "There is an occlusive thrombus extending into the segmental arteries of "
    "the right upper lobe.",
)

_PE_CONCLUSION = (
    "Findings are consistent with acute pulmonary embolism.",
    "Findings represent acute pulmonary embolism as described above.",
)

_PE_NEGATED = (
    "No filling defect is identified within the pulmonary arteries.",
    "There is no evidence of central or segmental embolus.",
    "No occlusive thrombus is seen within the main pulmonary arteries.",
    "Examination is without evidence of filling defect.",
)

_PE_NEGATIVE_CLOSING = (
    "The pulmonary arteries are patent.",
    "No acute pulmonary embolism.",
)

_US_OPENING = (
    "Duplex ultrasound evaluation of the deep veins was performed.",
    "Gray scale and color Doppler images of the deep venous system were obtained.",
)

_UPPER_VEINS = ("internal jugular", "subclavian", "axillary", "brachial", "basilic")
_LOWER_VEINS = (
    "common femoral", "proximal femoral", "popliteal", "peroneal",
    "posterior tibial", "gastrocnemius", "soleal",
)

_US_NEGATIVE = (
    "The visualized deep veins demonstrate normal compressibility and flow.",
    "Normal phasic flow and augmentation are demonstrated throughout.",
    "There is no evidence of deep venous thrombosis.",
    "No occlusive thrombus is identified in the visualized veins.",
)

_SIDES = ("right", "left")


def _finding_sentence_dvt(rng: random.Random, veins: tuple[str, ...]) -> str:
    side = rng.choice(_SIDES)
    vein = rng.choice(veins)
    return f"There is persistent occlusive thrombus visualized at the {side} {vein} vein."


def _token_count(sentences: list[str]) -> int:
    return sum(len(word_tokens(s)) for s in sentences)


def _fill_to_target(rng: random.Random, sentences: list[str], target: int, tail: bool) -> None:
    """Insert neutral filler until the report reaches roughly target tokens."""
    while _token_count(sentences) < target:
        filler = rng.choice(_NEUTRAL_SENTENCES)
        if tail:
            sentences.append(filler)
        else:
            sentences.insert(len(sentences) - 2, filler)


def _draw_target_length(rng: random.Random, spec: SynthSpec) -> int:
    spread = max(1, int(0.2 * spec.mean_length_tokens))
    return max(spec.mean_length_tokens // 2, int(rng.gauss(spec.mean_length_tokens, spread)))


def _pe_text(rng: random.Random, label: int, spec: SynthSpec) -> str:
    target = _draw_target_length(rng, spec)
    if label == 1:
        sentences = [rng.choice(_PE_OPENING), rng.choice(_PE_FINDING), rng.choice(_PE_CONCLUSION)]
        # a share of positives state the finding up front and trail off into
        # boilerplate, so the decisive phrase can fall outside a tight token
        # budget even though the full text stays unambiguous
        _fill_to_target(rng, sentences, target, tail=rng.random() < 0.3)
        return " ".join(sentences)
    sentences = [rng.choice(_PE_OPENING)]
    if rng.random() < spec.negation_rate:
        sentences.extend(rng.sample(_PE_NEGATED, k=2))
        sentences.extend(_PE_NEGATIVE_CLOSING)
        _fill_to_target(rng, sentences, target, tail=False)
    else:
        _fill_to_target(rng, sentences, target, tail=True)
    return " ".join(sentences)


def _dvt_text(rng: random.Random, label: int, spec: SynthSpec) -> str:
    target = _draw_target_length(rng, spec)
    sentences = [rng.choice(_US_OPENING)]
    if label == 0:
        if rng.random() < spec.negation_rate:
            sentences.append("No occlusive thrombus is identified in the visualized veins.")
        sentences.append(rng.choice(_US_NEGATIVE[:2]))
        sentences.append("There is no evidence of deep venous thrombosis.")
    else:
        veins = _UPPER_VEINS if label == 1 else _LOWER_VEINS
        sentences.append(_finding_sentence_dvt(rng, veins))
        if rng.random() < 0.5:
            sentences.append(_finding_sentence_dvt(rng, veins))
        extremity = "upper" if label == 1 else "lower"
        sentences.append(
            f"Findings are consistent with acute {extremity} extremity deep venous thrombosis."
        )
    _fill_to_target(rng, sentences, target, tail=True)
    return " ".join(sentences)


def generate_synthetic(spec: SynthSpec, scheme: LabelScheme) -> list[Report]:
    """Generate a deterministic synthetic corpus with the requested class mix."""
    k = scheme.num_classes
    if len(spec.class_proportions) != k:
        raise ValidationError(
            f"need {k} class proportions for scheme '{scheme.name}', "
            f"got {len(spec.class_proportions)}"
        )
    counts = _largest_remainder(
        [p * spec.n_reports for p in spec.class_proportions], spec.n_reports
    )
    for class_id in range(k):
        while counts[class_id] == 0:
            donor = max(range(k), key=lambda c: counts[c])
            counts[donor] -= 1
            counts[class_id] += 1

    rng = random.Random(derive_seed(spec.seed, "synth", scheme.name))
    text_for = _pe_text if scheme.num_classes == 2 else _dvt_text
    labeled: list[tuple[int, str]] = []
    for class_id, count in enumerate(counts):
        for _ in range(count):
            labeled.append((class_id, text_for(rng, class_id, spec)))
    rng.shuffle(labeled)
    return [
        Report(id=f"syn-{scheme.name}-{i:04d}", text=text, label=label)
        for i, (label, text) in enumerate(labeled)
    ]
