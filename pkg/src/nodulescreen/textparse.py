"""Rule-based parsing of clinical free text into location descriptors.

The grammar is deliberately small and deterministic: a token normalizer
(lowercasing, lobe-abbreviation expansion, apex -> upper), phrase patterns
for laterality/lobe mentions, mm/cm sizes and nodule counts, and negation
triggers whose scope runs to the end of the sentence. Anything the grammar
does not consume is reported in ``unrecognized_spans`` instead of being
guessed at; free-form interpretation is the language-vision backend's job.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import Laterality, Lobe, LobeMap, NoduleCandidate, ValidationError, locate_candidate


class Polarity(str, Enum):
    AFFIRMED = "affirmed"
    NEGATED = "negated"


class MatchResult(str, Enum):
    MATCH = "match"
    MISMATCH = "mismatch"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class LocationDescriptor:
    """One structured anatomical claim extracted from the text."""

    laterality: Laterality = Laterality.UNSPECIFIED
    lobe: Lobe = Lobe.UNSPECIFIED
    size_mm: Optional[tuple[float, float]] = None
    count: Optional[int] = None
    polarity: Polarity = Polarity.AFFIRMED
    source_span: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.lobe is Lobe.MIDDLE and self.laterality is Laterality.LEFT:
            raise ValidationError("no left middle lobe exists")
        if self.size_mm is not None:
            lo, hi = self.size_mm
            if not (0 < lo <= hi):
                raise ValidationError(f"size interval {self.size_mm} invalid")
        if self.count is not None and self.count < 1:
            raise ValidationError("count must be a positive integer")


@dataclass
class ParseReport:
    descriptors: list[LocationDescriptor] = field(default_factory=list)
    unrecognized_spans: list[tuple[int, int]] = field(default_factory=list)
    normalized_text: str = ""


# --- tokenizer --------------------------------------------------------------

_TOKEN_RE = re.compile(r"\d+(?:\.\d+)?|[A-Za-z]+|[^\sA-Za-z0-9]")

_ABBREVIATIONS = {
    "lul": ("left", "upper", "lobe"),
    "lll": ("left", "lower", "lobe"),
    "rul": ("right", "upper", "lobe"),
    "rml": ("right", "middle", "lobe"),
    "rll": ("right", "lower", "lobe"),
}

_WORD_NUMBERS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}

_LAT_WORDS = {"left": Laterality.LEFT, "right": Laterality.RIGHT}
_LAT_LETTERS = {"l": Laterality.LEFT, "r": Laterality.RIGHT}
_LOBE_WORDS = {
    "upper": Lobe.UPPER,
    "middle": Lobe.MIDDLE,
    "lower": Lobe.LOWER,
    "apex": Lobe.UPPER,
    "apical": Lobe.UPPER,
}
_SIZE_UNITS = {"mm": 1.0, "millimeter": 1.0, "millimeters": 1.0,
               "cm": 10.0, "centimeter": 10.0, "centimeters": 10.0}
_NODULE_NOUNS = {"nodule", "nodules", "lesion", "lesions", "mass", "masses",
                 "opacity", "opacities", "finding", "findings"}
_NEGATION_TRIGGERS = {"no", "without", "denies", "denied", "absent"}
# two-word triggers handled specially: "negative for", "free of"
_SENTENCE_BREAKERS = {".", ";", ":", "\n"}

# words that carry no structured content for this grammar
_STOPWORDS = {
    "a", "an", "the", "of", "on", "in", "at", "with", "and", "or", "is",
    "are", "was", "were", "there", "this", "that", "to", "up", "for",
    "measuring", "measures", "approximately", "about", "roughly", "seen",
    "noted", "identified", "present", "visualized", "demonstrated", "shows",
    "small", "large", "tiny", "medium", "subtle", "new", "stable",
    "data", "disease", "sided", "side", "lobe", "lobes", "lung", "lungs",
    "pulmonary", "region", "zone", "field", "located", "within", "near",
} | _NODULE_NOUNS


@dataclass
class _Token:
    text: str
    start: int
    end: int
    norm: str
    consumed: bool = False


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(_Token(text=m.group(), start=m.start(), end=m.end(), norm=m.group().lower()))
    # explicit newline breaks
    for m in re.finditer(r"\n", text):
        tokens.append(_Token(text="\n", start=m.start(), end=m.end(), norm="\n"))
    tokens.sort(key=lambda t: t.start)
    return tokens


def _expand(tokens: list[_Token]) -> list[_Token]:
    """Expand lobe abbreviations in place, keeping the original span."""
    out: list[_Token] = []
    for tok in tokens:
        if tok.norm in _ABBREVIATIONS:
            for word in _ABBREVIATIONS[tok.norm]:
                out.append(_Token(text=tok.text, start=tok.start, end=tok.end, norm=word))
        else:
            out.append(tok)
    return out


def _split_sentences(tokens: list[_Token]) -> list[list[_Token]]:
    sentences: list[list[_Token]] = []
    current: list[_Token] = []
    for tok in tokens:
        if tok.norm in _SENTENCE_BREAKERS:
            if current:
                sentences.append(current)
                current = []
            continue
        current.append(tok)
    if current:
        sentences.append(current)
    return sentences


def _is_word(tok: _Token) -> bool:
    return bool(re.match(r"[a-z]", tok.norm))


def _parse_size(tokens: list[_Token], i: int):
    """Try to read a size starting at index i: NUM [-|to NUM] UNIT."""
    def number_at(j):
        if j < len(tokens) and re.fullmatch(r"\d+(?:\.\d+)?", tokens[j].norm):
            return float(tokens[j].norm)
        return None

    lo = number_at(i)
    if lo is None:
        return None
    j = i + 1
    hi = lo
    if j < len(tokens) and tokens[j].norm in ("-", "to") and number_at(j + 1) is not None:
        hi = number_at(j + 1)
        j += 2
    if j < len(tokens) and tokens[j].norm in _SIZE_UNITS:
        factor = _SIZE_UNITS[tokens[j].norm]
        size = (round(min(lo, hi) * factor, 6), round(max(lo, hi) * factor, 6))
        return size, i, j
    return None


def _parse_count(tokens: list[_Token], i: int):
    """Try to read a count at index i: (word-number | INT) nodule-noun."""
    tok = tokens[i]
    value = None
    if tok.norm in _WORD_NUMBERS:
        value = _WORD_NUMBERS[tok.norm]
    elif re.fullmatch(r"\d+", tok.norm):
        value = int(tok.norm)
    if value is None or value < 1:
        return None
    if i + 1 < len(tokens) and tokens[i + 1].norm in _NODULE_NOUNS:
        return value, i, i + 1
    return None


def _parse_location(tokens: list[_Token], i: int):
    """Try to read a location starting at index i.

    Accepts: [lat] lobe-word [lobe|lung], lat (sided|side|lung|lobe),
    or a bare lobe-word followed by lobe/lung. Single-letter laterality
    only counts immediately before a lobe word.
    """
    lat = Laterality.UNSPECIFIED
    lobe = Lobe.UNSPECIFIED
    j = i
    first = last = None

    tok = tokens[j]
    if tok.norm in _LAT_WORDS:
        lat = _LAT_WORDS[tok.norm]
        first = last = j
        j += 1
        while j < len(tokens) and tokens[j].norm == "-":
            j += 1
    elif tok.norm in _LAT_LETTERS:
        # "R upper lobe": only when a lobe word follows directly
        if j + 1 < len(tokens) and tokens[j + 1].norm in _LOBE_WORDS:
            lat = _LAT_LETTERS[tok.norm]
            first = last = j
            j += 1
        else:
            return None

    if j < len(tokens) and tokens[j].norm in _LOBE_WORDS:
        lobe = _LOBE_WORDS[tokens[j].norm]
        if first is None:
            first = j
        last = j
        j += 1
        if j < len(tokens) and tokens[j].norm in ("lobe", "lung", "lobes", "lungs"):
            last = j
            j += 1
    elif lat is not Laterality.UNSPECIFIED:
        # laterality alone needs an anchor word to avoid false hits
        if j < len(tokens) and tokens[j].norm in ("sided", "side", "lung", "lungs", "lobe", "lobes", "hemithorax"):
            last = j
            j += 1
        else:
            return None
    else:
        return None

    # bare lobe-word without lobe/lung anchor is accepted only for
    # apex/apical ("the apex") and laterality-qualified phrases above.
    if lat is Laterality.UNSPECIFIED and lobe is not Lobe.UNSPECIFIED:
        anchored = tokens[last].norm in ("lobe", "lung", "lobes", "lungs") or tokens[first].norm in ("apex", "apical")
        if not anchored:
            return None

    if lobe is Lobe.MIDDLE and lat is Laterality.LEFT:
        # anatomically impossible; keep the lobe claim, drop the side
        lat = Laterality.UNSPECIFIED
    return lat, lobe, first, last


def parse_description(text: str) -> ParseReport:
    """Parse free text into location descriptors. Total and deterministic."""
    tokens = _expand(_tokenize(text))
    report = ParseReport(normalized_text=" ".join(t.norm for t in tokens if t.norm != "\n"))

    for sentence in _split_sentences(tokens):
        negated_from: Optional[int] = None
        for k, tok in enumerate(sentence):
            if tok.norm in _NEGATION_TRIGGERS:
                negated_from = k if negated_from is None else negated_from
                tok.consumed = True
            elif (
                tok.norm in ("negative", "free")
                and k + 1 < len(sentence)
                and sentence[k + 1].norm in ("for", "of")
            ):
                negated_from = k if negated_from is None else negated_from
                tok.consumed = True
                sentence[k + 1].consumed = True

        descriptors: list[dict] = []
        sizes: list[tuple[tuple[float, float], int, int]] = []
        counts: list[tuple[int, int, int]] = []
        k = 0
        while k < len(sentence):
            if sentence[k].consumed:
                k += 1
                continue
            loc = _parse_location(sentence, k)
            if loc is not None:
                lat, lobe, first, last = loc
                for idx in range(first, last + 1):
                    sentence[idx].consumed = True
                descriptors.append(
                    {
                        "laterality": lat,
                        "lobe": lobe,
                        "pos": first,
                        "span": (sentence[first].start, sentence[last].end),
                        "size": None,
                        "count": None,
                    }
                )
                k = last + 1
                continue
            size = _parse_size(sentence, k)
            if size is not None:
                value, first, last = size
                for idx in range(first, last + 1):
                    sentence[idx].consumed = True
                sizes.append((value, first, last))
                k = last + 1
                continue
            cnt = _parse_count(sentence, k)
            if cnt is not None:
                value, first, last = cnt
                sentence[first].consumed = True  # noun stays a stopword
                counts.append((value, first, last))
                k = last + 1
                continue
            k += 1

        # attach sizes/counts to the nearest location in the sentence
        for value, first, _last in sizes:
            target = _nearest(descriptors, first)
            if target is not None and target["size"] is None:
                target["size"] = value
            else:
                descriptors.append(
                    {"laterality": Laterality.UNSPECIFIED, "lobe": Lobe.UNSPECIFIED,
                     "pos": first, "span": (sentence[first].start, sentence[_last].end),
                     "size": value, "count": None}
                )
        for value, first, _last in counts:
            target = _nearest(descriptors, first)
            if target is not None and target["count"] is None:
                target["count"] = value
            else:
                descriptors.append(
                    {"laterality": Laterality.UNSPECIFIED, "lobe": Lobe.UNSPECIFIED,
                     "pos": first, "span": (sentence[first].start, sentence[_last].end),
                     "size": None, "count": value}
                )

        descriptors.sort(key=lambda d: d["pos"])
        for d in descriptors:
            polarity = (
                Polarity.NEGATED
                if negated_from is not None and d["pos"] >= negated_from
                else Polarity.AFFIRMED
            )
            report.descriptors.append(
                LocationDescriptor(
                    laterality=d["laterality"],
                    lobe=d["lobe"],
                    size_mm=d["size"],
                    count=d["count"],
                    polarity=polarity,
                    source_span=d["span"],
                )
            )

        # leftover non-stopword word tokens become unrecognized spans
        run_start = None
        prev_end = None
        for tok in sentence:
            leftover = _is_word(tok) and not tok.consumed and tok.norm not in _STOPWORDS
            if leftover:
                if run_start is None:
                    run_start = tok.start
                prev_end = tok.end
            elif run_start is not None and (_is_word(tok) or tok.norm in _STOPWORDS):
                report.unrecognized_spans.append((run_start, prev_end))
                run_start = None
        if run_start is not None:
            report.unrecognized_spans.append((run_start, prev_end))

    report.descriptors.sort(key=lambda d: d.source_span)
    return report


def _nearest(descriptors: list[dict], pos: int) -> Optional[dict]:
    if not descriptors:
        return None
    return min(descriptors, key=lambda d: abs(d["pos"] - pos))


def descriptor_matches(
    location: Optional[tuple[Laterality, Lobe]], d: LocationDescriptor
) -> MatchResult:
    """Compare a candidate's (laterality, lobe) against one descriptor.

    Unspecified axes are wildcards. A Negated descriptor inverts the
    Match/Mismatch outcome. Background locations are Inconclusive.
    """
    if location is None:
        return MatchResult.INCONCLUSIVE
    lat, lobe = location
    lat_ok = d.laterality is Laterality.UNSPECIFIED or d.laterality is lat
    lobe_ok = d.lobe is Lobe.UNSPECIFIED or d.lobe is lobe
    result = MatchResult.MATCH if (lat_ok and lobe_ok) else MatchResult.MISMATCH
    if d.polarity is Polarity.NEGATED:
        result = (
            MatchResult.MISMATCH if result is MatchResult.MATCH else MatchResult.MATCH
        )
    return result


def rule_prefilter(
    candidates: list[NoduleCandidate], lobes: LobeMap, report: ParseReport
) -> dict[str, MatchResult]:
    """Cross-check each candidate's lobe location against the parsed text.

    Match when at least one Affirmed descriptor agrees; Mismatch when every
    Affirmed descriptor contradicts; Inconclusive with no Affirmed
    descriptors or a background location. Annotation only: verdicts always
    come from the language-vision stage.
    """
    affirmed = [d for d in report.descriptors if d.polarity is Polarity.AFFIRMED]
    result: dict[str, MatchResult] = {}
    for cand in candidates:
        if not affirmed:
            result[cand.id] = MatchResult.INCONCLUSIVE
            continue
        location = locate_candidate(cand, lobes)
        if location is None:
            result[cand.id] = MatchResult.INCONCLUSIVE
            continue
        outcomes = [descriptor_matches(location, d) for d in affirmed]
        result[cand.id] = (
            MatchResult.MATCH
            if MatchResult.MATCH in outcomes
            else MatchResult.MISMATCH
        )
    return result


def descriptor_to_json(d: LocationDescriptor) -> dict:
    return {
        "laterality": d.laterality.value,
        "lobe": d.lobe.value,
        "size_mm": list(d.size_mm) if d.size_mm else None,
        "count": d.count,
        "polarity": d.polarity.value,
        "source_span": list(d.source_span),
    }


def report_to_json(report: ParseReport) -> dict:
    return {
        "descriptors": [descriptor_to_json(d) for d in report.descriptors],
        "unrecognized_spans": [list(s) for s in report.unrecognized_spans],
        "normalized_text": report.normalized_text,
    }
