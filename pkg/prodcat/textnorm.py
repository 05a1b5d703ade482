"""Five-stage normalization of raw item descriptions.

lowercase -> clean_chars -> extract_units -> condense_spaces -> filter_chars
"""

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, NewType, Optional, Pattern, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from .utils.logger import logger

RawText = NewType("RawText", str)
NormalizedText = NewType("NormalizedText", str)

DEFAULT_UNITS: Tuple[str, ...] = ("g", "kg", "mg", "ml", "l", "un", "cm", "mm", "m")

# Portuguese-focused; anything not listed and outside the alphabet becomes a space.
TRANSLITERATION = {
    "á": "a", "à": "a", "â": "a", "ã": "a", "ä": "a", "å": "a",
    "é": "e", "è": "e", "ê": "e", "ë": "e",
    "í": "i", "ì": "i", "î": "i", "ï": "i",
    "ó": "o", "ò": "o", "ô": "o", "õ": "o", "ö": "o",
    "ú": "u", "ù": "u", "û": "u", "ü": "u",
    "ç": "c", "ñ": "n", "ý": "y", "ÿ": "y",
}
_TRANSLITERATE = str.maketrans(TRANSLITERATION)

_WHITESPACE_RUNS = re.compile(r"\s+")
_QUANTITY_LETTERS = re.compile(r"([0-9]+)([a-z]+)")
_LETTER_DIGIT = re.compile(r"([a-z])([0-9])")
_NUMERIC = re.compile(r"[0-9]+")


class NormConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    min_token_len: int = 2
    units: Tuple[str, ...] = DEFAULT_UNITS
    keep_chars: str = ""
    split_letter_digit: bool = False

    @field_validator("units", mode="before")
    @classmethod
    def _split_units(cls, value):
        if isinstance(value, str):
            value = [u for u in value.split(",")]
        units = tuple(u.strip().lower() for u in value if u.strip())
        if not units:
            raise ValueError("at least one unit is required")
        for unit in units:
            if not re.fullmatch(r"[a-z]+", unit):
                raise ValueError(f"unit {unit!r} must be lowercase ascii letters")
        return units

    @field_validator("keep_chars")
    @classmethod
    def _check_keep_chars(cls, value: str) -> str:
        if any(ch.isspace() for ch in value):
            raise ValueError("keep_chars may not contain whitespace")
        return value

    @field_validator("min_token_len")
    @classmethod
    def _check_min_len(cls, value: int) -> int:
        if value < 1:
            raise ValueError("min_token_len must be >= 1")
        return value


@dataclass(frozen=True)
class UnitRule:
    unit: str
    pattern: Pattern[str]

    def splits(self, letters: str) -> bool:
        """True when the unit is a proper prefix of a letter run."""
        return self.pattern.match(letters) is not None


@dataclass(frozen=True)
class UnitPatternSet:
    rules: Tuple[UnitRule, ...]

    @classmethod
    def from_units(cls, units: Iterable[str]) -> "UnitPatternSet":
        # Longest unit first so "ml" wins over "m"; stable for equal lengths.
        ordered = sorted(dict.fromkeys(units), key=len, reverse=True)
        if not ordered:
            raise ValueError("UnitPatternSet needs at least one unit")
        rules = tuple(
            UnitRule(unit=u, pattern=re.compile(rf"{re.escape(u)}(?=[a-z])")) for u in ordered
        )
        return cls(rules=rules)

    @property
    def units(self) -> Tuple[str, ...]:
        return tuple(rule.unit for rule in self.rules)

    def is_unit(self, token: str) -> bool:
        return token in self.units

    def is_quantity(self, token: str) -> bool:
        """Digits immediately followed by a known unit, e.g. ``80g``."""
        match = _QUANTITY_LETTERS.fullmatch(token)
        return match is not None and self.is_unit(match.group(2))


def to_lowercase(text: RawText) -> RawText:
    # Per-character so the length never changes (e.g. "İ" lowers to two code points).
    out = []
    for ch in text:
        lowered = ch.lower()
        out.append(lowered if len(lowered) == 1 else ch)
    return RawText("".join(out))


def clean_chars(text: RawText, keep_chars: str = "") -> RawText:
    """Transliterate accents, then replace each char outside [a-z0-9 ] + keep_chars by a space."""
    transliterated = text.translate(_TRANSLITERATE)
    out = []
    for ch in transliterated:
        if ("a" <= ch <= "z") or ("0" <= ch <= "9") or ch == " " or ch in keep_chars:
            out.append(ch)
        else:
            out.append(" ")
    return RawText("".join(out))


def extract_units(text: RawText, rules: UnitPatternSet, split_letter_digit: bool = False) -> RawText:
    """Separate a quantity+unit fused with the following word: ``80ghora`` -> ``80g hora``."""

    def _split(match: re.Match) -> str:
        number, letters = match.group(1), match.group(2)
        if rules.is_unit(letters):
            return match.group(0)
        for rule in rules.rules:
            if rule.splits(letters):
                return f"{number}{rule.unit} {letters[len(rule.unit):]}"
        return match.group(0)

    result = _QUANTITY_LETTERS.sub(_split, text)
    if split_letter_digit:
        result = _LETTER_DIGIT.sub(r"\1 \2", result)
    return RawText(result)


def condense_spaces(text: RawText) -> RawText:
    return RawText(_WHITESPACE_RUNS.sub(" ", text).strip())


def filter_chars(text: RawText, min_token_len: int = 2,
                 stop_singletons: Optional[Iterable[str]] = None,
                 rules: Optional[UnitPatternSet] = None) -> RawText:
    """Drop tokens shorter than ``min_token_len``.

    Pure numbers, quantity+unit tokens and anything in ``stop_singletons``
    (the unit list by default) are exempt.
    """
    rules = rules or _default_rules()
    exempt = set(stop_singletons) if stop_singletons is not None else set(rules.units)
    kept = []
    for token in text.split(" "):
        if not token:
            continue
        if len(token) >= min_token_len:
            kept.append(token)
        elif _NUMERIC.fullmatch(token) or token in exempt or rules.is_quantity(token):
            kept.append(token)
    return condense_spaces(RawText(" ".join(kept)))


@lru_cache(maxsize=1)
def _default_rules() -> UnitPatternSet:
    return UnitPatternSet.from_units(DEFAULT_UNITS)


def normalize(text: RawText, rules: Optional[UnitPatternSet] = None,
              config: Optional[NormConfig] = None) -> NormalizedText:
    config = config or NormConfig()
    rules = rules or UnitPatternSet.from_units(config.units)
    stage = to_lowercase(text)
    stage = clean_chars(stage, config.keep_chars)
    stage = extract_units(stage, rules, config.split_letter_digit)
    stage = condense_spaces(stage)
    stage = filter_chars(stage, config.min_token_len, rules.units, rules)
    return NormalizedText(stage)


class TextNormalizer:
    """Binds a NormConfig to its compiled unit rules."""

    def __init__(self, config: Optional[NormConfig] = None):
        self.config = config or NormConfig()
        self.rules = UnitPatternSet.from_units(self.config.units)

    def __call__(self, text: str) -> NormalizedText:
        return normalize(RawText(text), self.rules, self.config)

    def normalize_many(self, texts: Sequence[str], threads: int = 1) -> List[NormalizedText]:
        """Order-preserving; runs on a bounded thread pool when threads > 1."""
        if threads <= 1 or len(texts) < 2:
            return [self(t) for t in texts]
        logger.debug("normalizing %s texts on %s threads", len(texts), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(self, texts, chunksize=256))
