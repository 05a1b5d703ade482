"""Dataset ingestion: ';'-delimited CSV -> cleaned Corpus -> stratified splits."""

import csv
import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .textnorm import NormConfig, TextNormalizer
from .utils.errors import DataValidationError, InputFileError
from .utils.logger import logger

LEVELS: Tuple[str, ...] = ("segment", "category", "subcategory", "product")
_OVER_LONG = "\x00over_long"


class ColumnMap(BaseModel):
    """Maps the five logical fields to CSV header names (Kaggle defaults)."""
    model_config = ConfigDict(frozen=True)

    item: str = "nm_item"
    segment: str = "segmento"
    category: str = "categoria"
    subcategory: str = "subcategoria"
    product: str = "nm_product"

    @classmethod
    def parse(cls, spec: str) -> "ColumnMap":
        """Parse ``item,segment,category,subcategory,product`` header names."""
        names = [n.strip() for n in spec.split(",")]
        if len(names) != 5 or not all(names):
            raise ValueError("expected five comma-separated column names")
        return cls(**dict(zip(("item",) + LEVELS, names)))

    def headers(self) -> List[str]:
        return [self.item, self.segment, self.category, self.subcategory, self.product]


class LabeledRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    item_text: str
    segment: str
    category: str
    subcategory: str
    product: str

    @field_validator("item_text")
    @classmethod
    def _item_not_empty(cls, value: str) -> str:
        if not value:
            raise ValueError("item_text is empty")
        return value

    @field_validator(*LEVELS)
    @classmethod
    def _label_upper(cls, value: str) -> str:
        if not value or value != value.upper():
            raise ValueError(f"label {value!r} must be a non-empty uppercase string")
        return value

    def key(self) -> Tuple[str, str, str, str, str]:
        return (self.item_text, self.segment, self.category, self.subcategory, self.product)

    def label(self, level: str) -> str:
        return getattr(self, level)


@dataclass(frozen=True)
class RawRecord:
    item: str
    segment: str
    category: str
    subcategory: str
    product: str
    source: str


@dataclass(frozen=True)
class RejectedRow:
    reason: str
    source: str
    fields: Tuple[str, ...] = ()


@dataclass
class LoadResult:
    records: List[RawRecord]
    rejected: List[RejectedRow]


@dataclass(frozen=True)
class Corpus:
    records: Tuple[LabeledRecord, ...]
    provenance: Tuple[str, ...]

    def __post_init__(self):
        if len(self.records) != len(self.provenance):
            raise DataValidationError("records and provenance differ in length")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def texts(self) -> List[str]:
        return [r.item_text for r in self.records]

    def labels(self, level: str) -> List[str]:
        return [r.label(level) for r in self.records]

    def subset(self, indices: Iterable[int]) -> "Corpus":
        idx = list(indices)
        return Corpus(tuple(self.records[i] for i in idx), tuple(self.provenance[i] for i in idx))

    def concat(self, other: "Corpus") -> "Corpus":
        return Corpus(self.records + other.records, self.provenance + other.provenance)

    def sources(self) -> set:
        return set(self.provenance)

    def to_frame(self, column_map: Optional[ColumnMap] = None) -> pd.DataFrame:
        cm = column_map or ColumnMap()
        return pd.DataFrame(
            [r.key() for r in self.records], columns=cm.headers(), dtype=str
        )

    def write_csv(self, path, column_map: Optional[ColumnMap] = None, delimiter: str = ";") -> None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(column_map).to_csv(
            out, sep=delimiter, index=False, encoding="utf-8", lineterminator="\n",
            quoting=csv.QUOTE_MINIMAL,
        )
        logger.info("wrote %s records to %s", len(self), out)


@dataclass
class CleanStats:
    loaded: int = 0
    dropped_missing: int = 0
    dropped_empty_text: int = 0
    dropped_duplicates: int = 0

    @property
    def kept(self) -> int:
        return self.loaded - self.dropped_missing - self.dropped_empty_text - self.dropped_duplicates

    def as_dict(self) -> Dict[str, int]:
        return {
            "loaded": self.loaded,
            "dropped_missing": self.dropped_missing,
            "dropped_empty_text": self.dropped_empty_text,
            "dropped_duplicates": self.dropped_duplicates,
            "kept": self.kept,
        }


@dataclass
class MergeStats:
    base: int
    extra: int
    merged: int
    mapped_labels: int
    unmapped_labels: List[Tuple[str, str]] = field(default_factory=list)
    new_labels: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def unmapped_count(self) -> int:
        return len(self.unmapped_labels)


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    ratios: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    stratify_level: str = Field("product", alias="stratify_by")

    @field_validator("ratios", mode="before")
    @classmethod
    def _parse_ratios(cls, value):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        return tuple(float(v) for v in value)

    @field_validator("seed")
    @classmethod
    def _seed_unsigned(cls, value: int) -> int:
        if value < 0:
            raise ValueError("seed must be unsigned")
        return value

    @field_validator("stratify_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        if value not in LEVELS:
            raise ValueError(f"stratify level must be one of {', '.join(LEVELS)}")
        return value

    @field_validator("ratios")
    @classmethod
    def _ratios_sum(cls, value):
        if any(r <= 0 for r in value):
            raise ValueError("every ratio must be > 0")
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1.0, got {sum(value)!r}")
        return value


class LabelSpace(BaseModel):
    """Sorted label vocabularies per level; index = position in the sorted list."""
    model_config = ConfigDict(frozen=True)

    segment: Tuple[str, ...]
    category: Tuple[str, ...]
    subcategory: Tuple[str, ...]
    product: Tuple[str, ...]

    def labels(self, level: str) -> Tuple[str, ...]:
        return getattr(self, level)

    def sizes(self) -> Tuple[int, int, int, int]:
        return tuple(len(self.labels(level)) for level in LEVELS)

    def index_map(self, level: str) -> Dict[str, int]:
        return {label: i for i, label in enumerate(self.labels(level))}

    def index(self, level: str, label: str) -> int:
        try:
            return self.index_map(level)[label]
        except KeyError:
            raise DataValidationError(f"label {label!r} not in {level} label space",
                                      {"level": level, "label": label}) from None

    def contains(self, record: LabeledRecord) -> bool:
        return all(record.label(level) in self.labels(level) for level in LEVELS)

    def split_known(self, corpus: Corpus) -> Tuple[Corpus, List[Tuple[str, str, str]]]:
        """Keep records whose four labels are all known; report (source, level, label) for the rest."""
        known = {level: set(self.labels(level)) for level in LEVELS}
        keep: List[int] = []
        unseen: List[Tuple[str, str, str]] = []
        for i, record in enumerate(corpus.records):
            missing = [(corpus.provenance[i], level, record.label(level))
                       for level in LEVELS if record.label(level) not in known[level]]
            if missing:
                unseen.extend(missing)
            else:
                keep.append(i)
        return corpus.subset(keep), unseen

    def encode(self, corpus: Corpus) -> np.ndarray:
        """(n, 4) int array of label indices."""
        maps = [self.index_map(level) for level in LEVELS]
        out = np.zeros((len(corpus), len(LEVELS)), dtype=np.int64)
        for i, record in enumerate(corpus.records):
            for j, level in enumerate(LEVELS):
                label = record.label(level)
                if label not in maps[j]:
                    raise DataValidationError(f"label {label!r} not in {level} label space",
                                              {"level": level, "label": label})
                out[i, j] = maps[j][label]
        return out


def load_csv(path, column_map: Optional[ColumnMap] = None, delimiter: str = ";") -> LoadResult:
    """Read a header-first UTF-8 CSV into raw records plus a rejected list."""
    column_map = column_map or ColumnMap()
    source = Path(path)
    if not source.is_file():
        raise InputFileError(f"input file not found: {source}", source)

    over_long: List[List[str]] = []

    def _bad_line(fields: List[str]) -> List[str]:
        # keep the row in place so later row numbers stay aligned
        over_long.append(fields)
        return [_OVER_LONG]

    try:
        frame = pd.read_csv(
            source, sep=delimiter, dtype=str, keep_default_na=False, encoding="utf-8",
            engine="python", on_bad_lines=_bad_line, skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError:
        raise DataValidationError(f"{source} has no header row", {"path": str(source)}) from None
    except UnicodeDecodeError as e:
        raise InputFileError(f"{source} is not valid UTF-8: {e}", source) from None

    headers = [str(c).strip() for c in frame.columns]
    frame.columns = headers
    missing = [name for name in column_map.headers() if name not in headers]
    if missing:
        raise DataValidationError(
            f"header of {source} lacks mapped column(s): {', '.join(missing)}",
            {"path": str(source), "missing_columns": missing},
        )

    records: List[RawRecord] = []
    rejected: List[RejectedRow] = []
    pending = iter(over_long)
    mapped = column_map.headers()
    for row_number, row in enumerate(frame.itertuples(index=False, name=None)):
        row_source = f"{source}:{row_number}"
        values = dict(zip(headers, row))
        if row and row[0] == _OVER_LONG:
            rejected.append(RejectedRow("field_count", row_source, tuple(next(pending))))
            continue
        # Short rows are padded with NaN by the parser; empty cells stay "".
        if any(not isinstance(v, str) for v in row):
            fields = tuple(v for v in row if isinstance(v, str))
            rejected.append(RejectedRow("field_count", row_source, fields))
            continue
        picked = [values[name].strip() for name in mapped]
        if any(not v for v in picked):
            rejected.append(RejectedRow("missing_field", row_source, tuple(picked)))
            continue
        records.append(RawRecord(*picked, source=row_source))

    logger.info("loaded %s rows from %s (%s rejected)", len(records), source, len(rejected))
    if rejected:
        logger.warning("rejected rows in %s: %s", source,
                       dict(Counter(r.reason for r in rejected)))
    return LoadResult(records=records, rejected=rejected)


def clean(records: Sequence[RawRecord], normalizer: Optional[TextNormalizer] = None,
          threads: int = 1) -> Tuple[Corpus, CleanStats]:
    """Normalize item text, uppercase labels, drop incomplete rows and exact duplicates."""
    normalizer = normalizer or TextNormalizer()
    stats = CleanStats(loaded=len(records))

    complete = []
    for raw in records:
        fields = (raw.item, raw.segment, raw.category, raw.subcategory, raw.product)
        if any(f is None or not str(f).strip() for f in fields):
            stats.dropped_missing += 1
            continue
        complete.append(raw)

    texts = normalizer.normalize_many([r.item for r in complete], threads=threads)

    seen = set()
    kept: List[LabeledRecord] = []
    provenance: List[str] = []
    for raw, text in zip(complete, texts):
        if not text:
            stats.dropped_empty_text += 1
            continue
        record = LabeledRecord(
            item_text=text,
            segment=raw.segment.strip().upper(),
            category=raw.category.strip().upper(),
            subcategory=raw.subcategory.strip().upper(),
            product=raw.product.strip().upper(),
        )
        if record.key() in seen:
            stats.dropped_duplicates += 1
            continue
        seen.add(record.key())
        kept.append(record)
        provenance.append(raw.source)

    logger.info("clean: %s", stats.as_dict())
    return Corpus(tuple(kept), tuple(provenance)), stats


def read_corpus(path, column_map: Optional[ColumnMap] = None, delimiter: str = ";",
                norm: Optional[NormConfig] = None, threads: int = 1) -> Tuple[Corpus, CleanStats, LoadResult]:
    """load_csv + clean in one call."""
    loaded = load_csv(path, column_map, delimiter)
    corpus, stats = clean(loaded.records, TextNormalizer(norm), threads=threads)
    stats.loaded += len(loaded.rejected)
    stats.dropped_missing += len(loaded.rejected)
    return corpus, stats, loaded


def load_harmonization_map(path, delimiter: str = ";") -> Dict[str, str]:
    """Two-column ``from;to`` CSV; keys and values are uppercased like cleaned labels."""
    source = Path(path)
    if not source.is_file():
        raise InputFileError(f"harmonization map not found: {source}", source)
    frame = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False, encoding="utf-8")
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if list(frame.columns[:2]) != ["from", "to"] or len(frame.columns) != 2:
        raise DataValidationError(f"{source} must have exactly the columns from;to",
                                  {"path": str(source), "columns": list(frame.columns)})
    mapping: Dict[str, str] = {}
    for src, dst in frame.itertuples(index=False, name=None):
        src, dst = src.strip().upper(), dst.strip().upper()
        if not src or not dst:
            raise DataValidationError(f"{source} has an empty mapping entry", {"path": str(source)})
        mapping.setdefault(src, dst)
    logger.info("loaded %s label mappings from %s", len(mapping), source)
    return mapping


def merge_augmentation(base: Corpus, extra: Corpus,
                       label_harmonization_map: Optional[Mapping[str, str]] = None) -> Tuple[Corpus, MergeStats]:
    """Rewrite extra's labels through the map, append to base, drop duplicates."""
    mapping = dict(label_harmonization_map or {})
    base_labels = {level: set(base.labels(level)) for level in LEVELS}

    unmapped: "OrderedDict[Tuple[str, str], None]" = OrderedDict()
    new_labels: "OrderedDict[Tuple[str, str], None]" = OrderedDict()
    mapped_count = 0
    rewritten: List[LabeledRecord] = []
    for record in extra.records:
        values = {}
        for level in LEVELS:
            label = record.label(level)
            if label in mapping:
                mapped_count += 1
                label = mapping[label]
            else:
                unmapped[(level, label)] = None
            if label not in base_labels[level]:
                new_labels[(level, label)] = None
            values[level] = label
        rewritten.append(LabeledRecord(item_text=record.item_text, **values))

    seen = set()
    records: List[LabeledRecord] = []
    provenance: List[str] = []
    for record, source in zip(base.records + tuple(rewritten), base.provenance + extra.provenance):
        if record.key() in seen:
            continue
        seen.add(record.key())
        records.append(record)
        provenance.append(source)

    stats = MergeStats(
        base=len(base), extra=len(extra), merged=len(records), mapped_labels=mapped_count,
        unmapped_labels=list(unmapped), new_labels=list(new_labels),
    )
    logger.info("merged %s + %s -> %s records (%s unmapped labels, %s new labels)",
                stats.base, stats.extra, stats.merged, stats.unmapped_count, len(stats.new_labels))
    if stats.new_labels:
        logger.warning("augmentation introduces labels absent from base: %s", stats.new_labels[:10])
    return Corpus(tuple(records), tuple(provenance)), stats


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def stratified_split(corpus: Corpus, spec: SplitSpec) -> Tuple[Corpus, Corpus, Corpus]:
    """Seeded per-stratum partition; strata with fewer than 3 records go to train."""
    if len(corpus) == 0:
        raise DataValidationError("cannot split an empty corpus")

    strata: Dict[str, List[int]] = {}
    for i, label in enumerate(corpus.labels(spec.stratify_level)):
        strata.setdefault(label, []).append(i)

    rng = np.random.default_rng(spec.seed)
    _, r_val, r_test = spec.ratios
    train_idx: List[int] = []
    val_idx: List[int] = []
    test_idx: List[int] = []
    for label in sorted(strata):
        members = strata[label]
        n = len(members)
        if n < 3:
            train_idx.extend(members)
            continue
        order = [members[j] for j in rng.permutation(n)]
        n_val = _round_half_up(n * r_val)
        n_test = _round_half_up(n * r_test)
        while n_val + n_test > n - 1:
            if n_test >= n_val and n_test > 0:
                n_test -= 1
            else:
                n_val -= 1
        val_idx.extend(order[:n_val])
        test_idx.extend(order[n_val:n_val + n_test])
        train_idx.extend(order[n_val + n_test:])

    train, val, test = (corpus.subset(sorted(ix)) for ix in (train_idx, val_idx, test_idx))
    logger.info("split %s records by %s -> train=%s val=%s test=%s",
                len(corpus), spec.stratify_level, len(train), len(val), len(test))
    return train, val, test


def label_space(corpus: Corpus) -> LabelSpace:
    if len(corpus) == 0:
        raise DataValidationError("cannot build a label space from an empty corpus")
    return LabelSpace(**{level: tuple(sorted(set(corpus.labels(level)))) for level in LEVELS})


def corpus_stats(corpus: Corpus) -> dict:
    """Label-space sizes, per-class counts and imbalance ratio per level."""
    stats = {"records": len(corpus), "levels": {}}
    for level in LEVELS:
        counts = Counter(corpus.labels(level))
        stats["levels"][level] = {
            "classes": len(counts),
            "imbalance_ratio": (max(counts.values()) / min(counts.values())) if counts else 0.0,
            "counts": dict(sorted(counts.items())),
        }
    return stats
