"""Greedy per-head inference: evaluation reports, single-text prediction, majority baseline."""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..corpus import LEVELS, Corpus, LabelSpace
from ..losses_metrics import EvalReport
from ..models import BaseClassifier, ModelCheckpoint, build_model
from ..textnorm import TextNormalizer
from ..utils.errors import CheckpointError, DataValidationError
from ..utils.logger import logger
from ..vocab import Vocabulary, encode_batch

UNCLASSIFIABLE = "unclassifiable"


@dataclass(frozen=True)
class EncodedSplit:
    """Model-ready arrays for one split plus where each row came from."""
    ids: np.ndarray
    labels: np.ndarray
    provenance: Tuple[str, ...]

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def sources(self) -> set:
        return set(self.provenance)


@dataclass(frozen=True)
class HeadPick:
    label: str
    probability: float


@dataclass(frozen=True)
class Prediction:
    text: str
    normalized: str
    picks: Optional[Dict[str, HeadPick]]

    @property
    def classifiable(self) -> bool:
        return self.picks is not None

    def as_dict(self) -> dict:
        if self.picks is None:
            return {"text": self.text, "normalized": self.normalized, "result": UNCLASSIFIABLE}
        return {
            "text": self.text,
            "normalized": self.normalized,
            "result": {level: {"label": p.label, "probability": p.probability} for level, p in self.picks.items()},
        }


def encode_split(corpus: Corpus, vocab: Vocabulary, labels: LabelSpace, max_len: int,
                 threads: int = 1) -> EncodedSplit:
    ids, _ = encode_batch(corpus.texts(), vocab, max_len, threads=threads)
    return EncodedSplit(ids=ids, labels=labels.encode(corpus), provenance=corpus.provenance)


def predict_indices(model: BaseClassifier, ids: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """(n, 4) argmax indices, dropout off."""
    probs = model.predict_proba(ids, batch_size=batch_size)
    if len(ids) == 0:
        return np.zeros((0, len(LEVELS)), dtype=np.int64)
    return np.stack([np.argmax(p, axis=1) for p in probs], axis=1).astype(np.int64)


def model_from_checkpoint(checkpoint: ModelCheckpoint) -> BaseClassifier:
    return build_model(checkpoint.config, arrays=checkpoint.params)


def check_vocab(checkpoint: ModelCheckpoint, vocab_digest: Optional[str]) -> None:
    if vocab_digest is not None and vocab_digest != checkpoint.vocab_digest:
        raise CheckpointError("vocabulary hash mismatch between checkpoint and supplied vocabulary",
                              {"checkpoint": checkpoint.vocab_digest, "vocab": vocab_digest})


def evaluate(checkpoint: ModelCheckpoint, corpus: Corpus, vocab_digest: Optional[str] = None,
             threads: int = 1, batch_size: int = 256) -> Tuple[EvalReport, List[Tuple[str, str, str]]]:
    """EvalReport on the records whose labels the checkpoint knows; unseen labels are reported back."""
    check_vocab(checkpoint, vocab_digest)
    known, unseen = checkpoint.labels.split_known(corpus)
    if unseen:
        logger.warning("%s records carry labels unseen in training and were skipped",
                       len(corpus) - len(known))
    if len(known) == 0:
        raise DataValidationError("no evaluable records: every record has an unseen label",
                                  {"unseen": len(unseen)})
    split = encode_split(known, checkpoint.vocab, checkpoint.labels, checkpoint.config.max_len, threads)
    model = model_from_checkpoint(checkpoint)
    pred = predict_indices(model, split.ids, batch_size=batch_size)
    report = EvalReport.build(split.labels, pred, [checkpoint.labels.labels(level) for level in LEVELS])
    logger.info("evaluated %s records: macro-F1 %s", len(known),
                " ".join(f"{level}={f1:.4f}" for level, f1 in zip(LEVELS, report.head_f1())))
    return report, unseen


def predict_many(checkpoint: ModelCheckpoint, texts: Sequence[str], model: Optional[BaseClassifier] = None,
                 threads: int = 1) -> List[Prediction]:
    normalizer = TextNormalizer(checkpoint.norm)
    normalized = normalizer.normalize_many(list(texts), threads=threads)
    model = model or model_from_checkpoint(checkpoint)
    usable = [i for i, text in enumerate(normalized) if text]
    picks: Dict[int, Dict[str, HeadPick]] = {}
    if usable:
        ids, _ = encode_batch([normalized[i] for i in usable], checkpoint.vocab, checkpoint.config.max_len)
        probs = model.predict_proba(ids)
        for row, i in enumerate(usable):
            picks[i] = {}
            for j, level in enumerate(LEVELS):
                best = int(np.argmax(probs[j][row]))
                picks[i][level] = HeadPick(checkpoint.labels.labels(level)[best], float(probs[j][row, best]))
    return [Prediction(text=texts[i], normalized=normalized[i], picks=picks.get(i)) for i in range(len(texts))]


def predict(checkpoint: ModelCheckpoint, raw_text: str, model: Optional[BaseClassifier] = None) -> Prediction:
    """Normalize, encode, forward; an empty normalized text is unclassifiable."""
    return predict_many(checkpoint, [raw_text], model=model)[0]


def majority_baseline(train: Corpus, data: Corpus, labels: LabelSpace) -> EvalReport:
    """Predict each head's most frequent training label for every record."""
    if len(train) == 0:
        raise DataValidationError("majority baseline needs a non-empty training corpus")
    known, _ = labels.split_known(data)
    true = labels.encode(known)
    pred = np.zeros_like(true)
    for j, level in enumerate(LEVELS):
        counts = Counter(train.labels(level))
        top = max(counts.values())
        majority = min(label for label, n in counts.items() if n == top)
        pred[:, j] = labels.index(level, majority)
    return EvalReport.build(true, pred, [labels.labels(level) for level in LEVELS])
