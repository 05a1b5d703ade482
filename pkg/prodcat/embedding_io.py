"""Pre-trained word vectors (word2vec / GloVe text formats) aligned to a Vocabulary."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np

from .utils.errors import DataValidationError, InputFileError
from .utils.logger import logger
from .vocab import PAD_ID, Vocabulary

OOV_INIT_RANGE = 0.05


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    vectors: Dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class EmbeddingMatrix:
    matrix: np.ndarray
    coverage: float
    found: int

    @property
    def shape(self):
        return self.matrix.shape


def _is_header(parts) -> bool:
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_embedding_file(path) -> EmbeddingTable:
    """Parse ``token v1 ... vd`` lines, with an optional ``count dim`` header."""
    source = Path(path)
    if not source.is_file():
        raise InputFileError(f"embedding file not found: {source}", source)

    dim = None
    declared_count = None
    vectors: Dict[str, np.ndarray] = {}
    duplicates = 0
    with source.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts:
                continue
            if line_number == 1 and _is_header(parts):
                declared_count, dim = int(parts[0]), int(parts[1])
                if dim <= 0:
                    raise DataValidationError(f"{source}: header declares dim {dim}", {"line": 1})
                continue
            token, components = parts[0], parts[1:]
            if dim is None:
                dim = len(components)
                if dim == 0:
                    raise DataValidationError(f"{source}: line {line_number} has no vector",
                                              {"line": line_number})
            if len(components) != dim:
                raise DataValidationError(
                    f"{source}: line {line_number} has {len(components)} components, expected {dim}",
                    {"line": line_number, "expected": dim, "found": len(components)},
                )
            try:
                vector = np.asarray(components, dtype=np.float64)
            except ValueError:
                raise DataValidationError(f"{source}: non-numeric component on line {line_number}",
                                          {"line": line_number}) from None
            if not np.all(np.isfinite(vector)):
                raise DataValidationError(f"{source}: non-finite component on line {line_number}",
                                          {"line": line_number})
            if token in vectors:
                duplicates += 1
                continue
            vectors[token] = vector

    if dim is None:
        raise DataValidationError(f"{source}: no vectors found", {"path": str(source)})
    if declared_count is not None and declared_count != len(vectors) + duplicates:
        logger.warning("%s header declares %s vectors, found %s", source, declared_count,
                       len(vectors) + duplicates)
    if duplicates:
        logger.warning("%s: %s duplicate tokens ignored (first kept)", source, duplicates)
    logger.info("loaded %s vectors of dim %s from %s", len(vectors), dim, source)
    return EmbeddingTable(dim=dim, vectors=vectors)


def build_matrix(table: EmbeddingTable, vocab: Vocabulary, seed: int = 0) -> EmbeddingMatrix:
    """Copy known vectors; OOV rows (incl. UNK) ~ U(-0.05, 0.05); PAD row zero."""
    if table.dim <= 0:
        raise DataValidationError("embedding table has no dimensions")
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-OOV_INIT_RANGE, OOV_INIT_RANGE, size=(len(vocab), table.dim))
    found = 0
    for index, token in enumerate(vocab.tokens, start=2):
        vector = table.vectors.get(token)
        if vector is not None:
            matrix[index] = vector
            found += 1
    matrix[PAD_ID] = 0.0
    coverage = found / len(vocab.tokens) if vocab.tokens else 0.0
    logger.info("embedding coverage %.4f (%s/%s tokens)", coverage, found, len(vocab.tokens))
    return EmbeddingMatrix(matrix=matrix, coverage=coverage, found=found)
