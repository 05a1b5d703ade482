"""Token vocabulary and fixed-length integer encoding."""

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .utils.errors import DataValidationError, InputFileError
from .utils.hashing import digest_bytes
from .utils.logger import logger

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
DEFAULT_MAX_WORDS = 42000
DEFAULT_MAX_LEN = 38


def tokenize(text: str) -> List[str]:
    return [t for t in text.split() if t]


class Vocabulary:
    """Bijection between tokens and ids; ids 0 and 1 are PAD and UNK."""

    def __init__(self, tokens: Sequence[str], max_words: Optional[int] = None):
        id_to_token = [PAD_TOKEN, UNK_TOKEN]
        token_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for token in tokens:
            if not token or any(ch.isspace() for ch in token):
                raise DataValidationError(f"invalid vocabulary token {token!r}")
            if token in token_to_id:
                raise DataValidationError(f"duplicate vocabulary token {token!r}", {"token": token})
            token_to_id[token] = len(id_to_token)
            id_to_token.append(token)
        self.max_words = max_words if max_words is not None else len(id_to_token)
        if len(id_to_token) > self.max_words:
            raise DataValidationError(
                f"vocabulary has {len(id_to_token)} entries, more than max_words={self.max_words}")
        self._token_to_id: Dict[str, int] = token_to_id
        self._id_to_token: Tuple[str, ...] = tuple(id_to_token)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._id_to_token == other._id_to_token

    @property
    def size(self) -> int:
        return len(self._id_to_token)

    @property
    def tokens(self) -> Tuple[str, ...]:
        """Real tokens, in id order, without PAD and UNK."""
        return self._id_to_token[2:]

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token(self, index: int) -> str:
        if not 0 <= index < len(self._id_to_token):
            raise DataValidationError(f"token id {index} out of range [0, {len(self)})", {"id": int(index)})
        return self._id_to_token[index]

    def to_bytes(self) -> bytes:
        return "".join(f"{t}\n" for t in self.tokens).encode("utf-8")

    def digest(self) -> str:
        return digest_bytes(self.to_bytes())

    def save(self, path) -> None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(self.to_bytes())
        logger.info("wrote vocabulary of %s tokens to %s", len(self), out)

    @classmethod
    def load(cls, path, max_words: Optional[int] = None) -> "Vocabulary":
        """One token per line; line i holds id i + 2."""
        source = Path(path)
        if not source.is_file():
            raise InputFileError(f"vocabulary file not found: {source}", source)
        try:
            lines = source.read_text(encoding="utf-8").split("\n")
        except UnicodeDecodeError as e:
            raise InputFileError(f"{source} is not valid UTF-8: {e}", source) from None
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines, max_words=max_words)


@dataclass(frozen=True)
class EncodedSequence:
    ids: Tuple[int, ...]
    length: int


def build_vocabulary(train_texts: Iterable[str], max_words: int = DEFAULT_MAX_WORDS) -> Vocabulary:
    """Rank tokens by (frequency desc, first occurrence asc), keep max_words - 2."""
    if max_words < 3:
        raise DataValidationError(f"max_words must be >= 3, got {max_words}", {"max_words": max_words})
    counts: Counter = Counter()
    first_seen: Dict[str, int] = {}
    n_texts = 0
    for text in train_texts:
        n_texts += 1
        for token in tokenize(text):
            counts[token] += 1
            first_seen.setdefault(token, len(first_seen))
    if n_texts == 0 or not counts:
        raise DataValidationError("cannot build a vocabulary from empty input")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    kept = ranked[: max_words - 2]
    logger.info("vocabulary: %s distinct tokens, kept %s (max_words=%s)", len(ranked), len(kept), max_words)
    return Vocabulary(kept, max_words=max_words)


def encode(text: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> EncodedSequence:
    """Left-keeping truncation, post-padding to exactly max_len."""
    tokens = tokenize(text)[:max_len]
    ids = [vocab.id(t) for t in tokens]
    return EncodedSequence(ids=tuple(ids + [PAD_ID] * (max_len - len(ids))), length=len(ids))


def decode(ids: Iterable[int], vocab: Vocabulary) -> List[str]:
    return [vocab.token(int(i)) for i in ids if vocab.token(int(i)) != PAD_TOKEN]


def encode_batch(texts: Sequence[str], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                 threads: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """(n, max_len) int64 ids and (n,) lengths."""
    if threads > 1 and len(texts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            encoded = list(pool.map(lambda t: encode(t, vocab, max_len), texts, chunksize=256))
    else:
        encoded = [encode(t, vocab, max_len) for t in texts]
    ids = np.zeros((len(encoded), max_len), dtype=np.int64)
    lengths = np.zeros(len(encoded), dtype=np.int64)
    for i, seq in enumerate(encoded):
        ids[i] = seq.ids
        lengths[i] = seq.length
    return ids, lengths
