"""HCKP checkpoint files.

Layout::

    b"HCKP" | version byte | UTF-8 header of key=value lines | blank line |
    per parameter, in header order: name, b"\\n", uint32 LE count, float32 LE data

Header values are JSON encoded. Parameter names never contain a newline.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..corpus import LEVELS, LabelSpace
from ..textnorm import NormConfig
from ..utils.errors import CheckpointError, InputFileError
from ..utils.hashing import verify_digest
from ..utils.logger import logger
from ..vocab import Vocabulary
from .config import ModelConfig

MAGIC = b"HCKP"
VERSION = 1


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    params: Dict[str, np.ndarray]
    vocab: Vocabulary
    labels: LabelSpace
    seed: int = 0
    norm: NormConfig = field(default_factory=NormConfig)
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def vocab_digest(self) -> str:
        return self.vocab.digest()

    def header(self) -> Dict[str, object]:
        values: Dict[str, object] = {"arch": self.config.arch}
        for key, value in self.config.model_dump().items():
            values[f"model.{key}"] = value
        values["vocab.sha256"] = self.vocab_digest
        values["vocab.tokens"] = list(self.vocab.tokens)
        for level in LEVELS:
            values[f"labels.{level}"] = list(self.labels.labels(level))
        values["seed"] = self.seed
        for key, value in self.norm.model_dump().items():
            values[f"norm.{key}"] = value
        values["params"] = list(self.params)
        for name, array in self.params.items():
            values[f"param.{name}.shape"] = list(array.shape)
        for key, value in sorted(self.meta.items()):
            values[f"meta.{key}"] = value
        return values

    def to_bytes(self) -> bytes:
        lines = []
        for key, value in self.header().items():
            if "\n" in key or "=" in key:
                raise CheckpointError(f"header key {key!r} is not encodable")
            lines.append(f"{key}={json.dumps(value, ensure_ascii=False)}\n")
        chunks = [MAGIC, bytes([VERSION]), "".join(lines).encode("utf-8"), b"\n"]
        for name, array in self.params.items():
            flat = np.ascontiguousarray(array, dtype="<f4").reshape(-1)
            chunks.append(name.encode("utf-8") + b"\n")
            chunks.append(struct.pack("<I", flat.size))
            chunks.append(flat.tobytes())
        return b"".join(chunks)

    def save(self, path) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        data = self.to_bytes()
        out.write_bytes(data)
        logger.info("wrote %s checkpoint (%s parameters, %s bytes) to %s",
                    self.config.arch, len(self.params), len(data), out)
        return out

    @classmethod
    def from_bytes(cls, data: bytes, vocab_digest: Optional[str] = None, source: str = "<bytes>") -> "ModelCheckpoint":
        if data[:4] != MAGIC:
            raise CheckpointError(f"{source}: not an HCKP checkpoint", {"magic": data[:4].hex()})
        if len(data) < 5 or data[4] != VERSION:
            found = data[4] if len(data) >= 5 else None
            raise CheckpointError(f"{source}: unsupported checkpoint version {found}", {"version": found})

        header, offset = _read_header(data, 5, source)
        try:
            tokens = header["vocab.tokens"]
            stored_digest = header["vocab.sha256"]
            model_fields = {k[len("model."):]: v for k, v in header.items() if k.startswith("model.")}
            norm_fields = {k[len("norm."):]: v for k, v in header.items() if k.startswith("norm.")}
            labels = LabelSpace(**{level: tuple(header[f"labels.{level}"]) for level in LEVELS})
            names = header["params"]
            shapes = {name: tuple(header[f"param.{name}.shape"]) for name in names}
        except KeyError as e:
            raise CheckpointError(f"{source}: header is missing {e.args[0]}", {"key": e.args[0]}) from None

        vocab = Vocabulary(tokens)
        if not verify_digest(vocab.to_bytes(), stored_digest):
            raise CheckpointError(f"{source}: vocabulary hash mismatch inside checkpoint",
                                  {"stored": stored_digest, "computed": vocab.digest()})
        if vocab_digest is not None and vocab_digest != stored_digest:
            raise CheckpointError(f"{source}: vocabulary hash mismatch",
                                  {"checkpoint": stored_digest, "vocab": vocab_digest})

        params: Dict[str, np.ndarray] = {}
        for name in names:
            params[name], offset = _read_param(data, offset, name, shapes[name], source)
        if offset != len(data):
            raise CheckpointError(f"{source}: {len(data) - offset} trailing bytes")

        meta = {k[len("meta."):]: v for k, v in header.items() if k.startswith("meta.")}
        return cls(config=ModelConfig(**model_fields), params=params, vocab=vocab, labels=labels,
                   seed=int(header.get("seed", 0)), norm=NormConfig(**norm_fields), meta=meta)

    @classmethod
    def load(cls, path, vocab_digest: Optional[str] = None) -> "ModelCheckpoint":
        source = Path(path)
        if not source.is_file():
            raise InputFileError(f"checkpoint not found: {source}", source)
        checkpoint = cls.from_bytes(source.read_bytes(), vocab_digest=vocab_digest, source=str(source))
        logger.info("loaded %s checkpoint from %s", checkpoint.config.arch, source)
        return checkpoint


def _read_header(data: bytes, offset: int, source: str) -> Tuple[Dict[str, object], int]:
    end = data.find(b"\n\n", offset)
    if end < 0:
        raise CheckpointError(f"{source}: unterminated header")
    try:
        text = data[offset:end + 1].decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError(f"{source}: header is not UTF-8") from None
    header: Dict[str, object] = {}
    for line in text.splitlines():
        key, sep, raw = line.partition("=")
        if not sep:
            raise CheckpointError(f"{source}: malformed header line {line!r}")
        try:
            header[key] = json.loads(raw)
        except json.JSONDecodeError:
            raise CheckpointError(f"{source}: malformed value for {key}", {"key": key}) from None
    return header, end + 2


def _read_param(data: bytes, offset: int, name: str, shape: Tuple[int, ...],
                source: str) -> Tuple[np.ndarray, int]:
    expected_name = name.encode("utf-8") + b"\n"
    if data[offset:offset + len(expected_name)] != expected_name:
        raise CheckpointError(f"{source}: expected parameter {name}", {"param": name})
    offset += len(expected_name)
    if offset + 4 > len(data):
        raise CheckpointError(f"{source}: truncated at parameter {name}", {"param": name})
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if count != int(np.prod(shape, dtype=np.int64)):
        raise CheckpointError(f"{source}: parameter {name} holds {count} values, shape {shape}",
                              {"param": name, "count": count})
    size = 4 * count
    if offset + size > len(data):
        raise CheckpointError(f"{source}: truncated at parameter {name}", {"param": name})
    array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64).reshape(shape)
    return array, offset + size
