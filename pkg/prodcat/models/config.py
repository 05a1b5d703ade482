from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

Arch = Literal["bilstm", "transformer"]
Pooling = Literal["first", "mean"]

DEFAULT_HEAD_DROPOUT = {"bilstm": 0.2, "transformer": 0.5}


def _parse_layers(value):
    """Accept ``"100:0.2,200:0.2"``, ``"100,200"`` or a list of (units, dropout)."""
    if isinstance(value, str):
        layers = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            units, _, rate = part.partition(":")
            layers.append((int(units), float(rate) if rate else 0.2))
        return tuple(layers)
    return tuple((int(u), float(r)) for u, r in value)


class ModelOptions(BaseModel):
    """Architecture knobs settable from the config file (``model.*`` keys)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    arch: Arch = "bilstm"
    embed_dim: int = 100
    spatial_dropout_rate: float = 0.2
    lstm_layers: Tuple[Tuple[int, float], ...] = ((100, 0.2), (200, 0.2))
    num_heads: int = 4
    d_model: int = 64
    ff_dim: int = 128
    num_blocks: int = 2
    head_dropout: Optional[float] = None
    pooling: Pooling = "first"
    positional: bool = True

    @field_validator("lstm_layers", mode="before")
    @classmethod
    def _split_layers(cls, value):
        return _parse_layers(value)

    @field_validator("embed_dim", "num_heads", "d_model", "ff_dim", "num_blocks")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("must be > 0")
        return value


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    arch: Arch
    vocab_size: int
    embed_dim: int
    max_len: int
    spatial_dropout_rate: float = 0.2
    lstm_layers: Tuple[Tuple[int, float], ...] = ((100, 0.2), (200, 0.2))
    num_heads: int = 4
    d_model: int = 64
    d_k: int = 16
    ff_dim: int = 128
    num_blocks: int = 2
    head_dropout: float = 0.2
    pooling: Pooling = "first"
    positional: bool = True
    n_seg: int
    n_cat: int
    n_sub: int
    n_prod: int

    @field_validator("lstm_layers", mode="before")
    @classmethod
    def _split_layers(cls, value):
        return _parse_layers(value)

    @field_validator("vocab_size", "embed_dim", "max_len", "num_heads", "d_model", "d_k",
                     "ff_dim", "num_blocks", "n_seg", "n_cat", "n_sub", "n_prod")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("spatial_dropout_rate", "head_dropout")
    @classmethod
    def _rate(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        return value

    @model_validator(mode="after")
    def _consistent(self):
        if not self.lstm_layers:
            raise ValueError("lstm_layers must not be empty")
        for units, rate in self.lstm_layers:
            if units <= 0 or not 0.0 <= rate < 1.0:
                raise ValueError(f"invalid lstm layer ({units}, {rate})")
        if self.arch == "transformer":
            if self.num_heads * self.d_k != self.d_model:
                raise ValueError("num_heads * d_k must equal d_model")
            if self.embed_dim != self.d_model:
                raise ValueError("transformer embed_dim must equal d_model")
        return self

    @property
    def head_sizes(self) -> Tuple[int, int, int, int]:
        return (self.n_seg, self.n_cat, self.n_sub, self.n_prod)

    @classmethod
    def build(cls, options: ModelOptions, vocab_size: int, max_len: int,
              head_sizes: Tuple[int, int, int, int], embed_dim: Optional[int] = None) -> "ModelConfig":
        """Resolve config-file options against the data-dependent sizes."""
        arch = options.arch
        if arch == "transformer":
            width = options.d_model
        else:
            width = embed_dim if embed_dim is not None else options.embed_dim
        head_dropout = options.head_dropout
        if head_dropout is None:
            head_dropout = DEFAULT_HEAD_DROPOUT[arch]
        n_seg, n_cat, n_sub, n_prod = head_sizes
        return cls(
            arch=arch, vocab_size=vocab_size, embed_dim=width, max_len=max_len,
            spatial_dropout_rate=options.spatial_dropout_rate, lstm_layers=options.lstm_layers,
            num_heads=options.num_heads, d_model=options.d_model,
            d_k=max(options.d_model // options.num_heads, 1),
            ff_dim=options.ff_dim, num_blocks=options.num_blocks, head_dropout=head_dropout,
            pooling=options.pooling, positional=options.positional,
            n_seg=n_seg, n_cat=n_cat, n_sub=n_sub, n_prod=n_prod,
        )
