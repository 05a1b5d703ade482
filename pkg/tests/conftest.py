from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prodcat.corpus import ColumnMap, Corpus, LabeledRecord, label_space
from prodcat.models import ModelConfig
from prodcat.vocab import build_vocabulary

settings.register_profile("prodcat", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("prodcat")

HEADER = ";".join(ColumnMap().headers())

# (item, segment, category, subcategory, product)
SAMPLE_ROWS = [
    ("Leite Integral Parmalat 1l", "alimentos", "laticinios", "leite", "leite integral"),
    ("leite desnatado italac 1l", "alimentos", "laticinios", "leite", "leite desnatado"),
    ("Queijo Mussarela fatiado 200g", "alimentos", "laticinios", "queijo", "queijo mussarela"),
    ("sab johns baby 80ghora sono.", "higiene", "banho", "sabonete", "sabonete infantil"),
    ("Sabonete Dove original 90g", "higiene", "banho", "sabonete", "sabonete adulto"),
    ("shampoo seda ceramidas 325ml", "higiene", "cabelo", "shampoo", "shampoo"),
    ("Cerveja Skol lata 350ml", "bebidas", "alcoolicas", "cerveja", "cerveja pilsen"),
    ("refrigerante coca cola 2l", "bebidas", "nao alcoolicas", "refrigerante", "refrigerante cola"),
]


def write_csv(path: Path, rows, header: str = HEADER, delimiter: str = ";") -> Path:
    lines = [header] + [delimiter.join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def make_corpus(rows) -> Corpus:
    """Corpus from already-normalized (item, seg, cat, sub, prod) tuples."""
    records = tuple(
        LabeledRecord(item_text=item, segment=seg.upper(), category=cat.upper(),
                      subcategory=sub.upper(), product=prod.upper())
        for item, seg, cat, sub, prod in rows
    )
    return Corpus(records, tuple(f"mem:{i}" for i in range(len(records))))


@pytest.fixture
def raw_csv(tmp_path) -> Path:
    return write_csv(tmp_path / "raw.csv", SAMPLE_ROWS)


@pytest.fixture
def toy_corpus() -> Corpus:
    rows = [
        ("leite integral", "alimentos", "laticinios", "leite", "leite integral"),
        ("leite desnatado", "alimentos", "laticinios", "leite", "leite desnatado"),
        ("queijo mussarela", "alimentos", "laticinios", "queijo", "queijo mussarela"),
        ("sabonete infantil", "higiene", "banho", "sabonete", "sabonete infantil"),
        ("shampoo seda", "higiene", "cabelo", "shampoo", "shampoo"),
        ("cerveja lata", "bebidas", "alcoolicas", "cerveja", "cerveja pilsen"),
    ]
    return make_corpus(rows)


@pytest.fixture
def toy_vocab(toy_corpus):
    return build_vocabulary(toy_corpus.texts(), max_words=100)


@pytest.fixture
def toy_labels(toy_corpus):
    return label_space(toy_corpus)


def small_config(arch: str = "bilstm", vocab_size: int = 12, max_len: int = 5,
                 head_sizes=(2, 3, 3, 4), **overrides) -> ModelConfig:
    n_seg, n_cat, n_sub, n_prod = head_sizes
    values = dict(
        arch=arch, vocab_size=vocab_size, max_len=max_len, n_seg=n_seg, n_cat=n_cat,
        n_sub=n_sub, n_prod=n_prod, head_dropout=0.0, spatial_dropout_rate=0.0,
    )
    if arch == "bilstm":
        values.update(embed_dim=4, lstm_layers=((3, 0.0), (3, 0.0)))
    else:
        values.update(embed_dim=4, d_model=4, num_heads=2, d_k=2, ff_dim=6, num_blocks=1)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
