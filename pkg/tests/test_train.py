import numpy as np
import pytest

from prodcat.autodiff import Tensor
from prodcat.corpus import LEVELS, Corpus, label_space
from prodcat.models import build_model
from prodcat.train import (HISTORY_COLUMNS, UNCLASSIFIABLE, Adam, EarlyStopping, OptimizerState, TrainConfig,
                           adam_step, check_disjoint, encode_split, evaluate, majority_baseline, predict,
                           retrain_with_val, train)
from prodcat.train import trainer
from prodcat.utils.errors import CheckpointError, DataValidationError, NumericalError
from prodcat.vocab import build_vocabulary

from .conftest import make_corpus, small_config

MAX_LEN = 3


def _relabel(corpus: Corpus, prefix: str) -> Corpus:
    return Corpus(corpus.records, tuple(f"{prefix}:{i}" for i in range(len(corpus))))


@pytest.fixture
def splits(toy_corpus, toy_vocab, toy_labels):
    train_split = encode_split(toy_corpus, toy_vocab, toy_labels, MAX_LEN)
    val_split = encode_split(_relabel(toy_corpus, "val"), toy_vocab, toy_labels, MAX_LEN)
    return train_split, val_split


def _model(toy_vocab, toy_labels, seed=0, **overrides):
    config = small_config("bilstm", vocab_size=toy_vocab.size, max_len=MAX_LEN,
                          head_sizes=toy_labels.sizes(), **overrides)
    return build_model(config, seed=seed)


def _config(**overrides):
    values = dict(lr=0.05, batch_size=2, max_epochs=3, early_stop_patience=3, loss="ce", seed=7)
    values.update(overrides)
    return TrainConfig.for_arch("bilstm", **values)


# optimizer

def test_adam_first_step_moves_by_learning_rate():
    state = OptimizerState(lr=0.1)
    updated = adam_step({"w": np.array([1.0, -2.0])}, {"w": np.array([0.5, -3.0])}, state)
    np.testing.assert_allclose(updated["w"], [0.9, -1.9], atol=1e-6)
    assert state.t == 1


def test_adam_two_step_recurrence():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    state = OptimizerState(lr=lr, beta1=b1, beta2=b2, eps=eps)
    p = np.array([0.3])
    g1, g2 = np.array([0.2]), np.array([-0.1])
    p1 = adam_step({"w": p}, {"w": g1}, state)["w"]
    p2 = adam_step({"w": p1}, {"w": g2}, state)["w"]

    m = (1 - b1) * g1
    v = (1 - b2) * g1 ** 2
    expected = p - lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2 ** 2
    expected = expected - lr * (m / (1 - b1 ** 2)) / (np.sqrt(v / (1 - b2 ** 2)) + eps)
    np.testing.assert_allclose(p2, expected, rtol=1e-12)


def _scalar_adam(p, grads, lr, b1, b2, eps, weight_decay):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p = p - lr * weight_decay * p
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


@pytest.mark.parametrize("weight_decay,decoupled", [(0.0, False), (0.05, True)])
def test_adam_matches_scalar_recurrence(weight_decay, decoupled):
    rng = np.random.default_rng(99)
    for _ in range(100):
        lr = float(rng.uniform(1e-4, 0.1))
        start = float(rng.normal())
        grads = rng.normal(scale=2.0, size=10)
        state = OptimizerState(lr=lr, weight_decay=weight_decay, decoupled=decoupled)
        params = {"w": np.array([start])}
        for g in grads:
            params = adam_step(params, {"w": np.array([g])}, state)
        expected = _scalar_adam(start, grads, lr, 0.9, 0.999, 1e-8, weight_decay)
        assert abs(params["w"][0] - expected) <= 1e-12
        assert state.t == 10


def test_adamw_decays_weights_without_gradient_signal():
    state = OptimizerState(lr=0.1, weight_decay=0.5, decoupled=True)
    updated = adam_step({"w": np.array([2.0, -4.0])}, {"w": np.zeros(2)}, state)
    np.testing.assert_allclose(updated["w"], [1.9, -3.8])


def test_non_finite_gradient_leaves_state_untouched():
    state = OptimizerState(lr=0.1)
    params = {"a": np.array([1.0]), "b": np.array([2.0])}
    with pytest.raises(NumericalError):
        adam_step(params, {"a": np.array([0.1]), "b": np.array([np.nan])}, state)
    assert state.t == 0
    assert state.m == {} and state.v == {}


def test_gradient_clipping_scales_global_norm():
    w = Tensor(np.zeros(2), requires_grad=True)
    w.grad = np.array([3.0, 4.0])
    optimizer = Adam({"w": w}, lr=0.1)
    assert optimizer.clip_grad_norm(1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(w.grad, [0.6, 0.8])


def test_early_stopping_keeps_earliest_tie():
    stopper = EarlyStopping(patience=2)
    assert not stopper.update(1, 0.5)
    assert not stopper.update(2, 0.5)
    assert stopper.update(3, 0.4)
    assert stopper.best_epoch == 1


@pytest.mark.parametrize("patience", [3, 10])
def test_train_stops_patience_epochs_after_best(monkeypatch, splits, toy_vocab, toy_labels, patience):
    # improves to epoch 4, then ties and drops only
    scripted = [0.1, 0.3, 0.2, 0.6] + [0.6, 0.5] * patience + [0.9] * 5
    seen = {}

    def scripted_f1(model, split, labels, batch_size=256):
        epoch = len(seen) + 1
        seen[epoch] = {name: p.data.astype(np.float32) for name, p in model.params.items()}
        return (scripted[epoch - 1],) * 4

    monkeypatch.setattr(trainer, "validation_f1", scripted_f1)
    train_split, val_split = splits
    model = _model(toy_vocab, toy_labels)
    result = train(model, train_split, val_split, _config(max_epochs=len(scripted), early_stop_patience=patience),
                   toy_vocab, toy_labels)
    assert result.best_epoch == 4
    assert result.epochs_run == 4 + patience
    assert len(result.history) == 4 + patience
    last = seen[4 + patience]
    assert any(not np.array_equal(seen[4][name], last[name]) for name in last)
    for name, array in result.checkpoint.params.items():
        np.testing.assert_array_equal(array, seen[4][name])
        np.testing.assert_array_equal(model.params[name].data.astype(np.float32), seen[4][name])


def test_train_config_defaults_per_architecture():
    transformer = TrainConfig.for_arch("transformer", lr=None)
    assert transformer.lr == 5e-5
    assert transformer.optimizer == "adamw"
    assert transformer.focal_config().gamma_per_head == (2.0, 1.0, 1.0, 2.0)
    assert TrainConfig.for_arch("bilstm", loss="ce").focal_config() is None


# training

def test_training_is_deterministic(splits, toy_vocab, toy_labels):
    train_split, val_split = splits
    first = train(_model(toy_vocab, toy_labels), train_split, val_split, _config(), toy_vocab, toy_labels)
    second = train(_model(toy_vocab, toy_labels), train_split, val_split, _config(), toy_vocab, toy_labels)
    assert first.history == second.history
    assert first.best_epoch == second.best_epoch
    for name, array in first.checkpoint.params.items():
        np.testing.assert_array_equal(array, second.checkpoint.params[name])
        assert array.dtype == np.float32


def test_training_records_history(splits, toy_vocab, toy_labels, tmp_path):
    train_split, val_split = splits
    result = train(_model(toy_vocab, toy_labels), train_split, val_split, _config(), toy_vocab, toy_labels)
    assert [r.epoch for r in result.history] == list(range(1, result.epochs_run + 1))
    assert result.checkpoint.meta["best_epoch"] == result.best_epoch
    assert not result.diverged
    path = result.write_history(tmp_path / "history.csv")
    assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(HISTORY_COLUMNS)


def test_overlapping_splits_rejected(splits, toy_vocab, toy_labels):
    train_split, _ = splits
    with pytest.raises(DataValidationError):
        check_disjoint(train_split, {"validation": train_split})
    with pytest.raises(DataValidationError):
        train(_model(toy_vocab, toy_labels), train_split, train_split, _config(), toy_vocab, toy_labels)


def test_empty_training_split_rejected(toy_corpus, toy_vocab, toy_labels):
    empty = encode_split(Corpus((), ()), toy_vocab, toy_labels, MAX_LEN)
    with pytest.raises(DataValidationError):
        train(_model(toy_vocab, toy_labels), empty, None, _config(), toy_vocab, toy_labels)


def test_retrain_runs_fixed_epochs_on_train_and_val(splits, toy_vocab, toy_labels):
    train_split, val_split = splits
    result = retrain_with_val(_model(toy_vocab, toy_labels), train_split, val_split, _config(), toy_vocab,
                              toy_labels, epochs=2)
    assert result.epochs_run == 2
    assert result.best_epoch == 2
    with pytest.raises(DataValidationError):
        retrain_with_val(_model(toy_vocab, toy_labels), train_split, val_split, _config(), toy_vocab,
                         toy_labels, epochs=0)


@pytest.mark.slow
def test_overfits_a_tiny_corpus(splits, toy_corpus, toy_vocab, toy_labels):
    train_split, val_split = splits
    model = _model(toy_vocab, toy_labels, embed_dim=8, lstm_layers=((8, 0.0),))
    cfg = _config(batch_size=6, max_epochs=150, early_stop_patience=20)
    result = train(model, train_split, val_split, cfg, toy_vocab, toy_labels)
    assert result.history[result.best_epoch - 1].val_macro_f1_mean == pytest.approx(1.0)
    report, _ = evaluate(result.checkpoint, toy_corpus)
    assert report.macro_f1_mean == pytest.approx(1.0)


NOISE = [f"ruido{a}{b}" for a in "abcde" for b in "xyz"]
# product -> subcategory -> category -> segment
SUBCATEGORY = [0, 0, 1, 1, 2, 3, 4, 5, 6, 7, 8, 8]
CATEGORY = [0, 0, 1, 1, 2, 3, 4, 4, 5]
SEGMENT = [0, 0, 1, 1, 2, 2]


def _synthetic_corpus(n: int, seed: int) -> Corpus:
    """Each product owns two keywords; every string holds one of them among noise words."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        product = int(rng.integers(12))
        words = list(rng.choice(NOISE, size=int(rng.integers(1, 4))))
        words.insert(int(rng.integers(len(words) + 1)), f"produto{'abcdefghijkl'[product]}{'mn'[rng.integers(2)]}")
        sub = SUBCATEGORY[product]
        cat = CATEGORY[sub]
        rows.append((" ".join(words), f"seg{SEGMENT[cat]}", f"cat{cat}", f"sub{sub}", f"prod{product}"))
    return make_corpus(rows)


def _micro_bilstm(vocab, labels, max_len):
    config = small_config("bilstm", vocab_size=vocab.size, max_len=max_len, head_sizes=labels.sizes(),
                          embed_dim=16, lstm_layers=((16, 0.0),))
    return build_model(config, seed=11)


@pytest.mark.slow
def test_learns_a_synthetic_hierarchy_with_focal_loss():
    corpus = _synthetic_corpus(2000, seed=21)
    train_corpus = Corpus(corpus.records[:1400], corpus.provenance[:1400])
    val_corpus = Corpus(corpus.records[1400:1700], corpus.provenance[1400:1700])
    test_corpus = Corpus(corpus.records[1700:], corpus.provenance[1700:])
    vocab = build_vocabulary(train_corpus.texts(), max_words=100)
    labels = label_space(train_corpus)
    assert labels.sizes() == (3, 6, 9, 12)
    train_split = encode_split(train_corpus, vocab, labels, 6)
    val_split = encode_split(val_corpus, vocab, labels, 6)

    cfg = TrainConfig.for_arch("bilstm", loss="focal", lr=0.01, batch_size=32, max_epochs=40,
                               early_stop_patience=8, seed=3)
    result = train(_micro_bilstm(vocab, labels, 6), train_split, val_split, cfg, vocab, labels)
    report, unseen = evaluate(result.checkpoint, test_corpus)
    assert unseen == []
    assert report.macro_f1_mean >= 0.95


@pytest.mark.slow
def test_overfits_64_samples():
    corpus = _synthetic_corpus(64, seed=5)
    vocab = build_vocabulary(corpus.texts(), max_words=100)
    labels = label_space(corpus)
    split = encode_split(corpus, vocab, labels, 6)
    cfg = TrainConfig.for_arch("bilstm", loss="ce", lr=0.02, batch_size=16, max_epochs=600, seed=4)
    result = train(_micro_bilstm(vocab, labels, 6), split, None, cfg, vocab, labels)
    assert result.history[-1].train_loss < 0.01
    report, _ = evaluate(result.checkpoint, corpus)
    assert report.macro_f1_mean == 1.0


# inference

@pytest.fixture
def checkpoint(splits, toy_vocab, toy_labels):
    train_split, val_split = splits
    return train(_model(toy_vocab, toy_labels), train_split, val_split, _config(max_epochs=1),
                 toy_vocab, toy_labels).checkpoint


def test_evaluate_reports_every_head(checkpoint, toy_corpus):
    report, unseen = evaluate(checkpoint, toy_corpus)
    assert report.n_samples == len(toy_corpus)
    assert set(report.heads) == set(LEVELS)
    assert unseen == []
    with pytest.raises(CheckpointError):
        evaluate(checkpoint, toy_corpus, vocab_digest="0" * 64)


def test_predict_returns_one_label_per_level(checkpoint):
    prediction = predict(checkpoint, "LEITE Integral!")
    assert prediction.classifiable
    assert prediction.normalized == "leite integral"
    assert set(prediction.picks) == set(LEVELS)
    for level, pick in prediction.picks.items():
        assert pick.label in checkpoint.labels.labels(level)
        assert 0.0 < pick.probability <= 1.0


def test_empty_text_is_unclassifiable(checkpoint):
    prediction = predict(checkpoint, "!!! ...")
    assert not prediction.classifiable
    assert prediction.as_dict()["result"] == UNCLASSIFIABLE


def test_majority_baseline(toy_corpus, toy_labels):
    report = majority_baseline(toy_corpus, toy_corpus, toy_labels)
    # every record predicted ALIMENTOS: F1 2/3 for that class, 0 for the other two
    assert report.heads["segment"].macro_f1 == pytest.approx(2 / 9)
    with pytest.raises(DataValidationError):
        majority_baseline(Corpus((), ()), toy_corpus, toy_labels)
