import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from amrqe import datagen as D
from amrqe.estimator import AccuracyPredictor, AmrFeaturizer, check_instances, check_targets, predict_scores
from amrqe.model import load_model, save_model
from amrqe.preprocess import EncodedInput, flat_tree, linearize_instance


@pytest.fixture(scope="module")
def data():
    corpus = D.gen_training_corpus(24, D.default_systems(), seed=2)
    X = [(x.pred, x.dep) for x in corpus.instances]
    y = np.array([x.scores.to_array() for x in corpus.instances])
    return X, y


def small(**kw):
    base = dict(embed_dim=8, hidden_dim=6, epochs=2, min_freq=1, max_len=40, seed=1)
    base.update(kw)
    return AccuracyPredictor(**base)


def test_get_params_and_clone():
    est = small(lambda1=0.5)
    params = est.get_params()
    assert params["lambda1"] == 0.5 and params["hidden_dim"] == 6
    twin = clone(est)
    assert twin.get_params() == params
    assert twin is not est
    est.set_params(lr=0.01)
    assert est.lr == 0.01


def test_featurizer_fit_transform(data):
    X, _ = data
    f = AmrFeaturizer(min_freq=1, max_len=40)
    with pytest.raises(NotFittedError):
        f.transform(X[:2])
    enc = f.fit_transform(X)
    assert len(enc) == len(X)
    assert all(isinstance(e, EncodedInput) for e in enc)
    assert enc[0].amr_tokens.shape == (40,)
    lin = [linearize_instance(g, d) for g, d in X[:3]]
    assert all(np.array_equal(a.amr_tokens, b.amr_tokens) for a, b in zip(f.transform(lin), enc[:3]))


def test_featurizer_accepts_plain_sentences(data):
    X, _ = data
    f = AmrFeaturizer(min_freq=1).fit(X)
    g, dep = X[0]
    out = f.transform([(g, " ".join(dep.forms))])[0]
    want = f.transform([linearize_instance(g, flat_tree(dep.forms))])[0]
    assert np.array_equal(out.dep_tokens, want.dep_tokens)
    assert out.dep_length == want.dep_length


def test_input_validation():
    with pytest.raises(TypeError):
        check_instances("not a list")
    with pytest.raises(ValueError):
        check_instances([])
    with pytest.raises(TypeError):
        check_instances([(1, 2)])
    with pytest.raises(ValueError):
        check_targets(np.zeros((2, 35)))
    with pytest.raises(ValueError):
        check_targets(np.full((2, 36), 1.5))
    with pytest.raises(ValueError):
        check_targets(np.zeros((2, 36)), n=3)
    assert check_targets(np.zeros((2, 36))).shape == (2, 36)


def test_predict_before_fit(data):
    with pytest.raises(NotFittedError):
        small().predict(data[0][:2])


def test_fit_predict_score(data):
    X, y = data
    est = small().fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (len(X), 36)
    assert np.all((pred > 0) & (pred < 1))
    assert len(est.history_) == 2
    assert -1.0 <= est.score(X, y) <= 1.0
    vecs = predict_scores(est, X[:2])
    assert vecs[0]["Smatch"].f1 == pytest.approx(pred[0, 2])


def test_fit_is_seeded(data):
    X, y = data
    a, b = small().fit(X, y), small().fit(X, y)
    assert np.array_equal(a.predict(X[:5]), b.predict(X[:5]))


def test_explicit_dev_set(data):
    X, y = data
    est = small(epochs=1).fit(X[:60], y[:60], X[60:], y[60:])
    assert len(est.history_) == 1
    with pytest.raises(ValueError):
        small().fit(X[:60], y[:60], X[60:], y[:3])


def test_bad_validation_fraction(data):
    X, y = data
    with pytest.raises(ValueError):
        small(validation_fraction=0.0).fit(X, y)


def test_from_model_roundtrip(data, tmp_path):
    X, y = data
    est = small(epochs=1).fit(X, y)
    save_model(est.model_, tmp_path / "m.bin")
    back = AccuracyPredictor.from_model(load_model(tmp_path / "m.bin"))
    assert np.array_equal(back.predict(X[:10]), est.predict(X[:10]))
    assert back.get_params()["hidden_dim"] == 6
