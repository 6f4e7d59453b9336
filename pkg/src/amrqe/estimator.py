"""scikit-learn style wrappers: a featurizer for (graph, sentence) pairs and the score regressor."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import model as M
from .graph import AmrGraph
from .metrics import N_SCORES, ScoreVector
from .preprocess import (DEFAULT_MAX_LEN, DEFAULT_MIN_FREQ, DepTree, EncodedInput, LinearizedInput, Vocab,
                         build_vocab, encode, flat_tree, linearize_instance, tokenize)


def check_instances(X) -> list:
    """Validate a sequence of (AmrGraph, DepTree | sentence) pairs or LinearizedInput records."""
    if isinstance(X, (str, bytes)) or not hasattr(X, "__len__"):
        raise TypeError("X must be a sequence of instances")
    items = list(X)
    if not items:
        raise ValueError("X is empty")
    for i, x in enumerate(items):
        if isinstance(x, (LinearizedInput, EncodedInput)):
            continue
        if not (isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], AmrGraph)
                and isinstance(x[1], (DepTree, str))):
            raise TypeError(f"instance {i}: expected (AmrGraph, DepTree or sentence), got {type(x).__name__}")
    return items


def check_targets(y, n: int | None = None) -> np.ndarray:
    """Validate an (n, 36) score matrix with values in [0, 1]."""
    if len(y) and isinstance(y[0], ScoreVector):
        y = [v.to_array() for v in y]
    arr = check_array(y, dtype=np.float64, ensure_2d=True)
    if arr.shape[1] != N_SCORES:
        raise ValueError(f"targets need {N_SCORES} columns, got {arr.shape[1]}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{n} instances but {arr.shape[0]} target rows")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("target scores must lie in [0, 1]")
    return arr


class AmrFeaturizer(TransformerMixin, BaseEstimator):
    """Linearize instances and map them to padded id arrays using a vocabulary learned in ``fit``."""

    def __init__(self, min_freq: int = DEFAULT_MIN_FREQ, max_len: int = DEFAULT_MAX_LEN, use_dep: bool = True):
        self.min_freq = min_freq
        self.max_len = max_len
        self.use_dep = use_dep

    def _linearize(self, x) -> LinearizedInput:
        if isinstance(x, LinearizedInput):
            return x
        graph, dep = x
        if isinstance(dep, str):
            dep = flat_tree(tokenize(dep))
        return linearize_instance(graph, dep, use_dep=self.use_dep)

    def fit(self, X, y=None):
        items = check_instances(X)
        if any(isinstance(x, EncodedInput) for x in items):
            raise TypeError("fit needs raw or linearized instances, not encoded ones")
        self.vocab_ = build_vocab([self._linearize(x) for x in items], self.min_freq, self.max_len)
        return self

    def transform(self, X) -> list[EncodedInput]:
        check_is_fitted(self, "vocab_")
        return [x if isinstance(x, EncodedInput) else encode(self._linearize(x), self.vocab_)
                for x in check_instances(X)]


class AccuracyPredictor(RegressorMixin, BaseEstimator):
    """Multi-output regressor predicting the 36 evaluation scores of a parse without its gold graph.

    ``fit`` takes raw instances (see ``check_instances``) plus an (n, 36) target matrix. Early stopping
    uses ``(X_dev, y_dev)`` when given, else a seeded ``validation_fraction`` hold-out.
    """

    def __init__(self, embed_dim: int = 128, hidden_dim: int = 128, lstm_layers: int = 2,
                 use_dep: bool = True, use_pointers: bool = True, hierarchical: bool = True,
                 multitask: bool = True, lambda1: float = 0.2, lambda2: float = 1.0, lr: float = 1e-3,
                 epochs: int = 20, batch_size: int = 16, min_freq: int = DEFAULT_MIN_FREQ,
                 max_len: int = DEFAULT_MAX_LEN, validation_fraction: float = 0.15, seed: int = 0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.lstm_layers = lstm_layers
        self.use_dep = use_dep
        self.use_pointers = use_pointers
        self.hierarchical = hierarchical
        self.multitask = multitask
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.min_freq = min_freq
        self.max_len = max_len
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _model_config(self, vocab: Vocab) -> M.ModelConfig:
        return M.ModelConfig(
            n_tokens=vocab.n_tokens, n_pointers=vocab.n_pointers, n_senses=vocab.n_senses,
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim, lstm_layers=self.lstm_layers,
            use_dep=self.use_dep, use_pointers=self.use_pointers, hierarchical=self.hierarchical,
            multitask=self.multitask, lambda1=self.lambda1, lambda2=self.lambda2, max_len=self.max_len,
            seed=self.seed)

    def fit(self, X, y, X_dev=None, y_dev=None):
        items = check_instances(X)
        y = check_targets(y, len(items))
        if X_dev is None:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError("validation_fraction must lie in (0, 1) when no dev set is given")
            order = np.random.default_rng(self.seed).permutation(len(items))
            n_dev = max(1, int(round(self.validation_fraction * len(items))))
            if n_dev >= len(items):
                raise ValueError("too few instances to hold out a dev set")
            dev_idx, tr_idx = order[:n_dev], np.sort(order[n_dev:])
            X_dev, y_dev = [items[i] for i in dev_idx], y[dev_idx]
            items, y = [items[i] for i in tr_idx], y[tr_idx]
        else:
            X_dev = check_instances(X_dev)
            y_dev = check_targets(y_dev, len(X_dev))
        self.featurizer_ = AmrFeaturizer(self.min_freq, self.max_len, self.use_dep).fit(items)
        model = M.init_model(self._model_config(self.featurizer_.vocab_))
        model.vocab = self.featurizer_.vocab_.to_dict()
        self.model_, self.history_ = M.train(
            model, self.featurizer_.transform(items), y, self.featurizer_.transform(X_dev), y_dev,
            lr=self.lr, epochs=self.epochs, batch_size=self.batch_size, seed=self.seed)
        self.n_outputs_ = N_SCORES
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return M.predict_all(self.model_, self.featurizer_.transform(X))

    def score(self, X, y, sample_weight=None) -> float:
        """Pearson correlation between predicted and gold Smatch F1, the early-stopping criterion."""
        y = check_targets(y)
        pred = self.predict(X)
        return M._pearson_or_nan(pred[:, 2], y[:, 2])

    @classmethod
    def from_model(cls, model: M.Model) -> "AccuracyPredictor":
        """Wrap a trained (e.g. loaded) model; the vocabulary must be stored in it."""
        if model.vocab is None:
            raise ValueError("model carries no vocabulary")
        c = model.config
        est = cls(embed_dim=c.embed_dim, hidden_dim=c.hidden_dim, lstm_layers=c.lstm_layers, use_dep=c.use_dep,
                  use_pointers=c.use_pointers, hierarchical=c.hierarchical, multitask=c.multitask,
                  lambda1=c.lambda1, lambda2=c.lambda2, max_len=c.max_len, seed=c.seed)
        vocab = Vocab.from_dict(model.vocab)
        est.featurizer_ = AmrFeaturizer(vocab.min_freq, vocab.max_len, c.use_dep)
        est.featurizer_.vocab_ = vocab
        est.model_, est.history_, est.n_outputs_ = model, [], N_SCORES
        return est


def predict_scores(est: AccuracyPredictor, X: Sequence) -> list[ScoreVector]:
    return [ScoreVector.from_array(row) for row in est.predict(X)]
