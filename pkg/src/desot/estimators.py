"""scikit-learn style wrappers around the functional core.

>>> clf = DESOTClassifier(n_members=5, hidden=(64,), epochs=10).fit(X_frames, y)
>>> proba = clf.predict_proba(sequences)          # sequences shaped (N, T, D)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .calibration import apply_temperature, fit_temperature
from .fusion import CostCounter, de_probs, desot_probs, mc_dropout_probs, round_robin_schedule, sm_probs
from .metrics import entropy
from .nn import TrainConfig, init_model, predict_logits, softmax, train
from .ood import OodSplit, fit_threshold

MODES = ("sm", "de", "desot", "mcdropout")


def _encode_labels(y):
    classes, encoded = np.unique(y, return_inverse=True)
    return classes, encoded


def _check_sequences(X, n_features):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ValueError(f"expected sequences shaped (N, T, D), got {X.shape}")
    check_array(X.reshape(-1, X.shape[-1]))
    if X.shape[-1] != n_features:
        raise ValueError(f"X has {X.shape[-1]} features, estimator was fitted with {n_features}")
    return X


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """One feed-forward member trained with AdamW and a cosine schedule."""

    def __init__(self, hidden=(128, 64), dropout_rate=0.0, epochs=30, batch_size=256,
                 learning_rate=5e-4, weight_decay=0.01, random_state=0):
        self.hidden = hidden
        self.dropout_rate = dropout_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _train_config(self, seed):
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.weight_decay,
                           seed, self.dropout_rate)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = _encode_labels(y)
        self.n_features_in_ = X.shape[1]
        dims = [X.shape[1], *self.hidden, len(self.classes_)]
        model = init_model(dims, self.dropout_rate, self.random_state)
        self.model_, self.loss_curve_ = train(model, X, encoded, self._train_config(self.random_state))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return predict_logits(self.model_, X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class DESOTClassifier(ClassifierMixin, BaseEstimator):
    """Sequence classifier that fuses per-frame predictions over time.

    ``fit`` takes single frames (n, D); ``predict_proba`` takes sequences
    (N, T, D).  ``mode`` picks the fusion strategy; ``desot`` runs one member
    per frame on a round-robin schedule.
    """

    def __init__(self, mode="desot", n_members=5, schedule_offset=0, hidden=(128, 64),
                 dropout_rate=0.2, epochs=30, batch_size=256, learning_rate=5e-4,
                 weight_decay=0.01, random_state=0, temperature=1.0):
        self.mode = mode
        self.n_members = n_members
        self.schedule_offset = schedule_offset
        self.hidden = hidden
        self.dropout_rate = dropout_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.random_state = random_state
        self.temperature = temperature

    def fit(self, X, y):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = _encode_labels(y)
        self.n_features_in_ = X.shape[1]
        dims = [X.shape[1], *self.hidden, len(self.classes_)]
        n_models = 1 if self.mode in ("sm", "mcdropout") else self.n_members
        rate = self.dropout_rate if self.mode == "mcdropout" else 0.0
        self.members_ = []
        for m in range(n_models):
            seed = self.random_state + m
            cfg = TrainConfig(self.epochs, self.batch_size, self.learning_rate,
                              self.weight_decay, seed, rate)
            self.members_.append(train(init_model(dims, rate, seed), X, encoded, cfg)[0])
        return self

    def predict_proba(self, X, counter: CostCounter | None = None, rng_keys=None):
        check_is_fitted(self, "members_")
        X = _check_sequences(X, self.n_features_in_)
        t = float(self.temperature)
        if self.mode == "sm":
            return sm_probs(self.members_[0], X, counter, t)
        if self.mode == "de":
            return de_probs(self.members_, X, counter, t)
        if self.mode == "desot":
            schedule = round_robin_schedule(X.shape[1], len(self.members_), self.schedule_offset)
            return desot_probs(self.members_, X, schedule, counter, t)
        if rng_keys is None:
            rng_keys = [(self.random_state, i) for i in range(len(X))]
        return mc_dropout_probs(self.members_[0], X, rng_keys, counter, t)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class TemperatureScaler(TransformerMixin, BaseEstimator):
    """Fits one temperature on logits (n, C) or member logits (M, n, C).

    ``transform`` returns calibrated probabilities; for member logits the
    member softmaxes are averaged.
    """

    def __init__(self, joint_ensemble=False):
        self.joint_ensemble = joint_ensemble

    def fit(self, logits, y):
        mode = "joint_ensemble" if self.joint_ensemble else "single"
        fit = fit_temperature(np.asarray(logits, dtype=np.float64), np.asarray(y), mode)
        self.temperature_ = fit.value
        self.nll_ = fit.nll
        self.nll_at_one_ = fit.nll_at_one
        return self

    def transform(self, logits):
        check_is_fitted(self, "temperature_")
        logits = np.asarray(logits, dtype=np.float64)
        probs = softmax(apply_temperature(logits, self.temperature_))
        return probs.mean(axis=0) if self.joint_ensemble else probs


class EntropyThresholdDetector(BaseEstimator):
    """Flags inputs as out-of-distribution when predictive entropy exceeds a threshold.

    ``fit`` takes class distributions and a boolean OOD indicator; the
    threshold maximises F1 on that data.
    """

    def fit(self, probs, is_ood):
        h = entropy(check_array(probs, dtype=np.float64))
        split = OodSplit(h, np.asarray(is_ood, dtype=bool), np.arange(len(h)), role="fit")
        result = fit_threshold(split)
        self.threshold_ = result.threshold
        self.fit_f1_ = result.f1
        return self

    def score_samples(self, probs):
        return entropy(check_array(probs, dtype=np.float64))

    def predict(self, probs):
        check_is_fitted(self, "threshold_")
        return self.score_samples(probs) > self.threshold_
