"""Gaussian weak classifiers over scalar Haar responses.

Each weak classifier compares two class-conditional Gaussians on one
feature response and votes +1 when the positive density is at least the
negative one. Means track incoming samples with a scalar Kalman filter;
standard deviations follow a running estimate driven by the same gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import check_labels

MEASUREMENT_VAR = 0.01
PROCESS_VAR = 1e-4
INITIAL_P = 1.0
SIGMA_MIN = 1e-3
INITIAL_MEAN = 1e-2
INITIAL_SIGMA = 1.0


@dataclass(frozen=True)
class GaussianPair:
    mu_pos: float = INITIAL_MEAN
    sigma_pos: float = INITIAL_SIGMA
    mu_neg: float = -INITIAL_MEAN
    sigma_neg: float = INITIAL_SIGMA
    p_var_pos: float = INITIAL_P
    p_var_neg: float = INITIAL_P


@dataclass(frozen=True)
class WeakClassifier:
    feature_index: int
    model: GaussianPair = field(default_factory=GaussianPair)


def _log_density(x, mu, sigma):
    return -np.log(sigma) - 0.5 * ((x - mu) / sigma) ** 2


def predict(wc: WeakClassifier, response: float) -> int:
    """+1 if the positive-class density at ``response`` is >= the negative one, else -1."""
    m = wc.model
    pos = _log_density(response, m.mu_pos, m.sigma_pos)
    neg = _log_density(response, m.mu_neg, m.sigma_neg)
    return 1 if pos >= neg else -1


def _kalman_step(mu, sigma, p, x, meas_var, proc_var, sigma_min):
    gain = p / (p + meas_var)
    mu = mu + gain * (x - mu)
    var = (1.0 - gain) * sigma**2 + gain * (x - mu) ** 2
    p = (1.0 - gain) * p + proc_var
    return mu, np.maximum(np.sqrt(var), sigma_min), p


def update_model(wc: WeakClassifier, response: float, label: int, *,
                 meas_var: float = MEASUREMENT_VAR, proc_var: float = PROCESS_VAR,
                 sigma_min: float = SIGMA_MIN) -> WeakClassifier:
    """Fold one labeled response into the matching class's Gaussian."""
    m = wc.model
    if label == 1:
        mu, sigma, p = _kalman_step(m.mu_pos, m.sigma_pos, m.p_var_pos, response,
                                    meas_var, proc_var, sigma_min)
        model = replace(m, mu_pos=float(mu), sigma_pos=float(sigma), p_var_pos=float(p))
    elif label == -1:
        mu, sigma, p = _kalman_step(m.mu_neg, m.sigma_neg, m.p_var_neg, response,
                                    meas_var, proc_var, sigma_min)
        model = replace(m, mu_neg=float(mu), sigma_neg=float(sigma), p_var_neg=float(p))
    else:
        raise ValueError(f"label must be -1 or +1, got {label!r}")
    return replace(wc, model=model)


@dataclass
class SelectorStats:
    """Correct/wrong sample counts, one cell per (selector, pool index).

    Both counters start at ``prior`` so error rates are defined from the
    first update on.
    """

    lambda_wrong: np.ndarray
    lambda_correct: np.ndarray

    @classmethod
    def empty(cls, shape, prior: float = 1.0) -> "SelectorStats":
        return cls(np.full(shape, float(prior)), np.full(shape, float(prior)))

    def copy(self) -> "SelectorStats":
        return SelectorStats(self.lambda_wrong.copy(), self.lambda_correct.copy())


def record_outcome(stats: SelectorStats, predicted, truth) -> SelectorStats:
    """Count one outcome per cell (in place); returns ``stats`` for chaining.

    ``predicted`` and ``truth`` broadcast against the count arrays.
    """
    wrong = np.asarray(predicted) != np.asarray(truth)
    stats.lambda_wrong += np.broadcast_to(wrong, stats.lambda_wrong.shape)
    stats.lambda_correct += np.broadcast_to(~wrong, stats.lambda_correct.shape)
    return stats


def record_batch(stats: SelectorStats, label_matrix, y) -> SelectorStats:
    """Add the per-column wrong/correct counts of an ``(L, M)`` prediction batch to every row."""
    wrong = (np.asarray(label_matrix) != np.asarray(y)[:, None]).sum(axis=0)
    stats.lambda_wrong += wrong
    stats.lambda_correct += len(y) - wrong
    return stats


def error_rate(stats: SelectorStats):
    return stats.lambda_wrong / (stats.lambda_wrong + stats.lambda_correct)


class GaussianWeakPool(BaseEstimator):
    """A pool of weak classifiers, one per column of the response matrix.

    ``partial_fit`` applies the same Kalman update as :func:`update_model`
    to every classifier at once, one sample at a time in row order.
    """

    def __init__(self, meas_var=MEASUREMENT_VAR, proc_var=PROCESS_VAR, sigma_min=SIGMA_MIN):
        self.meas_var = meas_var
        self.proc_var = proc_var
        self.sigma_min = sigma_min

    def _init_state(self, n):
        self.mu_pos_ = np.full(n, INITIAL_MEAN)
        self.sigma_pos_ = np.full(n, INITIAL_SIGMA)
        self.p_pos_ = np.full(n, INITIAL_P)
        self.mu_neg_ = np.full(n, -INITIAL_MEAN)
        self.sigma_neg_ = np.full(n, INITIAL_SIGMA)
        self.p_neg_ = np.full(n, INITIAL_P)
        self.n_classifiers_ = n

    def reset(self, indices):
        """Return the given classifiers to their untrained state."""
        check_is_fitted(self)
        for name, value in (("mu_pos_", INITIAL_MEAN), ("sigma_pos_", INITIAL_SIGMA),
                            ("p_pos_", INITIAL_P), ("mu_neg_", -INITIAL_MEAN),
                            ("sigma_neg_", INITIAL_SIGMA), ("p_neg_", INITIAL_P)):
            getattr(self, name)[indices] = value
        return self

    def partial_fit(self, X, y, n_classifiers=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be (n_samples, n_classifiers), got shape {X.shape}")
        y = check_labels(y)
        if len(y) != X.shape[0]:
            raise ValueError(f"{X.shape[0]} response rows but {len(y)} labels")
        if not hasattr(self, "mu_pos_"):
            self._init_state(n_classifiers or X.shape[1])
        if X.shape[1] != self.n_classifiers_:
            raise ValueError(f"expected {self.n_classifiers_} columns, got {X.shape[1]}")
        for row, label in zip(X, y):
            if label > 0:
                self.mu_pos_, self.sigma_pos_, self.p_pos_ = _kalman_step(
                    self.mu_pos_, self.sigma_pos_, self.p_pos_, row,
                    self.meas_var, self.proc_var, self.sigma_min)
            else:
                self.mu_neg_, self.sigma_neg_, self.p_neg_ = _kalman_step(
                    self.mu_neg_, self.sigma_neg_, self.p_neg_, row,
                    self.meas_var, self.proc_var, self.sigma_min)
        return self

    def fit(self, X, y):
        for attr in ("mu_pos_", "n_classifiers_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X, y)

    def predict(self, X, columns=None) -> np.ndarray:
        """``(n_samples, n_cols)`` matrix of +-1 votes.

        ``columns`` restricts prediction to those pool indices; ``X`` then
        carries only the matching response columns.
        """
        check_is_fitted(self, "mu_pos_")
        X = np.asarray(X, dtype=np.float64)
        sl = slice(None) if columns is None else np.asarray(columns, dtype=np.intp)
        pos = _log_density(X, self.mu_pos_[sl], self.sigma_pos_[sl])
        neg = _log_density(X, self.mu_neg_[sl], self.sigma_neg_[sl])
        return np.where(pos >= neg, 1.0, -1.0)

    def classifier(self, m: int) -> WeakClassifier:
        check_is_fitted(self, "mu_pos_")
        return WeakClassifier(m, GaussianPair(
            float(self.mu_pos_[m]), float(self.sigma_pos_[m]),
            float(self.mu_neg_[m]), float(self.sigma_neg_[m]),
            float(self.p_pos_[m]), float(self.p_neg_[m])))
