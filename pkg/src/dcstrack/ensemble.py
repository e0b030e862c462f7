"""Part-based strong classifiers, Noisy-OR fusion and the selection-driven update.

Each object part ``k`` owns a pool of ``M`` Gaussian weak classifiers and a
strong classifier made of ``N`` selector slots. An update refreshes the pool
on the labeled batch, explains the batch labels with the non-negative l1
decomposition and lets the selectors take the pool members with the largest
coefficients, weighted by their accumulated error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .sparse_select import (DEFAULT_LAMBDA, DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_TOL_KKT,
                            assemble, dump_solution, select_by_error, select_classifier,
                            solve_nn_l1)
from .validation import Rect, check_labels
from .weak_learn import GaussianWeakPool, SelectorStats, error_rate

logger = logging.getLogger(__name__)

ERROR_CLAMP = 1e-4

# (fx, fy, fw, fh) fractions of the object box: whole, top, bottom, left, right.
DEFAULT_PARTS = (
    (0.0, 0.0, 1.0, 1.0),
    (0.0, 0.0, 1.0, 0.5),
    (0.0, 0.5, 1.0, 0.5),
    (0.0, 0.0, 0.5, 1.0),
    (0.5, 0.0, 0.5, 1.0),
)


@dataclass(frozen=True)
class PartLayout:
    """Part transforms as fractional sub-boxes of the object rectangle."""

    parts: tuple[tuple[float, float, float, float], ...] = DEFAULT_PARTS

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ValueError("a part layout needs at least one part")
        for p in self.parts:
            fx, fy, fw, fh = p
            if fw <= 0 or fh <= 0 or fx < 0 or fy < 0 or fx + fw > 1 or fy + fh > 1:
                raise ValueError(f"part {p} is not inside the unit box")

    @classmethod
    def default(cls, n_parts: int = 5) -> "PartLayout":
        if not 1 <= n_parts <= len(DEFAULT_PARTS):
            raise ValueError(f"default layout has 1..{len(DEFAULT_PARTS)} parts, got {n_parts}")
        return cls(DEFAULT_PARTS[:n_parts])

    def __len__(self) -> int:
        return len(self.parts)

    def offset_and_size(self, k: int, w: int, h: int) -> tuple[int, int, int, int]:
        """Part ``k`` of a ``w x h`` box as integer ``(dx, dy, pw, ph)``; never empty."""
        fx, fy, fw, fh = self.parts[k]
        x0 = int(round(fx * w))
        y0 = int(round(fy * h))
        x1 = max(int(round((fx + fw) * w)), x0 + 1)
        y1 = max(int(round((fy + fh) * h)), y0 + 1)
        return x0, y0, min(x1, w) - x0, min(y1, h) - y0

    def apply(self, k: int, rect: Rect) -> Rect:
        dx, dy, pw, ph = self.offset_and_size(k, rect.w, rect.h)
        return Rect(rect.x + dx, rect.y + dy, pw, ph)


def strong_margin(alphas, votes) -> np.ndarray | float:
    """``sum_n alpha_n * h_n``; ``votes`` is ``(N,)`` or ``(n_samples, N)``."""
    return np.asarray(votes, dtype=np.float64) @ np.asarray(alphas, dtype=np.float64)


def strong_confidence(margin, scale: float = 1.0):
    """Logistic squashing of a strong-classifier margin into (0, 1)."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    z = scale * np.asarray(margin, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def combine_noisy_or(confidences, axis: int = -1):
    """``1 - prod_k (1 - c_k)`` along ``axis``."""
    c = np.asarray(confidences, dtype=np.float64)
    if np.any(~np.isfinite(c)) or np.any(c < 0.0) or np.any(c > 1.0):
        raise ValueError("Noisy-OR inputs must lie in [0, 1]")
    out = 1.0 - np.prod(1.0 - c, axis=axis)
    return out if np.ndim(out) else float(out)


def log_miss_probability(margins, scale: float = 1.0) -> np.ndarray:
    """``log prod_k (1 - sigmoid(scale * m_k))`` over the last axis.

    Ranks candidates exactly like the Noisy-OR confidence (which is
    ``1 - exp`` of this) without saturating at 1.0 for confident parts.
    """
    z = scale * np.asarray(margins, dtype=np.float64)
    return -np.logaddexp(0.0, z).sum(axis=-1)


def alpha_from_error(e) -> np.ndarray | float:
    """Boosting weight ``0.5 * ln((1 - e) / e)`` with ``e`` clamped to [1e-4, 1 - 1e-4]."""
    e = np.clip(np.asarray(e, dtype=np.float64), ERROR_CLAMP, 1.0 - ERROR_CLAMP)
    out = 0.5 * np.log((1.0 - e) / e)
    return out if out.ndim else float(out)


@dataclass
class StrongClassifier:
    part: int
    selected: list[int] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)

    def margin(self, votes) -> np.ndarray | float:
        """Margin from the selected classifiers' votes (columns in selection order)."""
        return strong_margin(self.alphas, votes)


@dataclass
class UpdateReport:
    """What happened during one ensemble update (for diagnostics)."""

    solves: int = 0
    fallbacks: int = 0
    exhausted_beta: int = 0
    sweeps: list[int] = field(default_factory=list)


class PartEnsemble:
    """Pools, selector statistics and strong classifiers for every part.

    Parameters
    ----------
    n_parts, n_selectors, pool_size : int
        ``K``, ``N`` and ``M``.
    lam : float
        l1 weight of the selection problem.
    selection : {"l1", "error"}
        ``"error"`` replaces the l1 pick with the lowest accumulated error
        (the classic online-boosting rule, used as an ablation).
    per_selector_pools : bool
        Give every selector its own pool instead of one shared pool per part.
    """

    def __init__(self, n_parts=5, n_selectors=20, pool_size=200, lam=DEFAULT_LAMBDA,
                 selection="l1", per_selector_pools=False, solver_tol=DEFAULT_TOL,
                 solver_tol_kkt=DEFAULT_TOL_KKT, solver_max_iter=DEFAULT_MAX_ITER,
                 stats_prior=1.0, dump_dir=None):
        if n_parts < 1 or n_selectors < 1 or pool_size <= n_selectors:
            raise ValueError("need n_parts >= 1, n_selectors >= 1 and pool_size > n_selectors")
        if selection not in ("l1", "error"):
            raise ValueError(f"selection must be 'l1' or 'error', got {selection!r}")
        self.n_parts = n_parts
        self.n_selectors = n_selectors
        self.pool_size = pool_size
        self.lam = lam
        self.selection = selection
        self.per_selector_pools = per_selector_pools
        self.solver_tol = solver_tol
        self.solver_tol_kkt = solver_tol_kkt
        self.solver_max_iter = solver_max_iter
        self.stats_prior = stats_prior
        self.dump_dir = None if dump_dir is None else Path(dump_dir)
        n_pools = n_selectors if per_selector_pools else 1
        self.pools = [[GaussianWeakPool().partial_fit(np.empty((0, pool_size)), np.empty(0))
                       for _ in range(n_pools)] for _ in range(n_parts)]
        self.stats = [SelectorStats.empty((n_selectors, pool_size), stats_prior)
                      for _ in range(n_parts)]
        self.strong = [StrongClassifier(k) for k in range(n_parts)]
        self.n_updates = 0

    def pool_for(self, k: int, n: int) -> GaussianWeakPool:
        return self.pools[k][n if self.per_selector_pools else 0]

    @property
    def is_trained(self) -> bool:
        return all(len(sc.selected) == self.n_selectors for sc in self.strong)

    def part_margins(self, k: int, selected_responses) -> np.ndarray:
        """Margins of part ``k`` from responses of its selected features, ``(n, N)``."""
        sc = self.strong[k]
        if not sc.selected:
            return np.zeros(np.shape(selected_responses)[0])
        resp = np.asarray(selected_responses, dtype=np.float64)
        if self.per_selector_pools:
            votes = np.column_stack([
                self.pool_for(k, n).predict(resp[:, n:n + 1], columns=[m])[:, 0]
                for n, m in enumerate(sc.selected)])
        else:
            votes = self.pools[k][0].predict(resp, columns=sc.selected)
        return sc.margin(votes)

    def update(self, part_responses: Sequence[np.ndarray], y, frame_index: int = 0) -> UpdateReport:
        """One pass of the selection-embedded update.

        ``part_responses[k]`` is the ``(L, M)`` response matrix of part ``k``'s
        feature pool on the batch, ``y`` the (possibly noisy) batch labels.
        """
        y = check_labels(y)
        if not (np.any(y > 0) and np.any(y < 0)):
            raise ValueError("an update needs at least one positive and one negative sample")
        report = UpdateReport()
        for k in range(self.n_parts):
            X = np.asarray(part_responses[k], dtype=np.float64)
            if X.shape != (len(y), self.pool_size):
                raise ValueError(f"part {k}: responses must be {(len(y), self.pool_size)}, got {X.shape}")
            for pool in self.pools[k]:
                pool.partial_fit(X, y)
            phis = [pool.predict(X) for pool in self.pools[k]]
            stats = self.stats[k]
            for n in range(self.n_selectors):
                phi = phis[n if self.per_selector_pools else 0]
                # each selector row sees the same batch; counts stay per (n, m)
                wrong = (phi != y[:, None]).sum(axis=0)
                stats.lambda_wrong[n] += wrong
                stats.lambda_correct[n] += len(y) - wrong
            self._select(k, phis, y, frame_index, report)
        self.n_updates += 1
        return report

    def _select(self, k, phis, y, frame_index, report):
        errors = error_rate(self.stats[k])
        selected: list[int] = []
        alphas: list[float] = []
        solution = None
        for n in range(self.n_selectors):
            if self.selection == "l1" and (solution is None or self.per_selector_pools):
                phi = phis[n if self.per_selector_pools else 0]
                solution = solve_nn_l1(assemble(phi, y, self.lam), self.solver_tol,
                                       self.solver_max_iter, self.solver_tol_kkt)
                report.solves += 1
                report.sweeps.append(solution.iterations)
                if self.dump_dir is not None:
                    self.dump_dir.mkdir(parents=True, exist_ok=True)
                    dump_solution(solution, self.dump_dir /
                                  f"sparse_f{frame_index:05d}_k{k}_n{n}.csv")
            if self.selection == "error" or not solution.converged:
                if self.selection == "l1":
                    report.fallbacks += 1
                    logger.debug("part %d selector %d: solver did not converge, using error rule",
                                 k, n)
                m = select_by_error(errors[n], selected)
            else:
                m = select_classifier(solution, selected)
                if solution.beta[m] <= 0.0:
                    # no support left in beta: rank the rest by accumulated error
                    report.exhausted_beta += 1
                    m = select_by_error(errors[n], selected)
            selected.append(m)
            alphas.append(alpha_from_error(errors[n, m]))
        self.strong[k] = StrongClassifier(k, selected, alphas)

    def replace_worst(self, k: int, new_indices_callback) -> list[int]:
        """Reset the worst unselected pool member of part ``k``; returns the reset indices.

        ``new_indices_callback(k, indices)`` swaps in fresh features for them.
        """
        errors = error_rate(self.stats[k]).mean(axis=0)
        errors[self.strong[k].selected] = -np.inf
        worst = [int(np.argmax(errors))]
        for pool in self.pools[k]:
            pool.reset(worst)
        self.stats[k].lambda_wrong[:, worst] = self.stats_prior
        self.stats[k].lambda_correct[:, worst] = self.stats_prior
        new_indices_callback(k, worst)
        return worst
