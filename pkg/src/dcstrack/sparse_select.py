"""Noise-tolerant classifier selection by non-negative l1 decomposition.

The observed labels ``y`` are explained as ``Phi @ beta + e_pos - e_neg``,
where column ``m`` of ``Phi`` holds the +-1 votes of pool classifier ``m``
and the identity blocks soak up mislabeled samples. The coefficients are
found by minimizing ``||W c - y||^2 + lam * sum(c)`` over ``c >= 0`` with
``W = [Phi, I, -I]``; the classifier with the largest ``beta`` wins.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import ExhaustedPoolError, check_labels

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.01
DEFAULT_TOL = 1e-8
DEFAULT_TOL_KKT = 1e-6
DEFAULT_MAX_ITER = 10_000


def build_label_matrix(predictions: Sequence[Sequence[float]]) -> np.ndarray:
    """Stack per-classifier prediction vectors as the columns of an ``(L, M)`` matrix."""
    cols = [np.asarray(p, dtype=np.float64) for p in predictions]
    if not cols:
        raise ValueError("need at least one classifier's predictions")
    lengths = {c.shape for c in cols}
    if len(lengths) != 1 or cols[0].ndim != 1:
        raise ValueError(f"prediction vectors must all be 1-D of equal length, got {sorted(lengths)}")
    phi = np.column_stack(cols)
    check_label_matrix(phi)
    return phi


def check_label_matrix(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise ValueError(f"label matrix must be 2-D, got shape {phi.shape}")
    if not np.all((phi == 1.0) | (phi == -1.0)):
        raise ValueError("label matrix entries must be -1 or +1")
    return phi


@dataclass(frozen=True)
class SparseProblem:
    """``min ||W c - y||^2 + lam ||c||_1, c >= 0`` with ``W = [Phi, I, -I]``.

    The identity blocks are implicit; :attr:`W` materializes them on demand.
    """

    phi: np.ndarray
    y: np.ndarray
    lam: float

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def n_classifiers(self) -> int:
        return self.phi.shape[1]

    @property
    def W(self) -> np.ndarray:
        eye = np.eye(self.n_samples)
        return np.hstack([self.phi, eye, -eye])

    def objective(self, coef) -> float:
        coef = np.asarray(coef, dtype=np.float64)
        r = self.W @ coef - self.y
        return float(r @ r + self.lam * np.abs(coef).sum())


def assemble(phi, y, lam: float = DEFAULT_LAMBDA) -> SparseProblem:
    phi = check_label_matrix(phi)
    y = check_labels(y)
    if phi.shape[0] != y.shape[0]:
        raise ValueError(f"label matrix has {phi.shape[0]} rows but y has {y.shape[0]} entries")
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if phi.shape[0] >= phi.shape[1]:
        warnings.warn(f"L={phi.shape[0]} samples >= M={phi.shape[1]} classifiers", stacklevel=2)
    phi = phi.copy()
    y = y.copy()
    phi.setflags(write=False)
    y.setflags(write=False)
    return SparseProblem(phi, y, float(lam))


@dataclass(frozen=True)
class SparseSolution:
    beta: np.ndarray
    e_pos: np.ndarray
    e_neg: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    history: np.ndarray  # objective after each sweep
    pivots: int = 0      # active-set steps spent on the warm start

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([self.beta, self.e_pos, self.e_neg])

    @property
    def noise(self) -> np.ndarray:
        return self.e_pos - self.e_neg


@numba.njit(cache=True)
def _kkt_residual(phi_t, r, beta, e_pos, e_neg, lam):
    # grad_j = 2 w_j^T (W c - y) + lam = lam - 2 w_j^T r
    worst = 0.0
    L = r.shape[0]
    for j in range(phi_t.shape[0]):
        g = 0.0
        for i in range(L):
            g += phi_t[j, i] * r[i]
        g = lam - 2.0 * g
        worst = max(worst, -g, abs(beta[j] * g))
    for i in range(L):
        g = lam - 2.0 * r[i]
        worst = max(worst, -g, abs(e_pos[i] * g))
        g = lam + 2.0 * r[i]
        worst = max(worst, -g, abs(e_neg[i] * g))
    return worst


@numba.njit(cache=True)
def _coordinate_descent(phi_t, y, lam, beta, e_pos, e_neg, tol, tol_kkt, max_iter, history):
    """Cyclic non-negative coordinate descent, updating ``beta``/``e_pos``/``e_neg`` in place.

    Returns ``(sweeps, converged, kkt)``.
    """
    M, L = phi_t.shape
    half = 0.5 * lam
    norms = np.empty(M)
    for j in range(M):
        s = 0.0
        for i in range(L):
            s += phi_t[j, i] * phi_t[j, i]
        norms[j] = s
    r = y.copy()  # y - W c
    for j in range(M):
        if beta[j] != 0.0:
            for i in range(L):
                r[i] -= phi_t[j, i] * beta[j]
    for i in range(L):
        r[i] -= e_pos[i] - e_neg[i]

    kkt = np.inf
    for sweep in range(max_iter):
        dmax = 0.0
        for j in range(M):
            old = beta[j]
            rho = 0.0
            for i in range(L):
                rho += phi_t[j, i] * r[i]
            new = (rho + norms[j] * old - half) / norms[j]
            if new < 0.0:
                new = 0.0
            d = new - old
            if d != 0.0:
                for i in range(L):
                    r[i] -= phi_t[j, i] * d
                beta[j] = new
                if abs(d) > dmax:
                    dmax = abs(d)
        for i in range(L):
            old = e_pos[i]
            new = r[i] + old - half
            if new < 0.0:
                new = 0.0
            if new != old:
                r[i] -= new - old
                e_pos[i] = new
                if abs(new - old) > dmax:
                    dmax = abs(new - old)
            old = e_neg[i]
            new = -(r[i] - old) - half
            if new < 0.0:
                new = 0.0
            if new != old:
                r[i] += new - old
                e_neg[i] = new
                if abs(new - old) > dmax:
                    dmax = abs(new - old)
        obj = 0.0
        for i in range(L):
            obj += r[i] * r[i]
        l1 = 0.0
        for j in range(M):
            l1 += beta[j]
        for i in range(L):
            l1 += e_pos[i] + e_neg[i]
        history[sweep] = obj + lam * l1
        if dmax <= tol:
            kkt = _kkt_residual(phi_t, r, beta, e_pos, e_neg, lam)
            if kkt <= tol_kkt:
                return sweep + 1, True, kkt
    kkt = _kkt_residual(phi_t, r, beta, e_pos, e_neg, lam)
    return max_iter, False, kkt


@numba.njit(cache=True)
def _rot(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r

@numba.njit(cache=True)
def _nnls_qr(E, f, tol, max_iter):
    """Lawson-Hanson NNLS ``min ||E x - f||, x >= 0`` on a Givens-updated QR of ``E``.

    Returns ``(x, iterations, converged)``.
    """
    nr, n = E.shape
    Q = np.eye(nr)              # Q^T E_P = [R; 0]
    R = np.zeros((nr, nr))
    qf = f.copy()
    P = np.empty(nr, dtype=np.int64)
    p = 0
    x = np.zeros(n)
    passive = np.zeros(n, dtype=np.bool_)
    blocked = np.zeros(n, dtype=np.bool_)
    z = np.empty(nr)
    v = np.empty(nr)
    w = E.T @ f
    it = 0
    while it < max_iter:
        t = -1
        best = tol
        for j in range(n):
            if not passive[j] and not blocked[j] and w[j] > best:
                best = w[j]
                t = j
        if t < 0:
            return x, it, True
        if p == nr:
            blocked[t] = True
            continue
        # v = Q^T E[:, t], rotate rows p.. into row p
        for i in range(nr):
            s = 0.0
            for k in range(nr):
                s += Q[k, i] * E[k, t]
            v[i] = s
        for i in range(nr - 1, p, -1):
            c, s = _rot(v[i - 1], v[i])
            if s == 0.0:
                continue
            v[i - 1] = c * v[i - 1] + s * v[i]
            v[i] = 0.0
            a, b = qf[i - 1], qf[i]
            qf[i - 1] = c * a + s * b
            qf[i] = -s * a + c * b
            for k in range(nr):
                a, b = Q[k, i - 1], Q[k, i]
                Q[k, i - 1] = c * a + s * b
                Q[k, i] = -s * a + c * b
        cn = 0.0
        for k in range(nr):
            cn += E[k, t] * E[k, t]
        if abs(v[p]) <= 1e-12 * np.sqrt(cn):
            blocked[t] = True
            continue
        for i in range(p + 1):
            R[i, p] = v[i]
        P[p] = t
        p += 1
        passive[t] = True
        first = True
        while True:
            it += 1
            for a in range(p - 1, -1, -1):
                s = qf[a]
                for k in range(a + 1, p):
                    s -= R[a, k] * z[k]
                z[a] = s / R[a, a]
            if first and z[p - 1] <= 0.0:
                # rounding defeated the entering column: undo and block it
                p -= 1
                passive[t] = False
                blocked[t] = True
                for i in range(p + 1):
                    R[i, p] = 0.0
                break
            first = False
            ok = True
            for a in range(p):
                if z[a] <= 0.0:
                    ok = False
                    break
            if ok:
                for a in range(p):
                    x[P[a]] = z[a]
                blocked[:] = False
                break
            alpha = 1.0
            for a in range(p):
                if z[a] <= 0.0:
                    xa = x[P[a]]
                    r = xa / (xa - z[a])
                    if r < alpha:
                        alpha = r
            for a in range(p):
                j = P[a]
                x[j] += alpha * (z[a] - x[j])
            # drop every column that hit zero, restoring R by Givens
            a = 0
            while a < p:
                j = P[a]
                if x[j] > 0.0 and not (z[a] <= 0.0 and x[j] <= 1e-15):
                    a += 1
                    continue
                x[j] = 0.0
                passive[j] = False
                for b in range(a, p - 1):
                    P[b] = P[b + 1]
                    for i in range(b + 2):
                        R[i, b] = R[i, b + 1]
                    z[b] = z[b + 1]
                for i in range(nr):
                    R[i, p - 1] = 0.0
                p -= 1
                for i in range(a, p):
                    c, s = _rot(R[i, i], R[i + 1, i])
                    if s == 0.0:
                        continue
                    for k in range(i, p):
                        aa, bb = R[i, k], R[i + 1, k]
                        R[i, k] = c * aa + s * bb
                        R[i + 1, k] = -s * aa + c * bb
                    R[i + 1, i] = 0.0
                    aa, bb = qf[i], qf[i + 1]
                    qf[i] = c * aa + s * bb
                    qf[i + 1] = -s * aa + c * bb
                    for k in range(nr):
                        aa, bb = Q[k, i], Q[k, i + 1]
                        Q[k, i] = c * aa + s * bb
                        Q[k, i + 1] = -s * aa + c * bb
            if it >= max_iter:
                return x, it, False
        # w = E^T (f - E x)
        res = f.copy()
        for a in range(p):
            j = P[a]
            for k in range(nr):
                res[k] -= E[k, j] * x[j]
        for j in range(n):
            s = 0.0
            for k in range(nr):
                s += E[k, j] * res[k]
            w[j] = s
    return x, it, False


def _dual_active_set(problem: SparseProblem, max_iter: int):
    """Exact coefficients from the dual, or ``None`` if the pivoting fails.

    The dual of the problem is a least-distance program over
    ``W^T nu >= -lam``; it reduces to one NNLS on ``[W; h^T]`` with
    ``h = 2 W^T y - lam``, whose solution ``u`` gives
    ``c = u / (2 (1 - h^T u))``. Columns are scaled to unit norm first.
    """
    W = problem.W
    L = problem.n_samples
    h = 2.0 * (W.T @ problem.y) - problem.lam
    E = np.vstack([W, h])
    scale = 1.0 / np.linalg.norm(E, axis=0)
    f = np.zeros(L + 1)
    f[-1] = 1.0
    u, pivots, ok = _nnls_qr(np.ascontiguousarray(E * scale), f, 1e-12, int(max_iter))
    denom = 1.0 - (h * scale) @ u
    if not ok or not denom > 1e-14:
        return None, pivots
    return scale * u / (2.0 * denom), pivots


def solve_nn_l1(problem: SparseProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                tol_kkt: float = DEFAULT_TOL_KKT, warm_start=None,
                method: str = "active_set") -> SparseSolution:
    """Minimize ``||W c - y||^2 + lam ||c||_1`` subject to ``c >= 0``.

    Cyclic coordinate descent with the closed-form non-negative
    soft-threshold per coordinate; sweeps stop once no coordinate moves by
    more than ``tol`` and the KKT residual is within ``tol_kkt``. A solve
    that runs out of sweeps comes back with ``converged=False``.

    With ``method="active_set"`` (and no ``warm_start``) the sweeps start
    from the exact dual active-set solution, so they usually only certify
    it. Plain descent from zero crawls on these problems: the identity
    blocks make the design badly conditioned.

    Parameters
    ----------
    problem : SparseProblem
    tol : float
        Largest coordinate change allowed in the final sweep.
    max_iter : int
        Maximum number of full sweeps (and of active-set pivots).
    tol_kkt : float
        Bound on the KKT residual of an accepted solution.
    warm_start : array-like of length ``M + 2L``, optional
        Initial coefficients, clipped at zero.
    method : {"active_set", "cd"}
    """
    if method not in ("active_set", "cd"):
        raise ValueError(f"method must be 'active_set' or 'cd', got {method!r}")
    L, M = problem.phi.shape
    pivots = 0
    if warm_start is None:
        coef = None
        if method == "active_set":
            coef, pivots = _dual_active_set(problem, 50 * (M + 2 * L))
            if coef is None:
                logger.info("active-set warm start failed after %d pivots", pivots)
        if coef is None:
            coef = np.zeros(M + 2 * L)
    else:
        coef = np.maximum(np.asarray(warm_start, dtype=np.float64), 0.0).copy()
        if coef.shape != (M + 2 * L,):
            raise ValueError(f"warm_start must have length {M + 2 * L}")
    beta, e_pos, e_neg = coef[:M].copy(), coef[M:M + L].copy(), coef[M + L:].copy()
    history = np.empty(max(int(max_iter), 1))
    sweeps, converged, kkt = _coordinate_descent(
        np.ascontiguousarray(problem.phi.T), np.asarray(problem.y, dtype=np.float64),
        float(problem.lam), beta, e_pos, e_neg, float(tol), float(tol_kkt), int(max_iter), history)
    history = history[:sweeps].copy()
    r = problem.y - problem.phi @ beta - e_pos + e_neg
    objective = float(r @ r + problem.lam * (beta.sum() + e_pos.sum() + e_neg.sum()))
    if not converged:
        logger.info("nn-l1 solve hit max_iter=%d (kkt residual %.3g)", max_iter, kkt)
    return SparseSolution(beta, e_pos, e_neg, objective, int(sweeps), bool(converged),
                          float(kkt), history, int(pivots))


def _masked(values, excluded: Iterable[int]):
    values = np.asarray(values, dtype=np.float64)
    mask = np.zeros(values.shape[0], dtype=bool)
    for i in excluded:
        mask[int(i)] = True
    if mask.all():
        raise ExhaustedPoolError("every pool index is excluded")
    return values, mask


def select_classifier(solution, excluded: Iterable[int] = ()) -> int:
    """Index of the largest ``beta`` outside ``excluded``; ties go to the lowest index.

    ``solution`` is a :class:`SparseSolution` or a bare coefficient vector.
    """
    beta = solution.beta if isinstance(solution, SparseSolution) else solution
    beta, mask = _masked(beta, excluded)
    return int(np.argmax(np.where(mask, -np.inf, beta)))


def select_by_error(errors, excluded: Iterable[int] = ()) -> int:
    """Lowest accumulated error outside ``excluded`` (the classic online-boosting rule)."""
    errors, mask = _masked(errors, excluded)
    return int(np.argmin(np.where(mask, np.inf, errors)))


def dump_solution(solution: SparseSolution, path) -> None:
    """Write ``block,index,value`` rows for beta, e_pos and e_neg."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["block", "index", "value"])
            for block, values in (("beta", solution.beta), ("e_pos", solution.e_pos),
                                  ("e_neg", solution.e_neg)):
                for i, v in enumerate(values):
                    writer.writerow([block, i, f"{v:.6g}"])
    except OSError as exc:
        raise OSError(f"cannot write sparse dump {path}: {exc}") from exc


class NoiseTolerantSelector(BaseEstimator):
    """Pick pool classifiers whose votes best explain noisy labels.

    Parameters
    ----------
    lam : float, default=0.01
        Weight of the l1 penalty.
    tol : float, default=1e-8
        Coordinate-change stopping tolerance.
    tol_kkt : float, default=1e-6
        KKT residual bound for a converged solve.
    max_iter : int, default=10000
        Maximum coordinate-descent sweeps.
    method : {"active_set", "cd"}, default="active_set"
        Start the sweeps from the exact dual solution or from zero.

    Attributes
    ----------
    solution_ : SparseSolution
    beta_ : ndarray of shape (n_classifiers,)
    noise_ : ndarray of shape (n_samples,)
        Estimated label noise ``e_pos - e_neg``.

    Examples
    --------
    >>> import numpy as np
    >>> y = np.array([1., 1., -1., -1.])
    >>> phi = np.column_stack([[1., -1., 1., -1.], y])
    >>> NoiseTolerantSelector().fit(phi, y).select()
    1
    """

    def __init__(self, lam=DEFAULT_LAMBDA, tol=DEFAULT_TOL, tol_kkt=DEFAULT_TOL_KKT,
                 max_iter=DEFAULT_MAX_ITER, method="active_set"):
        self.lam = lam
        self.tol = tol
        self.tol_kkt = tol_kkt
        self.max_iter = max_iter
        self.method = method

    def fit(self, X, y):
        """``X`` is the ``(L, M)`` label matrix of pool votes, ``y`` the observed labels."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            problem = assemble(X, y, self.lam)
        self.solution_ = solve_nn_l1(problem, self.tol, self.max_iter, self.tol_kkt,
                                     method=self.method)
        self.beta_ = self.solution_.beta
        self.noise_ = self.solution_.noise
        self.converged_ = self.solution_.converged
        return self

    def select(self, exclude=()) -> int:
        check_is_fitted(self, "solution_")
        return select_classifier(self.solution_, exclude)

    def ranking(self, n: int) -> list[int]:
        """The first ``n`` picks of repeated selection without replacement."""
        picked: list[int] = []
        for _ in range(n):
            picked.append(self.select(picked))
        return picked
