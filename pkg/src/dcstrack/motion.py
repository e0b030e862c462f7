"""Translational search, training-sample generation and the tracker itself."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ensemble import PartEnsemble, PartLayout, log_miss_probability
from .imaging import (FeatureBank, IntegralImage, build_integral, random_feature)
from .sparse_select import DEFAULT_LAMBDA
from .validation import (BoundsError, DegenerateFeatureError, Rect, SamplingError,
                         check_frame, check_rect)

logger = logging.getLogger(__name__)


@lru_cache(maxsize=64)
def _disc_offsets(radius: float, stride: int) -> tuple[np.ndarray, np.ndarray]:
    # scan order: dy outer, dx inner, both ascending
    span = int(np.floor(radius / stride)) * stride
    steps = np.arange(-span, span + 1, stride)
    dy, dx = np.meshgrid(steps, steps, indexing="ij")
    keep = dx**2 + dy**2 <= radius**2
    dx, dy = dx[keep], dy[keep]
    dx.setflags(write=False)
    dy.setflags(write=False)
    return dx, dy


@lru_cache(maxsize=64)
def _annulus_offsets(inner: float, outer: float) -> tuple[np.ndarray, np.ndarray]:
    span = int(np.floor(outer))
    steps = np.arange(-span, span + 1)
    dy, dx = np.meshgrid(steps, steps, indexing="ij")
    d2 = dx**2 + dy**2
    keep = (d2 > inner**2) & (d2 <= outer**2)
    dx, dy = dx[keep], dy[keep]
    dx.setflags(write=False)
    dy.setflags(write=False)
    return dx, dy


def _in_bounds(rect: Rect, dx, dy, width, height):
    x = rect.x + dx
    y = rect.y + dy
    return (x >= 0) & (y >= 0) & (x + rect.w <= width) & (y + rect.h <= height)


def candidate_offsets(p_prev: Rect, radius: float, stride: int, width: int, height: int):
    """In-bounds ``(dx, dy)`` offsets of the search disc, in scan order."""
    if radius < 0 or stride < 1:
        raise ValueError(f"need radius >= 0 and stride >= 1, got {radius}, {stride}")
    if not p_prev.inside(width, height):
        raise BoundsError(f"previous location {tuple(p_prev)} outside {width}x{height} frame")
    dx, dy = _disc_offsets(float(radius), int(stride))
    keep = _in_bounds(p_prev, dx, dy, width, height)
    return dx[keep], dy[keep]


def generate_candidates(p_prev, radius: float, stride: int, width: int, height: int) -> list[Rect]:
    """Every translation of ``p_prev`` on the ``stride`` lattice within ``radius`` pixels.

    Out-of-frame translations are dropped; ``p_prev`` itself is always kept.
    Order is row-major over the offsets (``dy`` outer, ``dx`` inner).
    """
    p_prev = check_rect(p_prev, "p_prev")
    dx, dy = candidate_offsets(p_prev, radius, stride, width, height)
    return [p_prev.shift(int(a), int(b)) for a, b in zip(dx, dy)]


def locate(candidates, scores) -> tuple[Rect, float]:
    """Candidate with the highest score and that score; ties go to the earliest candidate."""
    if len(candidates) == 0:
        raise ValueError("no candidates to choose from")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(candidates),):
        raise ValueError(f"expected {len(candidates)} scores, got shape {scores.shape}")
    best = int(np.argmax(scores))
    return candidates[best], float(scores[best])


@dataclass(frozen=True)
class LabeledSample:
    location: Rect
    label: int
    origin: str  # "geometric" or "classifier"
    region_label: int  # label implied by where the sample was drawn


def sample_positions(p_star: Rect, width: int, height: int, rng: np.random.Generator, *,
                     pos_radius: float = 4, stride: int = 1, neg_inner: float = 8,
                     neg_outer: float = 50, n_neg: int = 50):
    """Offsets of positive proposals (disc) and negative draws (annulus).

    Returns ``(dx, dy, region)`` arrays with ``region`` = +1 for disc
    offsets and -1 for annulus draws.
    """
    if not 0 < pos_radius < neg_inner < neg_outer:
        raise ValueError(f"need 0 < pos_radius < neg_inner < neg_outer, got "
                         f"{pos_radius}, {neg_inner}, {neg_outer}")
    pdx, pdy = candidate_offsets(p_star, pos_radius, stride, width, height)
    adx, ady = _annulus_offsets(float(neg_inner), float(neg_outer))
    keep = _in_bounds(p_star, adx, ady, width, height)
    adx, ady = adx[keep], ady[keep]
    if adx.size == 0:
        raise SamplingError(f"negative annulus ({neg_inner}, {neg_outer}] around {tuple(p_star)} "
                            f"is empty inside the {width}x{height} frame")
    pick = rng.choice(adx.size, size=n_neg, replace=adx.size < n_neg)
    dx = np.concatenate([pdx, adx[pick]])
    dy = np.concatenate([pdy, ady[pick]])
    region = np.concatenate([np.ones(pdx.size, dtype=int), -np.ones(n_neg, dtype=int)])
    return dx, dy, region


def generate_training_samples(p_star, width: int, height: int, seed, *, labeler=None,
                              threshold: float = 0.5, **geometry) -> list[LabeledSample]:
    """Draw training positions around ``p_star`` and label them.

    With ``labeler=None`` labels follow the region a sample came from.
    Otherwise ``labeler(rects)`` returns combined confidences and a sample is
    positive iff its confidence exceeds ``threshold``.
    """
    p_star = check_rect(p_star, "p_star")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dx, dy, region = sample_positions(p_star, width, height, rng, **geometry)
    rects = [p_star.shift(int(a), int(b)) for a, b in zip(dx, dy)]
    if labeler is None:
        return [LabeledSample(r, int(g), "geometric", int(g)) for r, g in zip(rects, region)]
    conf = np.asarray(labeler(rects), dtype=np.float64)
    labels = np.where(conf > threshold, 1, -1)
    return [LabeledSample(r, int(lab), "classifier", int(g))
            for r, lab, g in zip(rects, labels, region)]


@dataclass
class FrameDiagnostics:
    frame: int
    confidence: float
    n_candidates: int
    n_samples: int
    label_noise: float  # classifier labels disagreeing with region labels
    label_mode: str
    solves: int = 0
    fallbacks: int = 0
    exhausted_beta: int = 0
    mean_sweeps: float = 0.0


class PartBoostTracker(BaseEstimator):
    """Part-based online-boosting tracker with l1 classifier selection.

    Call :meth:`fit` with the first frame and the object box, then
    :meth:`track` once per following frame.

    Parameters
    ----------
    n_parts : int, default=5
        Number of object parts (whole, top, bottom, left, right halves).
    n_selectors : int, default=20
        Weak classifiers per strong classifier.
    pool_size : int, default=200
        Weak classifiers available to each part.
    lam : float, default=0.01
        l1 weight of the selection problem.
    search_radius : float, default=25
        Candidate radius in pixels.
    stride : int, default=1
        Lattice step for candidates and positive proposals.
    pos_radius, neg_inner, neg_outer : float
        Sampling geometry; ``neg_outer=None`` means ``2 * search_radius``.
    n_neg : int, default=50
        Negative draws per update.
    label_mode : {"classifier", "geometric"}
        How non-initial training samples are labeled.
    selection : {"l1", "error"}
        Selection rule; ``"error"`` is the online-boosting ablation.
    random_state : int, default=0
        Seeds feature pools and negative sampling.
    """

    def __init__(self, n_parts=5, n_selectors=20, pool_size=200, lam=DEFAULT_LAMBDA,
                 search_radius=25, stride=1, pos_radius=4, neg_inner=8, neg_outer=None,
                 n_neg=50, label_mode="classifier", label_threshold=0.5, confidence_scale=1.0,
                 init_rounds=5, selection="l1", per_selector_pools=False,
                 feature_replacement=False, min_feature_size=0.1, part_layout=None,
                 solver_max_iter=10_000, random_state=0, dump_dir=None):
        self.n_parts = n_parts
        self.n_selectors = n_selectors
        self.pool_size = pool_size
        self.lam = lam
        self.search_radius = search_radius
        self.stride = stride
        self.pos_radius = pos_radius
        self.neg_inner = neg_inner
        self.neg_outer = neg_outer
        self.n_neg = n_neg
        self.label_mode = label_mode
        self.label_threshold = label_threshold
        self.confidence_scale = confidence_scale
        self.init_rounds = init_rounds
        self.selection = selection
        self.per_selector_pools = per_selector_pools
        self.feature_replacement = feature_replacement
        self.min_feature_size = min_feature_size
        self.part_layout = part_layout
        self.solver_max_iter = solver_max_iter
        self.random_state = random_state
        self.dump_dir = dump_dir

    # -- setup -----------------------------------------------------------------

    def _validate_params(self):
        if self.label_mode not in ("classifier", "geometric"):
            raise ValueError(f"label_mode must be 'classifier' or 'geometric', got {self.label_mode!r}")
        if self.init_rounds < 1:
            raise ValueError("init_rounds must be >= 1")
        if self.n_neg < 1:
            raise ValueError("n_neg must be >= 1")
        layout = self.part_layout
        if layout is None:
            layout = PartLayout.default(self.n_parts)
        elif not isinstance(layout, PartLayout):
            layout = PartLayout(tuple(tuple(map(float, p)) for p in layout))
        if len(layout) != self.n_parts:
            raise ValueError(f"part layout has {len(layout)} parts but n_parts={self.n_parts}")
        return layout

    def _geometry(self):
        outer = 2 * self.search_radius if self.neg_outer is None else self.neg_outer
        return dict(pos_radius=self.pos_radius, stride=self.stride, neg_inner=self.neg_inner,
                    neg_outer=outer, n_neg=self.n_neg)

    def _draw_feature(self, pw, ph):
        for _ in range(10_000):
            f = random_feature(self._rng, self.min_feature_size)
            try:
                f.subrects(pw, ph)
            except DegenerateFeatureError:
                continue
            return f
        raise DegenerateFeatureError(f"cannot draw a usable feature for a {pw}x{ph} part")

    def fit(self, frame, init_rect):
        """Build feature pools for ``init_rect`` and train on the first frame."""
        self.layout_ = self._validate_params()
        frame = check_frame(frame)
        rect = check_rect(init_rect, "init_rect")
        height, width = frame.shape
        if not rect.inside(width, height):
            raise BoundsError(f"initial box {tuple(rect)} outside {width}x{height} frame")
        self._rng = np.random.default_rng(self.random_state)
        self.features_ = []
        self.banks_ = []
        for k in range(self.n_parts):
            dx, dy, pw, ph = self.layout_.offset_and_size(k, rect.w, rect.h)
            feats = [self._draw_feature(pw, ph) for _ in range(self.pool_size)]
            self.features_.append(feats)
            self.banks_.append(FeatureBank(feats, pw, ph, offset=(dx, dy)))
        self.ensemble_ = PartEnsemble(
            self.n_parts, self.n_selectors, self.pool_size, lam=self.lam,
            selection=self.selection, per_selector_pools=self.per_selector_pools,
            solver_max_iter=self.solver_max_iter, dump_dir=self.dump_dir)
        self.location_ = rect
        self.frame_size_ = (width, height)
        self.frame_index_ = 0
        self.diagnostics_ = []
        ii = build_integral(frame)
        report = None
        for _ in range(self.init_rounds):
            report = self._update(ii, rect, geometric=True)
        self.confidence_ = float(self.confidence(ii, [rect])[0])
        n, _, solves, fallbacks, exhausted, sweeps = report
        self.diagnostics_.append(FrameDiagnostics(0, self.confidence_, 1, n, 0.0, "geometric",
                                                  solves, fallbacks, exhausted, sweeps))
        return self

    # -- scoring -----------------------------------------------------------------

    def _part_margins(self, ii: IntegralImage, xs, ys) -> np.ndarray:
        margins = np.zeros((len(xs), self.n_parts))
        for k in range(self.n_parts):
            sel = self.ensemble_.strong[k].selected
            if not sel:
                continue
            resp = self.banks_[k].subset(sel).responses(ii, xs, ys)
            margins[:, k] = self.ensemble_.part_margins(k, resp)
        return margins

    def _scores(self, ii, xs, ys):
        # -log P(no part fires); monotone in the Noisy-OR confidence
        return -log_miss_probability(self._part_margins(ii, xs, ys), self.confidence_scale)

    def confidence(self, frame_or_ii, rects) -> np.ndarray:
        """Noisy-OR confidence that each box holds the object."""
        check_is_fitted(self, "ensemble_")
        ii = frame_or_ii if isinstance(frame_or_ii, IntegralImage) else build_integral(frame_or_ii)
        xs = np.array([r[0] for r in rects], dtype=np.intp)
        ys = np.array([r[1] for r in rects], dtype=np.intp)
        for r in rects:
            if not Rect(*r).inside(ii.width, ii.height):
                raise BoundsError(f"box {tuple(r)} outside {ii.width}x{ii.height} frame")
        return -np.expm1(-self._scores(ii, xs, ys))

    # -- updating ----------------------------------------------------------------

    def _update(self, ii, p_star, geometric):
        height, width = ii.height, ii.width
        dx, dy, region = sample_positions(p_star, width, height, self._rng, **self._geometry())
        # the Kalman updates forget quickly, so feed the batch in random order
        # rather than scan order (which would bias the means to the last rows)
        order = self._rng.permutation(len(dx))
        dx, dy, region = dx[order], dy[order], region[order]
        xs = p_star.x + dx
        ys = p_star.y + dy
        responses = [bank.responses(ii, xs, ys) for bank in self.banks_]
        labels = region.astype(float)
        if not geometric:
            margins = np.zeros((len(xs), self.n_parts))
            for k in range(self.n_parts):
                sel = self.ensemble_.strong[k].selected
                if sel:
                    margins[:, k] = self.ensemble_.part_margins(k, responses[k][:, sel])
            conf = -np.expm1(log_miss_probability(margins, self.confidence_scale))
            labels = np.where(conf > self.label_threshold, 1.0, -1.0)
            if labels.min() == labels.max():
                logger.debug("classifier labels are one-sided; using region labels this frame")
                labels = region.astype(float)
        noise = float(np.mean(labels != region))
        rep = self.ensemble_.update(responses, labels, frame_index=self.frame_index_)
        if self.feature_replacement:
            for k in range(self.n_parts):
                self.ensemble_.replace_worst(k, self._replace_features)
        mean_sweeps = float(np.mean(rep.sweeps)) if rep.sweeps else 0.0
        return (len(labels), noise, rep.solves, rep.fallbacks, rep.exhausted_beta, mean_sweeps)

    def _replace_features(self, k, indices):
        bank = self.banks_[k]
        for i in indices:
            self.features_[k][i] = self._draw_feature(bank.patch_w, bank.patch_h)
        self.banks_[k] = FeatureBank(self.features_[k], bank.patch_w, bank.patch_h, bank.offset)

    def track(self, frame) -> tuple[Rect, float]:
        """Locate the object in the next frame and update the classifiers."""
        check_is_fitted(self, "ensemble_")
        ii = build_integral(frame)
        if (ii.width, ii.height) != self.frame_size_:
            raise ValueError(f"frame is {ii.width}x{ii.height}, tracker was fit on "
                             f"{self.frame_size_[0]}x{self.frame_size_[1]}")
        prev = self.location_
        dx, dy = candidate_offsets(prev, self.search_radius, self.stride, ii.width, ii.height)
        scores = self._scores(ii, prev.x + dx, prev.y + dy)
        candidates = [prev.shift(int(a), int(b)) for a, b in zip(dx, dy)]
        self.location_, best = locate(candidates, scores)
        self.confidence_ = float(-np.expm1(-best))
        self.frame_index_ += 1
        geometric = self.label_mode == "geometric"
        n, noise, solves, fallbacks, exhausted, sweeps = self._update(ii, self.location_, geometric)
        self.diagnostics_.append(FrameDiagnostics(
            self.frame_index_, self.confidence_, len(dx), n, noise,
            "geometric" if geometric else "classifier", solves, fallbacks, exhausted, sweeps))
        return self.location_, self.confidence_

    def track_sequence(self, frames, init_rect) -> list[tuple[Rect, float]]:
        """Run over an iterable of frames; the first frame initializes."""
        out = []
        it = iter(frames)
        try:
            first = next(it)
        except StopIteration:
            return out
        self.fit(first, init_rect)
        out.append((self.location_, self.confidence_))
        for frame in it:
            out.append(self.track(frame))
        return out
