"""Tracking metrics, the multi-run protocol and synthetic benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sparse_select import (DEFAULT_LAMBDA, assemble, select_by_error, select_classifier,
                            solve_nn_l1)
from .validation import ProtocolError, Rect, check_rect
from .weak_learn import SelectorStats, error_rate, record_batch

SUCCESS_THRESHOLD = 0.5


def center_error(gt, tr, squared: bool = False) -> float:
    """Distance in pixels between the box centers (squared if asked)."""
    gx, gy = Rect(*gt).center
    tx, ty = Rect(*tr).center
    d2 = (gx - tx) ** 2 + (gy - ty) ** 2
    return float(d2) if squared else math.sqrt(d2)


def overlap(gt, tr) -> float:
    """Intersection over union of two boxes."""
    gx, gy, gw, gh = gt
    tx, ty, tw, th = tr
    iw = min(gx + gw, tx + tw) - max(gx, tx)
    ih = min(gy + gh, ty + th) - max(gy, ty)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (gw * gh + tw * th - inter)


def success_rate(overlaps, threshold: float = SUCCESS_THRESHOLD) -> float:
    """Fraction of frames whose overlap is strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    ov = np.asarray(overlaps, dtype=np.float64)
    if ov.size == 0:
        return 0.0
    return float(np.mean(ov > threshold))


@dataclass
class RunResult:
    seed: int
    trajectory: list[Rect]
    confidences: list[float]
    center_errors: np.ndarray
    overlaps: np.ndarray
    mean_position_error: float
    success_rate: float
    diagnostics: list = field(default_factory=list)


@dataclass
class EvalReport:
    runs: list[RunResult]
    threshold: float = SUCCESS_THRESHOLD
    squared_error: bool = False

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def mean_position_error(self) -> float:
        return float(np.mean([r.mean_position_error for r in self.runs]))

    @property
    def success_rate(self) -> float:
        return float(np.mean([r.success_rate for r in self.runs]))

    @property
    def center_errors(self) -> np.ndarray:
        """``(n_runs, n_frames)`` per-frame center errors."""
        return np.vstack([r.center_errors for r in self.runs])

    @property
    def overlaps(self) -> np.ndarray:
        return np.vstack([r.overlaps for r in self.runs])

    def summary(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {
            "mean_position_error": self.mean_position_error,
            "success_rate": self.success_rate,
            "n_runs": self.n_runs,
            "n_frames": int(self.overlaps.shape[1]) if self.runs else 0,
            "success_threshold": self.threshold,
            "median_center_error": float(np.median(self.center_errors)) if self.runs else 0.0,
            "median_overlap": float(np.median(self.overlaps)) if self.runs else 0.0,
        }
        for i, r in enumerate(self.runs):
            out[f"run{i}_seed"] = r.seed
            out[f"run{i}_mean_position_error"] = r.mean_position_error
            out[f"run{i}_success_rate"] = r.success_rate
        return out


def score_trajectory(trajectory: Sequence, ground_truth: Sequence, *, threshold=SUCCESS_THRESHOLD,
                     squared=False) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame center errors and overlaps; ground truth must cover every frame."""
    missing = list(range(len(ground_truth), len(trajectory)))
    if missing:
        raise ProtocolError(f"ground truth missing for frames {missing}")
    errs = np.array([center_error(g, t, squared) for g, t in zip(ground_truth, trajectory)])
    ovs = np.array([overlap(g, t) for g, t in zip(ground_truth, trajectory)])
    return errs, ovs


def run_protocol(frames, ground_truth: Sequence, tracker_factory: Callable[[int], object],
                 n_runs: int = 5, seed: int = 0, *, init_rect=None,
                 threshold: float = SUCCESS_THRESHOLD, squared: bool = False) -> EvalReport:
    """Track the sequence ``n_runs`` times with seeds ``seed .. seed + n_runs - 1``.

    ``tracker_factory(seed)`` returns a fresh tracker exposing
    ``track_sequence(frames, init_rect)``. ``frames`` must be re-iterable.
    The initial box defaults to the first ground-truth box.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    n_frames = len(frames)
    missing = list(range(len(ground_truth), n_frames))
    if missing:
        raise ProtocolError(f"ground truth missing for frames {missing}")
    init = check_rect(ground_truth[0] if init_rect is None else init_rect, "init_rect")
    runs = []
    for i in range(n_runs):
        s = seed + i
        tracker = tracker_factory(s)
        out = tracker.track_sequence(frames, init)
        traj = [r for r, _ in out]
        conf = [c for _, c in out]
        errs, ovs = score_trajectory(traj, ground_truth, threshold=threshold, squared=squared)
        runs.append(RunResult(s, traj, conf, errs, ovs, float(np.mean(errs)),
                              success_rate(ovs, threshold),
                              list(getattr(tracker, "diagnostics_", []))))
    return EvalReport(runs, threshold, squared)


# -- synthetic sequences --------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic sequence with exact ground truth.

    The target is a blocky random texture moving along a smooth Lissajous
    path over a noise background. An optional occluder covers the left
    ``occlusion_fraction`` of the target during ``occlusion_frames``
    (inclusive bounds).
    """

    n_frames: int = 100
    width: int = 160
    height: int = 120
    target_size: int = 30
    amplitude: tuple[float, float] = (40.0, 25.0)
    period: tuple[float, float] = (80.0, 50.0)
    phase: tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = 0.1
    background: float = 0.5
    texture_cells: int = 6
    occlusion_fraction: float = 0.0
    occlusion_frames: tuple[int, int] | None = None
    seed: int = 0


PRESETS = {
    "motion": SyntheticSpec(),
    "occlusion": SyntheticSpec(occlusion_fraction=0.5, occlusion_frames=(40, 60)),
    "static": SyntheticSpec(amplitude=(0.0, 0.0), n_frames=50),
}


def synthetic_path(spec: SyntheticSpec) -> list[Rect]:
    t = np.arange(spec.n_frames, dtype=np.float64)
    s = spec.target_size
    cx = spec.width / 2 + spec.amplitude[0] * np.sin(2 * np.pi * t / spec.period[0] + spec.phase[0])
    cy = spec.height / 2 + spec.amplitude[1] * np.sin(2 * np.pi * t / spec.period[1] + spec.phase[1])
    xs = np.rint(cx - s / 2).astype(int)
    ys = np.rint(cy - s / 2).astype(int)
    rects = [Rect(int(x), int(y), s, s) for x, y in zip(xs, ys)]
    for r in rects:
        if not r.inside(spec.width, spec.height):
            raise ValueError(f"synthetic path leaves the {spec.width}x{spec.height} frame at {r}")
    return rects


def _block_texture(rng, size, cells):
    coarse = rng.uniform(0.1, 0.9, size=(cells, cells))
    reps = -(-size // cells)
    return np.kron(coarse, np.ones((reps, reps)))[:size, :size]


def occluder_rect(target: Rect, fraction: float) -> Rect:
    """Left strip of ``target`` covering ``fraction`` of its width."""
    return Rect(target.x, target.y, max(1, int(round(fraction * target.w))), target.h)


def make_synthetic_sequence(spec: SyntheticSpec = SyntheticSpec()):
    """Render ``spec``; returns ``(frames, ground_truth, occluders)``.

    ``occluders[t]`` is the occluding box at frame ``t`` or ``None``.
    """
    rng = np.random.default_rng(spec.seed)
    s = spec.target_size
    texture = _block_texture(rng, s, spec.texture_cells)
    occ_texture = _block_texture(rng, s, spec.texture_cells)
    truth = synthetic_path(spec)
    frames, occluders = [], []
    for t, r in enumerate(truth):
        img = np.full((spec.height, spec.width), spec.background)
        img[r.y:r.y + s, r.x:r.x + s] = texture
        occ = None
        if (spec.occlusion_frames is not None and spec.occlusion_fraction > 0
                and spec.occlusion_frames[0] <= t <= spec.occlusion_frames[1]):
            occ = occluder_rect(r, spec.occlusion_fraction)
            img[occ.y:occ.y + occ.h, occ.x:occ.x + occ.w] = occ_texture[:occ.h, :occ.w]
        img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
        frames.append(np.clip(img, 0.0, 1.0))
        occluders.append(occ)
    return frames, truth, occluders


def reacquisition_delay(overlaps, occlusion_end: int, threshold: float = SUCCESS_THRESHOLD):
    """Frames after ``occlusion_end`` until the first successful frame; ``None`` if never."""
    ov = np.asarray(overlaps)
    for t in range(occlusion_end + 1, ov.size):
        if ov[t] > threshold:
            return t - occlusion_end
    return None


# -- label-noise selection benchmark -------------------------------------------


def make_planted_pool(rng: np.random.Generator, n_samples: int = 50, n_classifiers: int = 200,
                      planted_error: float = 0.05, distractor_error=(0.3, 0.5),
                      noise_rate: float = 0.0):
    """A pool of +-1 prediction columns with one planted accurate classifier.

    Every column flips an exact ``round(error * L)`` entries of the hidden
    truth; distractor errors are uniform in ``distractor_error``. The
    observed labels flip ``round(noise_rate * L)`` truth entries.

    Returns ``(phi, y, truth, planted_index, true_errors)``.
    """
    L = n_samples
    truth = rng.choice(np.array([-1.0, 1.0]), size=L)
    planted = int(rng.integers(n_classifiers))
    phi = np.empty((L, n_classifiers))
    true_errors = np.empty(n_classifiers)
    lo, hi = distractor_error
    for m in range(n_classifiers):
        e = planted_error if m == planted else rng.uniform(lo, hi)
        k = int(round(e * L))
        col = truth.copy()
        col[rng.choice(L, size=k, replace=False)] *= -1.0
        phi[:, m] = col
        true_errors[m] = k / L
    y = truth.copy()
    y[rng.choice(L, size=int(round(noise_rate * L)), replace=False)] *= -1.0
    return phi, y, truth, planted, true_errors


@dataclass
class SelectionBenchRow:
    noise_rate: float
    trials: int
    l1_recovered: int
    error_recovered: int
    l1_unconverged: int

    @property
    def l1_rate(self) -> float:
        return self.l1_recovered / self.trials

    @property
    def error_rate(self) -> float:
        return self.error_recovered / self.trials


def selection_benchmark(noise_rates=(0.1, 0.2, 0.3), trials: int = 100, seed: int = 0,
                        lam: float = DEFAULT_LAMBDA, **pool_kwargs) -> list[SelectionBenchRow]:
    """Planted-classifier recovery of l1 selection vs lowest accumulated error.

    Trial ``i`` at every noise rate uses generator seed ``seed + i``.
    """
    rows = []
    for rho in noise_rates:
        l1_hits = err_hits = unconverged = 0
        for i in range(trials):
            rng = np.random.default_rng(seed + i)
            phi, y, _, planted, _ = make_planted_pool(rng, noise_rate=rho, **pool_kwargs)
            sol = solve_nn_l1(assemble(phi, y, lam))
            unconverged += not sol.converged
            l1_hits += select_classifier(sol) == planted
            stats = record_batch(SelectorStats.empty(phi.shape[1]), phi, y)
            err_hits += select_by_error(error_rate(stats)) == planted
        rows.append(SelectionBenchRow(rho, trials, l1_hits, err_hits, unconverged))
    return rows
