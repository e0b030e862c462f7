"""Frame loading, ground-truth parsing, run configuration and output files.

Coordinates are 0-based pixels everywhere: ``x, y`` is the top-left corner
of a box, ``w, h`` its size. Some public ground-truth files are 1-based;
shift them before use.
"""

from __future__ import annotations

import csv
import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .imaging import rgb_to_gray
from .validation import Rect

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm", ".jpg", ".jpeg")
TRAJECTORY_HEADER = ("frame", "x", "y", "w", "h", "confidence")


def _natural_key(path: Path):
    parts = re.split(r"(\d+)", path.name)
    return [(0, int(p), "") if p.isdigit() else (1, 0, p.lower()) for p in parts]


def _decode(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr", "LA"):
                arr = np.asarray(img.convert("RGB"), dtype=np.float64)
                return rgb_to_gray(arr)
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(img, dtype=np.float64)
                top = 65535.0 if mode.startswith("I;16") else max(float(arr.max()), 1.0)
                return arr / top
            return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc


@dataclass
class SequenceSource:
    """An ordered image sequence decoded lazily to grayscale frames in [0, 1]."""

    directory: Path
    files: list[Path]
    width: int
    height: int
    ground_truth: Path | None = None

    def __len__(self) -> int:
        return len(self.files)

    def __getitem__(self, i: int) -> np.ndarray:
        path = self.files[i]
        frame = _decode(path)
        if frame.shape != (self.height, self.width):
            raise ValueError(f"{path} is {frame.shape[1]}x{frame.shape[0]}, "
                             f"sequence is {self.width}x{self.height}")
        return frame

    def __iter__(self) -> Iterator[np.ndarray]:
        for i in range(len(self.files)):
            yield self[i]


def load_sequence(directory, ground_truth=None) -> SequenceSource:
    """Collect PNG/PGM/PPM/JPEG frames in numeric-aware name order.

    Only headers are read here; pixels are decoded on access.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"sequence directory {directory} does not exist")
    files = sorted((p for p in directory.iterdir()
                    if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES), key=_natural_key)
    if not files:
        raise ValueError(f"no image frames ({', '.join(IMAGE_SUFFIXES)}) in {directory}")
    sizes = {}
    for p in files:
        try:
            with Image.open(p) as img:
                sizes[p] = img.size
        except (UnidentifiedImageError, OSError) as exc:
            raise ValueError(f"cannot decode image {p}: {exc}") from exc
    first = sizes[files[0]]
    for p in files:
        if sizes[p] != first:
            raise ValueError(f"mixed frame sizes: {files[0].name} is {first[0]}x{first[1]}, "
                             f"{p.name} is {sizes[p][0]}x{sizes[p][1]}")
    gt = None if ground_truth is None else Path(ground_truth)
    return SequenceSource(directory, files, first[0], first[1], gt)


def parse_rect(text: str, what: str = "box") -> Rect:
    """``"x,y,w,h"`` (commas and/or whitespace) to a :class:`Rect`."""
    fields = [f for f in re.split(r"[,\s]+", text.strip()) if f]
    if len(fields) != 4:
        raise ValueError(f"{what} needs 4 numbers x,y,w,h, got {text.strip()!r}")
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise ValueError(f"{what} has a non-numeric field: {text.strip()!r}") from None
    if not all(np.isfinite(vals)):
        raise ValueError(f"{what} has a non-finite field: {text.strip()!r}")
    if any(v != round(v) for v in vals):
        raise ValueError(f"{what} must use integer pixel coordinates: {text.strip()!r}")
    x, y, w, h = (int(round(v)) for v in vals)
    if w <= 0 or h <= 0:
        raise ValueError(f"{what} must have w > 0 and h > 0, got {text.strip()!r}")
    return Rect(x, y, w, h)


def parse_ground_truth(path) -> list[Rect]:
    """One box per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    rects = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            try:
                rects.append(parse_rect(body, "ground-truth box"))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rects


# -- output files ------------------------------------------------------------------


def fmt(value) -> str:
    """Six significant digits for floats; integers and strings as they are."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def write_trajectory(path, trajectory: Sequence, confidences: Sequence[float] | None = None):
    path = Path(path)
    if confidences is None:
        confidences = [float("nan")] * len(trajectory)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER)
            for t, (r, c) in enumerate(zip(trajectory, confidences)):
                w.writerow([t, *(fmt(int(v)) for v in r), fmt(float(c))])
    except OSError as exc:
        raise OSError(f"cannot write trajectory {path}: {exc}") from exc


def read_trajectory(path) -> tuple[list[Rect], list[float]]:
    path = Path(path)
    rects, confs = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                rects.append(parse_rect(",".join(row[1:5]), "trajectory box"))
                confs.append(float(row[5]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rects, confs


def write_summary(path, summary: Mapping[str, object]):
    """``key=value`` lines sorted by key."""
    path = Path(path)
    try:
        with path.open("w") as fh:
            for key in sorted(summary):
                fh.write(f"{key}={fmt(summary[key])}\n")
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc}") from exc


def write_frame_metrics(path, center_errors, overlaps):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "center_error", "overlap"])
            for t, (e, o) in enumerate(zip(center_errors, overlaps)):
                w.writerow([t, fmt(float(e)), fmt(float(o))])
    except OSError as exc:
        raise OSError(f"cannot write frame metrics {path}: {exc}") from exc


def write_outputs(report, trajectory, paths: Mapping[str, object], confidences=None):
    """Write whichever of ``trajectory``, ``summary`` and ``frames`` appear in ``paths``.

    ``report`` is an :class:`~dcstrack.evaluation.EvalReport` or ``None``.
    """
    if paths.get("trajectory"):
        write_trajectory(paths["trajectory"], trajectory, confidences)
    if report is not None and paths.get("summary"):
        write_summary(paths["summary"], report.summary())
    if report is not None and paths.get("frames"):
        write_frame_metrics(paths["frames"], report.center_errors.mean(axis=0),
                            report.overlaps.mean(axis=0))


# -- run configuration --------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_layout(text: str):
    boxes = []
    for chunk in text.split(";"):
        if chunk.strip():
            vals = [float(v) for v in re.split(r"[,\s]+", chunk.strip()) if v]
            if len(vals) != 4:
                raise ValueError(f"part box needs 4 fractions fx,fy,fw,fh, got {chunk.strip()!r}")
            boxes.append(tuple(vals))
    return tuple(boxes)


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


@dataclass
class RunConfig:
    """Everything a ``track``/``bench`` run needs; defaults follow the paper setup."""

    init: Rect | None = None
    parts: int = 5
    selectors: int = 20
    pool: int = 200
    lam: float = 0.01
    radius: float = 25.0
    stride: int = 1
    pos_radius: float = 4.0
    neg_inner: float = 8.0
    neg_outer: float | None = None
    n_neg: int = 50
    label_mode: str = "classifier"
    label_threshold: float = 0.5
    confidence_scale: float = 1.0
    init_rounds: int = 5
    selection: str = "l1"
    per_selector_pools: bool = False
    feature_replacement: bool = False
    layout: tuple | None = None
    runs: int = 5
    seed: int = 0
    squared_error: bool = False
    dump_sparse: Path | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def validate(self) -> "RunConfig":
        if self.parts < 1 or self.selectors < 1 or self.pool <= self.selectors:
            raise ValueError("need parts >= 1, selectors >= 1 and pool > selectors")
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if self.radius < 0 or self.stride < 1:
            raise ValueError("need radius >= 0 and stride >= 1")
        outer = 2 * self.radius if self.neg_outer is None else self.neg_outer
        if not 0 < self.pos_radius < self.neg_inner < outer:
            raise ValueError(f"need 0 < pos_radius < neg_inner < neg_outer, got "
                             f"{self.pos_radius}, {self.neg_inner}, {outer}")
        if self.label_mode not in ("classifier", "geometric"):
            raise ValueError(f"label_mode must be classifier or geometric, got {self.label_mode!r}")
        if self.selection not in ("l1", "error"):
            raise ValueError(f"selection must be l1 or error, got {self.selection!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.layout is not None and len(self.layout) != self.parts:
            raise ValueError(f"layout has {len(self.layout)} boxes but parts={self.parts}")
        return self

    def tracker_params(self, seed: int) -> dict:
        """Keyword arguments for :class:`~dcstrack.motion.PartBoostTracker`."""
        return dict(n_parts=self.parts, n_selectors=self.selectors, pool_size=self.pool,
                    lam=self.lam, search_radius=self.radius, stride=self.stride,
                    pos_radius=self.pos_radius, neg_inner=self.neg_inner,
                    neg_outer=self.neg_outer, n_neg=self.n_neg, label_mode=self.label_mode,
                    label_threshold=self.label_threshold,
                    confidence_scale=self.confidence_scale, init_rounds=self.init_rounds,
                    selection=self.selection, per_selector_pools=self.per_selector_pools,
                    feature_replacement=self.feature_replacement, part_layout=self.layout,
                    random_state=seed,
                    dump_dir=None if self.dump_sparse is None else str(self.dump_sparse))


# config-file key -> (RunConfig field, parser)
CONFIG_KEYS = {
    "init": ("init", lambda s: parse_rect(s, "init")),
    "parts": ("parts", int),
    "selectors": ("selectors", int),
    "pool": ("pool", int),
    "lambda": ("lam", float),
    "radius": ("radius", float),
    "stride": ("stride", int),
    "pos_radius": ("pos_radius", float),
    "neg_inner": ("neg_inner", float),
    "neg_outer": ("neg_outer", _optional_float),
    "n_neg": ("n_neg", int),
    "label_mode": ("label_mode", str.strip),
    "label_threshold": ("label_threshold", float),
    "confidence_scale": ("confidence_scale", float),
    "init_rounds": ("init_rounds", int),
    "selection": ("selection", str.strip),
    "per_selector_pools": ("per_selector_pools", _parse_bool),
    "feature_replacement": ("feature_replacement", _parse_bool),
    "layout": ("layout", _parse_layout),
    "runs": ("runs", int),
    "seed": ("seed", int),
    "squared_error": ("squared_error", _parse_bool),
    "dump_sparse": ("dump_sparse", Path),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines to RunConfig field values; unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{source}:{lineno}: expected key = value, got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r} "
                             f"(known: {', '.join(sorted(CONFIG_KEYS))})")
        name, parse = CONFIG_KEYS[key]
        try:
            values[name] = parse(raw)
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def preset_config(name: str) -> dict:
    """Values from a bundled per-sequence preset such as ``"sylv"``."""
    ref = resources.files("dcstrack") / "presets" / f"{name}.cfg"
    if not ref.is_file():
        raise ValueError(f"no bundled preset {name!r}; available: {', '.join(list_presets())}")
    return parse_config_text(ref.read_text(), f"preset {name}")


def list_presets() -> list[str]:
    root = resources.files("dcstrack") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def build_config(*layers: Mapping[str, object]) -> RunConfig:
    """Defaults, then each layer in order (later wins), then validation."""
    cfg = RunConfig()
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for layer in layers:
        for key, value in layer.items():
            if key not in names:
                raise ValueError(f"unknown config field {key!r}")
            if value is not None:
                setattr(cfg, key, value)
    return cfg.validate()
