"""Sliding-window dynamic functional connectivity.

Cohort files
------------
A cohort is a manifest CSV with header ``subject_id,label,path`` (paths are
relative to the manifest's directory) and one headerless CSV per subject
holding ``T`` rows by ``R`` comma-separated decimal columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError

DEFAULT_REGIONS = 116


@dataclass(frozen=True)
class WindowConfig:
    window_size: int = 30
    step: int = 2

    def __post_init__(self):
        if self.window_size < 2:
            raise ValueError(f"window_size must be >= 2, got {self.window_size}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")


@dataclass
class SubjectTimeSeries:
    subject_id: str
    label: int
    series: np.ndarray  # T x R

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        self.series = np.asarray(self.series, dtype=np.float64)
        if self.series.ndim != 2:
            raise ValueError(f"series must be 2-D (T x R), got shape {self.series.shape}")

    @property
    def n_timepoints(self) -> int:
        return self.series.shape[0]

    @property
    def n_regions(self) -> int:
        return self.series.shape[1]


@dataclass
class DFCSet:
    subject_id: str
    label: int
    matrices: np.ndarray  # N x R x R
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.matrices)

    @property
    def n_regions(self) -> int:
        return self.matrices.shape[1]


def window_count(length: int, cfg: WindowConfig) -> int:
    """Number of windows ``floor((L - W) / S) + 1``."""
    if length < cfg.window_size:
        raise ValueError(f"series length {length} is shorter than window size {cfg.window_size}")
    return (length - cfg.window_size) // cfg.step + 1


def _pearson_stack(windows: np.ndarray) -> tuple[np.ndarray, list[list[int]]]:
    """Correlation matrices for a stack of ``(N, W, R)`` windows.

    Returns the ``(N, R, R)`` stack and, per window, the zero-variance columns.
    Only the upper triangle is computed; the lower is its mirror.
    """
    windows = np.asarray(windows, dtype=np.float64)
    n, w, r = windows.shape
    if w < 2:
        raise ValueError("a window needs at least 2 time points")
    # exact test: a constant column has zero spread
    flat = np.ptp(windows, axis=1) == 0.0
    centered = windows - windows.mean(axis=1, keepdims=True)
    # r is scale-free; rescaling each column keeps tiny or huge inputs out of under/overflow
    peak = np.abs(centered).max(axis=1, keepdims=True)
    centered = centered / np.where(peak > 0, peak, 1.0)
    cov = np.einsum("nti,ntj->nij", centered, centered)
    norms = np.sqrt(np.einsum("nti,nti->ni", centered, centered))
    flat |= norms == 0.0
    safe = np.where(flat, 1.0, norms)
    corr = cov / (safe[:, :, None] * safe[:, None, :])
    corr = np.where(flat[:, :, None] | flat[:, None, :], 0.0, corr)
    np.clip(corr, -1.0, 1.0, out=corr)
    iu = np.triu_indices(r, 1)
    out = np.zeros_like(corr)
    out[:, iu[0], iu[1]] = corr[:, iu[0], iu[1]]
    out[:, iu[1], iu[0]] = corr[:, iu[0], iu[1]]
    out[:, np.arange(r), np.arange(r)] = 1.0
    zero_cols = [list(np.flatnonzero(f)) for f in flat]
    return out, zero_cols


def pearson_matrix(window: np.ndarray) -> np.ndarray:
    """Pearson correlation between the columns of a ``W x R`` window.

    The result is exactly symmetric with a unit diagonal. Entries involving a
    constant column are 0.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError(f"window must be 2-D, got shape {window.shape}")
    return _pearson_stack(window[None])[0][0]


def sliding_windows(series: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """``(N, W, R)`` view of the windows starting at ``0, S, 2S, ...``."""
    n = window_count(series.shape[0], cfg)
    view = np.lib.stride_tricks.sliding_window_view(series, cfg.window_size, axis=0)
    # sliding_window_view puts the window axis last: (T-W+1, R, W)
    return view[: (n - 1) * cfg.step + 1 : cfg.step].transpose(0, 2, 1)


def build_dfc_set(ts: SubjectTimeSeries, cfg: WindowConfig) -> DFCSet:
    windows = sliding_windows(ts.series, cfg)
    mats, zero_cols = _pearson_stack(windows)
    warnings = [
        f"{ts.subject_id}: window {k} has zero-variance regions {cols}; their correlations set to 0"
        for k, cols in enumerate(zero_cols)
        if cols
    ]
    return DFCSet(ts.subject_id, ts.label, mats, warnings)


def _read_series(path: Path) -> np.ndarray:
    if not path.is_file():
        raise IngestionError(f"{path}: series file not found")
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestionError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise IngestionError(f"{path}: empty series file")
    arr = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise IngestionError(f"{path}: non-finite value")
    return arr


def load_cohort(manifest_path) -> list[SubjectTimeSeries]:
    """Read every subject listed in a cohort manifest, in manifest order."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IngestionError(f"{manifest_path}: manifest not found")
    base = manifest_path.parent
    subjects: list[SubjectTimeSeries] = []
    with manifest_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["subject_id", "label", "path"]:
            raise IngestionError(f"{manifest_path}:1: header must be 'subject_id,label,path'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestionError(f"{manifest_path}:{lineno}: expected 3 columns, found {len(row)}")
            sid, label_text, rel = (c.strip() for c in row)
            if label_text not in ("0", "1"):
                raise IngestionError(f"{manifest_path}:{lineno}: label must be 0 or 1")
            series = _read_series(base / rel)
            if subjects and series.shape[1] != subjects[0].n_regions:
                raise IngestionError(
                    f"{manifest_path}:{lineno}: {rel} has {series.shape[1]} regions, "
                    f"cohort has {subjects[0].n_regions}"
                )
            subjects.append(SubjectTimeSeries(sid, int(label_text), series))
    return subjects


def write_cohort(subjects: list[SubjectTimeSeries], directory) -> Path:
    """Write ``manifest.csv`` plus one series file per subject; returns the manifest path."""
    directory = Path(directory)
    (directory / "series").mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "label", "path"])
        for s in subjects:
            rel = f"series/{s.subject_id}.csv"
            np.savetxt(directory / rel, s.series, delimiter=",", fmt="%.17g")
            w.writerow([s.subject_id, s.label, rel])
    return manifest
