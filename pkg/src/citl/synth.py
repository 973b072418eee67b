"""Synthetic two-cohort generator with planted transient connectivity patterns.

Each cohort is a set of subjects whose regional signals are unit-variance white
noise. During *pattern episodes* the regions of each planted block are driven
by one shared latent factor, which raises their pairwise correlation inside
the episode only. Two blocks are planted:

* a shared block, identical in both cohorts (the cross-disorder pattern), and
* a cohort-specific disease block.

Episodes are laid out on the sliding-window grid so that the number of windows
lying entirely inside an episode is ``round(fraction * N)``, with ``fraction``
taken from ``patient_window_fraction`` or ``control_window_fraction``.
Windows that straddle an episode edge carry a partial pattern.

Measurement noise of standard deviation ``noise_sd`` is added everywhere.

Two optional kinds of class-independent interference are available, both off
by default:

* ``nuisance_window_fraction``: one episode per subject, covering a random
  share of windows (uniform on ``[0, 2 * fraction]``), in which the shared-block
  regions follow a latent factor with random per-region signs;
* ``artifact_rate``: a Poisson number of single-sample spikes of height
  ``artifact_amplitude``, each hitting a random half of the regions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dfc import SubjectTimeSeries, WindowConfig, window_count
from .nncore import Rng


def block_pairs(regions) -> list[tuple[int, int]]:
    regions = sorted(regions)
    return [(a, b) for i, a in enumerate(regions) for b in regions[i + 1:]]


@dataclass
class SyntheticCohortSpec:
    n_subjects_per_class: int = 40
    T: int = 176
    R: int = 30
    shared_block: list = field(default_factory=lambda: block_pairs(range(0, 8)))
    disease_block: list = field(default_factory=lambda: block_pairs(range(8, 11)))
    target_disease_block: list = field(default_factory=lambda: block_pairs(range(11, 14)))
    patient_window_fraction: float = 0.4
    control_window_fraction: float = 0.05
    noise_sd: float = 0.5
    mixing: float = 0.8
    n_episodes: int = 1
    nuisance_window_fraction: float = 0.0
    artifact_rate: float = 0.0
    artifact_amplitude: float = 6.0
    window: WindowConfig = field(default_factory=WindowConfig)

    def __post_init__(self):
        if isinstance(self.window, dict):
            self.window = WindowConfig(**self.window)
        for name in ("shared_block", "disease_block", "target_disease_block"):
            pairs = [tuple(int(x) for x in p) for p in getattr(self, name)]
            for a, b in pairs:
                if not (0 <= a < self.R and 0 <= b < self.R) or a == b:
                    raise ValueError(f"{name} pair ({a}, {b}) is not a valid region pair for R={self.R}")
            setattr(self, name, pairs)
        for name in ("patient_window_fraction", "control_window_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.mixing <= 1.0:
            raise ValueError("mixing must lie in (0, 1]")
        if self.nuisance_window_fraction < 0 or self.artifact_rate < 0:
            raise ValueError("interference settings must be non-negative")
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        window_count(self.T, self.window)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("shared_block", "disease_block", "target_disease_block"):
            d[name] = [list(p) for p in d[name]]
        return d


def _components(pairs) -> list[list[int]]:
    """Connected groups of regions joined by the given pairs."""
    parent: dict[int, int] = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            a = parent[a]
        return a

    for a, b in pairs:
        parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for a in sorted(parent):
        groups.setdefault(find(a), []).append(a)
    return sorted(groups.values())


def episode_layout(n_windows: int, n_pattern: int, n_episodes: int, cfg: WindowConfig,
                   T: int, rng: Rng) -> list[tuple[int, int]]:
    """Window-index runs ``(start, length)`` holding ``n_pattern`` windows in total.

    Runs are separated so that no window spans two episodes. Fewer episodes are
    used when the requested number does not fit.
    """
    if n_pattern <= 0:
        return []
    # minimal window-index distance between the last window of one run and the first of the next
    sep = -(-(cfg.window_size + 1) // cfg.step)
    for k in range(min(n_episodes, n_pattern), 0, -1):
        lengths = [n_pattern // k + (1 if i < n_pattern % k else 0) for i in range(k)]
        # starts of the first windows, in window-index units
        needed = sum(lengths) + (k - 1) * (sep - 1)
        slack = n_windows - needed
        if slack < 0:
            continue
        cuts = np.sort(rng.integers(0, slack + 1, size=k))
        runs, offset = [], 0
        for i, m in enumerate(lengths):
            start = offset + int(cuts[i])
            runs.append((start, m))
            offset += m + sep - 1
        return runs
    return [(0, n_windows)]


def synth_subject(subject_id: str, label: int, spec: SyntheticCohortSpec, cohort_block, rng: Rng):
    """One subject's ``T x R`` series plus a boolean mask of the time points inside a pattern episode."""
    cfg = spec.window
    n_windows = window_count(spec.T, cfg)
    frac = spec.patient_window_fraction if label == 1 else spec.control_window_fraction
    n_pattern = int(round(frac * n_windows))
    runs = episode_layout(n_windows, n_pattern, spec.n_episodes, cfg, spec.T, rng)

    x = rng.normal((spec.T, spec.R))
    indep = np.sqrt(1.0 - spec.mixing**2)
    if spec.nuisance_window_fraction > 0:
        share = rng.uniform(0.0, 2.0 * spec.nuisance_window_fraction)
        n_nuis = int(round(min(share, 1.0) * n_windows))
        regions = sorted({r for p in spec.shared_block for r in p})
        for start, m in episode_layout(n_windows, n_nuis, 1, cfg, spec.T, rng):
            t0 = start * cfg.step
            t1 = (start + m - 1) * cfg.step + cfg.window_size
            signs = np.where(rng.uniform(0, 1, len(regions)) < 0.5, -1.0, 1.0)
            latent = rng.normal((t1 - t0, 1))
            x[t0:t1, regions] = spec.mixing * latent * signs + indep * rng.normal((t1 - t0, len(regions)))
    groups = _components(list(spec.shared_block) + list(cohort_block))
    mask = np.zeros(spec.T, dtype=bool)
    for start, m in runs:
        t0 = start * cfg.step
        t1 = (start + m - 1) * cfg.step + cfg.window_size
        mask[t0:t1] = True
        for g in groups:
            latent = rng.normal((t1 - t0, 1))
            x[t0:t1, g] = spec.mixing * latent + indep * rng.normal((t1 - t0, len(g)))
    x = x + spec.noise_sd * rng.normal((spec.T, spec.R))
    n_art = int(rng.poisson(spec.artifact_rate)) if spec.artifact_rate > 0 else 0
    for _ in range(n_art):
        t = int(rng.integers(0, spec.T))
        hit = rng.uniform(0, 1, spec.R) < 0.5
        x[t, hit] += spec.artifact_amplitude * (1.0 if rng.uniform(0, 1) < 0.5 else -1.0)
    return SubjectTimeSeries(subject_id, label, x), mask


def synth_cohort(spec: SyntheticCohortSpec, cohort_block, prefix: str, rng: Rng) -> list[SubjectTimeSeries]:
    subjects = []
    n = spec.n_subjects_per_class
    for i in range(2 * n):
        label = int(i >= n)
        sid = f"{prefix}{i:03d}"
        ts, _ = synth_subject(sid, label, spec, cohort_block, rng.child(i))
        subjects.append(ts)
    return subjects


def synth_cohorts(spec: SyntheticCohortSpec, rng: Rng) -> tuple[list[SubjectTimeSeries], list[SubjectTimeSeries]]:
    """Two cohorts sharing ``shared_block``, each with its own disease block.

    Cohort A uses ``disease_block``; cohort B uses ``target_disease_block``.
    """
    a = synth_cohort(spec, spec.disease_block, "a", rng.child(0))
    b = synth_cohort(spec, spec.target_disease_block, "b", rng.child(1))
    return a, b
