"""End-to-end runs, subject-level cross-validation, metrics and reports."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import classifier as clf
from . import erg
from .classifier import ConvClassifierParams
from .dfc import DFCSet, SubjectTimeSeries, WindowConfig, build_dfc_set
from .errors import CheckpointError
from .nncore import Rng
from .transfer import FrozenModel, TrainConfig, generate_pseudo_labels, run_epoch, train_transfernet

log = logging.getLogger(__name__)

MODES = ("full", "no_erg", "no_transfer")
METRICS = ("acc", "sen", "spe", "auc")
REPORT_SCHEMA = 1


@dataclass
class RunConfig:
    window: WindowConfig = field(default_factory=WindowConfig)
    c1: int = 16
    c2: int = 16
    H: int = 64
    H_ae: int = 1024
    l1: float = 8e-5  # autoencoder learning rate
    l2: float = 4e-5  # classifier learning rate
    weight_decay: float = 5e-4
    batch: int = 64
    epochs: int = 100
    transfer_epochs: int = 100
    patience: int = 25
    k_folds: int = 10
    lambda_cos: float = 1.0
    lambda_rec: float = 0.1
    seed: int = 0
    ablation_mode: str = "full"

    def __post_init__(self):
        if isinstance(self.window, dict):
            self.window = WindowConfig(**self.window)
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("learning rates must be positive")
        if self.ablation_mode not in MODES:
            raise ValueError(f"ablation_mode must be one of {MODES}, got {self.ablation_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def transfer_config(self) -> TrainConfig:
        return TrainConfig(lr=self.l2, weight_decay=self.weight_decay, batch_size=self.batch,
                           epochs=self.transfer_epochs, patience=self.patience,
                           c1=self.c1, c2=self.c2, hidden=self.H)

    def joint_config(self) -> erg.JointConfig:
        return erg.JointConfig(lr_ae=self.l1, lr_clf=self.l2, weight_decay=self.weight_decay,
                               batch_size=self.batch, epochs=self.epochs,
                               lambda_cos=self.lambda_cos, lambda_rec=self.lambda_rec)


@dataclass
class RunReport:
    per_fold: list[dict]
    mean_std: dict
    config_echo: dict
    warnings: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA,
            "per_fold": self.per_fold,
            "mean_std": self.mean_std,
            "config_echo": self.config_echo,
            "warnings": self.warnings,
            "extra": self.extra,
        }

    def mean(self, metric: str = "acc") -> float:
        return self.mean_std[metric][0]

    def summary(self) -> str:
        lines = [f"mode: {self.config_echo.get('ablation_mode')}  seed: {self.config_echo.get('seed')}"]
        for m in METRICS:
            mean, std = self.mean_std[m]
            if mean is None:
                lines.append(f"{m.upper()}: undefined")
            else:
                lines.append(f"{m.upper()}: {100 * mean:.2f} ± {100 * std:.2f}")
        return "\n".join(lines)


def kfold_split(labels, k: int, rng: Rng) -> list[np.ndarray]:
    """Stratified subject-level folds (indices into ``labels``).

    Each class is shuffled then dealt round-robin, continuing where the
    previous class stopped, so per-class fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    folds: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise ValueError(f"class {cls} has {len(idx)} subjects, fewer than k={k}")
        for i in idx[rng.permutation(len(idx))]:
            folds[pos % k].append(int(i))
            pos += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def auc_score(scores, truth) -> float | None:
    """ROC AUC from the Mann-Whitney rank sum; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    n_pos = int(np.sum(truth == 1))
    n_neg = int(np.sum(truth == 0))
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[truth == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_metrics(predicted, scores, truth) -> tuple:
    """``(acc, sen, spe, auc)``; a metric is ``None`` when its class is absent."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if len(predicted) == 0 or len(predicted) != len(truth) or len(scores) != len(truth):
        raise ValueError("predicted, scores and truth must have equal non-zero length")
    tp = int(np.sum((predicted == 1) & (truth == 1)))
    tn = int(np.sum((predicted == 0) & (truth == 0)))
    fn = int(np.sum((predicted == 0) & (truth == 1)))
    fp = int(np.sum((predicted == 1) & (truth == 0)))
    acc = (tp + tn) / len(truth)
    sen = tp / (tp + fn) if tp + fn else None
    spe = tn / (tn + fp) if tn + fp else None
    return acc, sen, spe, auc_score(scores, truth)


def plain_average(d: DFCSet) -> np.ndarray:
    m = d.matrices.mean(axis=0)
    np.fill_diagonal(m, 1.0)
    return m


@dataclass
class Representations:
    """Per-target-subject inputs for every ablation mode."""

    labels: np.ndarray
    ids: list[str]
    plain: np.ndarray  # plain average of all windows
    recon: np.ndarray | None = None  # conversion-engine output
    model: FrozenModel | None = None
    pseudo_labels: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    source_warnings: list[str] = field(default_factory=list)

    def inputs(self, mode: str) -> np.ndarray:
        if mode == "no_transfer":
            return self.plain
        if self.recon is None:
            raise ValueError(f"mode {mode!r} needs pseudo-labelled representations")
        return self.recon


def subject_representations(cfg: RunConfig, source: list[SubjectTimeSeries] | None,
                            target: list[SubjectTimeSeries], rng: Rng,
                            with_transfer: bool = True) -> Representations:
    """Build dFCs, and unless ``with_transfer`` is off, train the source model and
    pseudo-label the target windows."""
    target_dfc = [build_dfc_set(s, cfg.window) for s in target]
    reps = Representations(
        labels=np.array([s.label for s in target], dtype=np.int64),
        ids=[s.subject_id for s in target],
        plain=np.stack([plain_average(d) for d in target_dfc]),
    )
    for d in target_dfc:
        reps.warnings.extend(d.warnings)
    if not with_transfer:
        return reps
    if source is None:
        raise ValueError("pseudo-labelling needs a source cohort")
    source_dfc = [build_dfc_set(s, cfg.window) for s in source]
    for d in source_dfc:
        reps.source_warnings.extend(d.warnings)
    model = train_transfernet(source_dfc, cfg.transfer_config(), rng, source_tag="source")
    recon = [erg.conversion_engine(generate_pseudo_labels(model, d)) for d in target_dfc]
    reps.recon = np.stack([r.matrix for r in recon])
    reps.model = model
    reps.pseudo_labels = [
        {"subject_id": r.subject_id, "label": r.true_label, "n_disease": r.set_sizes[0],
         "n_normal": r.set_sizes[1], "chosen_set": r.chosen_set}
        for r in recon
    ]
    return reps


def _fit_predict_fold(mode: str, cfg: RunConfig, X_tr, y_tr, X_te, rng: Rng):
    r = X_tr.shape[1]
    cl = ConvClassifierParams.init(rng.child(0), r, cfg.c1, cfg.c2, cfg.H)
    if mode == "full":
        ae = erg.AEParams.init(rng.child(1), erg.upper_dim(r), cfg.H_ae)
        recon = [erg.ReconstructionFC(str(i), int(y), m, "", (0, 0)) for i, (m, y) in enumerate(zip(X_tr, y_tr))]
        erg.joint_train(recon, ae, cl, cfg.joint_config(), rng.child(2))
        return erg.predict_proba(erg.vectorize_upper(X_te), ae, cl), {"ae": ae, "clf": cl}
    shuffle = rng.child(2)
    for _ in range(cfg.epochs):
        run_epoch(X_tr, y_tr, cl, cfg.l2, cfg.weight_decay, cfg.batch, shuffle)
    return clf.predict_proba(X_te, cl), {"clf": cl}


def run_citl(cfg: RunConfig, source: list[SubjectTimeSeries] | None, target: list[SubjectTimeSeries],
             dump_dir=None) -> RunReport:
    """Build subject representations, then k-fold cross-validate on the target cohort.

    The source model is trained once on the whole source cohort and reused for
    every target fold; target folds are split by subject.
    """
    rng = Rng(cfg.seed)
    reps = subject_representations(cfg, source, target, rng.child(1),
                                   with_transfer=cfg.ablation_mode != "no_transfer")
    return evaluate(cfg, reps, dump_dir)


def run_ablation(cfg: RunConfig, source, target, modes=MODES) -> dict[str, RunReport]:
    """Reports for several modes sharing one source model and one fold layout.

    Each report equals what :func:`run_citl` gives for the same config with
    ``ablation_mode`` replaced.
    """
    rng = Rng(cfg.seed)
    reps = subject_representations(cfg, source, target, rng.child(1),
                                   with_transfer=any(m != "no_transfer" for m in modes))
    out = {}
    for mode in modes:
        mcfg = RunConfig.from_dict({**cfg.to_dict(), "ablation_mode": mode})
        out[mode] = evaluate(mcfg, reps)
    return out


def evaluate(cfg: RunConfig, reps: Representations, dump_dir=None) -> RunReport:
    """Stratified k-fold CV of the mode's classifier on precomputed representations."""
    rng = Rng(cfg.seed)
    mode = cfg.ablation_mode
    X, y, ids = reps.inputs(mode), reps.labels, reps.ids
    warnings = list(reps.warnings)
    if mode != "no_transfer":
        warnings.extend(reps.source_warnings)
    folds = kfold_split(y, cfg.k_folds, rng.child(2))
    per_fold = []
    for k, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        if set(ids[i] for i in train_idx) & set(ids[i] for i in test_idx):
            raise AssertionError("subject appears in both train and test")
        scores, models = _fit_predict_fold(mode, cfg, X[train_idx], y[train_idx], X[test_idx], rng.child(3, k))
        pred = (scores > 0.5).astype(np.int64)
        acc, sen, spe, auc = compute_metrics(pred, scores, y[test_idx])
        per_fold.append({"fold": k, "n_test": len(test_idx), "acc": acc, "sen": sen, "spe": spe, "auc": auc,
                         "test_ids": [ids[i] for i in test_idx]})
        for m, v in zip(METRICS, (acc, sen, spe, auc)):
            if v is None:
                warnings.append(f"fold {k}: {m} undefined (class absent from test fold)")
        if dump_dir is not None and "ae" in models:
            _dump_optimization_fcs(dump_dir, k, [ids[i] for i in test_idx], X[test_idx], models["ae"])

    mean_std = {}
    for m in METRICS:
        vals = [f[m] for f in per_fold if f[m] is not None]
        mean_std[m] = [float(np.mean(vals)), float(np.std(vals))] if vals else [None, None]
    extra = {}
    if mode != "no_transfer" and reps.model is not None:
        extra["transfer_best_val_acc"] = reps.model.best_val_acc
        extra["pseudo_labels"] = reps.pseudo_labels
    return RunReport(per_fold, mean_std, cfg.to_dict(), warnings, extra)


def _dump_optimization_fcs(directory, fold: int, ids, X_te, ae) -> None:
    d = Path(directory) / f"fold{fold:02d}"
    d.mkdir(parents=True, exist_ok=True)
    V = erg.vectorize_upper(X_te)
    for sid, v in zip(ids, V):
        fc = erg.optimization_fc(sid, v, ae)
        np.savetxt(d / f"{sid}.csv", fc.matrix, delimiter=",", fmt="%.17g")


def dumps_report(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"


def save_report(report: RunReport, path) -> Path:
    path = Path(path)
    path.write_text(dumps_report(report))
    return path


def load_report(path) -> RunReport:
    path = Path(path)
    text = path.read_bytes().decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: parse error at byte offset {exc.pos}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != REPORT_SCHEMA:
        raise CheckpointError(f"{path}: unsupported report schema")
    try:
        return RunReport(list(doc["per_fold"]), dict(doc["mean_std"]), dict(doc["config_echo"]),
                         list(doc.get("warnings", [])), dict(doc.get("extra", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed report ({exc!r})") from None


__all__ = [
    "MODES", "RunConfig", "RunReport", "kfold_split", "compute_metrics", "auc_score", "run_citl",
    "save_report", "load_report", "dumps_report", "run_ablation", "evaluate", "Representations",
]
