"""Source-cohort training, freezing, and window-level pseudo-labelling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier as clf
from .classifier import ConvClassifierParams
from .dfc import DFCSet
from .errors import CheckpointError, NumericError
from .nncore import Rng, adam_step

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1


@dataclass
class TrainConfig:
    lr: float = 4e-5
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 100
    patience: int = 25
    val_fraction: float = 0.2
    c1: int = 16
    c2: int = 16
    hidden: int = 64


@dataclass
class FrozenModel:
    params: ConvClassifierParams
    source_tag: str = ""
    best_val_acc: float = 0.0
    val_acc_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.params = self.params.copy()
        for t in self.params.tensors():
            t.value.flags.writeable = False

    @property
    def n_regions(self) -> int:
        return self.params.n_regions


@dataclass
class PseudoLabeledDFCSet:
    subject_id: str
    true_label: int
    normal_set: np.ndarray  # windows predicted 0, original order
    disease_set: np.ndarray  # windows predicted 1, original order

    @property
    def sizes(self) -> tuple[int, int]:
        """``(n_disease, n_normal)``."""
        return len(self.disease_set), len(self.normal_set)


def stratified_holdout(labels, fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Split subject indices into (train, holdout), taking ``fraction`` of each class."""
    labels = np.asarray(labels)
    train, hold = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            raise ValueError(f"need at least 2 subjects of class {cls}, found {len(idx)}")
        idx = idx[rng.permutation(len(idx))]
        n_hold = min(len(idx) - 1, max(1, int(round(fraction * len(idx)))))
        hold.extend(idx[:n_hold])
        train.extend(idx[n_hold:])
    return np.sort(train), np.sort(hold)


def run_epoch(X: np.ndarray, y: np.ndarray, params: ConvClassifierParams, lr: float,
              weight_decay: float, batch_size: int, rng: Rng) -> float:
    """One shuffled pass of minibatch AdamW; returns the sample-weighted mean loss."""
    order = rng.permutation(len(X))
    total = 0.0
    for start in range(0, len(order), batch_size):
        b = order[start:start + batch_size]
        loss = clf.loss_and_grad(X[b], y[b], params)
        if not np.isfinite(loss):
            raise NumericError("classifier loss became non-finite")
        for t in params.tensors():
            adam_step(t, lr, weight_decay)
        total += loss * len(b)
    return total / len(X)


def _stack(sets: list[DFCSet]) -> tuple[np.ndarray, np.ndarray]:
    X = np.concatenate([s.matrices for s in sets])
    y = np.concatenate([np.full(len(s), s.label, dtype=np.int64) for s in sets])
    return X, y


def train_transfernet(dfc_sets: list[DFCSet], cfg: TrainConfig, rng: Rng, source_tag: str = "source") -> FrozenModel:
    """Train on source windows and return the best-validation-accuracy snapshot.

    Subjects, not windows, are split; every window inherits its subject's label.
    """
    labels = [s.label for s in dfc_sets]
    if len(set(labels)) < 2:
        raise ValueError("source cohort must contain both classes")
    train_idx, val_idx = stratified_holdout(labels, cfg.val_fraction, rng.child(0))
    X_tr, y_tr = _stack([dfc_sets[i] for i in train_idx])
    X_val, y_val = _stack([dfc_sets[i] for i in val_idx])
    r = X_tr.shape[1]
    params = ConvClassifierParams.init(rng.child(1), r, cfg.c1, cfg.c2, cfg.hidden)
    shuffle = rng.child(2)

    best = params.copy()
    best_acc = -1.0
    trace: list[float] = []
    stale = 0
    for epoch in range(cfg.epochs):
        loss = run_epoch(X_tr, y_tr, params, cfg.lr, cfg.weight_decay, cfg.batch_size, shuffle)
        logits = clf.forward_batch(X_val, params)
        acc = float(np.mean((logits[:, 1] > logits[:, 0]).astype(np.int64) == y_val))
        trace.append(acc)
        log.debug("transfer epoch %d loss %.5f val_acc %.4f", epoch, loss, acc)
        if acc > best_acc:
            best_acc, best, stale = acc, params.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return FrozenModel(best, source_tag, best_acc, trace)


def predict_window(model: FrozenModel, dfc: np.ndarray) -> int:
    """Class of one window; equal logits go to class 0."""
    dfc = np.asarray(dfc, dtype=np.float64)
    if dfc.shape != (model.n_regions, model.n_regions):
        raise ValueError(f"window shape {dfc.shape} does not match model regions {model.n_regions}")
    logits = clf.forward_batch(dfc[None], model.params)[0]
    return int(logits[1] > logits[0])


def predict_windows(model: FrozenModel, mats: np.ndarray) -> np.ndarray:
    logits = clf.forward_batch(mats, model.params)
    return (logits[:, 1] > logits[:, 0]).astype(np.int64)


def generate_pseudo_labels(model: FrozenModel, target: DFCSet) -> PseudoLabeledDFCSet:
    if target.n_regions != model.n_regions:
        raise ValueError(
            f"target has {target.n_regions} regions but the model was trained on {model.n_regions}"
        )
    pred = predict_windows(model, target.matrices)
    return PseudoLabeledDFCSet(
        target.subject_id,
        target.label,
        normal_set=target.matrices[pred == 0],
        disease_set=target.matrices[pred == 1],
    )


def checkpoint_dict(model: FrozenModel) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA,
        "source_tag": model.source_tag,
        "best_val_acc": model.best_val_acc,
        "val_acc_trace": list(model.val_acc_trace),
        "shapes": model.params.dims,
        "params": {k: v.tolist() for k, v in model.params.arrays().items()},
    }


def dumps_checkpoint(model: FrozenModel) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(checkpoint_dict(model), sort_keys=True, indent=1) + "\n"


def save_checkpoint(model: FrozenModel, path) -> Path:
    path = Path(path)
    path.write_text(dumps_checkpoint(model))
    return path


def loads_checkpoint(text: str, origin: str = "<string>") -> FrozenModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{origin}: parse error at byte offset {exc.pos}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != CHECKPOINT_SCHEMA:
        found = doc.get("schema_version") if isinstance(doc, dict) else None
        raise CheckpointError(f"{origin}: schema_version {found!r}, expected {CHECKPOINT_SCHEMA}")
    try:
        params = ConvClassifierParams.from_arrays(doc["params"])
        s = doc["shapes"]
        expected = clf.param_shapes(int(s["R"]), int(s["c1"]), int(s["c2"]), int(s["H"]))
        if any(params.arrays()[k].shape != shape for k, shape in expected.items()):
            raise CheckpointError(f"{origin}: parameter arrays disagree with declared shapes")
        return FrozenModel(params, doc["source_tag"], float(doc["best_val_acc"]),
                           [float(a) for a in doc.get("val_acc_trace", [])])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{origin}: malformed checkpoint ({exc})") from None


def load_checkpoint(path) -> FrozenModel:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"{path}: checkpoint not found")
    return loads_checkpoint(path.read_bytes().decode("utf-8"), str(path))
