import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citl.errors import CheckpointError
from citl.nncore import Rng
from citl.pipeline import (
    RunConfig,
    auc_score,
    compute_metrics,
    dumps_report,
    kfold_split,
    load_report,
    run_ablation,
    run_citl,
    save_report,
)

SMALL = dict(c1=4, c2=4, H=8, H_ae=16, l1=1e-3, l2=1e-3, epochs=5, transfer_epochs=5, k_folds=3)


def pair_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t == 1]
    neg = [s for s, t in zip(scores, truth) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_kfold_twenty_subjects():
    labels = [0] * 10 + [1] * 10
    folds = kfold_split(labels, 10, Rng(0))
    assert len(folds) == 10
    for f in folds:
        assert sorted(labels[i] for i in f) == [0, 1]
    assert sorted(np.concatenate(folds).tolist()) == list(range(20))
    again = kfold_split(labels, 10, Rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


def test_kfold_rejects_small_classes():
    with pytest.raises(ValueError):
        kfold_split([0] * 9 + [1] * 20, 10, Rng(0))
    with pytest.raises(ValueError):
        kfold_split([0, 1] * 5, 1, Rng(0))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 30), st.integers(0, 30), st.integers(0, 1000))
def test_kfold_partition_balanced(k, extra0, extra1, seed):
    labels = np.array([0] * (k + extra0) + [1] * (k + extra1))
    folds = kfold_split(labels, k, Rng(seed))
    assert sorted(np.concatenate(folds).tolist()) == list(range(len(labels)))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for cls in (0, 1):
        per = [int(np.sum(labels[f] == cls)) for f in folds]
        assert max(per) - min(per) <= 1


def test_metrics_reference_cases():
    truth = np.array([0, 0, 1, 1])
    assert compute_metrics(truth, np.array([0.1, 0.2, 0.8, 0.9]), truth) == (1.0, 1.0, 1.0, 1.0)
    acc, sen, spe, _ = compute_metrics(np.zeros(4, int), np.full(4, 0.3), truth)
    assert (acc, sen, spe) == (0.5, 0.0, 1.0)
    acc, sen, spe, auc = compute_metrics(np.array([1, 0]), np.array([0.6, 0.4]), np.array([1, 1]))
    assert spe is None and auc is None and sen == 0.5


def test_auc_random_instance_matches_pair_counting():
    rng = np.random.default_rng(0)
    scores = rng.integers(0, 5, 20) / 4
    truth = np.array([0, 1] * 10)
    assert auc_score(scores, truth) == pair_auc(scores, truth)


def test_config_dict_round_trip_and_rejection():
    cfg = RunConfig(seed=9, ablation_mode="no_erg")
    d = json.loads(json.dumps(cfg.to_dict()))
    assert RunConfig.from_dict(d) == cfg
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        RunConfig(ablation_mode="other")
    with pytest.raises(ValueError):
        RunConfig(k_folds=1)


@pytest.fixture(scope="module")
def cohorts(request):
    from citl.synth import SyntheticCohortSpec, synth_cohorts
    return synth_cohorts(SyntheticCohortSpec(n_subjects_per_class=6, T=60), Rng(1))


@pytest.mark.parametrize("mode", ["full", "no_erg", "no_transfer"])
def test_run_is_deterministic_with_one_row_per_fold(cohorts, mode):
    src, tgt = cohorts
    cfg = RunConfig(ablation_mode=mode, **SMALL)
    a, b = run_citl(cfg, src, tgt), run_citl(cfg, src, tgt)
    assert dumps_report(a) == dumps_report(b)
    assert len(a.per_fold) == 3
    assert sum(f["n_test"] for f in a.per_fold) == len(tgt)
    ids = [i for f in a.per_fold for i in f["test_ids"]]
    assert sorted(ids) == sorted(s.subject_id for s in tgt)
    if mode != "no_transfer":
        assert len(a.extra["pseudo_labels"]) == len(tgt)


def test_ablation_matches_individual_runs(cohorts):
    src, tgt = cohorts
    reps = run_ablation(RunConfig(**SMALL), src, tgt)
    for mode, rep in reps.items():
        single = run_citl(RunConfig(ablation_mode=mode, **SMALL), src, tgt)
        assert dumps_report(rep) == dumps_report(single)


def test_ten_folds_give_ten_rows(cohorts):
    from citl.synth import SyntheticCohortSpec, synth_cohorts
    _, tgt = synth_cohorts(SyntheticCohortSpec(n_subjects_per_class=10, T=40), Rng(2))
    rep = run_citl(RunConfig(ablation_mode="no_transfer", **{**SMALL, "k_folds": 10}), None, tgt)
    assert len(rep.per_fold) == 10
    assert len(rep.mean_std["acc"]) == 2


def test_full_mode_needs_source(cohorts):
    with pytest.raises(ValueError):
        run_citl(RunConfig(**SMALL), None, cohorts[1])


def test_optimization_fc_dump(cohorts, tmp_path):
    src, tgt = cohorts
    run_citl(RunConfig(**SMALL), src, tgt, dump_dir=tmp_path)
    files = sorted(tmp_path.glob("fold*/*.csv"))
    assert len(files) == len(tgt)
    m = np.loadtxt(files[0], delimiter=",")
    assert m.shape == (30, 30) and np.array_equal(m, m.T)


def test_report_file_round_trip_and_corruption(cohorts, tmp_path):
    src, tgt = cohorts
    rep = run_citl(RunConfig(ablation_mode="no_transfer", **SMALL), src, tgt)
    path = save_report(rep, tmp_path / "r.json")
    assert dumps_report(load_report(path)) == path.read_text()
    assert "ACC:" in rep.summary()
    text = path.read_text()
    (tmp_path / "bad.json").write_text(text[:100])
    with pytest.raises(CheckpointError, match=r"byte offset 100"):
        load_report(tmp_path / "bad.json")
    (tmp_path / "old.json").write_text(text.replace('"schema_version": 1', '"schema_version": 0'))
    with pytest.raises(CheckpointError):
        load_report(tmp_path / "old.json")
