"""
Ablation on synthetic cohorts
=============================

Compare the three modes on the same folds:

- ``full``: pseudo-label selection, then encoder + classifier trained jointly
- ``no_erg``: pseudo-label selection, classifier only
- ``no_transfer``: plain average of all windows, classifier only

With the default configuration one seed takes about three minutes on one core.
Pass ``--quick`` for a reduced run.
"""

import sys

from citl import Rng, RunConfig, SyntheticCohortSpec, synth_cohorts
from citl.pipeline import run_ablation

quick = "--quick" in sys.argv
cfg = RunConfig(seed=0)
if quick:
    cfg = RunConfig(seed=0, H_ae=64, k_folds=5, epochs=40, transfer_epochs=40)

source, target = synth_cohorts(SyntheticCohortSpec(), Rng(cfg.seed))
reports = run_ablation(cfg, source, target)

for mode, rep in reports.items():
    print(rep.summary())
    print()

extra = reports["full"].extra
print(f"source model validation accuracy {extra['transfer_best_val_acc']:.3f}")
