"""
Pseudo-labelling target windows with a frozen source model
===========================================================

Train the convolutional classifier on cohort A, freeze it, and count how many
windows of each cohort B subject it calls "disease". The conversion engine
then averages whichever set is larger.
"""

import numpy as np

from citl import Rng, RunConfig, SyntheticCohortSpec, build_dfc_set, synth_cohorts
from citl.erg import conversion_engine
from citl.transfer import generate_pseudo_labels, train_transfernet

spec = SyntheticCohortSpec()
source, target = synth_cohorts(spec, Rng(0))
cfg = RunConfig()

src_dfc = [build_dfc_set(s, cfg.window) for s in source]
model = train_transfernet(src_dfc, cfg.transfer_config(), Rng(0).child(1), source_tag="cohort_a")
print(f"source validation accuracy {model.best_val_acc:.3f} after {len(model.val_acc_trace)} epochs")

fractions = {0: [], 1: []}
chosen = {0: [], 1: []}
for s in target:
    pl = generate_pseudo_labels(model, build_dfc_set(s, cfg.window))
    n_dis, n_norm = pl.sizes
    fractions[s.label].append(n_dis / (n_dis + n_norm))
    chosen[s.label].append(conversion_engine(pl).chosen_set == "disease")

for label, name in ((0, "controls"), (1, "patients")):
    f = np.array(fractions[label])
    print(f"{name}: disease-window fraction {f.mean():.2f} (sd {f.std():.2f}); "
          f"disease set chosen for {np.mean(chosen[label]):.0%}")
