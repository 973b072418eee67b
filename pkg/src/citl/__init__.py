"""Comorbidity-informed transfer learning on dynamic functional connectivity."""

from .dfc import DFCSet, SubjectTimeSeries, WindowConfig, build_dfc_set, load_cohort, pearson_matrix, window_count
from .errors import CheckpointError, IngestionError, NumericError
from .nncore import ParamTensor, Rng, adam_step, glorot_init, grad_check
from .pipeline import RunConfig, RunReport, compute_metrics, kfold_split, run_citl
from .synth import SyntheticCohortSpec, synth_cohorts

__version__ = "0.1.0"
