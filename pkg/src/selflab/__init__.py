"""Class-balanced pixel-level self-labeling engine.

Online entropic optimal-transport cluster assignment over pixel features
with class-imbalanced marginals, pseudo-label rectification, class-balanced
sampling, and EMA distribution alignment, runnable end to end on synthetic
desk-scale data.
"""

from ._kernels import BACKEND as kernel_backend
from .distribution import as_marginal, init_from_corpus
from .head import HeadWeights, TrainConfig, forward, init_from_prototypes
from .metrics import EvalResult, confusion_matrix, evaluate
from .ot import Marginals, TransportPlan, sinkhorn, soft_assignment_from_plan
from .pipeline import Corpus, PipelineConfig, load_corpus, run_pipeline
from .rectification import cross_entropy, rectify, symmetric_kl, total_loss
from .sampling import FeatureBank, SampleSet, balanced_sample, class_distribution
from .synth import WorldSpec, generate, oracle_accuracy
from .tensor_io import load_labels, load_tensor, normalize_rows, save_labels, save_tensor

__version__ = "0.1.0"

__all__ = [
    "kernel_backend",
    "as_marginal",
    "init_from_corpus",
    "HeadWeights",
    "TrainConfig",
    "forward",
    "init_from_prototypes",
    "EvalResult",
    "confusion_matrix",
    "evaluate",
    "Marginals",
    "TransportPlan",
    "sinkhorn",
    "soft_assignment_from_plan",
    "Corpus",
    "PipelineConfig",
    "load_corpus",
    "run_pipeline",
    "cross_entropy",
    "rectify",
    "symmetric_kl",
    "total_loss",
    "FeatureBank",
    "SampleSet",
    "balanced_sample",
    "class_distribution",
    "WorldSpec",
    "generate",
    "oracle_accuracy",
    "load_labels",
    "load_tensor",
    "normalize_rows",
    "save_labels",
    "save_tensor",
    "__version__",
]
