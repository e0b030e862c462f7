"""Part-based online-boosting tracker with noise-tolerant l1 classifier selection."""

__version__ = "0.1.0"

from .ensemble import (PartEnsemble, PartLayout, StrongClassifier, alpha_from_error,
                       combine_noisy_or, log_miss_probability, strong_confidence,
                       strong_margin)
from .evaluation import (PRESETS, EvalReport, SyntheticSpec, center_error,
                         make_synthetic_sequence, overlap, run_protocol, selection_benchmark,
                         success_rate)
from .imaging import (FeatureBank, HaarFeature, IntegralImage, build_integral, eval_haar,
                      generate_feature_pool, rect_sum)
from .motion import PartBoostTracker, generate_candidates, generate_training_samples, locate
from .sequence_io import (RunConfig, load_sequence, parse_ground_truth, read_trajectory,
                          write_outputs)
from .sparse_select import (NoiseTolerantSelector, SparseProblem, SparseSolution, assemble,
                            build_label_matrix, select_classifier, solve_nn_l1)
from .validation import (BoundsError, DegenerateFeatureError, ExhaustedPoolError,
                         ProtocolError, Rect, SamplingError)
from .weak_learn import GaussianWeakPool, SelectorStats, WeakClassifier, error_rate

__all__ = [
    "PartEnsemble", "PartLayout", "StrongClassifier", "alpha_from_error", "combine_noisy_or",
    "log_miss_probability", "strong_confidence", "strong_margin",
    "PRESETS", "EvalReport", "SyntheticSpec", "center_error", "make_synthetic_sequence",
    "overlap", "run_protocol", "selection_benchmark", "success_rate",
    "FeatureBank", "HaarFeature", "IntegralImage", "build_integral", "eval_haar",
    "generate_feature_pool", "rect_sum",
    "PartBoostTracker", "generate_candidates", "generate_training_samples", "locate",
    "RunConfig", "load_sequence", "parse_ground_truth", "read_trajectory", "write_outputs",
    "NoiseTolerantSelector", "SparseProblem", "SparseSolution", "assemble",
    "build_label_matrix", "select_classifier", "solve_nn_l1",
    "BoundsError", "DegenerateFeatureError", "ExhaustedPoolError", "ProtocolError", "Rect",
    "SamplingError",
    "GaussianWeakPool", "SelectorStats", "WeakClassifier", "error_rate",
]
