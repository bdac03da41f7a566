"""Learned finite-state string edit distance for duplicate detection.

Trains an edit model discriminatively from labeled match/mismatch string
pairs, marginalizing latent alignments exactly over an edit lattice, and
scores, aligns, and evaluates string pairs.
"""

from .edits import Landing, apply_edit, registry, word_span
from .errors import (
    DataFormatError,
    DegenerateInputError,
    EditCrfError,
    ModelFormatError,
    NoPathError,
    NumericalError,
)
from .features import LexiconSet, build_lexicon, eval_predicate, extract
from .lattice import (
    Alignment,
    BeamConfig,
    Lattice,
    backward,
    constrained_log_partition,
    enumerate_alignments,
    expected_feature_counts,
    forward,
    log_partition,
    log_potential,
    posterior_match,
    viterbi,
    viterbi_match_score,
)
from .model import (
    FIRST_ORDER,
    SECOND_ORDER,
    FsmModel,
    FsmTopology,
    Transition,
    build_default_topology,
    build_model,
    load_model,
    save_model,
    validate,
)
from .data import (
    LabeledPair,
    NoiseConfig,
    Record,
    SamplingConfig,
    generate_pairs,
    load_pairs,
    load_records,
    random_person_names,
    save_pairs,
    save_records,
    split_pairs,
    synthesize_names,
)
from .metrics import cosine_tokens, jaro, levenshtein
from .evaluation import (
    Counts,
    EvalReport,
    Variant,
    accuracy_coverage,
    classify,
    f1,
    run_ablation,
    score_pairs,
)
from .training import (
    InitScheme,
    TrainConfig,
    TrainState,
    default_init_scheme,
    direct_train,
    e_step,
    em_train,
    grad_check,
    incomplete_loglik,
    init_params,
    m_step,
)

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "BeamConfig",
    "Counts",
    "DataFormatError",
    "DegenerateInputError",
    "EditCrfError",
    "EvalReport",
    "FIRST_ORDER",
    "FsmModel",
    "FsmTopology",
    "InitScheme",
    "LabeledPair",
    "Landing",
    "Lattice",
    "LexiconSet",
    "ModelFormatError",
    "NoPathError",
    "NoiseConfig",
    "NumericalError",
    "Record",
    "SECOND_ORDER",
    "SamplingConfig",
    "TrainConfig",
    "TrainState",
    "Transition",
    "Variant",
    "accuracy_coverage",
    "apply_edit",
    "backward",
    "build_default_topology",
    "build_lexicon",
    "build_model",
    "classify",
    "constrained_log_partition",
    "cosine_tokens",
    "default_init_scheme",
    "direct_train",
    "e_step",
    "em_train",
    "enumerate_alignments",
    "eval_predicate",
    "expected_feature_counts",
    "extract",
    "f1",
    "forward",
    "generate_pairs",
    "grad_check",
    "incomplete_loglik",
    "init_params",
    "jaro",
    "levenshtein",
    "load_model",
    "load_pairs",
    "load_records",
    "log_partition",
    "log_potential",
    "m_step",
    "posterior_match",
    "random_person_names",
    "registry",
    "run_ablation",
    "save_model",
    "save_pairs",
    "save_records",
    "score_pairs",
    "split_pairs",
    "synthesize_names",
    "validate",
    "viterbi",
    "viterbi_match_score",
    "word_span",
]
