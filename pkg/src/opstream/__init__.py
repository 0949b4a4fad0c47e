"""Incremental opcode-stream malware detection and classification.

Opcode traces are encoded into a small frequency-ranked symbol alphabet,
per-family ensembles of one-class hidden Markov models are trained on
disjoint subsets of each family's data, and running samples are classified
one opcode at a time by sliding-window log-likelihood-per-opcode scoring
against calibrated per-family thresholds.
"""
from .codec import (
    DEFAULT_ALPHABET_SIZE,
    DEFAULT_TOP_K,
    MNEMONIC_VOCAB,
    EncodingTable,
    ObservationSequence,
    OpcodeTrace,
    build_alphabet,
    encode_trace,
    parse_trace,
)
from .ensemble import (
    FamilyModel,
    ModelRegistry,
    RunConfig,
    calibrate_threshold,
    calibration_windows,
    member_votes,
    score_family,
    subset_cap,
    train_family,
)
from .evaluate import (
    EvaluationReport,
    LabeledDataset,
    SweepResult,
    evaluate_classification,
    evaluate_detection,
    export_report,
    length_sweep,
    split_dataset,
    stratified_split,
    synth_generate,
)
from .hmm import (
    HmmParams,
    TrainingReport,
    baum_welch_train,
    brute_force_likelihood,
    forward_log_likelihood,
    init_params,
    llpo,
)
from .registry import RegistryFile, load_registry, save_registry
from .stream import (
    NEW_FAMILY,
    ClassificationDecision,
    StepDecision,
    StreamState,
    Verdict,
    classify_sequence,
    detect,
    init_stream,
    push_symbol,
    resolve_tie,
)

__version__ = "0.1.0"
