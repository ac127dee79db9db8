"""Fingerprinting apps from encrypted DNS (DoT/DoH) traffic metadata.

Traces of TLS record sizes and timings feed four attacks: frequency
distributions, n-grams, a Damerau-Levenshtein kNN, and Segram (size/gap
sequences with n-gram counts and a random forest). A synthetic generator,
pcap ingestion and an EDNS0 padding prober round out the toolkit.
"""
from .attacks import AttackConfig, FittedAttack, fit_attack
from .distance import UNIT_COSTS, CostSchedule, dl_distance, dl_distance_matrix
from .errors import *  # noqa: F401,F403
from .evaluation import (
    AGGREGATE,
    BenchmarkReport,
    EvalReport,
    OpenWorldSplit,
    PrCurve,
    benchmark,
    closed_world,
    cross_resolver,
    open_world_binary,
    open_world_multiclass,
    random_baseline_curve,
    score,
    stratified_kfold,
)
from .features import (
    BNR_POLICY,
    SEGRAM_POLICY,
    Attack,
    DnsSequence,
    FeatureVector,
    Gap,
    GapKind,
    GapPolicy,
    Msg,
    Vocabulary,
    build_dns_sequence,
    build_vocabulary,
    burst_transform,
    extract,
    extract_matrix,
    gap_bin,
    ngrams,
)
from .forest import ForestModel, ForestParams, train_forest
from .knn import KnnModel, knn_classify
from .synth import CacheMode, PaddingMode, generate_dataset, generate_profiles, generate_trace
from .trace import C2R, R2C, Dataset, DnsEvent, Direction, Protocol, Trace, read_dataset, write_dataset

__version__ = "0.1.0"
