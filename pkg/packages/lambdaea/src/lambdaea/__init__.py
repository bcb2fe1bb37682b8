"""lambda-ea - dangling-aware entity alignment for knowledge graph pairs."""

from lambdaea.aligneval import (
    AlignmentResult,
    MetricReport,
    align,
    csls_matrix,
    evaluate_alignment,
    hits_at_k,
    mutual_nn_pairs,
)
from lambdaea.config import AlignConfig, ExperimentConfig, load_config

# Errors
from lambdaea.exceptions import (
    ConfigurationError,
    DataFormatError,
    LambdaError,
    NotAlignableError,
    SerializationError,
    TrainingError,
    ValidationError,
)

# Detection
from lambdaea.ipule import DetectionResult, IpuleConfig, run_ipule

# Encoder
from lambdaea.keesa import EmbeddingTable, EncoderConfig, KeesaEncoder, build_encoder, encode

# Data
from lambdaea.kgdata import (
    AnchorSplit,
    KGPair,
    SyntheticConfig,
    TripleStore,
    gen_synthetic_pair,
    load_kg_pair,
    save_kg_pair,
    split_anchors,
)
from lambdaea.pipeline import Lambda
from lambdaea.priors import ClassPriors

__all__ = [
    # Pipeline
    "Lambda",
    "ExperimentConfig",
    "AlignConfig",
    "load_config",
    # Data
    "TripleStore",
    "KGPair",
    "AnchorSplit",
    "SyntheticConfig",
    "load_kg_pair",
    "save_kg_pair",
    "split_anchors",
    "gen_synthetic_pair",
    # Encoder and detection
    "EncoderConfig",
    "KeesaEncoder",
    "EmbeddingTable",
    "build_encoder",
    "encode",
    "IpuleConfig",
    "ClassPriors",
    "DetectionResult",
    "run_ipule",
    # Alignment and metrics
    "AlignmentResult",
    "MetricReport",
    "align",
    "csls_matrix",
    "mutual_nn_pairs",
    "hits_at_k",
    "evaluate_alignment",
    # Errors
    "LambdaError",
    "DataFormatError",
    "ValidationError",
    "ConfigurationError",
    "TrainingError",
    "SerializationError",
    "NotAlignableError",
]
