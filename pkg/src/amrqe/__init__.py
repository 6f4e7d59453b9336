"""AMR evaluation suite, parse accuracy prediction and ranking applications."""
from .graph import AmrEntry, AmrGraph, Attribute, Edge, PenmanError, Triple, parse_penman, serialize_penman, to_triples
from .metrics import PRF, SCORE_NAMES, TASKS, ScoreVector, evaluate_all, smatch, smatch_exhaustive
from .estimator import AccuracyPredictor, AmrFeaturizer

__version__ = "0.1.0"

__all__ = [
    "AccuracyPredictor", "AmrEntry", "AmrFeaturizer", "AmrGraph", "Attribute", "Edge", "PRF", "PenmanError",
    "SCORE_NAMES", "ScoreVector", "TASKS", "Triple", "evaluate_all", "parse_penman", "serialize_penman", "smatch",
    "smatch_exhaustive", "to_triples",
]
