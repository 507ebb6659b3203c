"""Claim verification by mediated multi-advocate debate."""

from .taxonomy import Taxonomy, VerdictLabel, default_taxonomy, load_taxonomy
from .corpus import CorpusIndex, ingest_corpus
from .backend import CompletionRequest, CompletionResult, RemoteBackend, ScriptedBackend
from .agents import AdvocateConfig, AdvocateResponse, MediatorConfig, MediatorOutcome
from .debate import DebateTranscript, run_batch, run_debate
from .evaluation import ClaimRecord, MetricsReport, confusion, load_claims, metrics

__all__ = [
    "Taxonomy", "VerdictLabel", "default_taxonomy", "load_taxonomy",
    "CorpusIndex", "ingest_corpus",
    "CompletionRequest", "CompletionResult", "RemoteBackend", "ScriptedBackend",
    "AdvocateConfig", "AdvocateResponse", "MediatorConfig", "MediatorOutcome",
    "DebateTranscript", "run_batch", "run_debate",
    "ClaimRecord", "MetricsReport", "confusion", "load_claims", "metrics",
]

__version__ = "0.1.0"
