"""Multi-round retrieval-augmented QA with a trainable sufficiency critic.

The pipeline: build a BM25 index over a passage corpus, distill labeled
reasoning traces by self-practice over known-answer questions, train a
critic on those traces, then run the critic-gated retrieve-reason loop and
evaluate it against the naive and single-shot RAG baselines.
"""

__version__ = "0.1.0"

from .core import (
    AnswerAttempt,
    Context,
    CritiqueLabel,
    Document,
    QaPair,
    TraceRecord,
    Turn,
    answers_match,
    context_append,
    normalize_answer,
    render_context,
    render_critic_input,
)
from .critic import (
    ConfusionMatrix,
    CritiqueDecision,
    NativeCritic,
    NativeCriticModel,
    NativeTrainConfig,
    OracleCritic,
    RemoteCritic,
    evaluate_critic,
    native_train,
)
from .distill import DistillConfig, DistillReport, dataset_stats, distill
from .evaluation import (
    QaMetrics,
    SweepResult,
    critic_report,
    evaluate_pipeline,
    exact_match,
    sweep_turns,
    token_f1,
)
from .index import Bm25Index, Bm25Params, IndexStats, RetrievalResult, tokenize
from .loop import LoopConfig, LoopOutcome, naive_generate, run, standard_rag
from .reasoner import HttpReasoner, PromptTemplate, ReasonerConfig, ScriptedReasoner, ScriptedStep

__all__ = [
    "__version__",
    "AnswerAttempt",
    "Bm25Index",
    "Bm25Params",
    "ConfusionMatrix",
    "Context",
    "CritiqueDecision",
    "CritiqueLabel",
    "DistillConfig",
    "DistillReport",
    "Document",
    "HttpReasoner",
    "IndexStats",
    "LoopConfig",
    "LoopOutcome",
    "NativeCritic",
    "NativeCriticModel",
    "NativeTrainConfig",
    "OracleCritic",
    "PromptTemplate",
    "QaMetrics",
    "QaPair",
    "ReasonerConfig",
    "RemoteCritic",
    "RetrievalResult",
    "ScriptedReasoner",
    "ScriptedStep",
    "SweepResult",
    "TraceRecord",
    "Turn",
    "answers_match",
    "context_append",
    "critic_report",
    "dataset_stats",
    "distill",
    "evaluate_critic",
    "evaluate_pipeline",
    "exact_match",
    "naive_generate",
    "native_train",
    "normalize_answer",
    "render_context",
    "render_critic_input",
    "run",
    "standard_rag",
    "sweep_turns",
    "token_f1",
    "tokenize",
]
