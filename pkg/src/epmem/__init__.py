"""Episodic-memory dialogue engine.

Turns biographical corpora into structured first-person memories with
affective-semantic metadata, serves character dialogue through two-stage
parallel retrieval under a strict prompt budget, and derives analytics of
the memory space for visualization.
"""

__version__ = "0.1.0"

from .memory import (  # noqa: F401
    AffectiveState, DatasetStats, EpisodicMemory, LifespanBounds,
    MemoryDataset, Violation, dataset_stats, load_dataset,
    normalize_timestamp, validate_memory, write_dataset,
)
from .index import (  # noqa: F401
    EmbeddingCache, IndexedEntry, MemoryIndex, build_index,
    cosine_similarity, fetch_full, top_k,
)
from .retrieval import (  # noqa: F401
    ConversationExchange, RetrievalBundle, RetrievalConfig, SessionMemory,
    associated_retrieval, record_exchange, reset_session, retrieve,
    retrieve_with_vector,
)
from .prompts import (  # noqa: F401
    AssembledPrompt, CharRatioTokenCounter, PromptTemplate, StaticContext,
    TokenBudget, build_prompt, count_tokens, format_metadata,
)
from .providers import (  # noqa: F401
    EchoDialogueProvider, EmbeddingProvider, HashEmbeddingProvider,
    RecordingTextGenProvider, ReplayTextGenProvider, TextGenProvider,
)
