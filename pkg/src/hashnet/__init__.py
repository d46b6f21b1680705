"""hashnet: a deterministic, seedable simulator of the hashtag matching
game on small-world agent networks, with a metrics pipeline for group
coherence, linguistic plausibility, and narrative alignment."""

from .agents import (
    AgentSpec,
    BackendRequest,
    BackendResponse,
    DecodeParams,
    MockBackend,
    RemoteBackend,
    ReplayBackend,
    build_backend,
    build_backends,
    mock_imitate,
    respond,
)
from .engine import (
    Hashtag,
    InteractionRecord,
    RunConfig,
    Transcript,
    build_prompt,
    normalize_hashtag,
    parse_response,
    read_transcript,
    run_simulation,
    write_transcript,
)
from .errors import (
    BackendUnavailableError,
    ConfigError,
    EmbedderUnavailableError,
    HashnetError,
    MetricError,
    NarrativeLoadError,
    ParseError,
    ReplayGapError,
    TranscriptError,
)
from .metrics import (
    AlignmentResult,
    HashingEmbedder,
    HashtagDistribution,
    MetricSeries,
    OneHotEmbedder,
    RankAbundance,
    RemoteEmbedder,
    UnigramModel,
    align_hashtags,
    build_unigram_model,
    dominant_share,
    metric_series,
    perplexity,
    rank_abundance,
    round_distribution,
    shannon_entropy,
)
from .narrative import FocalNarrative, NarrativeEvent, bundled_narrative, load_narrative, save_narrative
from .topology import Network, Pairing, TopologySpec, generate_network, pair_round

__version__ = "0.1.0"

__all__ = [
    "AgentSpec",
    "AlignmentResult",
    "BackendRequest",
    "BackendResponse",
    "BackendUnavailableError",
    "ConfigError",
    "DecodeParams",
    "EmbedderUnavailableError",
    "FocalNarrative",
    "HashingEmbedder",
    "Hashtag",
    "HashtagDistribution",
    "HashnetError",
    "InteractionRecord",
    "MetricError",
    "MetricSeries",
    "MockBackend",
    "NarrativeEvent",
    "NarrativeLoadError",
    "Network",
    "OneHotEmbedder",
    "Pairing",
    "ParseError",
    "RankAbundance",
    "RemoteBackend",
    "RemoteEmbedder",
    "ReplayBackend",
    "ReplayGapError",
    "RunConfig",
    "Transcript",
    "TranscriptError",
    "TopologySpec",
    "UnigramModel",
    "align_hashtags",
    "build_backend",
    "build_backends",
    "build_prompt",
    "build_unigram_model",
    "bundled_narrative",
    "dominant_share",
    "generate_network",
    "load_narrative",
    "metric_series",
    "mock_imitate",
    "normalize_hashtag",
    "pair_round",
    "parse_response",
    "perplexity",
    "rank_abundance",
    "read_transcript",
    "respond",
    "round_distribution",
    "run_simulation",
    "save_narrative",
    "shannon_entropy",
    "write_transcript",
]
