"""Transcript metrics: per-round group entropy, dominant-hashtag share,
unigram perplexity against a reference corpus, rank-abundance tables, and
embedding-based narrative alignment.

Everything here is a pure read-only function of a transcript; computing
from a file read back off disk gives exactly the in-memory results.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
import zlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
import requests

from .engine import Transcript, normalize_hashtag
from .errors import ConfigError, EmbedderUnavailableError, MetricError
from .narrative import FocalNarrative

DEDUP_POLICIES = ("per_response", "unique")
TOKENIZATION_MODES = ("hashtag", "words")

# Series values are written with this format so that independently computed
# goldens agree with library output byte-for-byte.
VALUE_FORMAT = ".12g"


@dataclass(frozen=True)
class HashtagDistribution:
    """Occurrence counts of normalized hashtags; ``total`` is their sum."""

    counts: Mapping[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_responses(cls, normalized: Iterable[str]) -> "HashtagDistribution":
        return cls(counts=dict(Counter(normalized)))


@dataclass(frozen=True)
class MetricSeries:
    """One number per round, rounds strictly increasing."""

    name: str
    values: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class RankAbundance:
    """Top hashtags by count over a whole run, plus the entropy of the
    full (untruncated) distribution."""

    table: tuple[tuple[str, int], ...]
    entropy: float


@dataclass(frozen=True)
class AlignmentResult:
    """Per-hashtag best-matching narrative event and per-event totals."""

    assignments: Mapping[str, tuple[str, float]]
    counts: Mapping[str, int]


def round_responses(
    transcript: Transcript,
    round_index: int,
    *,
    include_fallbacks: bool = True,
    form: str = "normalized",
) -> list[str]:
    """Hashtags of every paired agent in one round, two per record, in
    canonical record order. ``form`` selects raw or normalized text."""
    records = transcript.records_for_round(round_index)
    if not records:
        raise MetricError(f"transcript has no records for round {round_index}")
    out: list[str] = []
    for record in records:
        for tag, fell_back in ((record.hashtag_a, record.fallback_a), (record.hashtag_b, record.fallback_b)):
            if fell_back and not include_fallbacks:
                continue
            out.append(tag.raw if form == "raw" else tag.normalized)
    return out


def round_distribution(
    transcript: Transcript,
    round_index: int,
    dedup: str = "per_response",
    *,
    include_fallbacks: bool = True,
) -> HashtagDistribution:
    """Distribution of normalized hashtags produced in one round.

    ``per_response`` counts every response once; ``unique`` keeps each
    distinct hashtag once.
    """
    if dedup not in DEDUP_POLICIES:
        raise ConfigError("dedup", f"must be one of {DEDUP_POLICIES}, got {dedup!r}")
    responses = round_responses(transcript, round_index, include_fallbacks=include_fallbacks)
    if not responses:
        raise MetricError(f"round {round_index} has no responses after exclusions")
    if dedup == "unique":
        responses = sorted(set(responses))
    return HashtagDistribution.from_responses(responses)


def shannon_entropy(dist: HashtagDistribution, base: float = 2.0) -> float:
    """H = -sum p_i log(p_i), in bits by default. Zero for a
    single-hashtag distribution."""
    if not dist.counts:
        raise MetricError("entropy of an empty distribution is undefined")
    if base <= 1.0:
        raise ConfigError("entropy_base", f"must be > 1, got {base!r}")
    counts = np.array(list(dist.counts.values()), dtype=float)
    p = counts / counts.sum()
    # + 0.0 folds the -0.0 of single-hashtag distributions into plain 0.0
    return float(-(p * (np.log(p) / np.log(base))).sum()) + 0.0


def dominant_share(dist: HashtagDistribution) -> float:
    """Share of responses carrying the most frequent hashtag, in (0, 1]."""
    if not dist.counts:
        raise MetricError("dominant share of an empty distribution is undefined")
    total = dist.total
    return max(dist.counts.values()) / total


# --- unigram reference model --------------------------------------------------


@dataclass(frozen=True)
class UnigramModel:
    """Add-one-smoothed unigram distribution with a single
    out-of-vocabulary type; probabilities sum to one."""

    probabilities: Mapping[str, float]
    oov_probability: float
    tokenization: str = "hashtag"
    smoothing: str = "add_one"

    @property
    def vocabulary(self) -> set[str]:
        return set(self.probabilities)

    def probability(self, token: str) -> float:
        return self.probabilities.get(token, self.oov_probability)


def tokenize(strings: Iterable[str], mode: str) -> list[str]:
    """``hashtag``: each string is one token, normalized whole.
    ``words``: whitespace-split words, normalized individually.
    Tokens that normalize to nothing are dropped."""
    if mode not in TOKENIZATION_MODES:
        raise ConfigError("tokenization", f"must be one of {TOKENIZATION_MODES}, got {mode!r}")
    tokens: list[str] = []
    for s in strings:
        if mode == "hashtag":
            token = normalize_hashtag(s)
            if token:
                tokens.append(token)
        else:
            for word in s.split():
                token = normalize_hashtag(word)
                if token:
                    tokens.append(token)
    return tokens


def build_unigram_model(reference_corpus: Sequence[str], tokenization: str = "hashtag") -> UnigramModel:
    """Estimate p(w) = (count(w) + 1) / (N + V + 1), with the remaining
    1 / (N + V + 1) of mass reserved for a single OOV type."""
    if not reference_corpus:
        raise ConfigError("reference_corpus", "reference corpus is empty")
    tokens = tokenize(reference_corpus, tokenization)
    if not tokens:
        raise ConfigError("reference_corpus", "reference corpus has no usable tokens")
    counts = Counter(tokens)
    n_tokens = len(tokens)
    vocab_size = len(counts)
    denominator = n_tokens + vocab_size + 1
    probabilities = {token: (count + 1) / denominator for token, count in counts.items()}
    return UnigramModel(
        probabilities=probabilities,
        oov_probability=1.0 / denominator,
        tokenization=tokenization,
    )


def perplexity(model: UnigramModel, responses: Sequence[str]) -> float:
    """exp of the average negative log-probability of the responses'
    tokens under ``model``; unseen tokens take the OOV probability."""
    if not responses:
        raise MetricError("perplexity of an empty response list is undefined")
    tokens = tokenize(responses, model.tokenization)
    if not tokens:
        raise MetricError("responses contain no usable tokens")
    log_total = sum(math.log(model.probability(token)) for token in tokens)
    return math.exp(-log_total / len(tokens))


# --- embedding providers and narrative alignment ------------------------------


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class OneHotEmbedder:
    """Deterministic test embedder: every distinct string gets its own
    one-hot axis, so cosine is 1 for equal strings and 0 otherwise."""

    def __init__(self, dim: int = 4096):
        self._dim = dim
        self._index: dict[str, int] = {}

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors = np.zeros((len(texts), self._dim))
        for row, text in enumerate(texts):
            if text not in self._index:
                if len(self._index) >= self._dim:
                    raise EmbedderUnavailableError(
                        f"one-hot embedder saturated at {self._dim} distinct strings"
                    )
                self._index[text] = len(self._index)
            vectors[row, self._index[text]] = 1.0
        return vectors


class HashingEmbedder:
    """Deterministic offline embedder: L2-normalized bag of hashed
    character trigrams. Crude, but shared substrings yield nonzero cosine,
    which is enough for demos and tests without a model server."""

    def __init__(self, dim: int = 256):
        self._dim = dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors = np.zeros((len(texts), self._dim))
        for row, text in enumerate(texts):
            padded = f"##{text.lower()}##"
            for i in range(len(padded) - 2):
                gram = padded[i : i + 3]
                vectors[row, zlib.crc32(gram.encode("utf-8")) % self._dim] += 1.0
            norm = np.linalg.norm(vectors[row])
            if norm > 0:
                vectors[row] /= norm
        return vectors


class RemoteEmbedder:
    """OpenAI-compatible embeddings client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "HASHNET_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        session: requests.Session | None = None,
    ):
        if not base_url or not model:
            raise ConfigError("metrics.embedding", "remote embedder requires base_url and model")
        self._url = base_url.rstrip("/") + "/embeddings"
        self._model = model
        self._api_key_env = api_key_env
        self._timeout = timeout
        self._max_retries = max(1, int(max_retries))
        self._backoff = backoff
        self._session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        payload = {"model": self._model, "input": list(texts)}
        headers = {}
        api_key = os.environ.get(self._api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        failure = ""
        for attempt in range(1, self._max_retries + 1):
            try:
                response = self._session.post(
                    self._url, json=payload, headers=headers, timeout=self._timeout
                )
                response.raise_for_status()
                data = response.json()["data"]
                rows = sorted(data, key=lambda entry: entry.get("index", 0))
                return np.array([row["embedding"] for row in rows], dtype=float)
            except (requests.RequestException, ValueError, KeyError, TypeError) as err:
                failure = f"{type(err).__name__}: {err}"
                if attempt < self._max_retries:
                    time.sleep(self._backoff * 2 ** (attempt - 1))
        raise EmbedderUnavailableError(failure)


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; zero vectors yield similarity 0."""
    a_norm = np.linalg.norm(a, axis=1, keepdims=True)
    b_norm = np.linalg.norm(b, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = (a @ b.T) / (a_norm * b_norm.T)
    return np.nan_to_num(sims, nan=0.0)


def align_hashtags(
    hashtags: Sequence[str],
    narrative: FocalNarrative,
    embedder: Embedder,
) -> AlignmentResult:
    """Assign each hashtag to the narrative event whose embedded
    description is most cosine-similar, ties going to the earlier event.
    ``counts`` aggregates by event, weighted by hashtag frequency; every
    event appears, zeros included."""
    if not narrative.events:
        raise MetricError(f"narrative {narrative.id!r} has no events; alignment unavailable")
    if not hashtags:
        raise MetricError("no hashtags to align")
    frequency = Counter(hashtags)
    distinct = list(frequency)
    try:
        event_vectors = embedder.embed([event.description for event in narrative.events])
        tag_vectors = embedder.embed(distinct)
    except EmbedderUnavailableError:
        raise
    except Exception as err:
        raise EmbedderUnavailableError(f"{type(err).__name__}: {err}") from err

    sims = _cosine_matrix(np.asarray(tag_vectors, dtype=float), np.asarray(event_vectors, dtype=float))
    assignments: dict[str, tuple[str, float]] = {}
    counts: dict[str, int] = {event.label: 0 for event in narrative.events}
    for i, tag in enumerate(distinct):
        best = int(np.argmax(sims[i]))
        label = narrative.events[best].label
        assignments[tag] = (label, float(sims[i, best]))
        counts[label] += frequency[tag]
    return AlignmentResult(assignments=assignments, counts=counts)


# --- whole-run and per-round metrics ------------------------------------------


def rank_abundance(
    transcript: Transcript, k: int = 10, *, include_fallbacks: bool = True
) -> RankAbundance:
    """Top-``k`` normalized hashtags over all rounds (count ties broken
    lexicographically) plus the entropy of the full distribution."""
    if not transcript.records:
        raise MetricError("transcript has no records")
    counts: Counter[str] = Counter()
    for round_index in range(1, transcript.rounds_completed() + 1):
        counts.update(
            round_responses(transcript, round_index, include_fallbacks=include_fallbacks)
        )
    if not counts:
        raise MetricError("transcript has no responses after exclusions")
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    full_entropy = shannon_entropy(HashtagDistribution(counts=dict(counts)))
    return RankAbundance(table=tuple(ordered[:k]), entropy=full_entropy)


def metric_series(
    transcript: Transcript,
    metric: str,
    *,
    model: UnigramModel | None = None,
    base: float = 2.0,
    dedup: str = "per_response",
    include_fallbacks: bool = True,
) -> MetricSeries:
    """Apply one per-round metric to every completed round, in order.
    ``metric`` is ``entropy``, ``dominant_share``, or ``perplexity`` (the
    latter requires a unigram model)."""
    if not transcript.records:
        raise MetricError("transcript has no records")
    if metric not in ("entropy", "dominant_share", "perplexity"):
        raise ConfigError("metric", f"unknown metric {metric!r}")
    if metric == "perplexity" and model is None:
        raise MetricError("perplexity requires a unigram reference model")

    values: list[tuple[int, float]] = []
    for round_index in range(1, transcript.rounds_completed() + 1):
        try:
            if metric == "perplexity":
                assert model is not None
                responses = round_responses(
                    transcript, round_index, include_fallbacks=include_fallbacks, form="raw"
                )
                value = perplexity(model, responses)
            else:
                dist = round_distribution(
                    transcript, round_index, dedup, include_fallbacks=include_fallbacks
                )
                value = shannon_entropy(dist, base) if metric == "entropy" else dominant_share(dist)
        except MetricError as err:
            raise MetricError(f"round {round_index}: {err}") from err
        values.append((round_index, value))
    return MetricSeries(name=metric, values=tuple(values))


# --- CSV output ----------------------------------------------------------------


def write_series_csv(series: MetricSeries, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["round", "value"])
        for round_index, value in series.values:
            writer.writerow([round_index, format(value, VALUE_FORMAT)])


def write_rank_abundance_csv(result: RankAbundance, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["rank", "hashtag", "count"])
        for rank, (tag, count) in enumerate(result.table, start=1):
            writer.writerow([rank, tag, count])


def write_alignment_csv(result: AlignmentResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["event", "count"])
        for label, count in result.counts.items():
            writer.writerow([label, count])


def write_metadata(metadata: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(metadata, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def corpus_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_reference_corpus(path: str | Path) -> list[str]:
    """Plain-text reference corpus: one hashtag per line, blank lines ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    corpus = [line.strip() for line in lines if line.strip()]
    if not corpus:
        raise ConfigError("reference_corpus", f"no hashtags in {path}")
    return corpus
