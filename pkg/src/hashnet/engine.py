"""Round orchestration: build prompts, dispatch to backends, parse and
normalize responses, score pairs, and write the transcript.

Rounds are hard barriers. Within a round every backend call may run
concurrently (up to the configured cap); parsing, scoring, and transcript
writing happen afterwards on the coordinating thread, in canonical order,
so a run with deterministic backends is byte-identical at any parallelism.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Sequence

from . import rng as rng_streams
from .agents import (
    AgentSpec,
    BackendRequest,
    BackendResponse,
    DecodeParams,
    build_backends,
    render_interaction_table,
)
from .errors import BackendUnavailableError, ConfigError, ParseError, TranscriptError
from .narrative import FocalNarrative, load_narrative
from .topology import Network, TopologySpec, generate_network, pair_round

WORD_CAP = 5
FALLBACK_SENTINEL = "#noresponse"
EPOCH_TIMESTAMP = "1970-01-01T00:00:00Z"

RECORD_FIELDS = (
    "round",
    "agent_a",
    "agent_b",
    "raw_a",
    "raw_b",
    "hashtag_a",
    "hashtag_b",
    "match",
    "points_a",
    "points_b",
    "fallback_a",
    "fallback_b",
)


def normalize_hashtag(text: str) -> str:
    """Canonical comparison form: lowercase with '#' and every other
    non-alphanumeric character removed. Idempotent."""
    return "".join(c for c in text.lower() if c.isalnum())


@dataclass(frozen=True)
class Hashtag:
    """A guess as extracted from a response, plus its comparison form."""

    raw: str
    normalized: str

    @classmethod
    def from_raw(cls, raw: str) -> "Hashtag":
        return cls(raw=raw, normalized=normalize_hashtag(raw))


_THINK_TAGS = ("think", "thinking", "reasoning", "thought")
_THINK_BLOCK_RE = re.compile(
    r"<\s*(" + "|".join(_THINK_TAGS) + r")\s*>.*?<\s*/\s*\1\s*>",
    re.IGNORECASE | re.DOTALL,
)
_STRAY_CLOSE_RE = re.compile(r"<\s*/\s*(?:" + "|".join(_THINK_TAGS) + r")\s*>", re.IGNORECASE)
_STRAY_OPEN_RE = re.compile(r"<\s*(?:" + "|".join(_THINK_TAGS) + r")\s*>", re.IGNORECASE)

# Quote and markdown wrapper characters stripped around extracted tokens.
_WRAP_CHARS = "\"'`*_“”‘’«»()[]{}"


def _strip_reasoning(text: str) -> str:
    """Drop delimited deliberation blocks such as <think>...</think>,
    including the truncated forms where only one side of the pair made it
    into the output."""
    text = _THINK_BLOCK_RE.sub("", text)
    closes = list(_STRAY_CLOSE_RE.finditer(text))
    if closes:
        text = text[closes[-1].end():]
    stray_open = _STRAY_OPEN_RE.search(text)
    if stray_open:
        text = text[: stray_open.start()]
    return text


def _is_hashtag_token(token: str) -> bool:
    bare = token.lstrip(_WRAP_CHARS)
    return bare.startswith("#") and any(c.isalnum() for c in bare)


def _clean_tokens(tokens: Sequence[str]) -> list[str]:
    cleaned = [t.strip(_WRAP_CHARS) for t in tokens]
    return [t for t in cleaned if t]


def parse_response(raw_text: str) -> Hashtag:
    """Extract the hashtag guess from a backend's raw output.

    Reasoning blocks are stripped first. The guess is the first
    '#'-prefixed token sequence (from that token to the end of its line);
    if no line contains one, the first nonempty line is used instead.
    Either way the result is truncated to five whitespace-delimited words
    and cleaned of surrounding quotes and markdown.
    """
    text = _strip_reasoning(raw_text)
    lines = [line.strip() for line in text.splitlines()]
    lines = [line for line in lines if line and not line.startswith("```")]
    if not lines:
        raise ParseError("response is empty after stripping")

    for line in lines:
        tokens = line.split()
        for i, token in enumerate(tokens):
            if _is_hashtag_token(token):
                words = _clean_tokens(tokens[i:])[:WORD_CAP]
                return Hashtag.from_raw(" ".join(words))

    first = lines[0].lstrip("#").strip()
    words = _clean_tokens(first.split())[:WORD_CAP]
    if not words:
        raise ParseError("response is empty after stripping")
    return Hashtag.from_raw(" ".join(words))


# --- prompt construction ---------------------------------------------------

SCORING_PARAGRAPH = (
    "In this experiment, you are awarded 1 point if you guess the same hashtag "
    "as your randomly assigned neighbor, and 0 points if you do not. Your goal "
    "is to earn as many points as possible."
)
CLOSING_PARAGRAPH = (
    "Please guess a short (max 5 words) hashtag for this event. Try to match "
    "your neighbor while staying relevant to the event. You may reuse your "
    "previous hashtag, but don't always do so—especially if you believe your "
    "next neighbor might choose something different."
)


def _render_prompt(round_index: int, history_rows: Sequence[tuple[int, str, str]], event_text: str) -> str:
    parts = [SCORING_PARAGRAPH, ""]
    if round_index == 1:
        parts += [
            "You are in round 1 of the experiment.",
            "",
            "Based on the event provided in round 1:",
        ]
    else:
        parts += [
            f"You are in round {round_index} of the experiment. Your guesses and "
            "your neighbor's guesses have been as follows, represented in the CSV below:",
            "",
            render_interaction_table(history_rows),
            "",
            "Based on this information and the event provided in round 1:",
        ]
    parts += ["", event_text, "", CLOSING_PARAGRAPH]
    return "\n".join(parts)


def build_prompt(
    agent_id: int,
    round_index: int,
    transcript: "Transcript",
    narrative: FocalNarrative,
) -> str:
    """Prompt for one agent at the start of ``round_index``, given the
    transcript so far. Round 1 carries no interaction table; later rounds
    embed the agent's full prior history, one CSV row per round in which it
    was paired."""
    if round_index < 1:
        raise ValueError(f"round index must be >= 1, got {round_index}")
    rows = transcript.agent_history(agent_id, before_round=round_index)
    return _render_prompt(round_index, rows, narrative.full_text)


# --- records and transcripts ------------------------------------------------


@dataclass(frozen=True)
class InteractionRecord:
    """Outcome of one pair in one round."""

    round: int
    agent_a: int
    agent_b: int
    raw_a: str
    raw_b: str
    hashtag_a: Hashtag
    hashtag_b: Hashtag
    match: bool
    points_a: int
    points_b: int
    fallback_a: bool
    fallback_b: bool

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "agent_a": self.agent_a,
            "agent_b": self.agent_b,
            "raw_a": self.raw_a,
            "raw_b": self.raw_b,
            "hashtag_a": {"raw": self.hashtag_a.raw, "normalized": self.hashtag_a.normalized},
            "hashtag_b": {"raw": self.hashtag_b.raw, "normalized": self.hashtag_b.normalized},
            "match": self.match,
            "points_a": self.points_a,
            "points_b": self.points_b,
            "fallback_a": self.fallback_a,
            "fallback_b": self.fallback_b,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "InteractionRecord":
        try:
            return cls(
                round=doc["round"],
                agent_a=doc["agent_a"],
                agent_b=doc["agent_b"],
                raw_a=doc["raw_a"],
                raw_b=doc["raw_b"],
                hashtag_a=Hashtag(doc["hashtag_a"]["raw"], doc["hashtag_a"]["normalized"]),
                hashtag_b=Hashtag(doc["hashtag_b"]["raw"], doc["hashtag_b"]["normalized"]),
                match=doc["match"],
                points_a=doc["points_a"],
                points_b=doc["points_b"],
                fallback_a=doc["fallback_a"],
                fallback_b=doc["fallback_b"],
            )
        except KeyError as err:
            raise TranscriptError(f"record missing field {err}") from err


@dataclass
class Transcript:
    """Header plus interaction records ordered by (round, agent_a); the
    durable artifact of a run. ``abort`` carries the marker object when a
    run stopped early."""

    header: dict
    records: list[InteractionRecord]
    abort: dict | None = None

    def rounds_completed(self) -> int:
        return max((r.round for r in self.records), default=0)

    def records_for_round(self, round_index: int) -> list[InteractionRecord]:
        return [r for r in self.records if r.round == round_index]

    def agent_history(self, agent_id: int, before_round: int | None = None) -> list[tuple[int, str, str]]:
        """(round, own_guess, neighbor_guess) rows for one agent, raw
        hashtags, in round order; rounds the agent sat out contribute no row."""
        rows: list[tuple[int, str, str]] = []
        for record in self.records:
            if before_round is not None and record.round >= before_round:
                continue
            if record.agent_a == agent_id:
                rows.append((record.round, record.hashtag_a.raw, record.hashtag_b.raw))
            elif record.agent_b == agent_id:
                rows.append((record.round, record.hashtag_b.raw, record.hashtag_a.raw))
        return rows

    def match_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(1 for r in self.records if r.match) / len(self.records)

    def fallback_count(self) -> int:
        return sum(int(r.fallback_a) + int(r.fallback_b) for r in self.records)


def write_transcript(transcript: Transcript, path: str | Path) -> None:
    """Write a complete transcript as JSON Lines (header first, UTF-8)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        _write_line(handle, transcript.header)
        for record in transcript.records:
            _write_line(handle, record.to_dict())
        if transcript.abort is not None:
            _write_line(handle, transcript.abort)


def read_transcript(path: str | Path) -> Transcript:
    """Parse a transcript file, checking round contiguity and record order."""
    header: dict | None = None
    records: list[InteractionRecord] = []
    abort: dict | None = None
    with open(path, encoding="utf-8") as handle:
        for i, line in enumerate(handle):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as err:
                raise TranscriptError(f"{path}: line {i + 1}: invalid JSON ({err})") from err
            if i == 0:
                header = doc
            elif isinstance(doc, dict) and doc.get("abort"):
                abort = doc
            else:
                records.append(InteractionRecord.from_dict(doc))
    if header is None:
        raise TranscriptError(f"{path}: missing header line")
    rounds = sorted({r.round for r in records})
    if rounds and rounds != list(range(1, rounds[-1] + 1)):
        raise TranscriptError(f"{path}: rounds are not contiguous from 1: {rounds}")
    ordered = sorted(records, key=lambda r: (r.round, r.agent_a))
    if records != ordered:
        raise TranscriptError(f"{path}: records are not in canonical (round, agent_a) order")
    return Transcript(header=header, records=records, abort=abort)


def _write_line(handle: IO[str], obj: dict) -> None:
    handle.write(json.dumps(obj, ensure_ascii=False))
    handle.write("\n")


# --- run configuration and orchestration -------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on. With mock or replay backends the
    resulting transcript is a pure function of this object."""

    topology: TopologySpec
    rounds: int
    agents: tuple[AgentSpec, ...]
    narrative_path: str
    decode: DecodeParams = DecodeParams()
    parallelism: int = 1
    seed: int = 0
    run_id: str | None = None
    match_on: str = "normalized"

    def validate(self, *, graph_n: int | None = None) -> None:
        """``graph_n`` overrides the agent-count source when a pre-built
        network is injected; the Watts-Strogatz constraints then do not
        apply (the spec fields are recorded but unused)."""
        if graph_n is None:
            self.topology.validate()
            graph_n = self.topology.n
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise ConfigError("rounds", f"must be a positive integer, got {self.rounds!r}")
        if len(self.agents) != graph_n:
            raise ConfigError(
                "agents", f"agent count {len(self.agents)} must equal the network size {graph_n}"
            )
        ids = [spec.agent_id for spec in self.agents]
        if sorted(ids) != list(range(graph_n)):
            raise ConfigError("agents", "agent_id values must be exactly 0..n-1")
        for spec in self.agents:
            spec.validate()
        self.decode.validate()
        if not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise ConfigError("parallelism", f"must be a positive integer, got {self.parallelism!r}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.match_on not in ("normalized", "raw"):
            raise ConfigError("match_on", f"must be 'normalized' or 'raw', got {self.match_on!r}")
        if not self.narrative_path:
            raise ConfigError("narrative", "narrative path must be nonempty")

    def resolved_topology(self) -> TopologySpec:
        """Topology with its seed pinned (derived from the root seed when unset)."""
        if self.topology.seed is not None:
            return self.topology
        return replace(self.topology, seed=rng_streams.topology_seed(self.seed))

    def is_deterministic(self) -> bool:
        return all(spec.backend in ("mock", "replay") for spec in self.agents)


def config_snapshot(config: RunConfig) -> dict:
    """Serializable snapshot stored in the transcript header; enough to
    recompute the run with deterministic backends. The parallelism cap is
    deliberately absent: it is an execution knob that never changes results,
    so runs at different caps stay byte-identical."""
    topology = config.resolved_topology()
    return {
        "topology": {"n": topology.n, "k": topology.k, "p": topology.p, "seed": topology.seed},
        "rounds": config.rounds,
        "agents": [
            {
                "agent_id": spec.agent_id,
                "backend": spec.backend,
                "backend_params": dict(spec.backend_params),
            }
            for spec in config.agents
        ],
        "narrative": config.narrative_path,
        "decode": {"temperature": config.decode.temperature, "max_tokens": config.decode.max_tokens},
        "seed": config.seed,
        "match_on": config.match_on,
    }


def config_digest(snapshot: dict) -> str:
    canonical = json.dumps(snapshot, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_simulation(
    config: RunConfig,
    *,
    out_path: str | Path | None = None,
    network: Network | None = None,
) -> Transcript:
    """Play the matching game for ``config.rounds`` rounds.

    When ``out_path`` is given the transcript is written incrementally, one
    completed round at a time, so a crash preserves finished rounds. A
    pre-built ``network`` overrides the generated topology (the spec form
    cannot express every graph, e.g. complete graphs).

    If more than half of a round's pairs hit an unavailable backend even
    after fallbacks, the run aborts: completed records are kept and an
    explicit abort marker ends the transcript.
    """
    config.validate(graph_n=network.n if network is not None else None)
    narrative = load_narrative(config.narrative_path)
    if network is None:
        network = generate_network(config.resolved_topology())
    backends = build_backends(config.agents)

    snapshot = config_snapshot(config)
    run_id = config.run_id or config_digest(snapshot)[:12]
    timestamp = EPOCH_TIMESTAMP if config.is_deterministic() else (
        datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    )
    header = {
        "run_id": run_id,
        "config": snapshot,
        "seed": config.seed,
        "narrative_id": narrative.id,
        "network_edges": [list(edge) for edge in network.edge_list()],
        "timestamp": timestamp,
    }

    transcript = Transcript(header=header, records=[])
    histories: dict[int, list[tuple[int, str, str]]] = {i: [] for i in range(network.n)}
    last_guess: dict[int, str] = {}

    handle = open(out_path, "w", encoding="utf-8", newline="\n") if out_path is not None else None
    pool = ThreadPoolExecutor(max_workers=config.parallelism) if config.parallelism > 1 else None
    try:
        if handle is not None:
            _write_line(handle, header)
            handle.flush()

        for round_index in range(1, config.rounds + 1):
            pairing = pair_round(network, round_index, rng_streams.pairing_rng(config.seed, round_index))
            participants = [agent for pair in pairing.pairs for agent in pair]
            prompts = {
                agent: _render_prompt(round_index, histories[agent], narrative.full_text)
                for agent in participants
            }

            def invoke(agent: int) -> tuple[str, str]:
                request = BackendRequest(
                    prompt=prompts[agent],
                    round=round_index,
                    agent_id=agent,
                    decode=config.decode,
                )
                agent_rng = rng_streams.agent_rng(config.seed, round_index, agent)
                try:
                    response: BackendResponse = backends[agent].respond(request, agent_rng)
                    return ("ok", response.raw_text)
                except BackendUnavailableError as err:
                    return ("unavailable", str(err))

            if pool is not None:
                outcomes = dict(zip(participants, pool.map(invoke, participants)))
            else:
                outcomes = {agent: invoke(agent) for agent in participants}

            unavailable_pairs = 0
            round_records: list[InteractionRecord] = []
            for a, b in pairing.pairs:
                raw_a, tag_a, fb_a, down_a = _finalize(outcomes[a], last_guess.get(a))
                raw_b, tag_b, fb_b, down_b = _finalize(outcomes[b], last_guess.get(b))
                if down_a or down_b:
                    unavailable_pairs += 1
                if config.match_on == "raw":
                    match = tag_a.raw == tag_b.raw
                else:
                    match = tag_a.normalized == tag_b.normalized
                points = 1 if match else 0
                round_records.append(
                    InteractionRecord(
                        round=round_index,
                        agent_a=a,
                        agent_b=b,
                        raw_a=raw_a,
                        raw_b=raw_b,
                        hashtag_a=tag_a,
                        hashtag_b=tag_b,
                        match=match,
                        points_a=points,
                        points_b=points,
                        fallback_a=fb_a,
                        fallback_b=fb_b,
                    )
                )

            transcript.records.extend(round_records)
            for record in round_records:
                histories[record.agent_a].append((record.round, record.hashtag_a.raw, record.hashtag_b.raw))
                histories[record.agent_b].append((record.round, record.hashtag_b.raw, record.hashtag_a.raw))
                last_guess[record.agent_a] = record.hashtag_a.raw
                last_guess[record.agent_b] = record.hashtag_b.raw
            if handle is not None:
                for record in round_records:
                    _write_line(handle, record.to_dict())
                handle.flush()

            if pairing.pairs and unavailable_pairs > 0.5 * len(pairing.pairs):
                transcript.abort = {
                    "abort": True,
                    "round": round_index,
                    "reason": f"backend unavailable for {unavailable_pairs} of {len(pairing.pairs)} pairs",
                }
                if handle is not None:
                    _write_line(handle, transcript.abort)
                    handle.flush()
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
        if handle is not None:
            handle.close()

    return transcript


def _finalize(
    outcome: tuple[str, str], previous_guess: str | None
) -> tuple[str, Hashtag, bool, bool]:
    """Resolve one agent's outcome into (raw_record, hashtag, fallback,
    backend_down). Fallback substitutes the agent's previous guess, or the
    sentinel on a first-round failure."""
    status, text = outcome
    if status == "ok":
        try:
            return (text, parse_response(text), False, False)
        except ParseError:
            substitute = previous_guess if previous_guess is not None else FALLBACK_SENTINEL
            return (text, Hashtag.from_raw(substitute), True, False)
    substitute = previous_guess if previous_guess is not None else FALLBACK_SENTINEL
    return (substitute, Hashtag.from_raw(substitute), True, True)
