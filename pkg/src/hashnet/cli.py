"""Command-line entry point: validate configs, run simulations, and
compute metric reports.

Subcommands: ``validate``, ``simulate``, ``metrics``, ``report``.
Exit codes: 0 success, 1 validation failure / abort / strict skip,
2 I/O failure. Secrets travel only through environment variables
(``HASHNET_API_KEY``), never config files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .agents import AgentSpec, DecodeParams
from .engine import (
    RunConfig,
    Transcript,
    config_digest,
    config_snapshot,
    read_transcript,
    run_simulation,
)
from .errors import (
    ConfigError,
    EmbedderUnavailableError,
    HashnetError,
    MetricError,
    NarrativeLoadError,
    TranscriptError,
)
from .metrics import (
    DEDUP_POLICIES,
    TOKENIZATION_MODES,
    HashingEmbedder,
    OneHotEmbedder,
    RemoteEmbedder,
    align_hashtags,
    build_unigram_model,
    corpus_digest,
    load_reference_corpus,
    metric_series,
    rank_abundance,
    round_responses,
    write_alignment_csv,
    write_metadata,
    write_rank_abundance_csv,
    write_series_csv,
)
from .narrative import load_narrative
from .topology import TopologySpec

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

DEFAULT_TOPOLOGY = {"n": 20, "k": 4, "p": 0.1}
DEFAULT_ROUNDS = 40
DEFAULT_NARRATIVE = "bundled:fukushima"

_TOP_LEVEL_KEYS = {
    "seed", "rounds", "topology", "agents", "narrative", "decode",
    "parallelism", "match_on", "metrics", "output", "run_id",
}
_EMBEDDING_PROVIDERS = ("onehot", "hashing", "remote")


@dataclass
class MetricsSettings:
    """Resolved metrics section of a config document."""

    reference_corpus: Path | None = None
    tokenization: str = "hashtag"
    entropy_base: float = 2.0
    dedup: str = "per_response"
    embedding: dict = field(default_factory=lambda: {"provider": "hashing", "dim": 256})


@dataclass
class LoadedConfig:
    run: RunConfig
    metrics: MetricsSettings
    transcript_out: Path | None
    metrics_dir: Path | None


def _resolve(base_dir: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def _expand_agents(doc: dict, n: int) -> list[dict]:
    spec = doc.get("agents")
    if isinstance(spec, dict):
        count = spec.get("count", n)
        return [
            {"agent_id": i, "backend": spec.get("backend"), "params": spec.get("params", {})}
            for i in range(count if isinstance(count, int) and count > 0 else 0)
        ]
    if isinstance(spec, list):
        return [
            {
                "agent_id": entry.get("agent_id", i) if isinstance(entry, dict) else i,
                "backend": entry.get("backend") if isinstance(entry, dict) else None,
                "params": entry.get("params", {}) if isinstance(entry, dict) else {},
            }
            for i, entry in enumerate(spec)
        ]
    return []


def validate_config(doc: dict, base_dir: Path) -> list[tuple[str, str]]:
    """Full schema and cross-field validation; returns every violation as
    (field path, message) rather than stopping at the first."""
    violations: list[tuple[str, str]] = []
    if not isinstance(doc, dict):
        return [("$", "config document must be a JSON object")]

    for key in doc:
        if key not in _TOP_LEVEL_KEYS:
            violations.append((key, "unknown field"))

    def check(field_path: str, fn) -> None:
        try:
            fn()
        except ConfigError as err:
            violations.append((err.field, err.message))
        except (TypeError, ValueError) as err:
            violations.append((field_path, str(err)))

    topology_doc = doc.get("topology", DEFAULT_TOPOLOGY)
    if not isinstance(topology_doc, dict):
        violations.append(("topology", "must be an object"))
        topology_doc = DEFAULT_TOPOLOGY
    topology = TopologySpec(
        n=topology_doc.get("n", DEFAULT_TOPOLOGY["n"]),
        k=topology_doc.get("k", DEFAULT_TOPOLOGY["k"]),
        p=topology_doc.get("p", DEFAULT_TOPOLOGY["p"]),
        seed=topology_doc.get("seed"),
    )
    check("topology", topology.validate)

    rounds = doc.get("rounds", DEFAULT_ROUNDS)
    if not isinstance(rounds, int) or rounds < 1:
        violations.append(("rounds", f"must be a positive integer, got {rounds!r}"))

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        violations.append(("seed", f"must be an unsigned 64-bit integer, got {seed!r}"))

    parallelism = doc.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        violations.append(("parallelism", f"must be a positive integer, got {parallelism!r}"))

    match_on = doc.get("match_on", "normalized")
    if match_on not in ("normalized", "raw"):
        violations.append(("match_on", f"must be 'normalized' or 'raw', got {match_on!r}"))

    decode_doc = doc.get("decode", {})
    if not isinstance(decode_doc, dict):
        violations.append(("decode", "must be an object"))
        decode_doc = {}
    decode = DecodeParams(
        temperature=decode_doc.get("temperature", 0.7),
        max_tokens=decode_doc.get("max_tokens", 64),
    )
    check("decode", decode.validate)

    if "agents" not in doc:
        violations.append(("agents", "missing required section"))
    else:
        entries = _expand_agents(doc, topology.n if isinstance(topology.n, int) else 0)
        if not entries:
            violations.append(("agents", "must be a spec object or a nonempty list"))
        elif isinstance(topology.n, int) and len(entries) != topology.n:
            violations.append(
                ("agents", f"agent count {len(entries)} must equal topology.n {topology.n}")
            )
        for entry in entries:
            spec = AgentSpec(
                agent_id=entry["agent_id"],
                backend=entry["backend"] if isinstance(entry["backend"], str) else "",
                backend_params=entry["params"] if isinstance(entry["params"], dict) else {},
            )
            check(f"agents[{entry['agent_id']}]", spec.validate)
            if spec.backend == "replay":
                source = spec.backend_params.get("transcript")
                if isinstance(source, str) and not _resolve(base_dir, source).is_file():
                    violations.append(
                        (f"agents[{entry['agent_id']}].backend_params.transcript",
                         f"replay transcript not found: {source}")
                    )

    narrative_ref = doc.get("narrative", DEFAULT_NARRATIVE)
    if not isinstance(narrative_ref, str) or not narrative_ref:
        violations.append(("narrative", "must be a nonempty string"))
    else:
        try:
            load_narrative(_narrative_target(narrative_ref, base_dir))
        except NarrativeLoadError as err:
            violations.append((f"narrative.{err.field}" if err.field != "$" else "narrative", err.message))

    metrics_doc = doc.get("metrics", {})
    if not isinstance(metrics_doc, dict):
        violations.append(("metrics", "must be an object"))
        metrics_doc = {}
    corpus = metrics_doc.get("reference_corpus")
    if corpus is not None:
        if not isinstance(corpus, str):
            violations.append(("metrics.reference_corpus", "must be a path string"))
        elif not _resolve(base_dir, corpus).is_file():
            violations.append(("metrics.reference_corpus", f"file not found: {corpus}"))
    tokenization = metrics_doc.get("tokenization", "hashtag")
    if tokenization not in TOKENIZATION_MODES:
        violations.append(("metrics.tokenization", f"must be one of {TOKENIZATION_MODES}"))
    dedup = metrics_doc.get("dedup", "per_response")
    if dedup not in DEDUP_POLICIES:
        violations.append(("metrics.dedup", f"must be one of {DEDUP_POLICIES}"))
    base = metrics_doc.get("entropy_base", 2)
    if not isinstance(base, (int, float)) or base <= 1:
        violations.append(("metrics.entropy_base", f"must be a number > 1, got {base!r}"))
    embedding = metrics_doc.get("embedding", {})
    if not isinstance(embedding, dict):
        violations.append(("metrics.embedding", "must be an object"))
    else:
        provider = embedding.get("provider", "hashing")
        if provider not in _EMBEDDING_PROVIDERS:
            violations.append(("metrics.embedding.provider", f"must be one of {_EMBEDDING_PROVIDERS}"))
        elif provider == "remote":
            for key in ("base_url", "model"):
                if not isinstance(embedding.get(key), str) or not embedding.get(key):
                    violations.append((f"metrics.embedding.{key}", "required for the remote provider"))

    output_doc = doc.get("output", {})
    if not isinstance(output_doc, dict):
        violations.append(("output", "must be an object"))
    else:
        for key in ("transcript", "metrics_dir"):
            if key in output_doc and not isinstance(output_doc[key], str):
                violations.append((f"output.{key}", "must be a path string"))

    return violations


def _narrative_target(narrative_ref: str, base_dir: Path) -> str:
    if narrative_ref.startswith("bundled:"):
        return narrative_ref
    return str(_resolve(base_dir, narrative_ref))


def load_config(path: Path) -> tuple[dict, Path]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise _IOFailure(f"cannot read config {path}: {err}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise _ValidationFailure(
            f"config parse error in {path}: line {err.lineno} column {err.colno}: {err.msg}"
        ) from err
    return doc, path.resolve().parent


def build_config(doc: dict, base_dir: Path, args: argparse.Namespace) -> LoadedConfig:
    """Turn a validated document into a RunConfig plus metrics settings,
    applying CLI overrides."""
    topology_doc = doc.get("topology", DEFAULT_TOPOLOGY)
    topology = TopologySpec(
        n=topology_doc.get("n", DEFAULT_TOPOLOGY["n"]),
        k=topology_doc.get("k", DEFAULT_TOPOLOGY["k"]),
        p=topology_doc.get("p", DEFAULT_TOPOLOGY["p"]),
        seed=topology_doc.get("seed"),
    )
    agents = []
    for entry in _expand_agents(doc, topology.n):
        params = dict(entry["params"])
        if entry["backend"] == "replay" and isinstance(params.get("transcript"), str):
            params["transcript"] = str(_resolve(base_dir, params["transcript"]))
        agents.append(AgentSpec(agent_id=entry["agent_id"], backend=entry["backend"], backend_params=params))

    decode_doc = doc.get("decode", {})
    run = RunConfig(
        topology=topology,
        rounds=doc.get("rounds", DEFAULT_ROUNDS),
        agents=tuple(agents),
        narrative_path=_narrative_target(doc.get("narrative", DEFAULT_NARRATIVE), base_dir),
        decode=DecodeParams(
            temperature=decode_doc.get("temperature", 0.7),
            max_tokens=decode_doc.get("max_tokens", 64),
        ),
        parallelism=(
            args.parallelism
            if getattr(args, "parallelism", None) is not None
            else doc.get("parallelism", 1)
        ),
        seed=args.seed if getattr(args, "seed", None) is not None else doc.get("seed", 0),
        run_id=doc.get("run_id"),
        match_on=doc.get("match_on", "normalized"),
    )

    metrics_doc = doc.get("metrics", {})
    corpus = metrics_doc.get("reference_corpus")
    settings = MetricsSettings(
        reference_corpus=_resolve(base_dir, corpus) if isinstance(corpus, str) else None,
        tokenization=metrics_doc.get("tokenization", "hashtag"),
        entropy_base=float(metrics_doc.get("entropy_base", 2)),
        dedup=metrics_doc.get("dedup", "per_response"),
        embedding=dict(metrics_doc.get("embedding", {"provider": "hashing", "dim": 256})),
    )

    output_doc = doc.get("output", {})
    transcript_out = output_doc.get("transcript")
    metrics_dir = output_doc.get("metrics_dir")
    return LoadedConfig(
        run=run,
        metrics=settings,
        transcript_out=_resolve(base_dir, transcript_out) if isinstance(transcript_out, str) else None,
        metrics_dir=_resolve(base_dir, metrics_dir) if isinstance(metrics_dir, str) else None,
    )


def _build_embedder(settings: MetricsSettings):
    embedding = settings.embedding
    provider = embedding.get("provider", "hashing")
    if provider == "onehot":
        return OneHotEmbedder(dim=embedding.get("dim", 4096))
    if provider == "hashing":
        return HashingEmbedder(dim=embedding.get("dim", 256))
    return RemoteEmbedder(
        embedding.get("base_url", ""),
        embedding.get("model", ""),
        api_key_env=embedding.get("api_key_env", "HASHNET_API_KEY"),
        timeout=embedding.get("timeout", 60.0),
        max_retries=embedding.get("max_retries", 3),
    )


class _ValidationFailure(HashnetError):
    pass


class _IOFailure(HashnetError):
    pass


# --- subcommands -------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    doc, base_dir = load_config(Path(args.config))
    violations = validate_config(doc, base_dir)
    if violations:
        print(f"invalid: {len(violations)} violation(s) in {args.config}")
        for field_path, message in violations:
            print(f"  {field_path}: {message}")
        return EXIT_INVALID
    print(f"ok: {args.config}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    doc, base_dir = load_config(Path(args.config))
    violations = validate_config(doc, base_dir)
    if violations:
        print(f"invalid: {len(violations)} violation(s); run `hashnet validate` for details")
        for field_path, message in violations:
            print(f"  {field_path}: {message}")
        return EXIT_INVALID
    loaded = build_config(doc, base_dir, args)

    if args.out:
        out_path = Path(args.out) / "transcript.jsonl"
    elif loaded.transcript_out is not None:
        out_path = loaded.transcript_out
    else:
        out_path = Path("transcript.jsonl")
    out_path.parent.mkdir(parents=True, exist_ok=True)

    transcript = run_simulation(loaded.run, out_path=out_path)
    completed = transcript.rounds_completed()
    print(
        f"run {transcript.header['run_id']}: {completed}/{loaded.run.rounds} rounds, "
        f"match rate {transcript.match_rate():.3f}, fallbacks {transcript.fallback_count()}"
    )
    print(f"transcript written to {out_path}")
    if transcript.abort is not None:
        print(f"aborted in round {transcript.abort['round']}: {transcript.abort['reason']}")
        return EXIT_INVALID
    return EXIT_OK


def _metric_outputs(
    transcript: Transcript,
    loaded: LoadedConfig,
    out_dir: Path,
    *,
    include_fallbacks: bool,
) -> dict:
    """Write every computable metric CSV; returns per-metric statuses."""
    settings = loaded.metrics
    statuses: dict[str, str] = {}
    out_dir.mkdir(parents=True, exist_ok=True)

    for metric in ("entropy", "dominant_share"):
        series = metric_series(
            transcript,
            metric,
            base=settings.entropy_base,
            dedup=settings.dedup,
            include_fallbacks=include_fallbacks,
        )
        write_series_csv(series, out_dir / f"{metric}.csv")
        statuses[metric] = "computed"

    if settings.reference_corpus is None:
        statuses["perplexity"] = "skipped: no reference corpus configured"
    elif not settings.reference_corpus.is_file():
        statuses["perplexity"] = f"skipped: reference corpus not found: {settings.reference_corpus}"
    else:
        model = build_unigram_model(
            load_reference_corpus(settings.reference_corpus), settings.tokenization
        )
        series = metric_series(
            transcript, "perplexity", model=model, include_fallbacks=include_fallbacks
        )
        write_series_csv(series, out_dir / "perplexity.csv")
        statuses["perplexity"] = "computed"

    rac = rank_abundance(transcript, include_fallbacks=include_fallbacks)
    write_rank_abundance_csv(rac, out_dir / "rank_abundance.csv")
    statuses["rank_abundance"] = "computed"

    narrative = load_narrative(loaded.run.narrative_path)
    if not narrative.events:
        statuses["alignment"] = f"skipped: narrative {narrative.id!r} has no events"
    else:
        hashtags: list[str] = []
        for round_index in range(1, transcript.rounds_completed() + 1):
            hashtags.extend(
                round_responses(
                    transcript, round_index, include_fallbacks=include_fallbacks, form="raw"
                )
            )
        try:
            alignment = align_hashtags(hashtags, narrative, _build_embedder(settings))
            write_alignment_csv(alignment, out_dir / "alignment.csv")
            statuses["alignment"] = "computed"
        except EmbedderUnavailableError as err:
            statuses["alignment"] = f"skipped: embedder unavailable: {err}"

    metadata = {
        "transcript_run_id": transcript.header.get("run_id"),
        "config_digest": config_digest(config_snapshot(loaded.run)),
        "seed": loaded.run.seed,
        "entropy_base": settings.entropy_base,
        "tokenization": settings.tokenization,
        "smoothing": "add_one",
        "dedup": settings.dedup,
        "exclusion_policy": "exclude_fallbacks" if not include_fallbacks else "include_fallbacks",
        "reference_corpus": str(settings.reference_corpus) if settings.reference_corpus else None,
        "reference_corpus_sha256": (
            corpus_digest(settings.reference_corpus)
            if settings.reference_corpus and settings.reference_corpus.is_file()
            else None
        ),
        "narrative_id": narrative.id,
        "embedding": settings.embedding,
        "rank_abundance_entropy": rac.entropy,
        "statuses": statuses,
    }
    write_metadata(metadata, out_dir / "metadata.json")
    return statuses


def cmd_metrics(args: argparse.Namespace) -> int:
    doc, base_dir = load_config(Path(args.config))
    violations = validate_config(doc, base_dir)
    if violations:
        print(f"invalid: {len(violations)} violation(s); run `hashnet validate` for details")
        return EXIT_INVALID
    loaded = build_config(doc, base_dir, args)
    transcript_path = Path(args.transcript)
    if not transcript_path.is_file():
        raise _IOFailure(f"transcript not found: {transcript_path}")
    transcript = read_transcript(transcript_path)

    if args.out:
        out_dir = Path(args.out)
    elif loaded.metrics_dir is not None:
        out_dir = loaded.metrics_dir
    else:
        out_dir = transcript_path.parent / "metrics"

    statuses = _metric_outputs(
        transcript, loaded, out_dir, include_fallbacks=not args.exclude_fallbacks
    )
    skipped = {name: status for name, status in statuses.items() if status != "computed"}
    for name, status in statuses.items():
        print(f"{name}: {status}")
    print(f"metric outputs written to {out_dir}")
    if skipped and args.strict:
        return EXIT_INVALID
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    doc, base_dir = load_config(Path(args.config))
    violations = validate_config(doc, base_dir)
    if violations:
        print(f"invalid: {len(violations)} violation(s); run `hashnet validate` for details")
        return EXIT_INVALID
    loaded = build_config(doc, base_dir, args)
    settings = loaded.metrics
    include_fallbacks = not args.exclude_fallbacks

    model = None
    if settings.reference_corpus is not None and settings.reference_corpus.is_file():
        model = build_unigram_model(
            load_reference_corpus(settings.reference_corpus), settings.tokenization
        )

    out_dir = Path(args.out) if args.out else (loaded.metrics_dir or Path("report"))
    out_dir.mkdir(parents=True, exist_ok=True)

    series_rows: dict[str, list[tuple[str, int, float]]] = {"entropy": [], "dominant_share": []}
    if model is not None:
        series_rows["perplexity"] = []
    rac_rows: list[tuple[str, int, str, int]] = []
    runs: list[str] = []

    for path_text in args.transcripts:
        path = Path(path_text)
        if not path.is_file():
            raise _IOFailure(f"transcript not found: {path}")
        transcript = read_transcript(path)
        label = transcript.header.get("run_id") or path.stem
        runs.append(label)
        for metric in series_rows:
            series = metric_series(
                transcript,
                metric,
                model=model,
                base=settings.entropy_base,
                dedup=settings.dedup,
                include_fallbacks=include_fallbacks,
            )
            series_rows[metric].extend((label, r, v) for r, v in series.values)
        rac = rank_abundance(transcript, include_fallbacks=include_fallbacks)
        rac_rows.extend(
            (label, rank, tag, count) for rank, (tag, count) in enumerate(rac.table, start=1)
        )

    for metric, rows in series_rows.items():
        with open(out_dir / f"{metric}.csv", "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["run", "round", "value"])
            for label, round_index, value in rows:
                writer.writerow([label, round_index, format(value, ".12g")])
    with open(out_dir / "rank_abundance.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["run", "rank", "hashtag", "count"])
        for row in rac_rows:
            writer.writerow(list(row))
    write_metadata(
        {
            "runs": runs,
            "entropy_base": settings.entropy_base,
            "tokenization": settings.tokenization,
            "dedup": settings.dedup,
            "exclusion_policy": "exclude_fallbacks" if not include_fallbacks else "include_fallbacks",
            "perplexity": "computed" if model is not None else "skipped: no reference corpus",
        },
        out_dir / "metadata.json",
    )
    print(f"report for {len(runs)} run(s) written to {out_dir}")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hashnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a config document")
    p_validate.add_argument("--config", required=True)
    p_validate.set_defaults(func=cmd_validate)

    p_simulate = sub.add_parser("simulate", help="run the matching game")
    p_simulate.add_argument("--config", required=True)
    p_simulate.add_argument("--out", help="directory for transcript.jsonl")
    p_simulate.add_argument("--seed", type=int, help="override the config seed")
    p_simulate.add_argument("--parallelism", type=int, help="override the backend fan-out cap")
    p_simulate.set_defaults(func=cmd_simulate)

    p_metrics = sub.add_parser("metrics", help="compute metric CSVs for a transcript")
    p_metrics.add_argument("transcript")
    p_metrics.add_argument("--config", required=True)
    p_metrics.add_argument("--out", help="directory for metric CSVs")
    p_metrics.add_argument("--exclude-fallbacks", action="store_true")
    p_metrics.add_argument("--strict", action="store_true", help="fail when any metric is skipped")
    p_metrics.set_defaults(func=cmd_metrics)

    p_report = sub.add_parser("report", help="concatenate metrics across transcripts")
    p_report.add_argument("transcripts", nargs="+")
    p_report.add_argument("--config", required=True)
    p_report.add_argument("--out", help="directory for combined CSVs")
    p_report.add_argument("--exclude-fallbacks", action="store_true")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except _IOFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except _ValidationFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, NarrativeLoadError, TranscriptError, MetricError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
