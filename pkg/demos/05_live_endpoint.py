"""Driving real language models
==============================

The remote backend speaks the OpenAI-compatible chat-completions protocol,
so any such server works: a hosted API or a local inference server. This
script runs a small live group and prints the per-round coherence numbers.

Point it at an endpoint first:

  export HASHNET_LIVE_BASE_URL=http://localhost:8000/v1
  export HASHNET_LIVE_MODEL=my-model
  export HASHNET_API_KEY=...            # only if the server wants one

Responses cost money/time on real endpoints; this stays at 5 agents and
5 rounds.
"""

import os
import sys

from hashnet import (
    AgentSpec,
    DecodeParams,
    RunConfig,
    TopologySpec,
    metric_series,
    rank_abundance,
    run_simulation,
)

base_url = os.environ.get("HASHNET_LIVE_BASE_URL")
model = os.environ.get("HASHNET_LIVE_MODEL")
if not base_url or not model:
    sys.exit("set HASHNET_LIVE_BASE_URL and HASHNET_LIVE_MODEL to run this demo")

config = RunConfig(
    topology=TopologySpec(n=5, k=2, p=0.1),
    rounds=5,
    agents=tuple(
        AgentSpec(i, "remote", {"base_url": base_url, "model": model}) for i in range(5)
    ),
    narrative_path="bundled:philippines",
    decode=DecodeParams(temperature=0.7, max_tokens=64),
    parallelism=2,
    seed=1,
)

transcript = run_simulation(config, out_path="live_transcript.jsonl")
if transcript.abort is not None:
    sys.exit(f"aborted: {transcript.abort['reason']}")

print(f"{model}: {transcript.rounds_completed()} rounds, "
      f"match rate {transcript.match_rate():.2f}, fallbacks {transcript.fallback_count()}")

entropy = dict(metric_series(transcript, "entropy").values)
share = dict(metric_series(transcript, "dominant_share").values)
print(f"\n{'round':>5}  {'entropy':>8}  {'dominant share':>14}")
for t in sorted(entropy):
    print(f"{t:>5}  {entropy[t]:>8.3f}  {share[t]:>14.2f}")

print("\ntop hashtags:")
for rank, (tag, count) in enumerate(rank_abundance(transcript, k=5).table, start=1):
    print(f"  {rank}. {tag} ({count})")

print("\ntranscript written to live_transcript.jsonl")
