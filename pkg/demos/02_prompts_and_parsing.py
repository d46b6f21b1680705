"""Prompts in, hashtags out
==========================

What an agent actually sees each round, and how raw model output is turned
back into a comparable hashtag: reasoning blocks stripped, the first
'#'-prefixed token sequence extracted, five-word cap applied, and an
aggressive normalization for scoring.
"""

from hashnet import (
    Hashtag,
    InteractionRecord,
    Transcript,
    build_prompt,
    bundled_narrative,
    normalize_hashtag,
    parse_response,
)

narrative = bundled_narrative("fukushima")

# Round 1: no social context yet, just the scoring rule and the narrative.
empty = Transcript(header={}, records=[])
print("=" * 72)
print("ROUND 1 PROMPT")
print("=" * 72)
print(build_prompt(0, 1, empty, narrative))


def record(round_index, a, b, raw_a, raw_b):
    tag_a, tag_b = Hashtag.from_raw(raw_a), Hashtag.from_raw(raw_b)
    match = tag_a.normalized == tag_b.normalized
    return InteractionRecord(
        round=round_index, agent_a=a, agent_b=b, raw_a=raw_a, raw_b=raw_b,
        hashtag_a=tag_a, hashtag_b=tag_b, match=match,
        points_a=int(match), points_b=int(match), fallback_a=False, fallback_b=False,
    )


# Round 3: the agent's full history rides along as a small CSV table.
history = Transcript(header={}, records=[
    record(1, 0, 5, "#Fukushima", "#Setsuden"),
    record(2, 0, 2, "#Setsuden", "#Setsuden"),
])
print()
print("=" * 72)
print("ROUND 3 PROMPT (agent 0, two prior rounds)")
print("=" * 72)
print(build_prompt(0, 3, history, narrative))

# Parsing survives the usual model quirks: chatter, reasoning tags,
# markdown wrappers, and overlong answers.
samples = [
    "Sure! I'll go with #FukushimaDisaster",
    "<think>neighbor said #Setsuden twice, match it</think>\n#Setsuden",
    '"**#PrayForJapan**"',
    "#Bongbong Marcos 2022 landslide victory imminent",
    "The earthquake was devastating beyond words honestly",
]
print()
print("=" * 72)
print("PARSING SAMPLES")
print("=" * 72)
for sample in samples:
    tag = parse_response(sample)
    print(f"raw output:  {sample!r}")
    print(f"  extracted: {tag.raw!r}")
    print(f"  normalized: {tag.normalized!r}")

# Normalization is what scoring compares: case, '#', punctuation all fold away.
pairs = [("#Fukushima!", "#fukushima"), ("#Save Energy", "#saveenergy"), ("#A-B", "#ab")]
print()
for left, right in pairs:
    same = normalize_hashtag(left) == normalize_hashtag(right)
    print(f"{left!r:20} vs {right!r:15} -> match={same}")
