"""Metric operations against oracles, known values, and properties."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hashnet import (
    ConfigError,
    EmbedderUnavailableError,
    HashtagDistribution,
    MetricError,
    OneHotEmbedder,
    Transcript,
    UnigramModel,
    align_hashtags,
    build_unigram_model,
    dominant_share,
    metric_series,
    perplexity,
    rank_abundance,
    read_transcript,
    round_distribution,
    run_simulation,
    shannon_entropy,
)
from hashnet.metrics import HashingEmbedder, round_responses, tokenize
from hashnet.narrative import FocalNarrative, NarrativeEvent

from conftest import FIXTURES, make_mock_config
from oracles import align_bruteforce, entropy_mp, perplexity_mp, read_jsonl, tally_round
from test_engine import make_record


@pytest.fixture(scope="module")
def fixture_transcript():
    return read_transcript(FIXTURES / "fixture_transcript.jsonl")


class TestRoundDistribution:
    def test_counting_example(self):
        records = [
            make_record(1, 0, 1, "#x", "#x"),
            make_record(1, 2, 3, "#y", "#x"),
        ]
        dist = round_distribution(Transcript(header={}, records=records), 1)
        assert dist.counts == {"x": 3, "y": 1}
        assert dist.total == 4

    def test_all_same(self):
        records = [make_record(1, 0, 1, "#x", "#x"), make_record(1, 2, 3, "#x", "#x")]
        dist = round_distribution(Transcript(header={}, records=records), 1)
        assert dist.counts == {"x": 4}

    def test_ten_pair_fixture_matches_independent_tally(self, tmp_path):
        path = tmp_path / "t.jsonl"
        run_simulation(make_mock_config(n=20, rounds=3, seed=13), out_path=path)
        _, raw_records = read_jsonl(path)
        transcript = read_transcript(path)
        for round_index in (1, 2, 3):
            expected = tally_round(raw_records, round_index)
            dist = round_distribution(transcript, round_index)
            assert dist.counts == dict(expected)

    def test_missing_round_raises(self, fixture_transcript):
        with pytest.raises(MetricError):
            round_distribution(fixture_transcript, 9)

    def test_unique_dedup_policy(self):
        records = [make_record(1, 0, 1, "#x", "#x"), make_record(1, 2, 3, "#y", "#x")]
        dist = round_distribution(Transcript(header={}, records=records), 1, dedup="unique")
        assert dist.counts == {"x": 1, "y": 1}

    def test_exclude_fallbacks(self, fixture_transcript):
        included = round_distribution(fixture_transcript, 2)
        excluded = round_distribution(fixture_transcript, 2, include_fallbacks=False)
        assert included.counts == {"blackout": 2, "storm": 1, "grid": 1}
        assert excluded.counts == {"blackout": 2, "storm": 1}


class TestShannonEntropy:
    def test_single_hashtag_is_zero(self):
        assert shannon_entropy(HashtagDistribution({"x": 10})) == 0.0

    def test_uniform_four_is_two_bits(self):
        assert shannon_entropy(HashtagDistribution({"a": 4, "b": 4, "c": 4, "d": 4})) == 2.0

    def test_three_one_split(self):
        value = shannon_entropy(HashtagDistribution({"a": 3, "b": 1}))
        assert value == pytest.approx(0.8112781245, abs=1e-9)
        assert value == pytest.approx(float(entropy_mp({"a": 3, "b": 1})), rel=1e-12)

    def test_empty_distribution_rejected(self):
        with pytest.raises(MetricError):
            shannon_entropy(HashtagDistribution({}))

    def test_matches_oracle_on_random_distributions(self):
        rng = random.Random(99)
        for _ in range(200):
            counts = {f"t{i}": rng.randint(1, 40) for i in range(rng.randint(1, 30))}
            ours = shannon_entropy(HashtagDistribution(counts))
            assert ours == pytest.approx(float(entropy_mp(counts)), rel=1e-9, abs=1e-12)

    @given(st.dictionaries(st.text(min_size=1, max_size=6), st.integers(1, 50), min_size=1, max_size=20))
    @settings(max_examples=100, deadline=None)
    def test_bounds_and_zero_iff_dominant_one(self, counts):
        dist = HashtagDistribution(counts)
        h = shannon_entropy(dist)
        assert -1e-12 <= h <= math.log2(len(counts)) + 1e-12
        if h == 0.0:
            assert dominant_share(dist) == 1.0
        if dominant_share(dist) == 1.0:
            assert h == 0.0


class TestDominantShare:
    def test_unanimous(self):
        assert dominant_share(HashtagDistribution({"x": 4})) == 1.0

    def test_half(self):
        assert dominant_share(HashtagDistribution({"a": 2, "b": 1, "c": 1})) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            dominant_share(HashtagDistribution({}))


class TestUnigramModel:
    def test_worked_example(self):
        model = build_unigram_model(["f", "f", "t", "n"])
        assert model.probability("f") == pytest.approx(3 / 8, rel=0, abs=0)
        assert model.probability("t") == pytest.approx(2 / 8, rel=0, abs=0)
        assert model.probability("n") == pytest.approx(2 / 8, rel=0, abs=0)
        assert model.oov_probability == pytest.approx(1 / 8, rel=0, abs=0)

    def test_repeated_single_token(self):
        for k in (1, 2, 7, 50):
            model = build_unigram_model(["tok"] * k)
            assert model.probability("tok") == pytest.approx((k + 1) / (k + 2), rel=1e-15)
            assert model.oov_probability == pytest.approx(1 / (k + 2), rel=1e-15)

    def test_mass_sums_to_one_on_random_corpora(self):
        rng = random.Random(4)
        for _ in range(500):
            corpus = [f"t{rng.randint(0, 30)}" for _ in range(rng.randint(1, 80))]
            model = build_unigram_model(corpus)
            total = sum(model.probabilities.values()) + model.oov_probability
            assert total == pytest.approx(1.0, abs=1e-12)
            assert all(p > 0 for p in model.probabilities.values())
            assert model.oov_probability > 0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ConfigError):
            build_unigram_model([])

    def test_word_tokenization(self):
        tokens = tokenize(["#Save Energy Now", "#save"], "words")
        assert tokens == ["save", "energy", "now", "save"]
        model = build_unigram_model(["#Save Energy Now", "#save"], tokenization="words")
        assert model.probability("save") == pytest.approx(3 / 8)


class TestPerplexity:
    def test_uniform_model_identity_exact(self):
        model = UnigramModel(probabilities={f"t{i}": 0.25 for i in range(4)}, oov_probability=0.0001)
        assert perplexity(model, ["t0", "t1", "t2"]) == 4.0

    def test_uniform_model_identity_general(self):
        for v in range(1, 65):
            model = UnigramModel(
                probabilities={f"t{i}": 1.0 / v for i in range(v)}, oov_probability=1e-9
            )
            responses = [f"t{i % v}" for i in range(7)]
            assert perplexity(model, responses) == pytest.approx(v, rel=1e-12)

    def test_worked_add_one_example(self):
        model = build_unigram_model(["f", "f", "t", "n"])
        value = perplexity(model, ["f", "s"])
        assert value == pytest.approx(4.6188, abs=1e-4)
        assert value == pytest.approx(math.exp(-(math.log(3 / 8) + math.log(1 / 8)) / 2), rel=1e-12)

    def test_mode_only_responses(self):
        model = build_unigram_model(["a", "a", "a", "b"])
        assert perplexity(model, ["a", "a"]) == pytest.approx(1 / model.probability("a"), rel=1e-12)

    def test_always_above_one_under_add_one(self):
        rng = random.Random(8)
        for _ in range(100):
            corpus = [f"t{rng.randint(0, 10)}" for _ in range(rng.randint(1, 40))]
            model = build_unigram_model(corpus)
            responses = [f"t{rng.randint(0, 14)}" for _ in range(rng.randint(1, 20))]
            assert perplexity(model, responses) > 1.0

    def test_matches_oracle_on_random_instances(self):
        rng = random.Random(21)
        for _ in range(200):
            corpus = [f"t{rng.randint(0, 20)}" for _ in range(rng.randint(1, 60))]
            responses = [f"t{rng.randint(0, 25)}" for _ in range(rng.randint(1, 20))]
            ours = perplexity(build_unigram_model(corpus), responses)
            theirs = float(perplexity_mp(corpus, responses))
            assert ours == pytest.approx(theirs, rel=1e-9)

    def test_empty_responses_rejected(self):
        model = build_unigram_model(["a"])
        with pytest.raises(MetricError):
            perplexity(model, [])


def synthetic_events(n):
    return tuple(NarrativeEvent(label=f"E{i}", description=f"event number {i}") for i in range(n))


class TestAlignment:
    def test_one_hot_identity(self):
        narrative = FocalNarrative(
            id="n", title="n", full_text="t",
            events=(NarrativeEvent("A", "#alpha"), NarrativeEvent("B", "#beta")),
        )
        result = align_hashtags(["#beta"], narrative, OneHotEmbedder())
        assert result.assignments["#beta"] == ("B", pytest.approx(1.0))
        assert result.counts == {"A": 0, "B": 1}

    def test_orthogonal_ties_go_to_earlier_event(self):
        narrative = FocalNarrative(
            id="n", title="n", full_text="t",
            events=(NarrativeEvent("A", "#alpha"), NarrativeEvent("B", "#beta")),
        )
        result = align_hashtags(["#gamma"], narrative, OneHotEmbedder())
        assert result.assignments["#gamma"][0] == "A"

    def test_counts_weighted_by_frequency(self):
        narrative = FocalNarrative(
            id="n", title="n", full_text="t",
            events=(NarrativeEvent("A", "#alpha"), NarrativeEvent("B", "#beta")),
        )
        result = align_hashtags(["#alpha", "#alpha", "#beta"], narrative, OneHotEmbedder())
        assert result.counts == {"A": 2, "B": 1}
        assert sum(result.counts.values()) == 3

    def test_matches_bruteforce_on_random_vectors(self):
        rng = np.random.default_rng(5)
        events = synthetic_events(5)
        narrative = FocalNarrative(id="n", title="n", full_text="t", events=events)
        tags = [f"#tag{i}" for i in range(50)]
        vectors = {text: rng.normal(size=8) for text in [e.description for e in events] + tags}

        class PresetEmbedder:
            def embed(self, texts):
                return np.array([vectors[t] for t in texts])

        result = align_hashtags(tags, narrative, PresetEmbedder())
        expected = align_bruteforce(
            [vectors[t].tolist() for t in tags],
            [vectors[e.description].tolist() for e in events],
        )
        for tag, event_index in zip(tags, expected):
            assert result.assignments[tag][0] == events[event_index].label

    def test_matches_bruteforce_at_scale(self):
        # invariant holds up to 1e3 hashtags x 1e2 events
        rng = np.random.default_rng(11)
        events = synthetic_events(100)
        narrative = FocalNarrative(id="n", title="n", full_text="t", events=events)
        tags = [f"#tag{i}" for i in range(1000)]
        texts = [e.description for e in events] + tags
        vectors = {text: rng.normal(size=6) for text in texts}

        class PresetEmbedder:
            def embed(self, batch):
                return np.array([vectors[t] for t in batch])

        result = align_hashtags(tags, narrative, PresetEmbedder())
        expected = align_bruteforce(
            [vectors[t].tolist() for t in tags],
            [vectors[e.description].tolist() for e in events],
        )
        mismatches = sum(
            result.assignments[tag][0] != events[idx].label for tag, idx in zip(tags, expected)
        )
        assert mismatches == 0

    def test_no_events_rejected(self):
        narrative = FocalNarrative(id="n", title="n", full_text="t", events=())
        with pytest.raises(MetricError):
            align_hashtags(["#x"], narrative, OneHotEmbedder())

    def test_broken_embedder_is_explicit(self):
        class Broken:
            def embed(self, texts):
                raise RuntimeError("no server")

        narrative = FocalNarrative(id="n", title="n", full_text="t", events=synthetic_events(2))
        with pytest.raises(EmbedderUnavailableError):
            align_hashtags(["#x"], narrative, Broken())

    def test_hashing_embedder_is_deterministic_and_normalized(self):
        embedder = HashingEmbedder(dim=64)
        a = embedder.embed(["#storm", "#storm", "#other"])
        assert np.allclose(a[0], a[1])
        assert not np.allclose(a[0], a[2])
        assert np.linalg.norm(a[0]) == pytest.approx(1.0)


class TestRankAbundance:
    def test_single_hashtag_run(self):
        records = [make_record(1, 0, 1, "#x", "#x"), make_record(2, 0, 1, "#x", "#x")]
        result = rank_abundance(Transcript(header={}, records=records))
        assert result.table == (("x", 4),)
        assert result.entropy == 0.0

    def test_tie_broken_lexicographically(self):
        records = []
        raws = ["#a"] * 5 + ["#b"] * 3 + ["#c"] * 3 + ["#a"]
        for i in range(0, len(raws) - 1, 2):
            records.append(make_record(i // 2 + 1, 0, 1, raws[i], raws[i + 1]))
        result = rank_abundance(Transcript(header={}, records=records))
        assert result.table == (("a", 6), ("b", 3), ("c", 3))
        assert result.table[1][0] == "b"  # before c

    def test_truncates_to_k(self, fixture_transcript):
        result = rank_abundance(fixture_transcript, k=2)
        assert len(result.table) == 2
        full = rank_abundance(fixture_transcript, k=10)
        assert result.entropy == full.entropy  # entropy over the full distribution


class TestMetricSeries:
    def test_constant_run_entropy_series(self):
        records = [make_record(t, 0, 1, "#x", "#x") for t in (1, 2, 3)]
        series = metric_series(Transcript(header={}, records=records), "entropy")
        assert series.values == ((1, 0.0), (2, 0.0), (3, 0.0))

    def test_fixture_series_equal_oracle_recompute(self, fixture_transcript):
        _, raw_records = read_jsonl(FIXTURES / "fixture_transcript.jsonl")
        series = metric_series(fixture_transcript, "entropy")
        for round_index, value in series.values:
            expected = float(entropy_mp(dict(tally_round(raw_records, round_index))))
            assert value == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_dominant_share_codomain(self):
        transcript = run_simulation(make_mock_config(n=10, rounds=8, seed=3))
        series = metric_series(transcript, "dominant_share")
        assert len(series.values) == 8
        for _, value in series.values:
            assert 0.0 < value <= 1.0

    def test_perplexity_requires_model(self, fixture_transcript):
        with pytest.raises(MetricError):
            metric_series(fixture_transcript, "perplexity")

    def test_error_annotated_with_round(self):
        records = [make_record(1, 0, 1, "#ok", "#ok"), make_record(2, 0, 1, "#!!!", "#???")]
        transcript = Transcript(header={}, records=records)
        model = build_unigram_model(["#ok"])
        # round 2 hashtags normalize to nothing: no usable tokens
        with pytest.raises(MetricError) as err:
            metric_series(transcript, "perplexity", model=model)
        assert "round 2" in str(err.value)

    def test_rounds_strictly_increasing(self, fixture_transcript):
        series = metric_series(fixture_transcript, "entropy")
        rounds = [r for r, _ in series.values]
        assert rounds == sorted(set(rounds))


def test_metrics_pure_function_of_file(tmp_path):
    config = make_mock_config(n=10, rounds=5, seed=17)
    path = tmp_path / "t.jsonl"
    in_memory = run_simulation(config, out_path=path)
    from_disk = read_transcript(path)
    assert metric_series(in_memory, "entropy") == metric_series(from_disk, "entropy")
    assert metric_series(in_memory, "dominant_share") == metric_series(from_disk, "dominant_share")
    assert rank_abundance(in_memory) == rank_abundance(from_disk)


def test_round_responses_raw_form(fixture_transcript):
    raw = round_responses(fixture_transcript, 1, form="raw")
    assert raw == ["#storm", "#Storm!", "#storm", "#storm"]
