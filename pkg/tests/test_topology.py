"""Watts-Strogatz generation and random maximal matchings."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hashnet import ConfigError, Network, TopologySpec, generate_network, pair_round
from hashnet.rng import pairing_rng

from oracles import average_clustering, check_pairing


def lattice_edges(n: int, k: int) -> set[tuple[int, int]]:
    edges = set()
    for i in range(n):
        for j in range(1, k // 2 + 1):
            b = (i + j) % n
            edges.add((min(i, b), max(i, b)))
    return edges


class TestSpecValidation:
    def test_odd_k_names_field(self):
        with pytest.raises(ConfigError) as err:
            TopologySpec(n=12, k=3, p=0.1, seed=1).validate()
        assert err.value.field == "topology.k"

    def test_k_not_below_n(self):
        with pytest.raises(ConfigError) as err:
            TopologySpec(n=4, k=4, p=0.1, seed=1).validate()
        assert err.value.field == "topology.k"

    def test_p_out_of_range(self):
        with pytest.raises(ConfigError) as err:
            TopologySpec(n=12, k=4, p=1.5, seed=1).validate()
        assert err.value.field == "topology.p"

    def test_nonpositive_n(self):
        with pytest.raises(ConfigError) as err:
            TopologySpec(n=0, k=2, p=0.0, seed=1).validate()
        assert err.value.field == "topology.n"

    def test_unresolved_seed_rejected_at_generation(self):
        with pytest.raises(ConfigError) as err:
            generate_network(TopologySpec(n=12, k=4, p=0.0))
        assert err.value.field == "topology.seed"


class TestGenerateNetwork:
    def test_p_zero_is_exact_ring_lattice(self):
        net = generate_network(TopologySpec(n=12, k=4, p=0.0, seed=981))
        assert len(net.edges) == 24
        assert all(net.degree(i) == 4 for i in range(12))
        assert set(net.edges) == lattice_edges(12, 4)

    def test_p_one_conserves_edges(self):
        net = generate_network(TopologySpec(n=20, k=4, p=1.0, seed=7))
        assert len(net.edges) == 40
        for a, b in net.edges:
            assert a != b
            assert 0 <= a < b < 20

    def test_lattice_clustering_matches_bruteforce(self):
        # analytic lattice value 3(k-2)/(4(k-1)) = 0.5 for k=4
        net = generate_network(TopologySpec(n=12, k=4, p=0.0, seed=3))
        measured = average_clustering(12, set(net.edges))
        assert measured == pytest.approx(0.5, abs=1e-12)

    def test_deterministic_for_fixed_spec(self):
        spec = TopologySpec(n=30, k=6, p=0.3, seed=42)
        assert generate_network(spec).edges == generate_network(spec).edges

    def test_seed_changes_realization(self):
        a = generate_network(TopologySpec(n=30, k=6, p=0.5, seed=1))
        b = generate_network(TopologySpec(n=30, k=6, p=0.5, seed=2))
        assert a.edges != b.edges

    @given(
        n=st.integers(min_value=4, max_value=40),
        half_k=st.integers(min_value=1, max_value=4),
        p=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        seed=st.integers(min_value=0, max_value=2**32),
    )
    @settings(max_examples=60, deadline=None)
    def test_edge_count_invariant(self, n, half_k, p, seed):
        k = 2 * half_k
        if k >= n:
            return
        net = generate_network(TopologySpec(n=n, k=k, p=p, seed=seed))
        assert len(net.edges) == n * k // 2
        assert sum(net.degree(i) for i in range(n)) == n * k


class TestPairRound:
    def test_complete_graph_perfect_matching(self):
        pairing = pair_round(Network.complete(4), 1, pairing_rng(0, 1))
        assert len(pairing.pairs) == 2
        assert pairing.unmatched == ()

    def test_path_graph_forced_shape(self):
        net = Network.from_edges(3, [(0, 1), (1, 2)])
        for seed in range(20):
            pairing = pair_round(net, 1, pairing_rng(seed, 1))
            assert len(pairing.pairs) == 1
            assert len(pairing.unmatched) == 1
            assert pairing.pairs[0] in net.edges

    def test_rejects_round_zero(self):
        with pytest.raises(ValueError):
            pair_round(Network.complete(4), 0, pairing_rng(0, 1))

    def test_deterministic_for_fixed_rng_state(self):
        net = generate_network(TopologySpec(n=20, k=4, p=0.1, seed=5))
        a = pair_round(net, 3, pairing_rng(9, 3))
        b = pair_round(net, 3, pairing_rng(9, 3))
        assert a == b

    def test_thousand_draws_all_valid(self):
        # 1000 draws on one graph, exhaustively verified against the edge set
        net = generate_network(TopologySpec(n=20, k=4, p=0.1, seed=3))
        edges = set(net.edges)
        for draw in range(1000):
            pairing = pair_round(net, 1, np.random.default_rng(draw))
            check_pairing(20, edges, pairing.pairs, pairing.unmatched)

    @given(
        n=st.integers(min_value=4, max_value=30),
        half_k=st.integers(min_value=1, max_value=3),
        p=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_pairing_invariants_property(self, n, half_k, p, seed):
        k = 2 * half_k
        if k >= n:
            return
        net = generate_network(TopologySpec(n=n, k=k, p=p, seed=seed))
        pairing = pair_round(net, 1, np.random.default_rng(seed))
        check_pairing(n, set(net.edges), pairing.pairs, pairing.unmatched)
