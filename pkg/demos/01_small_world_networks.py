"""Small-world interaction graphs
================================

Generate Watts-Strogatz networks across the rewiring spectrum and look at
the structural quantities that matter for the matching game: edge count
(invariant), degree spread, clustering, and what one round's random
pairing looks like.
"""

from collections import Counter

from hashnet import TopologySpec, generate_network, pair_round
from hashnet.rng import pairing_rng


def clustering(net) -> float:
    total = 0.0
    for node in range(net.n):
        neighbors = net.adjacency[node]
        k = len(neighbors)
        if k < 2:
            continue
        links = sum(
            1
            for i in range(k)
            for j in range(i + 1, k)
            if (min(neighbors[i], neighbors[j]), max(neighbors[i], neighbors[j])) in net.edges
        )
        total += 2.0 * links / (k * (k - 1))
    return total / net.n


print("rewiring sweep on n=20, k=4 (edge count must stay 40):")
print(f"{'p':>5}  {'edges':>5}  {'min deg':>7}  {'max deg':>7}  {'clustering':>10}")
for p in (0.0, 0.1, 0.3, 1.0):
    net = generate_network(TopologySpec(n=20, k=4, p=p, seed=42))
    degrees = [net.degree(i) for i in range(net.n)]
    print(f"{p:>5.1f}  {len(net.edges):>5}  {min(degrees):>7}  {max(degrees):>7}  {clustering(net):>10.3f}")

# The p=0 lattice is fully deterministic: every node sees exactly its two
# nearest neighbors on each side of the ring.
lattice = generate_network(TopologySpec(n=12, k=4, p=0.0, seed=0))
print("\nring lattice neighbors of node 0:", lattice.adjacency[0])

# One round of random pairing: a maximal matching over the edges. Unmatched
# agents simply sit the round out.
net = generate_network(TopologySpec(n=20, k=4, p=0.1, seed=7))
for round_index in (1, 2, 3):
    pairing = pair_round(net, round_index, pairing_rng(7, round_index))
    print(f"\nround {round_index}: {len(pairing.pairs)} pairs, unmatched {list(pairing.unmatched)}")
    print("  pairs:", " ".join(f"{a}-{b}" for a, b in pairing.pairs))

# Pairings are uniform-greedy: over many draws every edge gets its turn.
counts = Counter()
for draw in range(2000):
    counts.update(pair_round(net, 1, pairing_rng(draw, 1)).pairs)
common = counts.most_common(3)
print("\nmost frequently drawn pairs over 2000 draws:", common)
