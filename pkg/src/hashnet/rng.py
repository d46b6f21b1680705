"""Seed-substream derivation.

Every random draw in a run descends from one root seed through numpy
``SeedSequence`` spawn keys, with one namespace per concern:

    (0,)                 network construction seed
    (1, round)           partner pairing for a round
    (2, round, agent)    per-agent backend draws within a round

Keeping the namespaces separate means adding rounds never perturbs the
network, and per-agent draws are independent of dispatch order, which is
what makes parallel and serial runs byte-identical.
"""

import numpy as np

_TOPOLOGY_STREAM = 0
_PAIRING_STREAM = 1
_AGENT_STREAM = 2


def topology_seed(root_seed: int) -> int:
    """Derive the integer seed a :class:`~hashnet.topology.TopologySpec` stores."""
    seq = np.random.SeedSequence(root_seed, spawn_key=(_TOPOLOGY_STREAM,))
    return int(seq.generate_state(1, np.uint64)[0])


def pairing_rng(root_seed: int, round_index: int) -> np.random.Generator:
    """Generator driving the partner matching for one round."""
    seq = np.random.SeedSequence(root_seed, spawn_key=(_PAIRING_STREAM, round_index))
    return np.random.default_rng(seq)


def agent_rng(root_seed: int, round_index: int, agent_id: int) -> np.random.Generator:
    """Generator owned by one agent's backend call within one round."""
    seq = np.random.SeedSequence(root_seed, spawn_key=(_AGENT_STREAM, round_index, agent_id))
    return np.random.default_rng(seq)
