"""Lossy communication graphs and average consensus."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CommGraph:
    m: int
    edges: frozenset  # of (i, j) with i < j

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge ({i}, {j}) outside 0..{self.m - 1}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def degrees(self):
        d = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    @classmethod
    def complete(cls, m):
        return cls(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))

    @classmethod
    def empty(cls, m):
        return cls(m, frozenset())


def sample_graph(m, alpha, rng):
    """Keep each of the m(m-1)/2 links independently with probability ``1 - alpha``.

    One uniform draw per potential link is consumed regardless of ``alpha``, so
    graphs drawn from the same stream at a higher dropout rate are subgraphs of
    those at a lower rate.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    u = rng.random(len(pairs))
    return CommGraph(m, frozenset(p for p, ui in zip(pairs, u) if ui < 1.0 - alpha))


def sample_graphs(m, alpha, count, rng):
    return [sample_graph(m, alpha, rng) for _ in range(count)]


def consensus_weights(graph):
    m = graph.m
    W = np.zeros((m, m))
    for i, j in graph.edges:
        W[i, j] = W[j, i] = 1.0 / m
    W[np.diag_indices(m)] = 1.0 - graph.degrees() / m
    return W


def consensus_step(payload, W):
    """One synchronous round: node ``i`` takes ``sum_j W[i, j] * payload[j]``.

    ``payload`` has the node index on its first axis; the remaining axes are
    arbitrary but shared by all nodes.
    """
    payload = np.asarray(payload, dtype=float)
    if payload.ndim == 0 or payload.shape[0] != W.shape[0]:
        raise ValueError(f"payload leading dimension {payload.shape[:1]} does not match {W.shape[0]} nodes")
    flat = payload.reshape(payload.shape[0], -1)
    return (W @ flat).reshape(payload.shape)


def run_consensus(payload, graphs, weights=None):
    if weights is None:
        weights = [consensus_weights(g) for g in graphs]
    out = np.asarray(payload, dtype=float)
    for W in weights:
        out = consensus_step(out, W)
    return out
