"""Mini-batch subgraph sampling in global-ID space.

Two samplers are provided: k-hop uniform neighbor sampling (one fanout per
hop, hop 0 expanding the seeds) and fixed-length random walks. Both are
deterministic given their seed; randomness comes from a counter-based Philox
generator so batches can be drawn concurrently by independent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graph import Graph

__all__ = [
    "Fanouts",
    "SubgraphBatch",
    "sample_khop",
    "sample_random_walk",
    "make_epoch_batches",
]


@dataclass
class Fanouts:
    """Per-hop neighbor sample counts; ``counts[0]`` expands the seeds."""

    counts: tuple[int, ...]

    def __init__(self, counts):
        object.__setattr__(self, "counts", tuple(int(c) for c in counts))
        if not self.counts:
            raise ValidationError("fanouts must not be empty")
        if any(c < 1 for c in self.counts):
            raise ValidationError("every fanout must be >= 1")

    def __len__(self):
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)


@dataclass
class SubgraphBatch:
    """One sampled mini-batch: per-hop global edge lists plus the unique node set.

    ``layers[l]`` is a ``(targets, sources, weights)`` triple of parallel
    arrays; targets of layer 0 are the seeds, targets of layer ``l`` come from
    the sources of layer ``l-1``. ``local_layers``/``num_local`` stay empty
    until an ID-map translation fills them.
    """

    seeds: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    unique_nodes: np.ndarray
    local_layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)
    num_local: int = 0

    @property
    def num_unique(self) -> int:
        return len(self.unique_nodes)

    def num_sampled_edges(self) -> int:
        return sum(len(t) for t, _, _ in self.layers)


def _validate_seeds(g: Graph, seeds) -> np.ndarray:
    seeds = np.asarray(seeds, dtype=np.uint64)
    if seeds.size == 0:
        raise ValidationError("seeds must not be empty")
    if seeds.max() >= np.uint64(g.num_nodes):
        raise ValidationError("seed id out of range")
    return seeds


def _cumsum0(counts):
    out = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=out[1:])
    return out


def _sample_frontier(g: Graph, frontier: np.ndarray, fanout: int, rng):
    """Uniform without-replacement sample of up to ``fanout`` out-edges per node.

    Draws one random key per candidate edge and keeps the ``fanout`` smallest
    keys within each node's segment, so nodes at or below the fanout keep all
    their edges.
    """
    offsets = g.row_offsets.astype(np.int64)
    starts = offsets[frontier.astype(np.int64)]
    deg = offsets[frontier.astype(np.int64) + 1] - starts
    total = int(deg.sum())
    if total == 0:
        empty = np.empty(0, dtype=np.uint64)
        return empty, empty, np.empty(0, dtype=np.float32)

    seg = np.repeat(np.arange(len(frontier), dtype=np.int64), deg)
    within = np.arange(total, dtype=np.int64) - np.repeat(_cumsum0(deg)[:-1], deg)
    edge_base = np.repeat(starts, deg) + within

    keys = rng.random(total)
    order = np.lexsort((keys, seg))
    rank = within  # after the segment-major sort, ranks are again 0..deg-1 per segment
    chosen = order[rank < fanout]

    edge_idx = edge_base[chosen]
    targets = frontier[seg[chosen]]
    sources = g.col_indices[edge_idx]
    if g.edge_weights is not None:
        weights = g.edge_weights[edge_idx]
    else:
        weights = np.ones(len(edge_idx), dtype=np.float32)
    return targets, sources, weights


def sample_khop(g: Graph, seeds, fanouts: Fanouts, seed: int) -> SubgraphBatch:
    """K-hop uniform neighbor sampling; hop ``l`` uses ``fanouts.counts[l]``."""
    seeds = _validate_seeds(g, seeds)
    if not isinstance(fanouts, Fanouts):
        fanouts = Fanouts(fanouts)
    rng = np.random.Generator(np.random.Philox(seed))

    layers = []
    referenced = [seeds]
    frontier = np.unique(seeds)
    for fanout in fanouts:
        targets, sources, weights = _sample_frontier(g, frontier, fanout, rng)
        layers.append((targets, sources, weights))
        referenced.append(targets)
        referenced.append(sources)
        frontier = np.unique(sources)
        if frontier.size == 0:
            frontier = np.empty(0, dtype=np.uint64)
    unique_nodes = np.unique(np.concatenate(referenced))
    return SubgraphBatch(seeds=seeds, layers=layers, unique_nodes=unique_nodes)


def sample_random_walk(g: Graph, seeds, length: int, seed: int) -> SubgraphBatch:
    """One uniform random walk of ``length`` steps per seed; sinks stop early."""
    seeds = _validate_seeds(g, seeds)
    if length < 1:
        raise ValidationError("walk length must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    offsets = g.row_offsets.astype(np.int64)

    cur = seeds.copy()
    alive = np.ones(len(seeds), dtype=bool)
    t_parts, s_parts, w_parts = [], [], []
    for _ in range(length):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        pos = cur[idx].astype(np.int64)
        deg = offsets[pos + 1] - offsets[pos]
        can_step = deg > 0
        alive[idx[~can_step]] = False
        idx = idx[can_step]
        if idx.size == 0:
            break
        pos = pos[can_step]
        deg = deg[can_step]
        pick = (rng.random(len(idx)) * deg).astype(np.int64)
        edge_idx = offsets[pos] + pick
        nxt = g.col_indices[edge_idx]
        t_parts.append(cur[idx])
        s_parts.append(nxt)
        if g.edge_weights is not None:
            w_parts.append(g.edge_weights[edge_idx])
        else:
            w_parts.append(np.ones(len(idx), dtype=np.float32))
        cur[idx] = nxt

    if t_parts:
        targets = np.concatenate(t_parts)
        sources = np.concatenate(s_parts)
        weights = np.concatenate(w_parts)
    else:
        targets = np.empty(0, dtype=np.uint64)
        sources = np.empty(0, dtype=np.uint64)
        weights = np.empty(0, dtype=np.float32)
    unique_nodes = np.unique(np.concatenate([seeds, targets, sources]))
    return SubgraphBatch(seeds=seeds, layers=[(targets, sources, weights)], unique_nodes=unique_nodes)


def make_epoch_batches(g: Graph, train_ids, batch_size: int, shuffle_seed: int):
    """Seeded shuffle of the training IDs, split into batch_size-sized seed lists."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    train_ids = np.asarray(train_ids, dtype=np.uint64)
    if train_ids.size and train_ids.max() >= np.uint64(g.num_nodes):
        raise ValidationError("train id out of range")
    rng = np.random.Generator(np.random.Philox(shuffle_seed))
    perm = rng.permutation(train_ids)
    return [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]
