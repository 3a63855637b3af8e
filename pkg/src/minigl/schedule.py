"""Match-Reorder batch scheduling.

A window of sampled batches is reordered greedily so that each successor
shares as many unique nodes as possible with its predecessor; per-transition
overlap/load sets then drive the host-to-device traffic accounting. Windows
are independent: the first batch of every window loads its full node set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .sampler import SubgraphBatch

__all__ = [
    "MatchMatrix",
    "Transition",
    "BatchSchedule",
    "match_degree",
    "build_match_matrix",
    "greedy_reorder",
    "compute_transition",
    "schedule_window",
    "match_stats",
]


@dataclass
class MatchMatrix:
    """Pairwise match degrees of a batch window; symmetric, zero diagonal."""

    n: int
    m: np.ndarray


@dataclass
class Transition:
    """Node sets for one consecutive batch pair: reused vs freshly loaded."""

    overlap_ids: np.ndarray
    load_ids: np.ndarray


@dataclass
class BatchSchedule:
    """Execution order for one window plus per-transition load accounting.

    ``batch_nodes`` holds each executed batch's unique node set (in execution
    order) so IO simulators can replay the window without the batches.
    """

    order: list[int]
    transitions: list[Transition]
    window_traffic_bytes: int
    batch_nodes: list[np.ndarray]
    feature_dim: int


def _unique_ids(batch_or_ids) -> np.ndarray:
    if isinstance(batch_or_ids, SubgraphBatch):
        return batch_or_ids.unique_nodes
    return np.unique(np.asarray(batch_or_ids, dtype=np.uint64))


def match_degree(a, b) -> float:
    """Overlap ratio |a ∩ b| / min(|a|, |b|) of two node-ID sets."""
    a = _unique_ids(a)
    b = _unique_ids(b)
    if a.size == 0 or b.size == 0:
        raise ValidationError("match degree is undefined for empty node sets")
    overlap = np.intersect1d(a, b, assume_unique=True)
    return len(overlap) / min(len(a), len(b))


def build_match_matrix(batches) -> MatchMatrix:
    """All-pairs match degrees; the diagonal is forced to zero so the greedy
    argmax can never re-select the current batch."""
    n = len(batches)
    if n < 2:
        raise ValidationError("need at least two batches for a match matrix")
    ids = [_unique_ids(b) for b in batches]
    m = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = match_degree(ids[i], ids[j])
    return MatchMatrix(n=n, m=m)


def greedy_reorder(matrix: MatchMatrix) -> list[int]:
    """Greedy chain order: keep batch 0 first, then repeatedly append the
    unused batch with the highest match degree to the last appended one.

    Ties (and the all-zero case) resolve to the lowest batch index.
    """
    n = matrix.n
    if n < 1:
        raise ValidationError("empty match matrix")
    order = [0]
    used = np.zeros(n, dtype=bool)
    used[0] = True
    z = 0
    for _ in range(n - 1):
        row = np.where(used, -1.0, matrix.m[z])
        h = int(np.argmax(row))  # first maximum -> lowest index on ties
        if row[h] <= 0.0:
            h = int(np.flatnonzero(~used)[0])
        order.append(h)
        used[h] = True
        z = h
    return order


def compute_transition(prev, nxt) -> tuple[np.ndarray, np.ndarray]:
    """Split the next batch's nodes into reused overlap and fresh loads."""
    prev_ids = _unique_ids(prev)
    next_ids = _unique_ids(nxt)
    overlap = np.intersect1d(prev_ids, next_ids, assume_unique=True)
    load = np.setdiff1d(next_ids, overlap, assume_unique=True)
    return overlap, load


def schedule_window(batches, enable_reorder: bool, feature_dim: int) -> BatchSchedule:
    """Order a window and account its host-to-device traffic.

    The first batch loads every unique node; each later batch loads only its
    transition load set. One loaded node costs ``4 * feature_dim`` bytes.
    """
    n = len(batches)
    if n < 1:
        raise ValidationError("window must contain at least one batch")
    if feature_dim < 1:
        raise ValidationError("feature_dim must be >= 1")
    if enable_reorder and n >= 2:
        order = greedy_reorder(build_match_matrix(batches))
    else:
        order = list(range(n))

    executed = [batches[i] for i in order]
    batch_nodes = [_unique_ids(b) for b in executed]
    transitions = []
    loaded_nodes = len(batch_nodes[0])
    for prev, nxt in zip(batch_nodes, batch_nodes[1:]):
        overlap, load = compute_transition(prev, nxt)
        transitions.append(Transition(overlap_ids=overlap, load_ids=load))
        loaded_nodes += len(load)
    return BatchSchedule(
        order=order,
        transitions=transitions,
        window_traffic_bytes=4 * feature_dim * loaded_nodes,
        batch_nodes=batch_nodes,
        feature_dim=feature_dim,
    )


def match_stats(batches) -> dict:
    """Window-level summary: mean off-diagonal match degree and its spread."""
    matrix = build_match_matrix(batches)
    iu = np.triu_indices(matrix.n, k=1)
    pairs = matrix.m[iu]
    return {
        "avg_match_degree": float(pairs.mean()),
        "delta_match": float(pairs.max() - pairs.min()),
        "num_batches": matrix.n,
    }
