"""Tiled aggregation engine with an explicit scratch buffer.

Aggregation runs tile by tile: each tile owns up to ``targets_per_tile``
target rows and a chunk of up to ``dims_per_tile`` feature columns, staging
the running partial sums and the tile's edge weights in a scratch buffer (the
software-managed fast-memory analog). A target's whole neighbor list lives in
one tile row-group and is accumulated in list order in float32, so results
are bit-identical for every valid tile shape and worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, ValidationError

__all__ = [
    "TileConfig",
    "AggregationPlan",
    "plan_tiles",
    "aggregate_forward",
    "aggregate_backward",
    "dense_update",
    "edges_to_csr",
    "csr_transpose",
]

MAX_TILE_CELLS = 1024  # hardware cap analog: threads per work unit


@dataclass
class TileConfig:
    """Tile shape and the scratch budget every tile must fit into."""

    targets_per_tile: int = 8
    dims_per_tile: int = 32
    scratch_limit_bytes: int = 128 * 1024

    def validate(self):
        if self.targets_per_tile < 1 or self.dims_per_tile < 1:
            raise ConfigError("tile dimensions must be >= 1")
        cells = self.targets_per_tile * self.dims_per_tile
        if cells >= MAX_TILE_CELLS:
            raise ConfigError(
                f"tile of {self.targets_per_tile}x{self.dims_per_tile} = {cells} cells "
                f"reaches the {MAX_TILE_CELLS}-thread cap; shrink the tile"
            )
        if self.scratch_limit_bytes < 1:
            raise ConfigError("scratch_limit_bytes must be positive")


@dataclass
class AggregationPlan:
    """Tile decomposition of one aggregation: row groups x dim chunks."""

    num_targets: int
    dim: int
    config: TileConfig
    row_groups: list[tuple[int, int, int, int]]  # (t0, t1, max_fanout, scratch_bytes)
    dim_chunks: list[tuple[int, int]]
    max_fanout: int

    @property
    def tiles(self) -> list[tuple[int, int, int, int]]:
        return [(t0, t1, c0, c1) for t0, t1, _, _ in self.row_groups for c0, c1 in self.dim_chunks]

    @property
    def num_tiles(self) -> int:
        return len(self.row_groups) * len(self.dim_chunks)


def plan_tiles(num_targets: int, dim: int, fanouts, cfg: TileConfig) -> AggregationPlan:
    """Partition (targets x dims) into tiles and check every scratch budget.

    Each row group of ``targets_per_tile`` targets needs
    ``4 * X * Y + 4 * X * max_fanout`` scratch bytes (partial sums plus the
    staged neighbor weights).
    """
    cfg.validate()
    if num_targets < 0 or dim < 1:
        raise ValidationError("need num_targets >= 0 and dim >= 1")
    fanouts = np.asarray(fanouts, dtype=np.int64)
    if len(fanouts) != num_targets:
        raise ValidationError("fanouts must list one neighbor count per target")

    x, y = cfg.targets_per_tile, cfg.dims_per_tile
    sums_bytes = 4 * x * y
    row_groups = []
    for t0 in range(0, max(num_targets, 0), x):
        t1 = min(t0 + x, num_targets)
        max_fanout = int(fanouts[t0:t1].max()) if t1 > t0 else 0
        scratch = sums_bytes + 4 * x * max_fanout
        if scratch > cfg.scratch_limit_bytes:
            raise ConfigError(
                f"tile for targets [{t0}, {t1}) needs {scratch} scratch bytes "
                f"(max fanout {max_fanout}) but the limit is {cfg.scratch_limit_bytes}; "
                f"reduce targets_per_tile"
            )
        row_groups.append((t0, t1, max_fanout, scratch))
    dim_chunks = [(c0, min(c0 + y, dim)) for c0 in range(0, dim, y)]
    overall = int(fanouts.max()) if num_targets else 0
    return AggregationPlan(
        num_targets=num_targets,
        dim=dim,
        config=cfg,
        row_groups=row_groups,
        dim_chunks=dim_chunks,
        max_fanout=overall,
    )


@njit(cache=True)
def _aggregate_tiles(indptr, indices, weights, feats, out, x, y, scratch_sums, scratch_w):
    nrows = indptr.shape[0] - 1
    d = feats.shape[1]
    n_groups = (nrows + x - 1) // x
    n_chunks = (d + y - 1) // y
    for g in range(n_groups):
        t0 = g * x
        t1 = min(t0 + x, nrows)
        # stage the group's edge weights once; they are re-read per dim chunk
        for t in range(t0, t1):
            row = t - t0
            base = indptr[t]
            for e in range(base, indptr[t + 1]):
                scratch_w[row, e - base] = weights[e]
        for c in range(n_chunks):
            c0 = c * y
            c1 = min(c0 + y, d)
            width = c1 - c0
            for row in range(t1 - t0):
                for col in range(width):
                    scratch_sums[row, col] = np.float32(0.0)
            for t in range(t0, t1):
                row = t - t0
                base = indptr[t]
                for e in range(base, indptr[t + 1]):
                    v = indices[e]
                    w = scratch_w[row, e - base]
                    for col in range(width):
                        scratch_sums[row, col] += w * feats[v, c0 + col]
            for t in range(t0, t1):
                row = t - t0
                for col in range(width):
                    out[t, c0 + col] = scratch_sums[row, col]


def _check_csr(indptr, indices, weights, num_sources):
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float32)
    if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
        raise ValidationError("indptr must be non-decreasing and start at 0")
    if indptr[-1] != len(indices) or len(indices) != len(weights):
        raise ValidationError("edge arrays inconsistent with indptr")
    if len(indices) and (indices.min() < 0 or indices.max() >= num_sources):
        raise ValidationError("source index out of range")
    return indptr, indices, weights


def aggregate_forward(indptr, indices, weights, src_features, cfg: TileConfig) -> np.ndarray:
    """Weighted neighbor sums per target over a batch-local CSR.

    Returns a float32 matrix with one row per CSR row; rows without neighbors
    are exactly zero. The scratch budget is checked before any compute.
    """
    src_features = np.ascontiguousarray(src_features, dtype=np.float32)
    indptr, indices, weights = _check_csr(indptr, indices, weights, len(src_features))
    num_targets = len(indptr) - 1
    dim = src_features.shape[1]
    plan = plan_tiles(num_targets, dim, np.diff(indptr), cfg)

    out = np.zeros((num_targets, dim), dtype=np.float32)
    if num_targets == 0:
        return out
    scratch_sums = np.empty((cfg.targets_per_tile, cfg.dims_per_tile), dtype=np.float32)
    scratch_w = np.empty((cfg.targets_per_tile, max(plan.max_fanout, 1)), dtype=np.float32)
    _aggregate_tiles(
        indptr, indices, weights, src_features, out,
        cfg.targets_per_tile, cfg.dims_per_tile, scratch_sums, scratch_w,
    )
    return out


def aggregate_backward(t_indptr, t_indices, t_weights, grad_out, cfg: TileConfig) -> np.ndarray:
    """Gradient gather over the transposed CSR with the forward's weights.

    The aggregation is linear, so the backward pass is the same tiled kernel
    run on reversed edges: grad flows from each target's gradient row to the
    sources that fed it.
    """
    return aggregate_forward(t_indptr, t_indices, t_weights, grad_out, cfg)


def dense_update(hidden, weight, bias=None, activation: str = "none") -> np.ndarray:
    """Per-node dense transform ``act(h @ W + b)`` in float32."""
    hidden = np.ascontiguousarray(hidden, dtype=np.float32)
    weight = np.ascontiguousarray(weight, dtype=np.float32)
    if hidden.ndim != 2 or weight.ndim != 2 or hidden.shape[1] != weight.shape[0]:
        raise ValidationError(
            f"shape mismatch: hidden {hidden.shape} @ weight {weight.shape}"
        )
    if activation not in ("relu", "none"):
        raise ValidationError(f"unknown activation {activation!r}")
    out = hidden @ weight
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=np.float32)
        if bias.shape != (weight.shape[1],):
            raise ValidationError(f"bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias
    if activation == "relu":
        np.maximum(out, 0.0, out=out)
    return out


def edges_to_csr(num_rows: int, targets, sources, weights):
    """Pack (target, source, weight) edge lists into CSR, stable per row."""
    targets = np.asarray(targets, dtype=np.int64)
    sources = np.asarray(sources, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float32)
    if len(targets) and (targets.min() < 0 or targets.max() >= num_rows):
        raise ValidationError("target index out of range")
    order = np.argsort(targets, kind="stable")
    counts = np.bincount(targets, minlength=num_rows)
    indptr = np.zeros(num_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, sources[order], weights[order]


def csr_transpose(indptr, indices, weights, num_cols: int):
    """Exact CSR transpose; weights travel with their edges."""
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float32)
    rows = np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), np.diff(indptr))
    return edges_to_csr(num_cols, indices, rows, weights)
