"""Immutable CSR graph storage, feature matrices, text/binary IO, and synthetic generators.

Node IDs are dense uint64 in ``0..num_nodes-1``; the all-ones value is reserved
as a hash-table sentinel, so valid IDs stay below ``2**64 - 1``. Both the
forward adjacency and its exact transpose are built eagerly at construction.
Edges are kept in canonical ``(src, dst)`` order, which makes the transpose of
the transpose bit-identical to the original.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParseError, ValidationError

MAGIC = b"MGL1"

_U64 = np.dtype("<u8")
_F32 = np.dtype("<f4")


@dataclass(eq=False)
class Graph:
    """Compressed adjacency (forward and transposed) with optional edge weights."""

    num_nodes: int
    num_edges: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    t_row_offsets: np.ndarray
    t_col_indices: np.ndarray
    edge_weights: np.ndarray | None = None
    t_edge_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.num_nodes <= 0:
            raise ValidationError("graph must have at least one node")
        if len(self.row_offsets) != self.num_nodes + 1:
            raise ValidationError("row_offsets length must be num_nodes + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.num_edges:
            raise ValidationError("row_offsets must span [0, num_edges]")
        if np.any(np.diff(self.row_offsets.astype(np.int64)) < 0):
            raise ValidationError("row_offsets must be non-decreasing")
        if self.num_edges and self.col_indices.max() >= np.uint64(self.num_nodes):
            raise ValidationError("col_indices entry out of range")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        if (self.num_nodes, self.num_edges) != (other.num_nodes, other.num_edges):
            return False
        arrays = ("row_offsets", "col_indices", "t_row_offsets", "t_col_indices")
        if not all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays):
            return False
        if (self.edge_weights is None) != (other.edge_weights is None):
            return False
        if self.edge_weights is not None:
            return np.array_equal(self.edge_weights, other.edge_weights) and np.array_equal(
                self.t_edge_weights, other.t_edge_weights
            )
        return True

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets.astype(np.int64))

    def in_degrees(self) -> np.ndarray:
        return np.diff(self.t_row_offsets.astype(np.int64))

    def out_neighbors(self, u: int) -> np.ndarray:
        lo, hi = int(self.row_offsets[u]), int(self.row_offsets[u + 1])
        return self.col_indices[lo:hi]

    def transpose(self) -> "Graph":
        """The reversed-edge graph; cheap because both directions are stored."""
        return Graph(
            num_nodes=self.num_nodes,
            num_edges=self.num_edges,
            row_offsets=self.t_row_offsets,
            col_indices=self.t_col_indices,
            t_row_offsets=self.row_offsets,
            t_col_indices=self.col_indices,
            edge_weights=self.t_edge_weights,
            t_edge_weights=self.edge_weights,
        )


@dataclass(eq=False)
class FeatureMatrix:
    """Dense row-major float32 node features."""

    num_nodes: int
    dim: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.shape != (self.num_nodes, self.dim):
            raise ValidationError(
                f"feature data shape {self.data.shape} != ({self.num_nodes}, {self.dim})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("feature data contains non-finite values")

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.dim == other.dim
            and np.array_equal(self.data, other.data)
        )


@dataclass
class GraphGenSpec:
    """Recipe for a synthetic benchmark graph."""

    model: str
    num_nodes: int
    avg_degree: float | None = None
    exponent: float | None = None
    seed: int = 0

    def validate(self):
        if self.model not in ("erdos-renyi", "power-law"):
            raise ValidationError(f"unknown graph model {self.model!r}")
        if self.num_nodes <= 0:
            raise ValidationError("num_nodes must be positive")
        if self.model == "erdos-renyi":
            if self.avg_degree is None or self.avg_degree < 0:
                raise ValidationError("erdos-renyi requires avg_degree >= 0")
        else:
            if (self.avg_degree is None) == (self.exponent is None):
                raise ValidationError("power-law requires exactly one of avg_degree / exponent")
            if self.avg_degree is not None and self.avg_degree <= 0:
                raise ValidationError("power-law avg_degree must be positive")
            if self.exponent is not None and self.exponent <= 1.0:
                raise ValidationError("power-law exponent must exceed 1")


def _csr_from_sorted(num_nodes, src, dst, weights):
    counts = np.bincount(src.astype(np.int64), minlength=num_nodes)
    offsets = np.zeros(num_nodes + 1, dtype=np.uint64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, dst.astype(np.uint64), weights


def from_edges(num_nodes: int, src, dst, weights=None) -> Graph:
    """Build a Graph from parallel edge arrays; duplicates and self-loops kept."""
    src = np.asarray(src, dtype=np.uint64)
    dst = np.asarray(dst, dtype=np.uint64)
    if src.shape != dst.shape:
        raise ValidationError("src/dst length mismatch")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float32)
        if weights.shape != src.shape:
            raise ValidationError("weights length mismatch")
    if src.size and max(int(src.max()), int(dst.max())) >= num_nodes:
        raise ValidationError("edge endpoint out of range")

    # canonical order: lexicographic (src, dst), stable for duplicate edges
    order = np.lexsort((dst, src))
    src_s, dst_s = src[order], dst[order]
    w_s = weights[order] if weights is not None else None
    offsets, cols, w_f = _csr_from_sorted(num_nodes, src_s, dst_s, w_s)

    t_order = np.lexsort((src_s, dst_s))
    t_offsets, t_cols, t_w = _csr_from_sorted(
        num_nodes, dst_s[t_order], src_s[t_order], w_s[t_order] if w_s is not None else None
    )
    return Graph(
        num_nodes=num_nodes,
        num_edges=len(src),
        row_offsets=offsets,
        col_indices=cols,
        t_row_offsets=t_offsets,
        t_col_indices=t_cols,
        edge_weights=w_f,
        t_edge_weights=t_w,
    )


def load_edge_list(path, num_nodes: int) -> Graph:
    """Parse a whitespace-separated ``u v [w]`` edge list; '#' lines are comments."""
    src, dst, weights = [], [], []
    saw_weight = False
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) not in (2, 3):
                raise ParseError(f"expected 'u v [w]', got {text!r}", line_no)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer node id in {text!r}", line_no) from None
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise ParseError(f"bad weight in {text!r}", line_no) from None
                saw_weight = True
            else:
                w = 1.0
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValidationError(
                    f"line {line_no}: edge ({u}, {v}) out of range for {num_nodes} nodes"
                )
            src.append(u)
            dst.append(v)
            weights.append(w)
    return from_edges(
        num_nodes,
        np.array(src, dtype=np.uint64),
        np.array(dst, dtype=np.uint64),
        np.array(weights, dtype=np.float32) if saw_weight else None,
    )


def generate(spec: GraphGenSpec) -> Graph:
    """Deterministically generate a synthetic graph from a GraphGenSpec."""
    spec.validate()
    rng = np.random.Generator(np.random.Philox(spec.seed))
    if spec.model == "erdos-renyi":
        return _gen_erdos_renyi(spec.num_nodes, spec.avg_degree, rng)
    if spec.avg_degree is not None:
        return _gen_preferential(spec.num_nodes, spec.avg_degree, rng)
    return _gen_zipf(spec.num_nodes, spec.exponent, rng)


def _gen_erdos_renyi(n, avg_degree, rng):
    # per-node binomial out-degree with uniform targets; self-loops excluded,
    # exact duplicate pairs dropped (negligible vs the binomial spread)
    if n == 1 or avg_degree == 0:
        return from_edges(n, np.empty(0, np.uint64), np.empty(0, np.uint64))
    p = min(1.0, avg_degree / (n - 1))
    counts = rng.binomial(n - 1, p, size=n)
    src = np.repeat(np.arange(n, dtype=np.int64), counts)
    raw = rng.integers(0, n - 1, size=counts.sum(), dtype=np.int64)
    dst = raw + (raw >= src)
    keep = np.unique(src * n + dst)
    return from_edges(n, (keep // n).astype(np.uint64), (keep % n).astype(np.uint64))


def _gen_preferential(n, avg_degree, rng):
    # preferential attachment; every undirected edge stored in both directions
    m = max(1, round(avg_degree / 2))
    if n <= m:
        raise ValidationError("num_nodes must exceed avg_degree/2 for power-law model")
    endpoints = np.empty(4 * m * n, dtype=np.int64)
    fill = 0
    srcs, dsts = [], []

    def add(u, targets):
        nonlocal fill
        k = len(targets)
        srcs.append(np.full(k, u, dtype=np.int64))
        dsts.append(targets)
        endpoints[fill : fill + k] = u
        endpoints[fill + k : fill + 2 * k] = targets
        fill += 2 * k

    add(0, np.arange(1, m + 1, dtype=np.int64))  # star seed over the first m+1 nodes
    for i in range(m + 1, n):
        picks = endpoints[rng.integers(0, fill, size=m)]
        add(i, np.unique(picks))
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    both_src = np.concatenate([src, dst]).astype(np.uint64)
    both_dst = np.concatenate([dst, src]).astype(np.uint64)
    return from_edges(n, both_src, both_dst)


def _gen_zipf(n, exponent, rng):
    # configuration-style: zipf out-degrees (capped), uniform distinct targets
    deg = np.minimum(rng.zipf(exponent, size=n), n - 1).astype(np.int64)
    src = np.repeat(np.arange(n, dtype=np.int64), deg)
    raw = rng.integers(0, n - 1, size=deg.sum(), dtype=np.int64)
    dst = raw + (raw >= src)
    keep = np.unique(src * n + dst)
    return from_edges(n, (keep // n).astype(np.uint64), (keep % n).astype(np.uint64))


def _write_array(fh, arr, dtype):
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def save_binary(g: Graph, path) -> None:
    """Serialize a Graph: magic, u64 header, flag bytes, then the raw arrays."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([g.num_nodes, g.num_edges], dtype=_U64).tobytes())
        has_w = g.edge_weights is not None
        fh.write(bytes([1 if has_w else 0, 1]))  # weights flag, transpose flag
        _write_array(fh, g.row_offsets, _U64)
        _write_array(fh, g.col_indices, _U64)
        if has_w:
            _write_array(fh, g.edge_weights, _F32)
        _write_array(fh, g.t_row_offsets, _U64)
        _write_array(fh, g.t_col_indices, _U64)
        if has_w:
            _write_array(fh, g.t_edge_weights, _F32)


def _read_array(fh, count, dtype):
    nbytes = count * dtype.itemsize
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise FormatError(f"truncated file: wanted {nbytes} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=dtype).copy()


def load_binary(path) -> Graph:
    """Inverse of save_binary; bit-exact round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        header = _read_array(fh, 2, _U64)
        num_nodes, num_edges = int(header[0]), int(header[1])
        flags = fh.read(2)
        if len(flags) != 2:
            raise FormatError("truncated file: missing flag bytes")
        has_w, has_t = flags[0] != 0, flags[1] != 0
        row_offsets = _read_array(fh, num_nodes + 1, _U64)
        col_indices = _read_array(fh, num_edges, _U64)
        weights = _read_array(fh, num_edges, _F32) if has_w else None
        if has_t:
            t_row_offsets = _read_array(fh, num_nodes + 1, _U64)
            t_col_indices = _read_array(fh, num_edges, _U64)
            t_weights = _read_array(fh, num_edges, _F32) if has_w else None
            return Graph(
                num_nodes=num_nodes,
                num_edges=num_edges,
                row_offsets=row_offsets,
                col_indices=col_indices,
                t_row_offsets=t_row_offsets,
                t_col_indices=t_col_indices,
                edge_weights=weights,
                t_edge_weights=t_weights,
            )
        # rebuild transpose from the forward arrays
        src = np.repeat(
            np.arange(num_nodes, dtype=np.uint64), np.diff(row_offsets.astype(np.int64))
        )
        return from_edges(num_nodes, src, col_indices, weights)
