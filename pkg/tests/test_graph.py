import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minigl import graph
from minigl.errors import FormatError, ParseError, ValidationError


def edge_multiset(g):
    """Brute-force (u, v, w) multiset of the forward adjacency."""
    out = []
    w = g.edge_weights if g.edge_weights is not None else np.ones(g.num_edges, np.float32)
    for u in range(g.num_nodes):
        lo, hi = int(g.row_offsets[u]), int(g.row_offsets[u + 1])
        for e in range(lo, hi):
            out.append((u, int(g.col_indices[e]), float(w[e])))
    return sorted(out)


def t_edge_multiset(g):
    out = []
    w = g.t_edge_weights if g.t_edge_weights is not None else np.ones(g.num_edges, np.float32)
    for u in range(g.num_nodes):
        lo, hi = int(g.t_row_offsets[u]), int(g.t_row_offsets[u + 1])
        for e in range(lo, hi):
            out.append((int(g.t_col_indices[e]), u, float(w[e])))
    return sorted(out)


class TestLoadEdgeList:
    def test_ring(self, tmp_path):
        p = tmp_path / "ring.txt"
        p.write_text("0 1\n1 2\n2 0")
        g = graph.load_edge_list(p, 3)
        assert g.num_nodes == 3 and g.num_edges == 3
        assert g.row_offsets.tolist() == [0, 1, 2, 3]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("")
        g = graph.load_edge_list(p, 4)
        assert g.num_nodes == 4 and g.num_edges == 0

    def test_out_of_range(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("0 5\n")
        with pytest.raises(ValidationError):
            graph.load_edge_list(p, 3)

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("0 1\n0 x\n")
        with pytest.raises(ParseError, match="line 2"):
            graph.load_edge_list(p, 3)

    def test_comments_and_weights(self, tmp_path):
        p = tmp_path / "w.txt"
        p.write_text("# header\n0 1 0.5\n\n1 0 2.0\n")
        g = graph.load_edge_list(p, 2)
        assert g.num_edges == 2
        assert g.edge_weights.tolist() == [0.5, 2.0]

    def test_duplicates_and_self_loops_preserved(self, tmp_path):
        p = tmp_path / "dup.txt"
        p.write_text("0 1\n0 1\n1 1\n")
        g = graph.load_edge_list(p, 2)
        assert g.num_edges == 3
        assert g.out_degrees().tolist() == [2, 1]


class TestGenerate:
    def test_er_zero_degree_edgeless(self):
        g = graph.generate(graph.GraphGenSpec("erdos-renyi", 100, avg_degree=0, seed=1))
        assert g.num_edges == 0

    def test_powerlaw_deterministic(self):
        spec = graph.GraphGenSpec("power-law", 10_000, avg_degree=8, seed=7)
        a, b = graph.generate(spec), graph.generate(spec)
        assert a == b

    def test_er_edge_count_matches_binomial_expectation(self):
        # oracle: direct edge count across 20 seeds, each within 5% of n*avg
        n, avg = 10_000, 8
        for seed in range(20):
            g = graph.generate(graph.GraphGenSpec("erdos-renyi", n, avg_degree=avg, seed=seed))
            assert abs(g.num_edges - n * avg) <= 0.05 * n * avg

    def test_powerlaw_has_hubs(self):
        g = graph.generate(graph.GraphGenSpec("power-law", 10_000, avg_degree=8, seed=3))
        deg = g.out_degrees()
        assert deg.max() > 10 * deg.mean()

    def test_zipf_variant(self):
        g = graph.generate(graph.GraphGenSpec("power-law", 5_000, exponent=2.2, seed=5))
        deg = g.out_degrees()
        assert deg.max() > 10 * deg.mean()

    def test_zero_nodes_rejected(self):
        with pytest.raises(ValidationError):
            graph.generate(graph.GraphGenSpec("erdos-renyi", 0, avg_degree=2, seed=0))

    def test_bad_model_rejected(self):
        with pytest.raises(ValidationError):
            graph.generate(graph.GraphGenSpec("ba", 10, avg_degree=2, seed=0))


class TestBinaryRoundTrip:
    def test_ring(self, ring3, tmp_path):
        p = tmp_path / "g.mgl"
        graph.save_binary(ring3, p)
        g2 = graph.load_binary(p)
        assert g2 == ring3

    def test_weighted(self, tmp_path):
        g = graph.from_edges(3, [0, 1], [1, 2], [0.25, 4.0])
        p = tmp_path / "g.mgl"
        graph.save_binary(g, p)
        assert graph.load_binary(p) == g

    def test_powerlaw_field_wise(self, powerlaw_10k, tmp_path):
        p = tmp_path / "pl.mgl"
        graph.save_binary(powerlaw_10k, p)
        g2 = graph.load_binary(p)
        # field-wise oracle, independent of Graph.__eq__
        for name in ("row_offsets", "col_indices", "t_row_offsets", "t_col_indices"):
            assert np.array_equal(getattr(g2, name), getattr(powerlaw_10k, name)), name
        assert g2.num_nodes == powerlaw_10k.num_nodes
        assert g2.num_edges == powerlaw_10k.num_edges

    def test_truncated(self, ring3, tmp_path):
        p = tmp_path / "g.mgl"
        graph.save_binary(ring3, p)
        data = p.read_bytes()
        p.write_bytes(data[: len(data) - 8])
        with pytest.raises(FormatError, match="truncated"):
            graph.load_binary(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "g.mgl"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError, match="magic"):
            graph.load_binary(p)


edge_lists = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40),
    )
)


class TestInvariants:
    @given(edge_lists)
    @settings(max_examples=60, deadline=None)
    def test_transpose_is_exact(self, case):
        n, edges = case
        src = [u for u, _ in edges]
        dst = [v for _, v in edges]
        g = graph.from_edges(n, src, dst)
        assert edge_multiset(g) == t_edge_multiset(g)
        assert sorted(zip(src, dst)) == [(u, v) for u, v, _ in edge_multiset(g)]

    @given(edge_lists)
    @settings(max_examples=60, deadline=None)
    def test_double_transpose_identity(self, case):
        n, edges = case
        g = graph.from_edges(n, [u for u, _ in edges], [v for _, v in edges])
        assert g.transpose().transpose() == g

    @given(edge_lists)
    @settings(max_examples=60, deadline=None)
    def test_degree_sums(self, case):
        n, edges = case
        g = graph.from_edges(n, [u for u, _ in edges], [v for _, v in edges])
        assert g.out_degrees().sum() == g.num_edges == g.in_degrees().sum()

    def test_weighted_transpose_carries_weights(self):
        g = graph.from_edges(4, [0, 0, 2], [1, 1, 3], [1.5, 2.5, 3.5])
        assert edge_multiset(g) == t_edge_multiset(g)
