import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minigl import schedule
from minigl.errors import ValidationError

from conftest import batch_from_ids


def reference_greedy(m):
    """Independent straight-line re-implementation of the greedy chain:
    literal row/column zeroing on a working copy."""
    m = np.array(m, dtype=float)
    n = len(m)
    np.fill_diagonal(m, 0.0)
    order = [0]
    inserted = {0}
    z = 0
    for _ in range(n - 1):
        best, h = 0.0, None
        for k in range(n):
            if k not in inserted and m[z][k] > best:
                best, h = m[z][k], k
        if h is None:
            h = min(set(range(n)) - inserted)
        order.append(h)
        inserted.add(h)
        m[z, :] = 0.0
        m[:, z] = 0.0
        z = h
    return order


class TestMatchDegree:
    def test_identical(self):
        assert schedule.match_degree([1, 2, 3], [1, 2, 3]) == 1.0

    def test_disjoint(self):
        assert schedule.match_degree([1, 2], [3, 4]) == 0.0

    def test_three_of_five(self):
        a = [0, 3, 4, 10, 12]
        b = [0, 3, 4, 7, 9]
        assert schedule.match_degree(a, b) == pytest.approx(0.6)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            schedule.match_degree([], [1])

    @given(
        st.lists(st.integers(0, 30), min_size=1, max_size=20),
        st.lists(st.integers(0, 30), min_size=1, max_size=20),
    )
    @settings(max_examples=60, deadline=None)
    def test_brute_force_oracle(self, a, b):
        sa, sb = set(a), set(b)
        expect = len(sa & sb) / min(len(sa), len(sb))
        assert schedule.match_degree(a, b) == pytest.approx(expect)


class TestMatchMatrix:
    def test_identical_batches(self):
        m = schedule.build_match_matrix([batch_from_ids([1, 2]), batch_from_ids([1, 2])])
        assert m.m[0, 1] == 1.0 and m.m[1, 0] == 1.0
        assert m.m[0, 0] == 0.0 and m.m[1, 1] == 0.0

    def test_disjoint_batches_zero(self):
        batches = [batch_from_ids([i * 10, i * 10 + 1]) for i in range(4)]
        m = schedule.build_match_matrix(batches)
        assert np.all(m.m == 0.0)

    def test_symmetric_random(self):
        rng = np.random.default_rng(0)
        batches = [batch_from_ids(rng.integers(0, 40, size=12)) for _ in range(5)]
        m = schedule.build_match_matrix(batches).m
        assert np.array_equal(m, m.T)

    def test_needs_two(self):
        with pytest.raises(ValidationError):
            schedule.build_match_matrix([batch_from_ids([1])])


class TestGreedyReorder:
    def test_swaps_when_third_matches_better(self):
        # three batches where m13 > m12: execution order becomes 1, 3, 2
        m = np.array(
            [
                [0.0, 0.2, 0.6],
                [0.2, 0.0, 0.3],
                [0.6, 0.3, 0.0],
            ]
        )
        assert schedule.greedy_reorder(schedule.MatchMatrix(3, m)) == [0, 2, 1]

    def test_all_zero_keeps_identity(self):
        m = schedule.MatchMatrix(4, np.zeros((4, 4)))
        assert schedule.greedy_reorder(m) == [0, 1, 2, 3]

    def test_tie_breaks_to_lowest_index(self):
        m = np.zeros((3, 3))
        m[0, 1] = m[0, 2] = 0.5
        m[1, 2] = m[2, 1] = 0.5
        assert schedule.greedy_reorder(schedule.MatchMatrix(3, m)) == [0, 1, 2]

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_reference_trace(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        m = rng.random((n, n))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 0.0)
        ours = schedule.greedy_reorder(schedule.MatchMatrix(n, m))
        assert ours == reference_greedy(m)

    def test_greedy_step_optimality(self):
        rng = np.random.default_rng(5)
        m = rng.random((6, 6))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 0.0)
        order = schedule.greedy_reorder(schedule.MatchMatrix(6, m))
        remaining = set(range(6)) - {0}
        for prev, cur in zip(order, order[1:]):
            assert m[prev][cur] == max(m[prev][k] for k in remaining)
            remaining.discard(cur)


class TestTransition:
    def test_fig_load_set(self):
        prev = batch_from_ids([0, 3, 4, 7, 9])
        nxt = batch_from_ids([0, 3, 4, 10, 12])
        overlap, load = schedule.compute_transition(prev, nxt)
        assert overlap.tolist() == [0, 3, 4]
        assert load.tolist() == [10, 12]

    def test_identical_means_no_load(self):
        b = batch_from_ids([1, 5, 9])
        _, load = schedule.compute_transition(b, b)
        assert load.size == 0

    def test_disjoint_loads_everything(self):
        overlap, load = schedule.compute_transition(batch_from_ids([1]), batch_from_ids([2, 3]))
        assert overlap.size == 0 and load.tolist() == [2, 3]

    @given(
        st.lists(st.lists(st.integers(0, 25), min_size=1, max_size=15), min_size=2, max_size=6)
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, windows):
        batches = [batch_from_ids(ids) for ids in windows]
        sched = schedule.schedule_window(batches, enable_reorder=True, feature_dim=4)
        for j, transition in enumerate(sched.transitions):
            nxt = sched.batch_nodes[j + 1]
            merged = np.union1d(transition.overlap_ids, transition.load_ids)
            assert np.array_equal(merged, nxt)
            assert np.intersect1d(transition.overlap_ids, transition.load_ids).size == 0


class TestScheduleWindow:
    def test_single_batch_traffic(self):
        b = batch_from_ids([1, 2, 3])
        sched = schedule.schedule_window([b], enable_reorder=True, feature_dim=8)
        assert sched.window_traffic_bytes == 3 * 8 * 4
        assert sched.transitions == []

    def test_identical_batches_second_is_free(self):
        b = batch_from_ids([1, 2, 3])
        sched = schedule.schedule_window([b, b], enable_reorder=False, feature_dim=8)
        assert len(sched.transitions[0].load_ids) == 0
        assert sched.window_traffic_bytes == 3 * 8 * 4

    def test_reorder_beats_or_ties_default_on_fig_instance(self):
        b1 = batch_from_ids([0, 3, 4, 7, 9])
        b2 = batch_from_ids([0, 5, 6, 8, 11])
        b3 = batch_from_ids([0, 3, 4, 10, 12])
        with_reorder = schedule.schedule_window([b1, b2, b3], True, feature_dim=2)
        without = schedule.schedule_window([b1, b2, b3], False, feature_dim=2)
        assert with_reorder.order == [0, 2, 1]
        assert with_reorder.window_traffic_bytes <= without.window_traffic_bytes

    @given(
        st.lists(st.lists(st.integers(0, 25), min_size=1, max_size=15), min_size=1, max_size=6)
    )
    @settings(max_examples=60, deadline=None)
    def test_match_never_exceeds_full_loads(self, windows):
        batches = [batch_from_ids(ids) for ids in windows]
        sched = schedule.schedule_window(batches, enable_reorder=False, feature_dim=4)
        full = sum(len(b.unique_nodes) for b in batches) * 4 * 4
        assert sched.window_traffic_bytes <= full

    def test_match_stats_shape(self):
        batches = [batch_from_ids([0, 1, 2]), batch_from_ids([1, 2, 3]), batch_from_ids([9])]
        stats = schedule.match_stats(batches)
        assert 0.0 <= stats["avg_match_degree"] <= 1.0
        assert stats["delta_match"] >= 0.0
