"""Container invariants: token matrices, plans, traces, partitions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmerge import MergePlan, MergeTrace, TokenMatrix, partition, trace_compose
from seqmerge.core import LayerSchedule, coalesce_intervals
from seqmerge.errors import (
    CorruptionError,
    EmptySequenceError,
    ParameterError,
    PlanError,
    ShapeError,
)

from helpers_oracle import build_matrix


class TestTokenMatrix:
    def test_from_tokens_unit_sizes(self):
        x = TokenMatrix.from_tokens(np.zeros((5, 3)))
        assert x.t == 5 and x.d == 3
        assert x.sizes.tolist() == [1] * 5
        assert x.spans == tuple(((i, i),) for i in range(5))
        assert x.total_size == 5

    def test_arrays_are_read_only(self):
        x = TokenMatrix.from_tokens(np.ones((3, 2)))
        with pytest.raises(ValueError):
            x.tokens[0, 0] = 7.0
        with pytest.raises(ValueError):
            x.sizes[0] = 2

    def test_empty_rejected(self):
        with pytest.raises(EmptySequenceError):
            TokenMatrix.from_tokens(np.zeros((0, 4)))

    def test_size_span_mismatch_is_corruption(self):
        with pytest.raises(CorruptionError):
            TokenMatrix(np.zeros((2, 2)), np.array([2, 1]), (((0, 0),), ((1, 1),)))

    def test_overlapping_spans_rejected(self):
        with pytest.raises(CorruptionError):
            TokenMatrix(np.zeros((2, 2)), np.array([1, 1]), (((0, 0),), ((0, 0),)))

    def test_unordered_spans_rejected(self):
        with pytest.raises(CorruptionError):
            TokenMatrix(np.zeros((2, 2)), np.array([1, 1]), (((3, 3),), ((1, 1),)))

    def test_negative_positions_rejected(self):
        with pytest.raises(CorruptionError):
            TokenMatrix(np.zeros((1, 2)), np.array([1]), (((-1, -1),),))

    def test_non_positive_sizes_rejected(self):
        with pytest.raises(ShapeError):
            TokenMatrix(np.zeros((1, 2)), np.array([0]), (((0, 0),),))

    def test_replace_tokens_keeps_structure(self):
        x = build_matrix(np.zeros((3, 2)), [2, 1, 3])
        y = x.replace_tokens(np.ones((3, 2)))
        assert y.sizes.tolist() == [2, 1, 3]
        assert y.spans == x.spans
        with pytest.raises(ShapeError):
            x.replace_tokens(np.ones((4, 2)))

    def test_gapped_spans_allowed(self):
        # merged tokens may cover non-adjacent stretches
        x = TokenMatrix(
            np.zeros((2, 2)),
            np.array([2, 1]),
            (((0, 0), (2, 2)), ((1, 1),)),
        )
        assert x.spans[0] == ((0, 0), (2, 2))


class TestCoalesce:
    def test_adjacent_intervals_fuse(self):
        assert coalesce_intervals([(1, 3), (0, 0)]) == ((0, 3),)

    def test_gap_preserved(self):
        assert coalesce_intervals([(0, 1), (3, 4)]) == ((0, 1), (3, 4))

    def test_overlap_rejected(self):
        with pytest.raises(ShapeError):
            coalesce_intervals([(0, 2), (2, 3)])


class TestPartition:
    def test_even_split(self):
        x = TokenMatrix.from_tokens(np.zeros((6, 1)))
        part = partition(x)
        assert part.a.tolist() == [0, 2, 4]
        assert part.b.tolist() == [1, 3, 5]
        assert part.excluded is None

    def test_odd_excludes_most_recent(self):
        x = TokenMatrix.from_tokens(np.zeros((7, 1)))
        part = partition(x)
        assert part.a.tolist() == [0, 2, 4]
        assert part.b.tolist() == [1, 3, 5]
        assert part.excluded == 6

    def test_single_token(self):
        part = partition(TokenMatrix.from_tokens(np.zeros((1, 1))))
        assert len(part.a) == 0 and len(part.b) == 0
        assert part.excluded == 0

    @given(t=st.integers(min_value=1, max_value=300))
    @settings(max_examples=60, deadline=None)
    def test_cover_property(self, t):
        """A and B interleave over the first 2*floor(t/2) positions."""
        part = partition(TokenMatrix.from_tokens(np.zeros((t, 1))))
        assert len(part.a) == len(part.b) == t // 2
        covered = sorted(part.a.tolist() + part.b.tolist())
        expect = list(range(2 * (t // 2)))
        assert covered == expect
        assert part.excluded == (t - 1 if t % 2 else None)


class TestMergePlan:
    def test_duplicate_source_rejected(self):
        with pytest.raises(PlanError):
            MergePlan(edges=((0, 1, 0.5), (0, 3, 0.4)), k=2)

    def test_parity_enforced(self):
        with pytest.raises(PlanError):
            MergePlan(edges=((1, 2, 0.5),), k=4)

    def test_band_enforced(self):
        # a=0 is subset index 0, b=5 is subset index 2: out of band for k=2
        with pytest.raises(PlanError):
            MergePlan(edges=((0, 5, 0.9),), k=2)
        MergePlan(edges=((0, 5, 0.9),), k=3)  # fits

    def test_r_defaults_to_edge_count(self):
        plan = MergePlan(edges=((0, 1, 1.0), (2, 3, 0.5)), k=1)
        assert plan.r == 2 and plan.requested_r == 2

    def test_shared_destination_allowed(self):
        plan = MergePlan(edges=((0, 3, 0.9), (4, 3, 0.8)), k=2)
        assert plan.destinations() == {3: [0, 4]}

    def test_serialization_shape(self):
        plan = MergePlan(edges=((2, 3, 0.25),), k=1)
        assert plan.to_dict() == {"edges": [[2, 3, 0.25]], "k": 1, "r": 1}


class TestMergeTrace:
    def test_identity(self):
        tr = MergeTrace.identity(4)
        assert tr.final_map == (0, 1, 2, 3)
        assert tr.surviving == 4

    def test_single_merge(self):
        tr = MergeTrace.identity(4).compose(MergePlan(edges=((0, 1, 1.0),), k=1))
        assert tr.final_map == (0, 0, 1, 2)
        assert tr.surviving == 3

    def test_two_layer_composition(self):
        # layer 1 merges (2,3); layer 2 merges indices 0 and 1 of the
        # 3-token intermediate, so original 0 and 1 end up together
        tr = MergeTrace.identity(4)
        tr = tr.compose(MergePlan(edges=((2, 3, 1.0),), k=1))
        assert tr.final_map == (0, 1, 2, 2)
        tr = tr.compose(MergePlan(edges=((0, 1, 0.5),), k=1))
        assert tr.final_map == (0, 0, 1, 1)
        assert tr.surviving == 2

    def test_prune_marks_orphans(self):
        tr = MergeTrace.identity(4).compose(
            MergePlan(edges=((0, 1, 1.0),), k=1), prune=True
        )
        assert tr.final_map == (0, -1, 1, 2)
        assert tr.surviving == 3

    def test_out_of_range_plan_rejected(self):
        tr = MergeTrace.identity(2)
        with pytest.raises(PlanError):
            tr.compose(MergePlan(edges=((4, 5, 1.0),), k=1))

    def test_trace_compose_helper(self):
        plans = [MergePlan(edges=((0, 1, 1.0),), k=1)]
        tr = trace_compose(MergeTrace.identity(3), plans)
        assert tr.final_map == (0, 0, 1)

    def test_schema_shape(self):
        tr = MergeTrace.identity(2).compose(MergePlan(edges=((0, 1, 0.5),), k=1))
        d = tr.to_dict()
        assert set(d) == {"layers", "final_map"}
        assert d["layers"] == [{"edges": [[0, 1, 0.5]], "k": 1, "r": 1}]
        assert d["final_map"] == [0, 0]


class TestLayerSchedule:
    def test_dynamic_requires_tau(self):
        with pytest.raises(ParameterError):
            LayerSchedule(mode="dynamic-tau")

    def test_bad_mode_rejected(self):
        with pytest.raises(ParameterError):
            LayerSchedule(mode="sometimes")

    def test_bad_metric_rejected(self):
        with pytest.raises(ParameterError):
            LayerSchedule(metric="manhattan-ish")

    def test_round_trip(self):
        sched = LayerSchedule(mode="dynamic-tau", tau=0.75, k=4, q=2, metric="l2")
        assert LayerSchedule.from_dict(sched.to_dict()) == sched
