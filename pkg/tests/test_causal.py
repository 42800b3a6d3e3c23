"""Causal merging, exact unmerging, and pruned-sequence expansion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqmerge import TokenMatrix, causal_merge, expand_pruned, prune_apply, unmerge
from seqmerge.core import MergePlan
from seqmerge.errors import EmptySequenceError, ParameterError

from helpers_oracle import random_token_matrix


def unit_pair(cosine: float) -> np.ndarray:
    angle = np.arccos(cosine)
    return np.array([np.cos(angle), np.sin(angle)])


class TestCausalMerge:
    def test_most_similar_adjacent_pair_wins(self):
        # pair (0,1) at cosine 0.9, pair (2,3) at 0.95: budget of one
        # goes to the second pair
        tokens = np.stack(
            [[1.0, 0.0], unit_pair(0.9), [1.0, 0.0], unit_pair(0.95)]
        )
        merged, plan = causal_merge(TokenMatrix.from_tokens(tokens), r=1)
        assert plan.edges[0][:2] == (2, 3)
        assert merged.t == 3
        assert merged.spans == (((0, 0),), ((1, 1),), ((2, 3),))

    def test_edges_are_adjacent_only(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = TokenMatrix.from_tokens(rng.normal(size=(20, 4)))
            _, plan = causal_merge(x, r=int(rng.integers(0, 11)))
            assert plan.k == 1
            for a, b, _ in plan.edges:
                assert b == a + 1

    def test_r_zero_is_identity(self):
        x = TokenMatrix.from_tokens(np.random.default_rng(1).normal(size=(6, 2)))
        merged, plan = causal_merge(x, r=0)
        assert merged is x
        assert plan.edges == ()

    def test_single_token_sequence(self):
        x = TokenMatrix.from_tokens(np.ones((1, 3)))
        merged, plan = causal_merge(x, r=5)
        assert merged.t == 1 and plan.r == 0

    def test_odd_length_keeps_most_recent(self):
        x = TokenMatrix.from_tokens(np.random.default_rng(2).normal(size=(7, 2)))
        merged, plan = causal_merge(x, r=3)
        assert merged.t == 4
        assert merged.spans[-1] == ((6, 6),)  # the excluded token survives

    def test_survivor_floor(self):
        x = TokenMatrix.from_tokens(np.random.default_rng(3).normal(size=(8, 2)))
        merged, plan = causal_merge(x, r=100, q=6)
        assert plan.r == 2
        assert merged.t == 6

    def test_negative_r_rejected(self):
        x = TokenMatrix.from_tokens(np.ones((4, 2)))
        with pytest.raises(ParameterError):
            causal_merge(x, r=-1)

    @given(
        t=st.integers(min_value=2, max_value=48),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        layers=st.integers(min_value=1, max_value=4),
    )
    @settings(max_examples=50, deadline=None)
    def test_spans_stay_contiguous_under_stacking(self, t, seed, layers):
        """Adjacent-pair merging can only build contiguous clusters."""
        rng = np.random.default_rng(seed)
        x = TokenMatrix.from_tokens(rng.normal(size=(t, 3)))
        for _ in range(layers):
            x, _ = causal_merge(x, r=int(rng.integers(0, x.t // 2 + 1)))
        for span in x.spans:
            assert len(span) == 1

    def test_prefix_stability_with_quota_blocks(self):
        """Zeroing the future half cannot move early-block merges."""
        rng = np.random.default_rng(4)
        flips = 0
        for _ in range(50):
            base = rng.normal(size=(32, 6))
            zeroed = base.copy()
            zeroed[16:] = 0.0
            _, plan_a = causal_merge(
                TokenMatrix.from_tokens(base), r=8, quota_blocks=4
            )
            _, plan_b = causal_merge(
                TokenMatrix.from_tokens(zeroed), r=8, quota_blocks=4
            )
            early_a = {e for e in plan_a.edges if e[0] < 16}
            early_b = {e for e in plan_b.edges if e[0] < 16}
            if early_a != early_b:
                flips += 1
        assert flips == 0


class TestUnmerge:
    def test_length_equals_total_size(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = random_token_matrix(rng, int(rng.integers(1, 20)), 3)
            restored = unmerge(x)
            assert restored.t == x.total_size
            assert restored.sizes.tolist() == [1] * restored.t

    def test_values_copied_per_position(self):
        x = TokenMatrix(
            np.array([[1.0], [2.0]]),
            np.array([2, 1]),
            (((0, 1),), ((2, 2),)),
        )
        restored = unmerge(x)
        np.testing.assert_array_equal(restored.tokens, [[1.0], [1.0], [2.0]])
        assert restored.spans == (((0, 0),), ((1, 1),), ((2, 2),))

    def test_gapped_span_expands_in_position_order(self):
        x = TokenMatrix(
            np.array([[7.0], [9.0]]),
            np.array([2, 1]),
            (((0, 0), (2, 2)), ((1, 1),)),
        )
        restored = unmerge(x)
        np.testing.assert_array_equal(restored.tokens, [[7.0], [9.0], [7.0]])

    def test_constant_round_trip_is_exact(self):
        value = np.array([0.1, -2.7, 3.3])  # not representable powers of two
        x = TokenMatrix.from_tokens(np.tile(value, (16, 1)))
        original = np.array(x.tokens)
        for _ in range(3):  # halve three times: 16 -> 8 -> 4 -> 2
            x, plan = causal_merge(x, r=x.t // 2)
            assert plan.r > 0
        assert x.sizes.tolist() == [8, 8]
        np.testing.assert_array_equal(unmerge(x).tokens, original)

    def test_arbitrary_r_round_trip_on_unit_sizes(self):
        value = np.array([1.0 / 3.0, np.pi])
        x = TokenMatrix.from_tokens(np.tile(value, (10, 1)))
        merged, _ = causal_merge(x, r=3)
        np.testing.assert_array_equal(unmerge(merged).tokens, x.tokens)


class TestExpandPruned:
    def test_orphans_fill_from_left(self):
        x = TokenMatrix.from_tokens(np.array([[1.0], [2.0], [3.0], [4.0]]))
        plan = MergePlan(edges=((0, 1, 0.9),), k=1)
        pruned = prune_apply(x, plan)  # drops position 1
        out = expand_pruned(pruned, 4)
        np.testing.assert_array_equal(out.tokens, [[1.0], [1.0], [3.0], [4.0]])

    def test_leading_orphan_fills_from_right(self):
        x = TokenMatrix(
            np.array([[5.0]]), np.array([1]), (((1, 1),),)
        )
        out = expand_pruned(x, 3)
        np.testing.assert_array_equal(out.tokens, [[5.0], [5.0], [5.0]])

    def test_length_validation(self):
        x = TokenMatrix.from_tokens(np.ones((2, 1)))
        with pytest.raises(EmptySequenceError):
            expand_pruned(x, 0)
        with pytest.raises(ParameterError):
            expand_pruned(x, 1)  # span (1,1) exceeds length 1
