"""Causality-preserving merging and exact unmerging.

Causal merging is the k = 1 special case: only adjacent pairs
(2i, 2i + 1) are candidates, so no token ever absorbs information from
more than one step ahead, and spans of merged tokens stay contiguous.
Unmerging clones each surviving token back over the positions it covers,
restoring the original sequence length.
"""

from __future__ import annotations

import numpy as np

from .core import MergePlan, TokenMatrix, partition
from .errors import EmptySequenceError, ParameterError
from .merge import merge_apply, select_top_r, similarity_banded


def causal_merge(
    x: TokenMatrix,
    r: int,
    q: int = 1,
    metric: str = "cosine",
    *,
    quota_blocks: int = 1,
) -> tuple[TokenMatrix, MergePlan]:
    """Merge up to r adjacent pairs, most similar first.

    Returns the merged matrix plus the plan that produced it.  r is
    clipped to [0, t - q].  quota_blocks > 1 spreads the budget over
    contiguous stretches of the sequence so that merge decisions in an
    early stretch cannot be displaced by high similarities later on.
    """
    if r < 0:
        raise ParameterError(f"r must be >= 0, got {r}")
    part = partition(x)
    if r == 0 or len(part.a) == 0:
        return x, MergePlan.empty(k=1, requested_r=r)
    scores = similarity_banded(x, part.a, part.b, 1, metric)
    plan = select_top_r(scores, r, q, x.t, quota_blocks=quota_blocks)
    return merge_apply(x, plan), plan


def unmerge(x: TokenMatrix) -> TokenMatrix:
    """Expand every token into identical copies over its covered positions.

    The output has sum(sizes) unit-size tokens ordered by original
    position; a token of size s contributes s equal rows.  Exact inverse
    of merging for the token values themselves up to the averaging loss.
    """
    placements: list[tuple[int, int]] = []  # (original position, source row)
    for row, span in enumerate(x.spans):
        for lo, hi in span:
            placements.extend((pos, row) for pos in range(lo, hi + 1))
    placements.sort()
    rows = np.array([r for _, r in placements], dtype=np.intp)
    positions = [p for p, _ in placements]
    return TokenMatrix(
        x.tokens[rows],
        np.ones(len(rows), dtype=np.int64),
        tuple(((p, p),) for p in positions),
    )


def expand_pruned(x: TokenMatrix, length: int) -> TokenMatrix:
    """Reconstruct a length-long unit-size sequence from a pruned matrix.

    Covered positions take their owning token's value; orphaned positions
    (pruned away) copy the nearest surviving position to the left, or to
    the right when nothing precedes them.
    """
    if length < 1:
        raise EmptySequenceError("expansion length must be >= 1")
    owner = np.full(length, -1, dtype=np.int64)
    for row, span in enumerate(x.spans):
        for lo, hi in span:
            if hi >= length:
                raise ParameterError(
                    f"span ({lo},{hi}) exceeds expansion length {length}"
                )
            owner[lo : hi + 1] = row
    if (owner < 0).all():
        raise EmptySequenceError("no surviving positions inside expansion range")
    filled = np.empty(length, dtype=np.int64)
    last = -1
    for pos in range(length):
        if owner[pos] >= 0:
            last = owner[pos]
        filled[pos] = last
    nxt = -1
    for pos in range(length - 1, -1, -1):
        if owner[pos] >= 0:
            nxt = owner[pos]
        if filled[pos] < 0:
            filled[pos] = nxt
    return TokenMatrix(
        x.tokens[filled],
        np.ones(length, dtype=np.int64),
        tuple(((p, p),) for p in range(length)),
    )
