"""Banded similarity, edge selection, and merge/prune application.

Similarity between candidate sets A and B is evaluated only inside a band
|i - j| < k of subset coordinates, stored diagonal by diagonal so the
evaluation count is exactly what a loop implementation would pay:
t'/2 + (k-1)(t'-k) entries for t' = 2*floor(t/2).  k = 1 touches adjacent
pairs only; k = t'/2 recovers the full bipartite score matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import MergePlan, TokenMatrix, coalesce_intervals, partition
from .errors import (
    BatchShapeError,
    ParameterError,
    PlanError,
    ShapeError,
)

_METRICS = ("cosine", "l1", "l2")


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    # zero-norm rows stay zero so their cosine against anything is 0
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0.0, norms, 1.0)


def _rowwise_score(metric: str, lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Similarity of lhs[i] vs rhs[i]; distances enter negated so that
    larger always means more similar."""
    if metric == "cosine":
        return np.einsum("ij,ij->i", lhs, rhs)
    if metric == "l2":
        return -np.linalg.norm(lhs - rhs, axis=1)
    if metric == "l1":
        return -np.abs(lhs - rhs).sum(axis=1)
    raise ParameterError(f"metric must be one of {_METRICS}, got {metric!r}")


@dataclass(frozen=True)
class BandedSimilarity:
    """Similarity scores restricted to |i - j| < k, stored per diagonal.

    diagonals[o + k - 1] holds scores for offset o = j - i, covering
    i in [max(0, -o), n - 1 - max(0, o)].  evaluation_count is the number
    of scores actually computed.
    """

    a_index: np.ndarray
    b_index: np.ndarray
    k: int
    metric: str
    diagonals: tuple[np.ndarray, ...]
    evaluation_count: int

    @property
    def n(self) -> int:
        return len(self.a_index)

    def score(self, i: int, j: int) -> float:
        o = j - i
        if abs(o) >= self.k:
            raise ParameterError(f"pair ({i}, {j}) lies outside band k={self.k}")
        return float(self.diagonals[o + self.k - 1][i - max(0, -o)])

    def entries(self) -> Iterator[tuple[int, int, float]]:
        """Yield (i, j, score) over every evaluated cell."""
        for o in range(-(self.k - 1), self.k):
            diag = self.diagonals[o + self.k - 1]
            start = max(0, -o)
            for idx, s in enumerate(diag):
                i = start + idx
                yield i, i + o, float(s)

    def best_per_a(self) -> tuple[np.ndarray, np.ndarray]:
        """For each A token, its highest-scoring in-band B partner.

        Ties keep the lowest j.  Returns (best_j, best_score), both (n,).
        """
        n = self.n
        best_j = np.full(n, -1, dtype=np.int64)
        best_s = np.full(n, -np.inf)
        for o in range(-(self.k - 1), self.k):
            diag = self.diagonals[o + self.k - 1]
            start = max(0, -o)
            rows = np.arange(start, start + len(diag))
            improves = diag > best_s[rows]  # strict: earlier (lower) j wins ties
            upd = rows[improves]
            best_s[upd] = diag[improves]
            best_j[upd] = upd + o
        return best_j, best_s


def similarity_banded(
    x: TokenMatrix,
    a_index: np.ndarray,
    b_index: np.ndarray,
    k: int,
    metric: str = "cosine",
) -> BandedSimilarity:
    """Evaluate similarity for in-band (A_i, B_j) pairs only.

    a_index and b_index address rows of x and must have equal length n;
    k must satisfy 1 <= k <= n.
    """
    a_idx = np.asarray(a_index, dtype=np.intp)
    b_idx = np.asarray(b_index, dtype=np.intp)
    if a_idx.ndim != 1 or b_idx.ndim != 1 or len(a_idx) != len(b_idx):
        raise ShapeError(
            f"A and B index lists must be 1-d and equal length, "
            f"got {a_idx.shape} and {b_idx.shape}"
        )
    n = len(a_idx)
    if n == 0:
        raise ShapeError("candidate sets are empty; nothing to score")
    if not 1 <= k <= n:
        raise ParameterError(f"band width k must satisfy 1 <= k <= {n}, got {k}")
    if metric not in _METRICS:
        raise ParameterError(f"metric must be one of {_METRICS}, got {metric!r}")

    a = x.tokens[a_idx]
    b = x.tokens[b_idx]
    if metric == "cosine":
        a = _normalize_rows(a)
        b = _normalize_rows(b)

    diagonals: list[np.ndarray] = []
    count = 0
    for o in range(-(k - 1), k):
        start = max(0, -o)
        stop = n - max(0, o)  # exclusive row bound
        diag = _rowwise_score(metric, a[start:stop], b[start + o : stop + o])
        diagonals.append(diag)
        count += len(diag)
    return BandedSimilarity(a_idx, b_idx, k, metric, tuple(diagonals), count)


def _apportion(quota: int, block_sizes: Sequence[int]) -> list[int]:
    """Largest-remainder split of quota proportional to block sizes."""
    total = sum(block_sizes)
    if total == 0:
        return [0] * len(block_sizes)
    shares = [quota * m / total for m in block_sizes]
    base = [int(s) for s in shares]
    left = quota - sum(base)
    order = sorted(range(len(shares)), key=lambda w: (-(shares[w] - base[w]), w))
    for w in order[:left]:
        base[w] += 1
    return base


def select_top_r(
    scores: BandedSimilarity,
    r: int,
    q: int,
    t: int,
    *,
    quota_blocks: int = 1,
) -> MergePlan:
    """Pick the r strongest best-per-A edges, respecting the survivor floor.

    r is clipped to [0, t - q] (and to the candidate count).  Candidates are
    ranked by descending similarity, ties by lower A then lower B subset
    index.  With quota_blocks > 1 the candidate axis is cut into that many
    contiguous blocks and the budget is apportioned proportionally, so the
    edges chosen inside one block never depend on token content elsewhere;
    this is what keeps causal decoding prefixes stable.
    """
    if r < 0:
        raise ParameterError(f"r must be >= 0, got {r}")
    if q < 1:
        raise ParameterError(f"survivor floor q must be >= 1, got {q}")
    if quota_blocks < 1:
        raise ParameterError(f"quota_blocks must be >= 1, got {quota_blocks}")
    n = scores.n
    r_eff = min(r, n, max(0, t - q))

    best_j, best_s = scores.best_per_a()
    a_pos = scores.a_index
    b_pos = scores.b_index

    def block_plan(lo: int, hi: int, budget: int) -> list[tuple[int, int, float]]:
        idx = sorted(range(lo, hi), key=lambda i: (-best_s[i], i, best_j[i]))
        return [
            (int(a_pos[i]), int(b_pos[best_j[i]]), float(best_s[i]))
            for i in idx[:budget]
        ]

    if quota_blocks == 1:
        edges = block_plan(0, n, r_eff)
    else:
        bounds = [w * n // quota_blocks for w in range(quota_blocks + 1)]
        sizes = [bounds[w + 1] - bounds[w] for w in range(quota_blocks)]
        quotas = _apportion(r_eff, sizes)
        edges = []
        for w in range(quota_blocks):
            edges.extend(block_plan(bounds[w], bounds[w + 1], quotas[w]))
    return MergePlan(edges=tuple(edges), k=scores.k, r=len(edges), requested_r=r)


def merge_apply(x: TokenMatrix, plan: MergePlan) -> TokenMatrix:
    """Apply one round of merges, producing a matrix of t - r tokens.

    Each destination group (a b plus every a pointing at it) collapses to
    a size-weighted mean at the group's earliest position; sizes add and
    spans union.  An empty plan returns x unchanged.
    """
    if plan.r == 0:
        return x
    t = x.t
    groups = plan.destinations()
    removed = np.zeros(t, dtype=bool)
    tokens = np.array(x.tokens)
    sizes = np.array(x.sizes)
    spans = list(x.spans)
    for b, sources in groups.items():
        members = sorted(sources + [b])
        if members[-1] >= t:
            raise PlanError(f"edge position {members[-1]} out of range for t={t}")
        if removed[members].any():  # pragma: no cover - plan validation precludes
            raise PlanError("merge groups overlap")
        dest = members[0]
        w = sizes[members].astype(np.float64)
        tokens[dest] = (w[:, None] * tokens[members]).sum(axis=0) / w.sum()
        sizes[dest] = sizes[members].sum()
        spans[dest] = coalesce_intervals(
            [iv for m in members for iv in spans[m]]
        )
        for m in members:
            if m != dest:
                removed[m] = True
    keep = ~removed
    return TokenMatrix(
        tokens[keep], sizes[keep], tuple(s for s, k_ in zip(spans, keep) if k_)
    )


def prune_apply(x: TokenMatrix, plan: MergePlan) -> TokenMatrix:
    """Drop each distinct destination token instead of merging into it.

    The surviving tokens keep their values, sizes, and spans untouched, so
    the positions owned by dropped tokens become orphans (the trace marks
    them -1).  Output length is t minus the number of distinct b's.
    """
    if plan.r == 0:
        return x
    t = x.t
    dropped = sorted(plan.destinations())
    if dropped[-1] >= t:
        raise PlanError(f"edge position {dropped[-1]} out of range for t={t}")
    keep = np.ones(t, dtype=bool)
    keep[dropped] = False
    return TokenMatrix(
        x.tokens[keep],
        x.sizes[keep],
        tuple(s for s, k_ in zip(x.spans, keep) if k_),
    )


def dynamic_r(
    batch: Sequence[TokenMatrix],
    tau: float,
    k: int,
    q: int,
    metric: str = "cosine",
) -> int:
    """Threshold-driven merge count shared across a batch.

    Each element contributes the number of its best-per-A candidates with
    similarity >= tau; the batch mean is rounded half-to-even and clipped
    to [0, t - q].  All elements must share the same t.
    """
    if len(batch) == 0:
        raise BatchShapeError("dynamic_r requires a non-empty batch")
    t = batch[0].t
    if any(x.t != t for x in batch):
        raise BatchShapeError(
            f"heterogeneous sequence lengths in batch: {sorted({x.t for x in batch})}"
        )
    if q < 1:
        raise ParameterError(f"survivor floor q must be >= 1, got {q}")
    counts = []
    for x in batch:
        part = partition(x)
        if len(part.a) == 0:
            counts.append(0)
            continue
        scores = similarity_banded(x, part.a, part.b, k, metric)
        _, best_s = scores.best_per_a()
        counts.append(int((best_s >= tau).sum()))
    r = round(float(np.mean(counts)))  # banker's rounding on the .5 boundary
    return max(0, min(r, t - q))
