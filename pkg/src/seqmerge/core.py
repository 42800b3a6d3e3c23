"""Core sequence containers: token matrices, merge plans, merge traces.

A token matrix is an immutable snapshot of a (possibly merged) sequence.
Each row carries a size (how many original samples it aggregates) and a
span set (which original positions those samples occupy, as disjoint
closed intervals).  Merge plans describe one round of pairwise merges in
original sequence coordinates; merge traces compose plans across layers
into a map from original positions to surviving token indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    CorruptionError,
    EmptySequenceError,
    ParameterError,
    PlanError,
    ShapeError,
)

Interval = tuple[int, int]
SpanSet = tuple[Interval, ...]

_VALID_MODES = ("fixed-r", "dynamic-tau")
_VALID_METRICS = ("cosine", "l1", "l2")


def coalesce_intervals(intervals: Iterable[Interval]) -> SpanSet:
    """Sort, check disjointness, and fuse adjacent closed integer intervals.

    ``(0, 0), (1, 3)`` fuses to ``(0, 3)``; overlap raises ``ShapeError``.
    """
    ordered = sorted(intervals)
    if not ordered:
        return ()
    out: list[Interval] = []
    cur_lo, cur_hi = ordered[0]
    for lo, hi in ordered[1:]:
        if lo <= cur_hi:
            raise ShapeError(f"overlapping spans: ({cur_lo},{cur_hi}) and ({lo},{hi})")
        if lo == cur_hi + 1:
            cur_hi = hi
        else:
            out.append((cur_lo, cur_hi))
            cur_lo, cur_hi = lo, hi
    out.append((cur_lo, cur_hi))
    return tuple(out)


def _span_size(span: SpanSet) -> int:
    return sum(hi - lo + 1 for lo, hi in span)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TokenMatrix:
    """Immutable token sequence with per-token sizes and origin spans.

    tokens: (t, d) float64.  sizes: (t,) positive int64.  spans: per token,
    a tuple of disjoint closed intervals over original positions, mutually
    disjoint across tokens and ordered by first position.
    """

    tokens: np.ndarray
    sizes: np.ndarray
    spans: tuple[SpanSet, ...]

    def __post_init__(self) -> None:
        tok = np.asarray(self.tokens, dtype=np.float64)
        if tok.ndim != 2:
            raise ShapeError(f"tokens must be 2-d (t, d), got shape {tok.shape}")
        t, _ = tok.shape
        if t < 1:
            raise EmptySequenceError("token matrix must contain at least one token")
        sz = np.asarray(self.sizes, dtype=np.int64)
        if sz.shape != (t,):
            raise ShapeError(f"sizes must have shape ({t},), got {sz.shape}")
        if np.any(sz < 1):
            raise ShapeError("token sizes must be positive")
        if len(self.spans) != t:
            raise ShapeError(f"spans must have {t} entries, got {len(self.spans)}")
        spans = tuple(coalesce_intervals(s) for s in self.spans)
        seen: list[Interval] = []
        for i, span in enumerate(spans):
            if not span:
                raise CorruptionError(f"token {i} has an empty span set")
            if any(lo < 0 for lo, _ in span):
                raise CorruptionError(f"token {i} has a negative span position")
            if _span_size(span) != int(sz[i]):
                raise CorruptionError(
                    f"token {i}: size {int(sz[i])} != span coverage {_span_size(span)}"
                )
            seen.extend(span)
        # cross-token disjointness and ordering by first covered position
        firsts = [span[0][0] for span in spans]
        if any(b <= a for a, b in zip(firsts, firsts[1:])):
            raise CorruptionError("token spans are not ordered by sequence position")
        try:
            coalesce_intervals(seen)
        except ShapeError as exc:
            raise CorruptionError(f"token spans overlap across tokens: {exc}") from None
        object.__setattr__(self, "tokens", _readonly(tok))
        object.__setattr__(self, "sizes", _readonly(sz))
        object.__setattr__(self, "spans", spans)

    @property
    def t(self) -> int:
        return self.tokens.shape[0]

    @property
    def d(self) -> int:
        return self.tokens.shape[1]

    @property
    def total_size(self) -> int:
        """Number of original samples still represented (sum of sizes)."""
        return int(self.sizes.sum())

    @classmethod
    def from_tokens(cls, tokens: np.ndarray) -> "TokenMatrix":
        """Wrap raw (t, d) features as unit-size tokens at positions 0..t-1."""
        tok = np.asarray(tokens, dtype=np.float64)
        if tok.ndim != 2:
            raise ShapeError(f"tokens must be 2-d (t, d), got shape {tok.shape}")
        t = tok.shape[0]
        return cls(tok, np.ones(t, dtype=np.int64), tuple(((i, i),) for i in range(t)))

    def replace_tokens(self, tokens: np.ndarray) -> "TokenMatrix":
        """Same sizes and spans, new feature rows (shape must match)."""
        tok = np.asarray(tokens, dtype=np.float64)
        if tok.shape != self.tokens.shape:
            raise ShapeError(f"replacement shape {tok.shape} != {self.tokens.shape}")
        return TokenMatrix(tok, self.sizes, self.spans)


class Partition(NamedTuple):
    a: np.ndarray  # indices into the sequence, even positions
    b: np.ndarray  # odd positions
    excluded: int | None  # most recent token when t is odd


def partition(x: TokenMatrix) -> Partition:
    """Split a sequence into alternating candidate sets A and B.

    Only the first 2*floor(t/2) tokens participate; for odd t the final
    (most recent) token is excluded and reported.  A takes even positions,
    B odd ones, so |A| == |B| == floor(t/2).
    """
    t = x.t
    if t < 1:
        raise EmptySequenceError("cannot partition an empty sequence")
    half = t // 2
    a = np.arange(0, 2 * half, 2, dtype=np.intp)
    b = np.arange(1, 2 * half, 2, dtype=np.intp)
    excluded = t - 1 if t % 2 == 1 else None
    return Partition(a, b, excluded)


@dataclass(frozen=True)
class MergePlan:
    """One round of merges: edges (a, b, similarity) in sequence coordinates.

    a is drawn from even positions, b from odd ones; a values are unique
    (each source merges once) while several a may share a destination b.
    The merged token lands at the earliest member position.  ``r`` is the
    applied edge count after clipping, ``requested_r`` what was asked for.
    """

    edges: tuple[tuple[int, int, float], ...]
    k: int
    r: int = field(default=-1)
    requested_r: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ParameterError(f"band width k must be >= 1, got {self.k}")
        norm = []
        for e in self.edges:
            if len(e) != 3:
                raise PlanError(f"edge must be (a, b, similarity), got {e!r}")
            a, b, s = int(e[0]), int(e[1]), float(e[2])
            if a < 0 or b < 0:
                raise PlanError(f"edge ({a}, {b}) has a negative position")
            if a % 2 != 0 or b % 2 != 1:
                raise PlanError(f"edge ({a}, {b}) breaks the even/odd convention")
            if abs(a // 2 - b // 2) >= self.k:
                raise PlanError(f"edge ({a}, {b}) falls outside band k={self.k}")
            norm.append((a, b, s))
        a_list = [a for a, _, _ in norm]
        if len(set(a_list)) != len(a_list):
            raise PlanError("duplicate source position: a token may merge only once")
        object.__setattr__(self, "edges", tuple(norm))
        if self.r == -1:
            object.__setattr__(self, "r", len(norm))
        if self.requested_r == -1:
            object.__setattr__(self, "requested_r", self.r)
        if self.r != len(norm):
            raise PlanError(f"r={self.r} but plan carries {len(norm)} edges")

    @classmethod
    def empty(cls, k: int = 1, requested_r: int = 0) -> "MergePlan":
        return cls(edges=(), k=k, r=0, requested_r=requested_r)

    def destinations(self) -> dict[int, list[int]]:
        """Group edges by destination b: {b: sorted list of source a's}."""
        groups: dict[int, list[int]] = {}
        for a, b, _ in self.edges:
            groups.setdefault(b, []).append(a)
        return {b: sorted(acc) for b, acc in sorted(groups.items())}

    def to_dict(self) -> dict:
        return {
            "edges": [[a, b, s] for a, b, s in self.edges],
            "k": self.k,
            "r": self.r,
        }


@dataclass(frozen=True)
class LayerSchedule:
    """Per-layer merge policy.

    mode: "fixed-r" merges a set count, "dynamic-tau" derives the count
    from a similarity threshold at run time.  q is the minimum number of
    tokens that must survive; metric names the similarity measure.
    """

    mode: str = "fixed-r"
    r: int = 0
    tau: float | None = None
    k: int = 1
    q: int = 1
    metric: str = "cosine"

    def __post_init__(self) -> None:
        if self.mode not in _VALID_MODES:
            raise ParameterError(f"mode must be one of {_VALID_MODES}, got {self.mode!r}")
        if self.mode == "fixed-r" and self.r < 0:
            raise ParameterError(f"r must be >= 0, got {self.r}")
        if self.mode == "dynamic-tau" and self.tau is None:
            raise ParameterError("dynamic-tau schedule requires tau")
        if self.k < 1:
            raise ParameterError(f"band width k must be >= 1, got {self.k}")
        if self.q < 1:
            raise ParameterError(f"survivor floor q must be >= 1, got {self.q}")
        if self.metric not in _VALID_METRICS:
            raise ParameterError(
                f"metric must be one of {_VALID_METRICS}, got {self.metric!r}"
            )

    def to_dict(self) -> dict:
        out: dict = {"mode": self.mode, "k": self.k, "q": self.q, "metric": self.metric}
        if self.mode == "fixed-r":
            out["r"] = self.r
        else:
            out["tau"] = self.tau
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSchedule":
        known = {"mode", "r", "tau", "k", "q", "metric"}
        extra = set(d) - known
        if extra:
            raise ParameterError(f"unknown schedule fields: {sorted(extra)}")
        return cls(
            mode=d.get("mode", "fixed-r"),
            r=int(d.get("r", 0)),
            tau=None if d.get("tau") is None else float(d["tau"]),
            k=int(d.get("k", 1)),
            q=int(d.get("q", 1)),
            metric=d.get("metric", "cosine"),
        )


def _progressive_map(t: int, plan: MergePlan, prune: bool) -> tuple[np.ndarray, int]:
    """Index map from the plan's input coordinates to its output coordinates.

    Returns (map of length t with -1 for orphaned slots, surviving count).
    Merged sources point at their destination's new index; pruned sources
    point nowhere.
    """
    removed = np.zeros(t, dtype=bool)
    redirect = np.arange(t, dtype=np.int64)
    for b, sources in plan.destinations().items():
        members = sorted(sources + [b])
        if members[-1] >= t:
            raise PlanError(f"edge position {members[-1]} out of range for t={t}")
        if prune:
            removed[b] = True
            redirect[b] = -1
        else:
            dest = members[0]
            for m in members:
                if m != dest:
                    removed[m] = True
                    redirect[m] = dest
    new_index = np.cumsum(~removed) - 1
    out = np.empty(t, dtype=np.int64)
    for i in range(t):
        tgt = redirect[i]
        out[i] = -1 if tgt == -1 else new_index[tgt]
    return out, int((~removed).sum())


@dataclass(frozen=True)
class MergeTrace:
    """Composition of merge plans across layers.

    final_map[p] is the index of the surviving token that carries original
    position p, or -1 when p was pruned away.  plans are stored in
    application order.
    """

    plans: tuple[MergePlan, ...]
    final_map: tuple[int, ...]
    surviving: int

    @classmethod
    def identity(cls, t: int) -> "MergeTrace":
        if t < 1:
            raise EmptySequenceError("trace requires at least one position")
        return cls(plans=(), final_map=tuple(range(t)), surviving=t)

    def compose(self, plan: MergePlan, prune: bool = False) -> "MergeTrace":
        """Append one layer's plan; positions follow their tokens forward."""
        step, surviving = _progressive_map(self.surviving, plan, prune)
        new_map = tuple(
            -1 if cur == -1 else int(step[cur]) for cur in self.final_map
        )
        return MergeTrace(self.plans + (plan,), new_map, surviving)

    def cluster_members(self) -> dict[int, list[int]]:
        """Surviving token index -> original positions it represents."""
        out: dict[int, list[int]] = {}
        for pos, tok in enumerate(self.final_map):
            if tok >= 0:
                out.setdefault(tok, []).append(pos)
        return out

    def to_dict(self) -> dict:
        return {
            "layers": [p.to_dict() for p in self.plans],
            "final_map": list(self.final_map),
        }


def trace_compose(trace: MergeTrace, plans: Sequence[MergePlan]) -> MergeTrace:
    """Fold several plans into a trace in order."""
    for plan in plans:
        trace = trace.compose(plan)
    return trace
