"""Toy sequence models with exact FLOP accounting under token merging.

The models are deliberately small (numpy, fixed seeded weights, no
training) but structurally faithful: a multi-head attention encoder that
merges after attention and before the MLP, a causal decoder that merges
between self- and cross-attention, and a gated long-convolution stand-in
for state-space blocks that merges after its operator.

FLOP conventions (one multiply-accumulate = 2 FLOPs):
  attention scores        2 * t_q * t_k * d
  attention weighted sum  2 * t_q * t_k * d
  each linear projection  2 * t * d_in * d_out
  MLP (two linears)       4 * t * d * h
  merge overhead          2 * d per similarity evaluation
                          + 3 * d per applied edge
Attention and its projections run on pre-merge counts; the MLP runs on
post-merge counts.  A fixed-r schedule with r = 0 disables merging at
that layer entirely (no similarity pass, no overhead), which is what the
merge-free reference also uses.  Dynamic schedules always pay for the
similarity pass, and their threshold decisions reuse those same scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import LayerSchedule, MergePlan, MergeTrace, TokenMatrix, partition
from .errors import (
    ConfigError,
    ContractViolationError,
    ParameterError,
    ScheduleError,
    SeqMergeError,
    ShapeError,
)
from .merge import merge_apply, select_top_r, similarity_banded

_TOKENIZERS = ("timestep", "patch")
_HOOKS = ("after-attention", "after-operator")

# number of content-independent selection blocks used by the decoder;
# keeps early-sequence merge choices out of reach of late-sequence content
DECODER_QUOTA_BLOCKS = 4


# ---------------------------------------------------------------------------
# configuration


def _default_decoder_schedule() -> tuple[LayerSchedule, ...]:
    return (LayerSchedule(mode="fixed-r", r=0, k=1, q=1),)


@dataclass(frozen=True)
class ModelConfig:
    """Model shape plus per-layer merge schedules.

    L encoder layers of width d with `heads` attention heads and MLP
    hidden width h; inputs are m samples of n variates, forecasts run p
    steps.  schedule gives one entry per encoder layer; decoder_schedule
    (default: one merge-free layer) drives the causal stack.
    """

    L: int
    d: int
    h: int
    heads: int
    m: int
    n: int
    p: int
    schedule: tuple[LayerSchedule, ...]
    merge_hook: str = "after-attention"
    proportional_attention: bool = False
    seed: int = 0
    decoder_schedule: tuple[LayerSchedule, ...] = field(
        default_factory=_default_decoder_schedule
    )
    tokenizer: str = "timestep"
    patch_len: int | None = None

    def __post_init__(self) -> None:
        for name in ("L", "d", "h", "heads", "m", "n", "p"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v!r}")
        if self.d % self.heads != 0:
            raise ParameterError(f"d={self.d} not divisible by heads={self.heads}")
        if self.merge_hook not in _HOOKS:
            raise ParameterError(
                f"merge_hook must be one of {_HOOKS}, got {self.merge_hook!r}"
            )
        if self.tokenizer not in _TOKENIZERS:
            raise ParameterError(
                f"tokenizer must be one of {_TOKENIZERS}, got {self.tokenizer!r}"
            )
        if self.tokenizer == "patch":
            if self.patch_len is None or self.patch_len < 1:
                raise ParameterError("patch tokenizer requires a positive patch_len")
            if self.m % self.patch_len != 0:
                raise ParameterError(
                    f"m={self.m} is not a multiple of patch_len={self.patch_len}"
                )
        sched = tuple(self.schedule)
        if len(sched) != self.L:
            raise ScheduleError(
                f"schedule has {len(sched)} entries for L={self.L} layers"
            )
        dec = tuple(self.decoder_schedule)
        if not dec:
            raise ScheduleError("decoder_schedule must contain at least one layer")
        object.__setattr__(self, "schedule", sched)
        object.__setattr__(self, "decoder_schedule", dec)

    @property
    def tokens_in(self) -> int:
        """Encoder token count produced by the configured tokenizer."""
        if self.tokenizer == "patch":
            return self.m // int(self.patch_len)  # type: ignore[arg-type]
        return self.m

    def to_dict(self) -> dict:
        out: dict = {
            "L": self.L,
            "d": self.d,
            "h": self.h,
            "heads": self.heads,
            "m": self.m,
            "n": self.n,
            "p": self.p,
            "schedule": [s.to_dict() for s in self.schedule],
            "merge_hook": self.merge_hook,
            "proportional_attention": self.proportional_attention,
            "seed": self.seed,
            "decoder_schedule": [s.to_dict() for s in self.decoder_schedule],
            "tokenizer": self.tokenizer,
        }
        if self.patch_len is not None:
            out["patch_len"] = self.patch_len
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        required = {"L", "d", "h", "heads", "m", "n", "p", "schedule"}
        optional = {
            "merge_hook",
            "proportional_attention",
            "seed",
            "decoder_schedule",
            "tokenizer",
            "patch_len",
        }
        missing = required - set(raw)
        if missing:
            raise ConfigError(f"config missing required fields: {sorted(missing)}")
        unknown = set(raw) - required - optional
        if unknown:
            raise ConfigError(f"config has unknown fields: {sorted(unknown)}")
        try:
            schedule = tuple(LayerSchedule.from_dict(s) for s in raw["schedule"])
            kwargs: dict = {}
            if "decoder_schedule" in raw:
                kwargs["decoder_schedule"] = tuple(
                    LayerSchedule.from_dict(s) for s in raw["decoder_schedule"]
                )
            if "patch_len" in raw and raw["patch_len"] is not None:
                kwargs["patch_len"] = int(raw["patch_len"])
            return cls(
                L=int(raw["L"]),
                d=int(raw["d"]),
                h=int(raw["h"]),
                heads=int(raw["heads"]),
                m=int(raw["m"]),
                n=int(raw["n"]),
                p=int(raw["p"]),
                schedule=schedule,
                merge_hook=raw.get("merge_hook", "after-attention"),
                proportional_attention=bool(raw.get("proportional_attention", False)),
                seed=int(raw.get("seed", 0)),
                tokenizer=raw.get("tokenizer", "timestep"),
                **kwargs,
            )
        except ConfigError:
            raise
        except (SeqMergeError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str) -> "ModelConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw)

    def with_uniform_schedule(self, layer: LayerSchedule) -> "ModelConfig":
        """Replace every encoder layer's schedule with the same entry."""
        return replace(self, schedule=(layer,) * self.L)


# ---------------------------------------------------------------------------
# FLOP ledger


@dataclass(frozen=True)
class LayerFlops:
    """Exact FLOP decomposition of one layer (integers, MAC = 2 FLOPs)."""

    t_in: int
    t_out: int
    attention: int = 0
    projections: int = 0
    mlp: int = 0
    operator: int = 0
    merge_overhead: int = 0

    def __post_init__(self) -> None:
        for name in ("attention", "projections", "mlp", "operator", "merge_overhead"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} FLOPs cannot be negative")
        if self.t_out > self.t_in:
            raise ParameterError(
                f"layer cannot grow the sequence: {self.t_in} -> {self.t_out}"
            )

    @property
    def total(self) -> int:
        return (
            self.attention
            + self.projections
            + self.mlp
            + self.operator
            + self.merge_overhead
        )

    def to_dict(self) -> dict:
        return {
            "t_in": self.t_in,
            "t_out": self.t_out,
            "attention": self.attention,
            "projections": self.projections,
            "mlp": self.mlp,
            "operator": self.operator,
            "merge_overhead": self.merge_overhead,
            "total": self.total,
        }


@dataclass
class FlopLedger:
    """Per-layer FLOPs for a run and for its merge-free reference."""

    layers: list[LayerFlops] = field(default_factory=list)
    ref_layers: list[LayerFlops] = field(default_factory=list)

    def add(self, layer: LayerFlops, ref: LayerFlops) -> None:
        self.layers.append(layer)
        self.ref_layers.append(ref)

    @property
    def total(self) -> int:
        return sum(l.total for l in self.layers)

    @property
    def total_ref(self) -> int:
        return sum(l.total for l in self.ref_layers)

    def speedup(self) -> float:
        if self.total == 0:
            raise ParameterError("empty ledger has no speed-up")
        return self.total_ref / self.total

    def attention_speedup(self) -> float:
        """Speed-up counting attention score/sum FLOPs only."""
        spent = sum(l.attention for l in self.layers)
        if spent == 0:
            raise ParameterError("no attention FLOPs recorded")
        return sum(l.attention for l in self.ref_layers) / spent

    def merged_with(self, other: "FlopLedger") -> "FlopLedger":
        return FlopLedger(
            layers=self.layers + other.layers,
            ref_layers=self.ref_layers + other.ref_layers,
        )

    def to_dict(self) -> dict:
        return {
            "layers": [l.to_dict() for l in self.layers],
            "ref_layers": [l.to_dict() for l in self.ref_layers],
            "total": self.total,
            "total_ref": self.total_ref,
        }


def speedup_bound(L: int) -> float:
    """Ceiling on attention speed-up when tokens halve after every layer.

    Equals 3 * L * 4**(L-1) / (4**L - 1): 1.0 for L = 1, 1.6 for L = 2,
    approaching 3L/4 from below as L grows.
    """
    if not isinstance(L, int) or L < 1:
        raise ParameterError(f"L must be a positive integer, got {L!r}")
    return 3 * L * 4 ** (L - 1) / (4**L - 1)


# ---------------------------------------------------------------------------
# tokenizers


def sinusoidal_position_encoding(t: int, d: int) -> np.ndarray:
    """Standard interleaved sin/cos position features, shape (t, d)."""
    if t < 1 or d < 1:
        raise ParameterError("position encoding needs t >= 1 and d >= 1")
    pos = np.arange(t, dtype=np.float64)[:, None]
    half = (d + 1) // 2
    freqs = np.exp(-np.log(10000.0) * (2 * np.arange(half) / d))
    args = pos * freqs[None, :]
    pe = np.zeros((t, d))
    pe[:, 0::2] = np.sin(args)
    pe[:, 1::2] = np.cos(args[:, : d // 2])
    return pe


def _check_series(series: np.ndarray) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 2:
        raise ShapeError(f"series must be 2-d (samples, variates), got {s.shape}")
    if s.shape[0] < 1 or s.shape[1] < 1:
        raise ShapeError(f"series must be non-empty, got shape {s.shape}")
    return s


def tokenize_timestep(series: np.ndarray, d: int, seed: int) -> TokenMatrix:
    """One token per sample: seeded linear lift n -> d plus position code."""
    s = _check_series(series)
    m, n = s.shape
    rng = np.random.default_rng([seed, 11])
    w = rng.normal(0.0, n**-0.5, size=(n, d))
    tokens = s @ w + sinusoidal_position_encoding(m, d)
    return TokenMatrix.from_tokens(tokens)


def tokenize_patch(series: np.ndarray, d: int, patch_len: int, seed: int) -> TokenMatrix:
    """One token per patch of patch_len samples; spans cover the samples."""
    s = _check_series(series)
    m, n = s.shape
    if patch_len < 1:
        raise ParameterError(f"patch_len must be >= 1, got {patch_len}")
    if m % patch_len != 0:
        raise ShapeError(f"{m} samples do not divide into patches of {patch_len}")
    t = m // patch_len
    rng = np.random.default_rng([seed, 12])
    w = rng.normal(0.0, (patch_len * n) ** -0.5, size=(patch_len * n, d))
    tokens = s.reshape(t, patch_len * n) @ w + sinusoidal_position_encoding(t, d)
    sizes = np.full(t, patch_len, dtype=np.int64)
    spans = tuple(((j * patch_len, (j + 1) * patch_len - 1),) for j in range(t))
    return TokenMatrix(tokens, sizes, spans)


def tokenize(series: np.ndarray, config: ModelConfig) -> TokenMatrix:
    if config.tokenizer == "patch":
        return tokenize_patch(series, config.d, int(config.patch_len), config.seed)
    return tokenize_timestep(series, config.d, config.seed)


# ---------------------------------------------------------------------------
# layers


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def attention(
    queries: np.ndarray,
    keys: np.ndarray,
    values: np.ndarray,
    out_proj: np.ndarray,
    heads: int,
    *,
    key_sizes: np.ndarray | None = None,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head scaled dot-product attention on projected inputs.

    queries/keys/values are already projected (t, d).  key_sizes, when
    given, adds log(size) to every key's logits so a merged token draws
    attention in proportion to the samples it represents.  mask is a
    boolean (t_q, t_k) array; masked-out cells get exactly zero weight.
    Returns (output after out_proj, per-head weights (heads, t_q, t_k)).
    """
    t_q, d = queries.shape
    t_k = keys.shape[0]
    dh = d // heads
    qh = queries.reshape(t_q, heads, dh).transpose(1, 0, 2)
    kh = keys.reshape(t_k, heads, dh).transpose(1, 0, 2)
    vh = values.reshape(t_k, heads, dh).transpose(1, 0, 2)
    scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
    if key_sizes is not None:
        scores = scores + np.log(key_sizes.astype(np.float64))[None, None, :]
    if mask is not None:
        scores = np.where(mask[None, :, :], scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w = w / w.sum(axis=-1, keepdims=True)
    out = (w @ vh).transpose(1, 0, 2).reshape(t_q, d) @ out_proj
    return out, w


@dataclass
class _AttnWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray


@dataclass
class _MlpWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def _draw_attn(rng: np.random.Generator, d: int) -> _AttnWeights:
    s = d**-0.5
    return _AttnWeights(
        wq=rng.normal(0.0, s, (d, d)),
        wk=rng.normal(0.0, s, (d, d)),
        wv=rng.normal(0.0, s, (d, d)),
        wo=rng.normal(0.0, s, (d, d)),
    )


def _draw_mlp(rng: np.random.Generator, d: int, h: int) -> _MlpWeights:
    return _MlpWeights(
        w1=rng.normal(0.0, d**-0.5, (d, h)),
        b1=np.zeros(h),
        w2=rng.normal(0.0, h**-0.5, (h, d)),
        b2=np.zeros(d),
    )


def _build_encoder_weights(config: ModelConfig) -> list[dict]:
    rng = np.random.default_rng([config.seed, 101])
    return [
        {"attn": _draw_attn(rng, config.d), "mlp": _draw_mlp(rng, config.d, config.h)}
        for _ in range(config.L)
    ]


def _build_decoder_weights(config: ModelConfig) -> tuple[list[dict], np.ndarray, np.ndarray]:
    rng = np.random.default_rng([config.seed, 202])
    layers = [
        {
            "self": _draw_attn(rng, config.d),
            "cross": _draw_attn(rng, config.d),
            "mlp": _draw_mlp(rng, config.d, config.h),
        }
        for _ in range(len(config.decoder_schedule))
    ]
    head_w = rng.normal(0.0, config.d**-0.5, (config.d, config.n))
    head_b = np.zeros(config.n)
    return layers, head_w, head_b


def _build_ssm_weights(config: ModelConfig, t0: int) -> list[dict]:
    rng = np.random.default_rng([config.seed, 303])
    layers = []
    taps = np.arange(t0, dtype=np.float64)[:, None]
    lengths = np.exp(np.linspace(0.0, np.log(max(t0, 2)), config.d))[None, :]
    for _ in range(config.L):
        filt = rng.normal(size=(t0, config.d)) * np.exp(-taps / lengths) * t0**-0.5
        layers.append(
            {
                "filter": filt,
                "gate_w": rng.normal(0.0, config.d**-0.5, (config.d, config.d)),
                "gate_b": np.zeros(config.d),
            }
        )
    return layers


def _mlp_forward(x: np.ndarray, w: _MlpWeights) -> np.ndarray:
    return gelu(x @ w.w1 + w.b1) @ w.w2 + w.b2


def _merge_step(
    x: TokenMatrix,
    sched: LayerSchedule,
    *,
    k_cap: int | None = None,
    quota_blocks: int = 1,
) -> tuple[TokenMatrix, MergePlan, int]:
    """Run one schedule entry; returns (matrix, plan, similarity evals).

    fixed-r with r = 0 means merging is off: no similarity pass happens
    and the step is free.  Dynamic schedules always score the candidates
    and derive r from the threshold.
    """
    if x.t < 2 or (sched.mode == "fixed-r" and sched.r == 0):
        return x, MergePlan.empty(k=sched.k, requested_r=0), 0
    k_eff = min(sched.k, x.t // 2)
    if k_cap is not None:
        k_eff = min(k_eff, k_cap)
    part = partition(x)
    scores = similarity_banded(x, part.a, part.b, k_eff, sched.metric)
    if sched.mode == "fixed-r":
        r_req = sched.r
    else:
        _, best_s = scores.best_per_a()
        r_req = int((best_s >= sched.tau).sum())
    plan = select_top_r(scores, r_req, sched.q, x.t, quota_blocks=quota_blocks)
    return merge_apply(x, plan), plan, scores.evaluation_count


def _overhead(d: int, evals: int, edges: int) -> int:
    return 2 * d * evals + 3 * d * edges


# ---------------------------------------------------------------------------
# forward passes


def encoder_forward(
    x: TokenMatrix, config: ModelConfig
) -> tuple[TokenMatrix, MergeTrace, FlopLedger]:
    """Encoder stack: attention, residual, merge, MLP, residual per layer.

    Returns the final token matrix, the composed merge trace over input
    token positions, and the FLOP ledger (run vs merge-free reference at
    the input length).
    """
    if config.merge_hook != "after-attention":
        raise ContractViolationError(
            "encoder_forward requires merge_hook 'after-attention'"
        )
    weights = _build_encoder_weights(config)
    d, h = config.d, config.h
    t0 = x.t
    trace = MergeTrace.identity(t0)
    ledger = FlopLedger()
    sizes_arg = None
    for sched, w in zip(config.schedule, weights):
        t_in = x.t
        aw: _AttnWeights = w["attn"]
        if config.proportional_attention:
            sizes_arg = x.sizes
        out, _ = attention(
            x.tokens @ aw.wq,
            x.tokens @ aw.wk,
            x.tokens @ aw.wv,
            aw.wo,
            config.heads,
            key_sizes=sizes_arg,
        )
        x = x.replace_tokens(x.tokens + out)
        x, plan, evals = _merge_step(x, sched)
        trace = trace.compose(plan)
        x = x.replace_tokens(x.tokens + _mlp_forward(x.tokens, w["mlp"]))
        ledger.add(
            LayerFlops(
                t_in=t_in,
                t_out=x.t,
                attention=4 * t_in * t_in * d,
                projections=8 * t_in * d * d,
                mlp=4 * x.t * d * h,
                merge_overhead=_overhead(d, evals, plan.r),
            ),
            LayerFlops(
                t_in=t0,
                t_out=t0,
                attention=4 * t0 * t0 * d,
                projections=8 * t0 * d * d,
                mlp=4 * t0 * d * h,
            ),
        )
    return x, trace, ledger


def decoder_forward(
    x_dec: TokenMatrix, enc_out: TokenMatrix, config: ModelConfig
) -> tuple[np.ndarray, MergeTrace, FlopLedger]:
    """Causal decoder: masked self-attention, causal merge, cross-attention,
    MLP, then a final unmerge and linear head.

    Merging uses k = 1 with the selection budget apportioned over
    DECODER_QUOTA_BLOCKS content-independent stretches, so with fixed-r
    schedules a change to future inputs cannot move an earlier merge.
    Dynamic schedules derive r from all candidates and give that up.
    The head maps the unmerged d-wide tokens to n variates, one forecast
    row per original decoder position.
    """
    for sched in config.decoder_schedule:
        if sched.k != 1:
            raise ContractViolationError(
                f"decoder schedules must keep k = 1, got k = {sched.k}"
            )
    layers, head_w, head_b = _build_decoder_weights(config)
    d, h = config.d, config.h
    t0 = x_dec.t
    t_enc = enc_out.t
    trace = MergeTrace.identity(t0)
    ledger = FlopLedger()
    x = x_dec
    prop = config.proportional_attention
    for sched, w in zip(config.decoder_schedule, layers):
        t_in = x.t
        sw: _AttnWeights = w["self"]
        mask = np.tril(np.ones((t_in, t_in), dtype=bool))
        out, _ = attention(
            x.tokens @ sw.wq,
            x.tokens @ sw.wk,
            x.tokens @ sw.wv,
            sw.wo,
            config.heads,
            key_sizes=x.sizes if prop else None,
            mask=mask,
        )
        x = x.replace_tokens(x.tokens + out)
        x, plan, evals = _merge_step(
            x, sched, k_cap=1, quota_blocks=DECODER_QUOTA_BLOCKS
        )
        trace = trace.compose(plan)
        t_mid = x.t
        cw: _AttnWeights = w["cross"]
        out, _ = attention(
            x.tokens @ cw.wq,
            enc_out.tokens @ cw.wk,
            enc_out.tokens @ cw.wv,
            cw.wo,
            config.heads,
            key_sizes=enc_out.sizes if prop else None,
        )
        x = x.replace_tokens(x.tokens + out)
        x = x.replace_tokens(x.tokens + _mlp_forward(x.tokens, w["mlp"]))
        ledger.add(
            LayerFlops(
                t_in=t_in,
                t_out=t_mid,
                attention=4 * t_in * t_in * d + 4 * t_mid * t_enc * d,
                projections=8 * t_in * d * d + 4 * t_mid * d * d + 4 * t_enc * d * d,
                mlp=4 * t_mid * d * h,
                merge_overhead=_overhead(d, evals, plan.r),
            ),
            LayerFlops(
                t_in=t0,
                t_out=t0,
                attention=4 * t0 * t0 * d + 4 * t0 * t_enc * d,
                projections=8 * t0 * d * d + 4 * t0 * d * d + 4 * t_enc * d * d,
                mlp=4 * t0 * d * h,
            ),
        )
    from .causal import unmerge  # local import avoids a cycle

    restored = unmerge(x)
    forecast = restored.tokens @ head_w + head_b
    return forecast, trace, ledger


def _causal_fftconv(u: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Depthwise causal convolution via FFT; u and filt are (t, d)."""
    t = u.shape[0]
    n_fft = 1 << max(1, 2 * t - 1).bit_length()
    spec = np.fft.rfft(u, n=n_fft, axis=0) * np.fft.rfft(filt, n=n_fft, axis=0)
    return np.fft.irfft(spec, n=n_fft, axis=0)[:t]


def _ssm_operator_flops(t: int, d: int) -> int:
    # three real FFTs of length n_fft (5 n log2 n each), a complex
    # pointwise product (6 per bin), and the elementwise gate product
    n_fft = 1 << max(1, 2 * t - 1).bit_length()
    log2n = n_fft.bit_length() - 1
    return d * (15 * n_fft * log2n + 6 * (n_fft // 2 + 1)) + t * d


def ssm_forward(
    x: TokenMatrix, config: ModelConfig
) -> tuple[TokenMatrix, MergeTrace, FlopLedger]:
    """Gated long-convolution stack with causal merging after the operator.

    Each layer applies a depthwise causal FFT convolution, multiplies by a
    sigmoid gate of a linear projection, adds the residual, then merges
    adjacent pairs (the schedule must keep k = 1; anything wider would let
    the recurrence skip state).
    """
    if config.merge_hook != "after-operator":
        raise ContractViolationError("ssm_forward requires merge_hook 'after-operator'")
    for sched in config.schedule:
        if sched.k != 1:
            raise ContractViolationError(
                f"state-space schedules must keep k = 1, got k = {sched.k}"
            )
    weights = _build_ssm_weights(config, x.t)
    d = config.d
    t0 = x.t
    trace = MergeTrace.identity(t0)
    ledger = FlopLedger()
    for sched, w in zip(config.schedule, weights):
        t_in = x.t
        u = x.tokens
        conv = _causal_fftconv(u, w["filter"][:t_in])
        gate = 1.0 / (1.0 + np.exp(-(u @ w["gate_w"] + w["gate_b"])))
        x = x.replace_tokens(u + gate * conv)
        x, plan, evals = _merge_step(x, sched, k_cap=1)
        trace = trace.compose(plan)
        ledger.add(
            LayerFlops(
                t_in=t_in,
                t_out=x.t,
                projections=2 * t_in * d * d,
                operator=_ssm_operator_flops(t_in, d),
                merge_overhead=_overhead(d, evals, plan.r),
            ),
            LayerFlops(
                t_in=t0,
                t_out=t0,
                projections=2 * t0 * d * d,
                operator=_ssm_operator_flops(t0, d),
            ),
        )
    return x, trace, ledger


def halving_schedule(t0: int, L: int, metric: str = "cosine") -> tuple[LayerSchedule, ...]:
    """Schedule that merges half the tokens at every layer (global band).

    Requires t0 divisible by 2**L so each layer sees an even count.
    """
    if t0 % (1 << L) != 0:
        raise ParameterError(f"t0={t0} must be divisible by 2**{L}")
    entries = []
    t = t0
    for _ in range(L):
        entries.append(
            LayerSchedule(mode="fixed-r", r=t // 2, k=max(1, t // 2), metric=metric)
        )
        t //= 2
    return tuple(entries)


def batched_dynamic_counts(
    batch: Sequence[TokenMatrix], tau: float, k: int, metric: str = "cosine"
) -> list[int]:
    """Per-element counts of best-per-A candidates at or above tau."""
    counts = []
    for x in batch:
        part = partition(x)
        if len(part.a) == 0:
            counts.append(0)
            continue
        scores = similarity_banded(x, part.a, part.b, min(k, len(part.a)), metric)
        counts.append(int((scores.best_per_a()[1] >= tau).sum()))
    return counts
