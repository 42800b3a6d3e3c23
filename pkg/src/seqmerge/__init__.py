"""Token merging for sequence models: exact complexity accounting,
causality-preserving schedules, and spectral redundancy diagnostics."""

from .core import (
    LayerSchedule,
    MergePlan,
    MergeTrace,
    Partition,
    TokenMatrix,
    partition,
    trace_compose,
)
from .causal import causal_merge, expand_pruned, unmerge
from .merge import (
    BandedSimilarity,
    dynamic_r,
    merge_apply,
    prune_apply,
    select_top_r,
    similarity_banded,
)
from .models import (
    FlopLedger,
    LayerFlops,
    ModelConfig,
    attention,
    decoder_forward,
    encoder_forward,
    halving_schedule,
    speedup_bound,
    ssm_forward,
    tokenize,
    tokenize_patch,
    tokenize_timestep,
)
from .signals import (
    SignalReport,
    analyze_series,
    gaussian_lowpass,
    redundancy_profile,
    spectral_entropy,
    thd,
)

__version__ = "0.1.0"

__all__ = [
    "BandedSimilarity",
    "FlopLedger",
    "LayerFlops",
    "LayerSchedule",
    "MergePlan",
    "MergeTrace",
    "ModelConfig",
    "Partition",
    "SignalReport",
    "TokenMatrix",
    "analyze_series",
    "attention",
    "causal_merge",
    "decoder_forward",
    "dynamic_r",
    "encoder_forward",
    "expand_pruned",
    "gaussian_lowpass",
    "halving_schedule",
    "merge_apply",
    "partition",
    "prune_apply",
    "redundancy_profile",
    "select_top_r",
    "similarity_banded",
    "spectral_entropy",
    "speedup_bound",
    "ssm_forward",
    "thd",
    "tokenize",
    "tokenize_patch",
    "tokenize_timestep",
    "trace_compose",
    "unmerge",
]
