"""Exception hierarchy shared across the toolkit.

Every error carries a short machine-readable ``code`` and the process exit
code the CLI maps it to (0 ok, 2 config, 3 data, 4 internal).
"""

from __future__ import annotations


class SeqMergeError(Exception):
    """Base class for all toolkit errors."""

    code = "internal"
    exit_code = 4


class ParameterError(SeqMergeError, ValueError):
    """A scalar argument is outside its documented range."""

    code = "parameter"


class EmptySequenceError(ParameterError):
    code = "empty-sequence"


class ShapeError(SeqMergeError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""

    code = "shape"


class BatchShapeError(ShapeError):
    code = "batch-shape"


class PlanError(SeqMergeError, ValueError):
    """A merge plan is malformed or incompatible with its token matrix."""

    code = "plan"


class ScheduleError(SeqMergeError, ValueError):
    """A layer schedule is invalid for the model configuration."""

    code = "schedule"


class ContractViolationError(SeqMergeError):
    """An operation was asked to run outside its architectural contract."""

    code = "contract"


class CorruptionError(SeqMergeError):
    """Token sizes and spans disagree; the matrix cannot be trusted."""

    code = "corruption"


class UndefinedThdError(SeqMergeError, ValueError):
    """THD requested for a series with zero fundamental power."""

    code = "undefined-thd"


class DataError(SeqMergeError):
    """Input data could not be ingested."""

    code = "data"
    exit_code = 3


class ConfigError(SeqMergeError):
    """A configuration file or flag set is invalid."""

    code = "config"
    exit_code = 2
