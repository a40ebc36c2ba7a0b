"""Exception types raised across the toolkit.

Everything inherits from :class:`TriloopError` so callers can catch the
whole family at once.  Errors that signal bad input values also inherit
from :class:`ValueError` to stay friendly to generic handling.
"""


class TriloopError(Exception):
    """Base class for all errors raised by this package."""


class RecordError(TriloopError, ValueError):
    """A record violates a field-level constraint."""


class MalformedRecord(TriloopError):
    """A serialized record could not be parsed.

    Carries the 1-based line number of the offending line when the
    record came from a stream.
    """

    def __init__(self, reason: str, line_no: int | None = None):
        self.reason = reason
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"{reason}{where}")


class DuplicateId(TriloopError):
    """Two records in the same collection share an id."""


class NoBox(TriloopError, ValueError):
    """Text does not contain exactly one coordinate quadruple."""


class InvalidBox(TriloopError, ValueError):
    """A coordinate quadruple is out of range or mis-ordered."""


class EmptyText(TriloopError, ValueError):
    """A text-level measure received a token-free string."""


class EmptyCorpus(TriloopError, ValueError):
    """A corpus-level statistic received no usable tokens."""


class NoNgrams(TriloopError, ValueError):
    """No text in the corpus is long enough to form a single n-gram."""


class NoComponents(TriloopError, ValueError):
    """A combined score was requested with both components absent."""


class InvalidRatios(TriloopError, ValueError):
    """Mask ratios are negative or do not sum to one."""


class UnparseableOutput(TriloopError, ValueError):
    """Model output carries no recognizable field markers."""


class ProviderUnavailable(TriloopError):
    """An embedding provider could not be reached or gave a bad reply."""


class ModelError(TriloopError):
    """A model backend failed after exhausting its retries."""


class ConfigError(TriloopError, ValueError):
    """A configuration value is out of its allowed range."""


class SeedDatasetError(TriloopError):
    """The seed dataset for a refinement round could not be loaded."""


class RankFailure(TriloopError):
    """Repeated draws failed to produce a well-conditioned mixing matrix."""


class NonPositiveScale(TriloopError, ValueError):
    """A scale parameter that must be strictly positive is not."""


class ShapeMismatch(TriloopError, ValueError):
    """An array does not have the expected dimensionality."""


class Divergence(TriloopError):
    """Training produced a non-finite loss."""


class EmptyTestSet(TriloopError, ValueError):
    """Evaluation was requested on zero samples."""
