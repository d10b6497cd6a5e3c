"""Exception hierarchy.

Exit codes follow the CLI contract: 2 config, 3 data, 4 backend, 5 analysis.
"""

from __future__ import annotations


class ProdChoiceError(Exception):
    exit_code = 1


class ConfigError(ProdChoiceError):
    exit_code = 2


class DataError(ProdChoiceError):
    exit_code = 3


class BackendError(ProdChoiceError):
    exit_code = 4


class AnalysisError(ProdChoiceError):
    exit_code = 5


# -- data --------------------------------------------------------------------

class EmptyDialogue(DataError):
    """Nothing survived backchannel filtering for a dialogue."""


class NoPrecedingTurn(DataError):
    """A choice item sits at the very start of its dialogue."""


class AlignmentError(DataError):
    """Subtokens cannot be partitioned into the requested word sequence."""


class InsufficientData(DataError):
    """Fewer observations than a statistical routine requires."""


class ZeroVariance(DataError):
    """Both samples are constant; no test statistic exists."""


class InvalidProbability(DataError):
    """A success probability fell outside [0, 1]."""


class InvalidObservation(DataError):
    """Observed count outside the distribution support."""


class MissingInput(DataError):
    """A required upstream artifact is absent."""


class PrefixViolation(DataError):
    """A generated completion restates a different or garbled context."""


class InsufficientParaphrases(DataError):
    """Fewer unique valid paraphrases than requested, after retrying."""


class UnparseableVerdict(DataError):
    """Judge response did not start with yes or no."""


# -- backend -----------------------------------------------------------------

class BackendUnavailable(BackendError):
    """Transport failure talking to a model endpoint."""


class FixtureMiss(BackendError):
    """Replay mode saw a request hash with no recorded response."""

    def __init__(self, request_hash: str, capability: str = ""):
        self.request_hash = request_hash
        self.capability = capability
        super().__init__(
            f"no recorded fixture for {capability or 'request'} hash {request_hash}"
        )


class ContextOverflow(BackendError):
    """The target alone exceeds the scorer's context window."""


class RefusalDetected(BackendError):
    """The generator refused and the retry budget is spent."""


class InvalidRequest(BackendError):
    """Request violates a gateway precondition (e.g. empty target)."""


class InvalidResponse(BackendError):
    """Backend reply violates the wire contract."""


# -- analysis ----------------------------------------------------------------

class NonConvergence(AnalysisError):
    """Optimizer hit the iteration cap before the gradient tolerance."""


class PerfectSeparation(AnalysisError):
    """Logistic MLE diverges; a predictor separates the outcomes."""


class NonIdentifiable(AnalysisError):
    """Every choice set has constant costs; the sensitivity is undefined."""


class DegenerateVariance(AnalysisError):
    """All cost differences are equal; standardization impossible."""


class UndefinedForSingleton(DataError):
    """Local uniformity needs at least two continuation words."""
