"""Exception hierarchy shared across the package.

Every error raised by this package derives from IntevalError so callers can
catch framework failures without swallowing programming errors.
"""


class IntevalError(Exception):
    """Base class for all package-specific errors."""


class CorpusError(IntevalError):
    """Raised for malformed documents, unparseable conclusions, or bad splits."""


class HarnessError(IntevalError):
    """Raised for classifier harness failures: empty inputs, missing weights,
    divergent training."""


class CapabilityError(IntevalError):
    """Raised when an operation needs model internals the harness does not expose.

    Black-box harnesses (prediction only) cannot serve gradient- or
    attention-based attribution; asking for those must fail loudly instead of
    silently degrading to a different method.
    """


class AttributionError(IntevalError):
    """Raised when a scoring technique cannot produce scores for an input."""


class OptimizationError(IntevalError):
    """Raised when mask optimization diverges or is configured inconsistently."""


class SelectionError(IntevalError):
    """Raised for invalid rationale-selection configurations."""


class EvaluationError(IntevalError):
    """Raised for inconsistent metric inputs: probabilities outside [0, 1],
    rationale archives that do not cover the requested documents, or
    infeasible control budgets."""


class JudgeError(IntevalError):
    """Raised when a judge endpoint misbehaves or a response cannot be parsed."""


class AnnotationError(IntevalError):
    """Raised for schema-violating annotation payloads or unknown tasks."""


class AgreementError(IntevalError):
    """Raised when agreement statistics are requested on unusable label vectors."""
