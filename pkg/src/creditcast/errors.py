"""Exception types raised across the pipeline."""


class CreditCastError(Exception):
    """Base class for all package errors."""


class UnknownRating(CreditCastError, ValueError):
    def __init__(self, code):
        self.code = code
        super().__init__(f"unknown rating code: {code!r}")


class SchemaError(CreditCastError, ValueError):
    pass


class EmptyClass(CreditCastError, ValueError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"class {label!r} has no samples")


class EmptySplit(CreditCastError, ValueError):
    pass


class NotFitted(CreditCastError, RuntimeError):
    pass


class ClusterCountError(CreditCastError, RuntimeError):
    def __init__(self, achieved, requested):
        self.achieved = achieved
        self.requested = requested
        super().__init__(f"density clustering found {achieved} clusters, {requested} requested")


class AlignmentError(CreditCastError, ValueError):
    pass


class ContextOverflow(CreditCastError, ValueError):
    def __init__(self, overflow, budget):
        self.overflow = overflow
        self.budget = budget
        super().__init__(f"prompt exceeds context budget of {budget} tokens by {overflow}")


class ClientError(CreditCastError, RuntimeError):
    pass


class ShapeError(CreditCastError, ValueError):
    pass


class ConfigError(CreditCastError, ValueError):
    pass


class StageError(CreditCastError, RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
