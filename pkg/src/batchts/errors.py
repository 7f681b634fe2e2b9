class BatchTSError(Exception):
    pass


class InvalidParameterError(BatchTSError, ValueError):
    pass


class ContractViolation(BatchTSError, RuntimeError):
    """Raised when a caller breaks an information or ordering contract."""


class DatasetExhausted(BatchTSError):
    pass


class InvariantViolation(BatchTSError, AssertionError):
    pass
