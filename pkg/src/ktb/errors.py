"""Exception hierarchy shared across the package.

Class names are the error contract: callers catch these by name, the CLI
maps any KtbError to exit code 2.
"""


class KtbError(Exception):
    pass


# --- task catalog ---

class UnknownTask(KtbError):
    pass


class MalformedId(KtbError):
    pass


# --- store ---

class ValidationFailed(KtbError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class IoError(KtbError):
    pass


class BadMagic(KtbError):
    pass


class VersionMismatch(KtbError):
    pass


class CorruptIndex(KtbError):
    pass


class IndexOutOfRange(KtbError):
    pass


class DecompressFailed(KtbError):
    pass


# --- repacker ---

class EmptyStream(KtbError):
    pass


class NonMonotoneTermination(KtbError):
    pass


class TargetExceedsPopulation(KtbError):
    pass


# --- loaders ---

class EmptyDataset(KtbError):
    pass


class AllEpisodesTooShort(KtbError):
    pass


class InsufficientMemory(KtbError):
    def __init__(self, required, available):
        self.required = required
        self.available = available
        super().__init__(
            f"in-memory load needs {required} bytes, {available} available"
        )


class DoubleClose(KtbError):
    pass


class UseAfterClose(KtbError):
    pass


# --- training / evaluation ---

class NonFiniteLoss(KtbError):
    pass


class AdapterFailure(KtbError):
    pass


class SteppedAfterDone(KtbError):
    pass


# --- reporting ---

class MismatchedTasks(KtbError):
    pass
