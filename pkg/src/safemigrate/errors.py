"""Exception hierarchy.  Exit codes used by the CLI live on the classes."""


class MigrateError(Exception):
    exit_code = 1


class NotFound(MigrateError):
    pass


class InvalidArgument(MigrateError):
    exit_code = 2


class UsageError(MigrateError):
    exit_code = 2


class StateCorrupt(MigrateError):
    pass


class StageOrderError(MigrateError):
    exit_code = 3


class BuildEnvironmentError(MigrateError):
    """The toolchain (cargo, clippy) could not be invoked at all."""

    exit_code = 4


class RegressionDetected(MigrateError):
    exit_code = 5


class StructGenerationFailed(MigrateError):
    pass


class ExtractionAmbiguous(MigrateError):
    pass


class NoSafeRule(MigrateError):
    pass


class ProviderError(MigrateError):
    """Transport-level failure; callers may retry."""


class MissingScenario(MigrateError):
    pass


class UndefinedRate(MigrateError):
    pass


class WorkspaceLocked(MigrateError):
    exit_code = 2
