"""Exception types shared by every stage of the checklist pipeline.

Each error carries the process exit code the CLI should return for it.
"""


class ChecklistError(Exception):
    exit_code = 1


class StructuralError(ChecklistError, ValueError):
    """Shapes, indices or names that do not line up."""
    exit_code = 2


class FormatError(ChecklistError):
    """An input file that cannot be read as a patient record."""
    exit_code = 2


class ConfigurationError(ChecklistError):
    exit_code = 1


class DataError(ChecklistError):
    exit_code = 2


class TrainingError(ChecklistError):
    """A trainer diverged (loss became NaN or infinite)."""
    exit_code = 2


class RefusalError(ChecklistError):
    """The brute-force oracle refuses instances beyond its caps."""
    exit_code = 1


class DegenerateModelError(ChecklistError):
    exit_code = 2


class UndefinedMetricError(ChecklistError):
    exit_code = 2


class BudgetExhausted(ChecklistError):
    """Raised by the CLI when a solve ran out of time without a certificate."""
    exit_code = 3
