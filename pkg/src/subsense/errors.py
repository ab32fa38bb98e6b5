"""Exception types shared across the toolkit."""


class SubsenseError(Exception):
    """Base class for all toolkit errors."""


class ResourceError(SubsenseError):
    """A required file or packaged resource is missing or unreadable."""


class EmptyLexiconError(ResourceError):
    """A lexicon file parsed to zero usable entries."""


class EmptyDatasetError(SubsenseError):
    """An operation that needs data received none."""


class SchemaError(SubsenseError):
    """An input record does not match the documented schema."""


class DegenerateLabelsError(SubsenseError):
    """A labelled collection is single-class where both classes are required."""


class StratificationError(SubsenseError):
    """A class is too small to spread across train/val/test."""


class ConfigError(SubsenseError):
    """Model or schedule configuration violates its constraints."""


class ContractError(SubsenseError):
    """Caller broke an operation contract (shapes, alignment, missing cache)."""


class UsageError(SubsenseError):
    """Bad command line arguments."""
