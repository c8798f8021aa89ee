"""Shared exception types."""


class ContractViolation(ValueError):
    """An operation was called outside its documented pre/postconditions."""


class NonFiniteError(ContractViolation):
    """A NaN or Inf appeared where only finite values are allowed."""


class SchemaError(ValueError):
    """A scenario record failed schema validation."""


class IngestionError(ValueError):
    """External input (embedding file, intent label) could not be used."""
