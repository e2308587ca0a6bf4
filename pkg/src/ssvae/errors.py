"""Exception types shared across modules."""

from .tensor import ContractError, DimensionError, DomainError


class VariantError(ValueError):
    """Operation needs a head or decoder the model variant does not have."""


class DataError(ValueError):
    pass


class IdxFormatError(DataError):
    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.offset = offset
        self.path = path


class CheckpointError(ValueError):
    pass


class TrainingAborted(RuntimeError):
    def __init__(self, part: str, epoch: int, step: int):
        super().__init__(f"non-finite {part} at epoch {epoch}, step {step}")
        self.part = part
        self.epoch = epoch
        self.step = step


__all__ = [
    "CheckpointError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DomainError",
    "IdxFormatError",
    "TrainingAborted",
    "VariantError",
]
