"""Exception types raised by the engine.

Everything inherits from :class:`EngineError` so callers (and the CLI) can
distinguish engine validation failures from genuine bugs or I/O problems.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine-level errors."""


class ShapeError(EngineError):
    """An array argument has the wrong rank, length or channel count."""


class EmptyInputError(EngineError):
    """Input carries no usable samples (e.g. shorter than one window)."""


class ConfigError(EngineError):
    """A configuration value is out of its documented domain."""


class AlignmentError(EngineError):
    """A pooling stage does not divide the samples offered to it.

    Carries enough context to point at the offending stage.
    """

    def __init__(self, message: str, *, layer_index: int | None = None,
                 pool_len: int | None = None, entering_len: int | None = None):
        super().__init__(message)
        self.layer_index = layer_index
        self.pool_len = pool_len
        self.entering_len = entering_len


class StateError(EngineError):
    """A streaming state buffer does not match the layer it is used with."""


class ManifestError(EngineError):
    """A model manifest or weight blob is malformed or inconsistent."""


class UnsupportedLayerError(EngineError):
    """An operation met a layer kind it does not support."""


class ConstantReferenceError(EngineError):
    """A normalised error metric was asked for against a constant reference."""
