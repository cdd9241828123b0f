"""Library-specific exceptions with actionable messages."""

from __future__ import annotations

import functools
from typing import Any, Callable, TypeVar

F = TypeVar("F", bound=Callable[..., Any])


class ToothSegError(Exception):
    """Base exception for toothseglib errors."""

    pass


class VolumeFormatError(ToothSegError):
    """Volume header is malformed or names an unsupported dtype."""

    pass


class DataLengthError(VolumeFormatError):
    """Raw voxel file size disagrees with the header shape."""

    pass


class VolumeNotFoundError(ToothSegError, FileNotFoundError):
    """Header or raw data file is missing."""

    pass


class AnnotationError(ToothSegError):
    """Annotation file is malformed or violates an annotation invariant."""

    pass


class GeometryError(ToothSegError):
    """Inputs disagree on shape, spacing or class count."""

    pass


class DegenerateInputError(ToothSegError):
    """Input is constant where a spread of values is required."""

    pass


class EmptyMaskError(ToothSegError):
    """Operation is undefined on an empty mask."""

    pass


class ToothNotFoundError(ToothSegError):
    """Requested tooth number does not occur in the input."""

    pass


class PhantomError(ToothSegError):
    """Phantom configuration is invalid or its teeth overlap."""

    pass


class SegmenterError(ToothSegError):
    """Segmenter could not be built or is missing its inputs."""

    pass


def stage_call(context: str, *, writes: bool = False) -> Callable[[F], F]:
    """Decorator converting OS-level failures into library exceptions.

    For readers a missing file becomes ``VolumeNotFoundError``. Every other
    ``OSError``, and any failure of a writer (a missing or unwritable output
    directory included), becomes ``ToothSegError``. Library exceptions pass
    through untouched.

    Usage:
        @stage_call("save_volume", writes=True)
        def save_volume(volume, path): ...

    Args:
        context: Prefix for error messages (usually the function name).
        writes: The wrapped function writes files rather than reads them.

    Returns:
        Decorated function with uniform error reporting.
    """

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            try:
                return func(*args, **kwargs)
            except ToothSegError:
                raise
            except FileNotFoundError as e:
                if writes:
                    raise ToothSegError(f"{context}: IO failure: {e}") from e
                path = e.filename or ""
                raise VolumeNotFoundError(
                    f"{context}: file not found: {path}"
                ) from e
            except OSError as e:
                raise ToothSegError(f"{context}: IO failure: {e}") from e

        return wrapper  # type: ignore[return-value]

    return decorator
