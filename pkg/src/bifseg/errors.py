"""Exception hierarchy shared across the package.

DataError covers problems with user-supplied inputs (files, boxes,
scribbles); NumericError covers failures of the numerical machinery
itself. The CLI maps them to distinct exit codes.
"""


class BifsegError(Exception):
    """Base class for all package errors."""


class DataError(BifsegError):
    """Invalid or inconsistent input data."""


class ScribbleConflictError(DataError):
    """A pixel was scribbled as both foreground and background."""

    def __init__(self, pixels):
        self.pixels = sorted(pixels)
        shown = ", ".join(str(p) for p in self.pixels[:8])
        more = "" if len(self.pixels) <= 8 else f" (+{len(self.pixels) - 8} more)"
        super().__init__(f"scribble conflict at pixels: {shown}{more}")


class NumericError(BifsegError):
    """Numerical failure (NaN loss, impossible flow state)."""
