"""Exception types shared across the package."""

__all__ = [
    "SumlabError",
    "DimensionMismatch",
    "PolyhedralRequired",
    "SupportCannotDominate",
    "ExponentIdentityError",
    "NoCertifiedMeasure",
    "LpFailure",
]


class SumlabError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatch(SumlabError):
    """Vector or coefficient array shape does not match the declared spaces."""


class PolyhedralRequired(SumlabError):
    """An exact enumeration was requested on a space that is not polyhedral."""


class SupportCannotDominate(SumlabError):
    """No nonnegative combination of the support columns covers the constraint rows."""


class ExponentIdentityError(SumlabError):
    """Exponents fail the required identity (e.g. 1/p = sum of 1/p_j)."""


class NoCertifiedMeasure(SumlabError):
    """A factorization was requested from a report whose duality gap is open."""


class LpFailure(SumlabError):
    """The LP solver returned a status the caller cannot proceed with."""
