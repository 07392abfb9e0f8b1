"""
Hyperrectangle geometry.

Every function is elementwise over `v` and broadcasts the bound vectors against
it, so the same code serves plain vectors and column blocks (pass bounds shaped
`(n, 1)` for a block). Extended reals are IEEE infinities and the `0 * inf = 0`
convention is applied explicitly.
"""

from typing import Tuple

import numpy as np

__all__ = (
    "BoundsInterval",
    "project_box",
    "support_terms",
    "support_function",
    "project_barrier_cone",
    "project_recession_cone",
    "intervals_valid",
)


class BoundsInterval:
    """A closed interval on the extended real line, `lower == upper` fixes the component."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower: float = -np.inf, upper: float = np.inf):
        self.lower = float(lower)
        self.upper = float(upper)

    @property
    def is_valid(self) -> bool:
        return not np.isnan(self.lower) and not np.isnan(self.upper) and self.lower <= self.upper

    @property
    def is_fixed(self) -> bool:
        return self.lower == self.upper

    @property
    def is_free(self) -> bool:
        return self.lower == -np.inf and self.upper == np.inf

    def __iter__(self):
        yield self.lower
        yield self.upper

    def __eq__(self, other):
        if not isinstance(other, BoundsInterval):
            return NotImplemented
        return self.lower == other.lower and self.upper == other.upper

    def __repr__(self):
        return f"BoundsInterval({self.lower}, {self.upper})"


def _as_arrays(v, lower, upper) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.asarray(v, dtype=np.float64),
        np.asarray(lower, dtype=np.float64),
        np.asarray(upper, dtype=np.float64),
    )


def intervals_valid(lower, upper) -> np.ndarray:
    """Mask of components with `lower <= upper` (NaN is never valid)."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    return lower <= upper


def project_box(v, lower, upper) -> np.ndarray:
    """Componentwise `max(min(v, upper), lower)`."""
    v, lower, upper = _as_arrays(v, lower, upper)
    return np.maximum(np.minimum(v, upper), lower)


def support_terms(v, lower, upper) -> np.ndarray:
    """
    The per-component terms `upper * max(v, 0) + lower * min(v, 0)`.

    A zero component contributes zero whatever its bounds are. A positive
    component against an infinite upper bound (or negative against an infinite
    lower bound) contributes `+inf`.
    """
    v, lower, upper = _as_arrays(v, lower, upper)
    positive = np.maximum(v, 0.0)
    negative = np.minimum(v, 0.0)

    with np.errstate(invalid="ignore"):
        upper_part = np.where(positive > 0.0, upper * positive, 0.0)
        lower_part = np.where(negative < 0.0, lower * negative, 0.0)
    return upper_part + lower_part


def support_function(v, lower, upper, axis=None):
    """
    The support function of the box, `sup { v^T z : lower <= z <= upper }`.

    Returns `+inf` when `v` leaves the barrier cone. Pass `axis=0` to get one
    value per column of a block.
    """
    return np.sum(support_terms(v, lower, upper), axis=axis)


def project_barrier_cone(v, lower, upper) -> np.ndarray:
    """
    Projects onto the barrier cone of the box, the domain of its support function.

    Free components project to 0, an infinite upper bound forces `v <= 0` and an
    infinite lower bound forces `v >= 0`.
    """
    v, lower, upper = _as_arrays(v, lower, upper)
    out = np.where(upper == np.inf, np.minimum(v, 0.0), v)
    return np.where(lower == -np.inf, np.maximum(out, 0.0), out)


def project_recession_cone(v, lower, upper) -> np.ndarray:
    """
    Projects onto the recession cone of the box.

    Bounded components project to 0, a ray `[a, inf)` keeps `max(v, 0)`, a ray
    `(-inf, b]` keeps `min(v, 0)` and a free component is left as is.
    """
    v, lower, upper = _as_arrays(v, lower, upper)
    out = np.where(upper == np.inf, v, np.minimum(v, 0.0))
    return np.where(lower == -np.inf, out, np.maximum(out, 0.0))
