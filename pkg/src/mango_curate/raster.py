"""Raster data model shared by every stage of the curation pipeline.

Pixel grids are numpy arrays laid out ``(height, width, bands)``; boolean
grids are ``(height, width)``.  Objects are frozen dataclasses and every
function here is pure, so tiles can be processed in parallel freely.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import RasterError

DEFAULT_BANDS = 13
DEFAULT_TILE = 256
UNDEFINED = np.nan  # detection-map sentinel for pixels without a response


class Method(str, enum.Enum):
    MATCHED_FILTER = "mf"
    MVI = "mvi"


class Category(str, enum.Enum):
    STRONG = "StrongPositive"
    MID = "MidPositive"
    WEAK = "WeakPositive"
    NEGATIVE = "PureNegative"

    @property
    def is_positive(self) -> bool:
        return self is not Category.NEGATIVE


def as_spectrum(values, bands: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 spectrum."""
    s = np.asarray(values, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise RasterError(f"spectrum must be a non-empty vector, got shape {s.shape}")
    if bands is not None and s.size != bands:
        raise RasterError(f"spectrum has {s.size} bands, expected {bands}")
    if not np.all(np.isfinite(s)):
        raise RasterError("spectrum contains non-finite values")
    return s


@dataclass(frozen=True, eq=False)
class Scene:
    """One dated acquisition over a region tile.

    ``valid`` marks pixels that are observed *and* cloud free.  ``observed``
    is the sensor footprint; when it is ``None`` the footprint is inferred
    from ``valid`` (see :func:`mango_curate.candidate_filter.footprint`).
    """

    region_id: str
    sensing_date: dt.date
    pixels: np.ndarray
    valid: np.ndarray = None
    observed: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or 0 in px.shape:
            raise RasterError(f"scene pixels must be a non-empty HxWxB grid, got {px.shape}")
        object.__setattr__(self, "pixels", px)
        valid = np.ones(px.shape[:2], dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != px.shape[:2]:
            raise RasterError(f"validity grid {valid.shape} does not match pixels {px.shape[:2]}")
        object.__setattr__(self, "valid", valid)
        if self.observed is not None:
            obs = np.asarray(self.observed, dtype=bool)
            if obs.shape != valid.shape:
                raise RasterError("footprint grid does not match pixels")
            object.__setattr__(self, "observed", obs)
        if isinstance(self.sensing_date, str):
            object.__setattr__(self, "sensing_date", dt.date.fromisoformat(self.sensing_date))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def bands(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def scaled(self, factor: float) -> "Scene":
        # float64 so a float32 tile is not re-rounded by the scaling itself
        px = np.asarray(self.pixels, dtype=np.float64) * factor
        return Scene(self.region_id, self.sensing_date, px, self.valid, self.observed)


@dataclass(frozen=True, eq=False)
class AnnualMask:
    region_id: str
    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise RasterError(f"mask must be 2-D, got shape {g.shape}")
        object.__setattr__(self, "grid", g.astype(bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def has_target(self) -> bool:
        return bool(self.grid.any())


@dataclass(frozen=True, eq=False)
class DetectionMap:
    grid: np.ndarray
    method: Method

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.grid)


@dataclass(frozen=True)
class RegionMeta:
    region_id: str
    country_iso3: str
    mangrove_fraction: float
    category: Category = field(default=None)

    def __post_init__(self):
        from .stratify import categorize

        expected = categorize(self.mangrove_fraction)
        if self.category is None:
            object.__setattr__(self, "category", expected)
        else:
            cat = Category(self.category)
            if cat is not expected:
                raise RasterError(
                    f"region {self.region_id}: category {cat.value} inconsistent with "
                    f"mangrove fraction {self.mangrove_fraction}"
                )
            object.__setattr__(self, "category", cat)


def mangrove_fraction(mask: AnnualMask) -> float:
    """Share of tile pixels labelled mangrove, over the full tile area."""
    grid = mask.grid if isinstance(mask, AnnualMask) else np.asarray(mask, dtype=bool)
    if grid.size == 0:
        raise RasterError("empty raster")
    return int(np.count_nonzero(grid)) / grid.size


def class_masks(mask: AnnualMask, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean grids for the mangrove and background pixel sets."""
    grid = mask.grid if isinstance(mask, AnnualMask) else np.asarray(mask, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if grid.shape != valid.shape:
        raise RasterError(f"mask {grid.shape} and validity {valid.shape} dimensions differ")
    return valid & grid, valid & ~grid


def class_pixel_sets(mask: AnnualMask, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row/col coordinates, shape ``(n, 2)``, of valid mangrove and valid background pixels."""
    m, b = class_masks(mask, valid)
    return np.argwhere(m), np.argwhere(b)
