"""Mangrove Vegetation Index response maps, the selection baseline.

MVI = (NIR - Green) / (SWIR1 - Green)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import UNDEFINED, DetectionMap, Method, Scene

GUARD = 1e-12


@dataclass(frozen=True)
class BandRoles:
    green_index: int = 2
    nir_index: int = 7
    swir1_index: int = 10

    def validate(self, bands: int) -> None:
        idx = (self.green_index, self.nir_index, self.swir1_index)
        if len(set(idx)) != 3:
            raise ValueError(f"band roles must be distinct, got {idx}")
        if min(idx) < 0 or max(idx) >= bands:
            raise ValueError(f"band roles {idx} out of range for {bands} bands")

    @classmethod
    def parse(cls, text: str) -> "BandRoles":
        g, n, s = (int(v) for v in text.split(","))
        return cls(g, n, s)


def mvi_map(scene: Scene, roles: BandRoles = BandRoles(), guard: float = GUARD) -> DetectionMap:
    """Per-pixel MVI; pixels with a (near) singular denominator are undefined.

    The guard is relative to ``|SWIR1| + |Green|`` so the index stays
    invariant to a global reflectance scale.
    """
    roles.validate(scene.bands)
    px = np.asarray(scene.pixels, dtype=np.float64)
    green = px[:, :, roles.green_index]
    nir = px[:, :, roles.nir_index]
    swir = px[:, :, roles.swir1_index]
    den = swir - green
    tol = guard * (np.abs(swir) + np.abs(green))
    ok = scene.valid & (np.abs(den) > tol) & (den != 0)
    out = np.full(scene.shape, UNDEFINED, dtype=np.float64)
    d = den[ok]
    out[ok] = (nir[ok] - green[ok]) / (d + tol[ok] * np.sign(d))
    return DetectionMap(out, Method.MVI)
