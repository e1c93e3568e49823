"""High-purity reference pixels and the per-candidate target spectrum."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import SignatureError
from .raster import AnnualMask, Scene

DEFAULT_SEED_NAMESPACE = 0x4D414E474F5F5346  # arbitrary fixed 64-bit constant
RAW_MASK = "RawMask"


def provenance_label(side: int) -> str:
    return RAW_MASK if side <= 1 else f"Eroded{side}x{side}"


@dataclass(frozen=True)
class SignatureConfig:
    k_pixels: int = 10
    structuring_element: int = 5
    rng_seed_namespace: int = DEFAULT_SEED_NAMESPACE

    def __post_init__(self):
        if self.k_pixels < 1:
            raise ValueError("k_pixels must be >= 1")
        if self.structuring_element < 1 or self.structuring_element % 2 == 0:
            raise ValueError("structuring element side must be odd and >= 1")
        if not 0 <= self.rng_seed_namespace < 2**64:
            raise ValueError("seed namespace must be an unsigned 64-bit integer")

    @property
    def ladder(self) -> list[int]:
        """Element sides tried in order before falling back to the raw mask."""
        sides = [self.structuring_element]
        if self.structuring_element > 3:
            sides.append(3)
        return [s for s in sides if s > 1]


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    coords: np.ndarray  # (n, 2) int row/col, row-major sorted
    provenance: str

    def __len__(self):
        return len(self.coords)

    def to_json(self) -> dict:
        return {"provenance": self.provenance, "coords": self.coords.tolist()}


def erode(mask, side: int) -> np.ndarray:
    """Binary erosion by a ``side`` x ``side`` square; outside the tile counts as False."""
    if side < 1 or side % 2 == 0:
        raise ValueError(f"structuring element side must be odd, got {side}")
    grid = mask.grid if isinstance(mask, AnnualMask) else np.asarray(mask, dtype=bool)
    if side == 1:
        return grid.copy()
    return ndimage.binary_erosion(grid, structure=np.ones((side, side), bool), border_value=0)


def region_rng(namespace: int, region_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(region_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([namespace, int.from_bytes(digest, "little")])


def sample_reference_pixels(eroded, mask: AnnualMask, cfg: SignatureConfig, region_id: str) -> ReferenceSet:
    """Pick up to K reference coordinates, shared by every date of a region.

    ``eroded`` is the erosion at ``cfg.structuring_element``; if it is
    empty the ladder continues with a 3x3 element and then the raw mask.
    Sampling is seeded by ``(namespace, region_id)`` only.
    """
    if not mask.has_target:
        raise SignatureError(f"region {region_id}: no target class")
    pool, level = None, None
    for i, side in enumerate(cfg.ladder):
        cand = np.asarray(eroded, bool) if i == 0 and eroded is not None else erode(mask, side)
        if cand.any():
            pool, level = cand, provenance_label(side)
            break
    if pool is None:
        pool, level = mask.grid, RAW_MASK
    coords = np.argwhere(pool)
    if len(coords) > cfg.k_pixels:
        rng = region_rng(cfg.rng_seed_namespace, region_id)
        pick = np.sort(rng.choice(len(coords), size=cfg.k_pixels, replace=False))
        coords = coords[pick]
    return ReferenceSet(coords.astype(np.int64), level)


def reference_pixels(mask: AnnualMask, cfg: SignatureConfig = SignatureConfig(), region_id: str | None = None) -> ReferenceSet:
    rid = mask.region_id if region_id is None else region_id
    first = erode(mask, cfg.ladder[0]) if cfg.ladder else None
    return sample_reference_pixels(first, mask, cfg, rid)


def target_spectrum(scene: Scene, refs: ReferenceSet) -> np.ndarray:
    """Per-band mean over the reference pixels still valid in this scene."""
    coords = np.asarray(refs.coords).reshape(-1, 2)
    if coords.size == 0:
        raise SignatureError("signature unobservable: empty reference set")
    keep = scene.valid[coords[:, 0], coords[:, 1]]
    coords = coords[keep]
    if len(coords) == 0:
        raise SignatureError("signature unobservable: every reference pixel is invalid")
    spectra = np.asarray(scene.pixels[coords[:, 0], coords[:, 1], :], dtype=np.float64)
    return spectra.mean(axis=0)
