"""Per-region candidate pools from cloud and coverage thresholds."""

from __future__ import annotations

import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .errors import CurationError
from .ingest import ManifestRecord
from .raster import Scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    kappa: float = 0.05
    omega: float = 0.50
    year: int | None = 2020

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")


@dataclass
class CandidatePool:
    region_id: str
    candidates: list[ManifestRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.candidates)

    @property
    def empty(self) -> bool:
        return not self.candidates


def _edge_run(flags: np.ndarray) -> tuple[int, int]:
    """Lengths of the all-True runs at the start and end of a 1-D flag vector."""
    n = flags.size
    if flags.all():
        return n, 0
    lead = int(np.argmin(flags))
    trail = int(np.argmin(flags[::-1]))
    return lead, trail


def footprint(scene: Scene) -> np.ndarray:
    """Sensor footprint of a scene.

    With no explicit footprint, fully invalid row/column blocks touching the
    tile edge count as outside the swath and everything else as observed.
    A tile that is invalid everywhere is treated as observed but clouded.
    """
    if scene.observed is not None:
        return scene.observed
    invalid = ~scene.valid
    obs = np.ones_like(scene.valid)
    if invalid.all():
        return obs
    top, bottom = _edge_run(invalid.all(axis=1))
    left, right = _edge_run(invalid.all(axis=0))
    h, w = invalid.shape
    obs[:top, :] = False
    obs[h - bottom:, :] = False
    obs[:, :left] = False
    obs[:, w - right:] = False
    return obs


def cloud_fraction(scene: Scene) -> float:
    """Share of tile pixels that are inside the footprint but invalid."""
    clouds = footprint(scene) & ~scene.valid
    return int(np.count_nonzero(clouds)) / clouds.size


def coverage(scene: Scene) -> float:
    obs = footprint(scene)
    return int(np.count_nonzero(obs)) / obs.size


def record_metrics(record: ManifestRecord, load_scene: Callable[[ManifestRecord], Scene] | None = None) -> tuple[float, float]:
    """Cloud fraction and coverage for a record.

    Manifest values win; missing ones are recomputed from the validity grid.
    """
    c, o = record.cloud_fraction, record.coverage
    if c is None or o is None:
        if load_scene is None:
            raise CurationError(
                f"{record.region_id} {record.sensing_date}: cloud/coverage metadata missing "
                "and no scene loader to recompute it"
            )
        scene = load_scene(record)
        c = cloud_fraction(scene) if c is None else c
        o = coverage(scene) if o is None else o
    return c, o


def passes(cloud: float, cover: float, date: dt.date, cfg: FilterConfig) -> bool:
    in_year = cfg.year is None or date.year == cfg.year
    return cloud < cfg.kappa and cover >= cfg.omega and in_year


@dataclass
class FilterOutcome:
    pools: dict[str, CandidatePool]
    kept: int
    dropped: int

    @property
    def empty_regions(self) -> list[str]:
        return sorted(r for r, p in self.pools.items() if p.empty)

    def summary(self) -> dict:
        return {
            "regions_total": len(self.pools),
            "regions_empty": len(self.empty_regions),
            "candidates_kept": self.kept,
            "candidates_dropped": self.dropped,
        }

    def kept_records(self) -> list[ManifestRecord]:
        return [rec for rid in sorted(self.pools) for rec in self.pools[rid].candidates]


def build_pool(
    records: Iterable[ManifestRecord],
    cfg: FilterConfig = FilterConfig(),
    load_scene: Callable[[ManifestRecord], Scene] | None = None,
) -> FilterOutcome:
    """Apply the cloud/coverage/year predicate and group survivors by region.

    Regions whose every candidate is rejected keep an empty pool so the
    caller can report them.
    """
    pools: dict[str, CandidatePool] = {}
    country: dict[str, str] = {}
    kept = dropped = 0
    grouped: dict[str, list[ManifestRecord]] = defaultdict(list)
    for rec in records:
        prev = country.setdefault(rec.region_id, rec.country_iso3)
        if prev != rec.country_iso3:
            raise CurationError(
                f"region {rec.region_id} listed under two countries ({prev}, {rec.country_iso3})"
            )
        pools.setdefault(rec.region_id, CandidatePool(rec.region_id))
        c, o = record_metrics(rec, load_scene)
        if passes(c, o, rec.sensing_date, cfg):
            grouped[rec.region_id].append(replace(rec, cloud_fraction=c, coverage=o))
            kept += 1
        else:
            dropped += 1
    for rid, recs in grouped.items():
        pools[rid].candidates = sorted(recs, key=lambda r: r.sensing_date)
    for rid in sorted(r for r, p in pools.items() if p.empty):
        log.info("region %s: candidate pool empty after filtering", rid)
    return FilterOutcome(pools, kept, dropped)
