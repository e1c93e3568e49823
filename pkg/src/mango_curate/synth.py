"""Synthetic regions with a known best acquisition date.

Background pixels are Gaussian (mean ``background_mean``, covariance
``background_cov``).  On date ``t`` mangrove pixels are shifted by
``separability[t]`` background standard deviations along
``target_direction``, measured in whitened units, so the Mahalanobis gap
between the class means equals the schedule value exactly.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import ManifestRecord, write_manifest, write_mask, write_scene
from .raster import AnnualMask, Scene

GEOMETRIES = ("blob", "fringe", "empty")


def default_mean(bands: int) -> np.ndarray:
    # water/sediment-like background: dim visible bands, modest NIR and SWIR
    x = np.linspace(0.0, 1.0, bands)
    return 0.06 + 0.10 * x + 0.04 * np.sin(3.0 * x)


def default_cov(bands: int, sigma: float = 0.01, rho: float = 0.6) -> np.ndarray:
    idx = np.arange(bands)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    sd = sigma * (1.0 + 0.5 * np.linspace(0.0, 1.0, bands))
    return corr * np.outer(sd, sd)


def default_direction(bands: int) -> np.ndarray:
    # vegetation-like response: red-edge and NIR up, visible down
    x = np.linspace(-1.0, 1.0, bands)
    return np.tanh(3.0 * x) + 0.3


@dataclass
class SynthSpec:
    region_id: str = "R00000"
    tile_size: int = 64
    bands: int = 13
    separability: Sequence[float] = (0.5, 6.0, 0.5)
    cloud_fractions: Sequence[float] | None = None
    coverages: Sequence[float] | None = None
    geometry: str = "blob"
    blob_radius: float | None = None
    background_mean: Sequence[float] | None = None
    background_cov: np.ndarray | None = None
    target_direction: Sequence[float] | None = None
    contamination: float = 0.0
    start_date: dt.date = dt.date(2020, 1, 5)
    date_step_days: int = 10
    seed: int = 0

    def __post_init__(self):
        n = len(self.separability)
        if n == 0:
            raise ValueError("separability schedule is empty")
        if self.cloud_fractions is None:
            self.cloud_fractions = [0.0] * n
        if self.coverages is None:
            self.coverages = [1.0] * n
        if len(self.cloud_fractions) != n or len(self.coverages) != n:
            raise ValueError("separability, cloud and coverage schedules must be equal in length")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.tile_size < 1 or self.bands < 1:
            raise ValueError("tile size and band count must be positive")
        if not 0.0 <= self.contamination < 1.0:
            raise ValueError("contamination must lie in [0, 1)")
        for c, o in zip(self.cloud_fractions, self.coverages):
            if not (0.0 <= c <= 1.0 and 0.0 < o <= 1.0):
                raise ValueError("cloud fractions must lie in [0, 1] and coverages in (0, 1]")
        self.background_mean = (
            default_mean(self.bands) if self.background_mean is None
            else np.asarray(self.background_mean, dtype=np.float64)
        )
        self.background_cov = (
            default_cov(self.bands) if self.background_cov is None
            else np.asarray(self.background_cov, dtype=np.float64)
        )
        self.target_direction = (
            default_direction(self.bands) if self.target_direction is None
            else np.asarray(self.target_direction, dtype=np.float64)
        )
        if self.background_mean.shape != (self.bands,) or self.target_direction.shape != (self.bands,):
            raise ValueError("mean and direction must have one value per band")
        if self.background_cov.shape != (self.bands, self.bands):
            raise ValueError("covariance must be bands x bands")
        try:
            np.linalg.cholesky(self.background_cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("background covariance must be positive definite") from exc
        if not np.linalg.norm(self.target_direction) > 0:
            raise ValueError("target direction must be non-zero")

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=self.date_step_days * i) for i in range(len(self.separability))]


@dataclass
class SynthRegion:
    mask: AnnualMask
    scenes: list[Scene]
    planted_index: int
    observed: list[np.ndarray] = field(default_factory=list)

    @property
    def planted_date(self) -> dt.date:
        return self.scenes[self.planted_index].sensing_date


def _mask(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.tile_size
    grid = np.zeros((n, n), dtype=bool)
    if spec.geometry == "empty":
        return grid
    rows, cols = np.mgrid[0:n, 0:n]
    if spec.geometry == "fringe":
        # one-pixel-wide meandering shoreline; nothing survives a 3x3 erosion
        base = rng.integers(n // 4, 3 * n // 4 + 1)
        col = np.clip(base + np.round(2 * np.sin(np.arange(n) / 5.0)).astype(int), 0, n - 1)
        grid[np.arange(n), col] = True
        return grid
    radius = spec.blob_radius if spec.blob_radius is not None else n * rng.uniform(0.18, 0.3)
    cy, cx = rng.uniform(0.3 * n, 0.7 * n, size=2)
    wobble = 1.0 + 0.15 * np.sin(3.0 * np.arctan2(rows - cy, cols - cx) + rng.uniform(0, 2 * np.pi))
    grid = np.hypot(rows - cy, cols - cx) <= radius * wobble
    if not grid.any():
        grid[int(cy), int(cx)] = True
    return grid


def _scattered(n_pixels: int, count: int, rng: np.random.Generator, allowed: np.ndarray) -> np.ndarray:
    flat = np.zeros(n_pixels, dtype=bool)
    idx = np.flatnonzero(allowed.ravel())
    count = min(count, idx.size)
    flat[rng.choice(idx, size=count, replace=False)] = True
    return flat


def generate_region(spec: SynthSpec) -> SynthRegion:
    """Mask plus one scene per schedule entry; ``planted_index`` is the schedule argmax."""
    rng = np.random.default_rng(spec.seed)
    n, b = spec.tile_size, spec.bands
    mask = _mask(spec, rng)
    chol = np.linalg.cholesky(spec.background_cov)
    u = spec.target_direction / np.linalg.norm(spec.target_direction)
    shift_unit = chol @ u  # one whitened unit along u
    scenes, observed = [], []
    for t, date in enumerate(spec.dates):
        z = rng.standard_normal((n * n, b))
        if spec.contamination > 0:
            # heavy-tailed outliers (Student-t, 2 dof) replace a share of draws
            hit = rng.random(n * n) < spec.contamination
            z[hit] = rng.standard_t(2.0, size=(int(hit.sum()), b))
        px = spec.background_mean + z @ chol.T
        px = px.reshape(n, n, b)
        px[mask] += spec.separability[t] * shift_unit
        cols_seen = int(round(spec.coverages[t] * n))
        obs = np.zeros((n, n), dtype=bool)
        obs[:, :cols_seen] = True
        n_cloud = int(round(spec.cloud_fractions[t] * n * n))
        cloud = _scattered(n * n, n_cloud, rng, obs).reshape(n, n)
        valid = obs & ~cloud
        px[~obs] = 0.0
        scenes.append(Scene(spec.region_id, date, px, valid, obs))
        observed.append(obs)
    planted = int(np.argmax(np.asarray(spec.separability)))
    return SynthRegion(AnnualMask(spec.region_id, mask), scenes, planted, observed)


# -- corpus ------------------------------------------------------------------


@dataclass
class CorpusSpec:
    """A batch of regions for end-to-end runs of the CLI.

    Each positive region gets ``n_dates`` clean candidates, one of them at
    ``planted_separability`` and the rest at ``decoy_separability``, plus
    ``cloudy_dates`` over-clouded candidates that are even more separable
    and must be removed by the cloud filter.
    """

    n_regions: int = 40
    countries: Sequence[str] = ("IDN", "BRA", "AUS", "MEX", "NGA", "PHL", "IND", "MYS")
    tile_size: int = 48
    bands: int = 13
    n_dates: int = 4
    planted_separability: float = 6.0
    decoy_separability: float = 0.5
    cloudy_dates: int = 1
    cloudy_separability: float = 8.0
    cloudy_fraction: float = 0.2
    max_clean_cloud: float = 0.04
    negative_share: float = 0.5
    fringe_share: float = 0.1
    contamination: float = 0.0
    year: int = 2020
    seed: int = 0

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusSpec":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**obj)

    def region_specs(self) -> list[tuple[SynthSpec, str, int]]:
        """``(spec, country, index of the planted clean date)`` per region."""
        rng = np.random.default_rng([self.seed, 0x5EED])
        out = []
        for i in range(self.n_regions):
            rid = f"R{i:05d}"
            country = self.countries[int(rng.integers(len(self.countries)))]
            u = rng.random()
            geometry = "empty" if u < self.negative_share else (
                "fringe" if u < self.negative_share + self.fringe_share else "blob")
            planted = int(rng.integers(self.n_dates))
            sep = [self.decoy_separability] * self.n_dates
            sep[planted] = self.planted_separability
            clouds = list(rng.uniform(0.0, self.max_clean_cloud, self.n_dates))
            sep += [self.cloudy_separability] * self.cloudy_dates
            clouds += [self.cloudy_fraction] * self.cloudy_dates
            radius = self.tile_size * float(rng.choice([0.08, 0.15, 0.25, 0.35]))
            spec = SynthSpec(
                region_id=rid,
                tile_size=self.tile_size,
                bands=self.bands,
                separability=sep,
                cloud_fractions=clouds,
                geometry=geometry,
                blob_radius=radius,
                contamination=self.contamination,
                start_date=dt.date(self.year, 1, 3 + int(rng.integers(5))),
                date_step_days=max(1, 360 // (len(sep) + 1)),
                seed=int(rng.integers(2**63)),
            )
            out.append((spec, country, planted))
        return out


def write_corpus(spec: CorpusSpec, out_dir) -> dict:
    """Write tiles, masks, ``manifest.jsonl`` and ``truth.json``; return the truth table."""
    import json

    out = Path(out_dir)
    records: list[ManifestRecord] = []
    truth = {}
    for rspec, country, planted in spec.region_specs():
        region = generate_region(rspec)
        rid = rspec.region_id
        mask_rel = f"masks/{rid}.msr"
        write_mask(region.mask, out / mask_rel)
        for scene, obs in zip(region.scenes, region.observed):
            stem = f"{rid}_{scene.sensing_date.isoformat()}"
            img_rel, val_rel = f"images/{stem}.msr", f"valid/{stem}.msr"
            write_scene(scene, out / img_rel, out / val_rel)
            n = scene.valid.size
            records.append(ManifestRecord(
                region_id=rid,
                country_iso3=country,
                sensing_date=scene.sensing_date,
                image_path=img_rel,
                mask_path=mask_rel,
                validity_path=val_rel,
                cloud_fraction=int(np.count_nonzero(obs & ~scene.valid)) / n,
                coverage=int(np.count_nonzero(obs)) / n,
            ))
        truth[rid] = {
            "country_iso3": country,
            "geometry": rspec.geometry,
            "mangrove_fraction": float(region.mask.grid.mean()),
            "planted_date": rspec.dates[planted].isoformat() if region.mask.has_target else None,
        }
    write_manifest(out / "manifest.jsonl", records)
    (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True))
    return truth
