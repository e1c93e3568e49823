"""File-level pipeline steps and the region worker pool.

Each step reads JSONL, does its work and returns rows plus a summary; the
CLI decides where they are written.  Region selection fans out over a
process pool, and results are always re-sorted by region id so outputs do
not depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

from . import __version__
from .candidate_filter import CandidatePool, FilterConfig, build_pool
from .errors import CurationError, ManifestError
from .ingest import (
    ManifestRecord,
    iter_jsonl,
    load_record_scene,
    read_mask,
    resolve,
    write_raster,
)
from .matched_filter import DEFAULT_EPSILON
from .raster import Category, Method, RegionMeta
from .ranking import SelectionResult, rank_report, select_best
from .signature import SignatureConfig
from .spectral_index import BandRoles
from .stratify import (
    StratifyConfig,
    categorize,
    composition_stats,
    country_disjoint_split,
    enforce_ratios,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "MANGO_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class PipelineConfig:
    filter: FilterConfig = field(default_factory=FilterConfig)
    signature: SignatureConfig = field(default_factory=SignatureConfig)
    epsilon: float = DEFAULT_EPSILON
    exclusion_radius: int = 0
    band_roles: BandRoles = field(default_factory=BandRoles)
    method: Method = Method.MATCHED_FILTER
    stratify: StratifyConfig = field(default_factory=StratifyConfig)
    split_ratios: tuple = (8, 1, 1)
    split_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.method = Method(self.method)
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.exclusion_radius < 0:
            raise ValueError("exclusion radius must be non-negative")
        if len(self.split_ratios) != 3 or min(self.split_ratios) <= 0:
            raise ValueError("split ratios must be three positive numbers")

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        obj = dict(obj)
        kw = {}
        if "filter" in obj:
            kw["filter"] = FilterConfig(**obj.pop("filter"))
        if "signature" in obj:
            kw["signature"] = SignatureConfig(**obj.pop("signature"))
        if "band_roles" in obj:
            kw["band_roles"] = BandRoles(*obj.pop("band_roles"))
        if "stratify" in obj:
            st = dict(obj.pop("stratify"))
            for key in ("pos_neg_ratio", "strong_mid_weak_ratio"):
                if key in st:
                    st[key] = tuple(st[key])
            kw["stratify"] = StratifyConfig(**st)
        if "split" in obj:
            sp = obj.pop("split")
            if "ratios" in sp:
                kw["split_ratios"] = tuple(sp["ratios"])
            if "seed" in sp:
                kw["split_seed"] = sp["seed"]
        unknown = set(obj) - {"epsilon", "exclusion_radius", "method", "workers"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw.update(obj)
        return cls(**kw)

    def algorithm_dict(self) -> dict:
        """Everything that affects outputs; worker count is deliberately left out."""
        return {
            "filter": asdict(self.filter),
            "signature": asdict(self.signature),
            "epsilon": self.epsilon,
            "exclusion_radius": self.exclusion_radius,
            "band_roles": [self.band_roles.green_index, self.band_roles.nir_index, self.band_roles.swir1_index],
            "method": self.method.value,
            "stratify": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.stratify).items()},
            "split": {"ratios": list(self.split_ratios), "seed": self.split_seed},
        }


def provenance(command: str, config: dict, seeds: dict | None = None) -> dict:
    blob = json.dumps(config, sort_keys=True).encode()
    return {
        "tool": "mango-curate",
        "version": __version__,
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seeds": seeds or {},
    }


def rebase(path: str | None, src_dir, dst_dir) -> str | None:
    """Re-express a path relative to ``src_dir`` as relative to ``dst_dir``."""
    if path is None or os.path.isabs(path):
        return path
    return os.path.relpath(os.path.join(src_dir, path), dst_dir)


def rebase_record(rec: ManifestRecord, src_dir, dst_dir) -> ManifestRecord:
    return replace(
        rec,
        image_path=rebase(rec.image_path, src_dir, dst_dir),
        mask_path=rebase(rec.mask_path, src_dir, dst_dir),
        validity_path=rebase(rec.validity_path, src_dir, dst_dir),
    )


# -- filter ------------------------------------------------------------------


def run_filter(records: list[ManifestRecord], cfg: FilterConfig, root) -> tuple[list[ManifestRecord], dict]:
    outcome = build_pool(records, cfg, load_scene=lambda r: load_record_scene(r, root))
    summary = outcome.summary()
    summary["empty_regions"] = outcome.empty_regions
    return outcome.kept_records(), summary


# -- select ------------------------------------------------------------------


def group_pools(records: Iterable[ManifestRecord]) -> list[CandidatePool]:
    grouped: dict[str, list[ManifestRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.region_id, []).append(rec)
    return [CandidatePool(rid, sorted(recs, key=lambda r: r.sensing_date)) for rid, recs in sorted(grouped.items())]


@dataclass
class RegionTask:
    pool: CandidatePool
    root: str
    mask_path: str
    config: PipelineConfig
    dump_dir: str | None = None
    keep_detection: bool = False


def _select_region(task: RegionTask):
    """Worker body: returns ``("ok", result)`` or ``("failed", info)``; never raises data errors."""
    rid = task.pool.region_id
    cfg = task.config
    try:
        mask = read_mask(task.mask_path, rid)

        def sink(rec, dmap):
            name = f"{rid}_{rec.sensing_date.isoformat()}_{dmap.method.value}.msr"
            write_raster(dmap.grid, Path(task.dump_dir) / name)

        result = select_best(
            task.pool,
            mask,
            cfg.method,
            load_scene=lambda r: load_record_scene(r, task.root),
            signature=cfg.signature,
            epsilon=cfg.epsilon,
            roles=cfg.band_roles,
            exclusion_radius=cfg.exclusion_radius,
            on_detection=sink if task.dump_dir else None,
        )
        if not task.keep_detection:
            result.detection = None
        return "ok", result, (mask if task.keep_detection else None)
    except (CurationError, OSError, ValueError) as exc:
        return "failed", {"region_id": rid, "error": f"{type(exc).__name__}: {exc}"}, None


def run_select(
    records: list[ManifestRecord],
    root,
    cfg: PipelineConfig,
    masks_dir=None,
    dump_dir=None,
    figures_dir=None,
) -> tuple[list[SelectionResult], list[dict]]:
    tasks = []
    for pool in group_pools(records):
        if masks_dir is not None:
            mpath = Path(masks_dir) / f"{pool.region_id}.msr"
        else:
            mpath = resolve(pool.candidates[0].mask_path, root)
        tasks.append(RegionTask(pool, str(root), str(mpath), cfg, dump_dir and str(dump_dir), figures_dir is not None))

    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            outcomes = list(ex.map(_select_region, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    else:
        outcomes = [_select_region(t) for t in tasks]

    results, failures = [], []
    for status, payload, mask in outcomes:
        if status == "ok":
            results.append(payload)
            log.info("region %s: chose %s by %s", payload.region_id, payload.chosen_date, payload.selection_rule.value)
            if figures_dir is not None:
                from .figures import render_selection

                render_selection(payload, mask, Path(figures_dir) / f"{payload.region_id}.png")
                payload.detection = None
        else:
            failures.append(payload)
            log.warning("region %s failed: %s", payload["region_id"], payload["error"])
    results.sort(key=lambda r: r.region_id)
    failures.sort(key=lambda f: f["region_id"])
    return results, failures


def report_lines(results, failures, cfg: PipelineConfig, src_dir, dst_dir) -> list[dict]:
    header = provenance(
        "select", cfg.algorithm_dict(), {"signature_namespace": cfg.signature.rng_seed_namespace}
    )
    lines = rank_report(results, header, failures)
    for line in lines:
        for key in ("image_path", "mask_path", "validity_path"):
            if key in line:
                line[key] = rebase(line[key], src_dir, dst_dir)
    return lines


# -- stratify / split / stats -------------------------------------------------


@dataclass(frozen=True)
class DatasetRow:
    """One curated region as carried through stratify/split/stats files."""

    region_id: str
    country_iso3: str
    category: Category
    data: dict

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetRow":
        try:
            rid, iso3 = obj["region_id"], obj["country_iso3"]
        except KeyError as exc:
            raise ManifestError(f"record missing field {exc}") from exc
        if "category" in obj:
            cat = Category(obj["category"])
        elif "mangrove_fraction" in obj:
            cat = categorize(obj["mangrove_fraction"])
        else:
            raise ManifestError(f"region {rid}: no category or mangrove_fraction")
        if "mangrove_fraction" in obj:
            RegionMeta(rid, iso3, obj["mangrove_fraction"], cat)  # consistency check
        return cls(rid, iso3, cat, obj)

    @property
    def split(self):
        return self.data.get("split")


DATASET_FIELDS = (
    "region_id", "country_iso3", "category", "mangrove_fraction", "chosen_date",
    "method", "selection_rule", "image_path", "mask_path", "validity_path", "split",
)


def read_rows(path) -> list[DatasetRow]:
    rows = []
    seen = set()
    for lineno, obj in iter_jsonl(path):
        try:
            row = DatasetRow.from_json(obj)
        except (CurationError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        if row.region_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate region {row.region_id!r}")
        seen.add(row.region_id)
        rows.append(row)
    return rows


def dataset_record(row: DatasetRow, **extra) -> dict:
    out = {k: row.data[k] for k in DATASET_FIELDS if k in row.data}
    out["category"] = row.category.value
    out.update(extra)
    return out


def run_stratify(rows: list[DatasetRow], cfg: StratifyConfig) -> tuple[list[dict], dict]:
    outcome = enforce_ratios(rows, cfg)
    return [dataset_record(r) for r in outcome.selected], outcome.summary()


def run_split(rows: list[DatasetRow], ratios, seed: int) -> tuple[list[dict], dict]:
    outcome = country_disjoint_split(rows, ratios, seed)
    by_id = {r.region_id: r for r in rows}
    out = [dataset_record(by_id[a.region_id], split=a.split.value) for a in outcome.assignments]
    return out, outcome.summary()


def run_stats(rows: list[DatasetRow]) -> dict:
    return composition_stats(rows)
