"""Fisher-ratio scoring of detection maps and best-date selection."""

from __future__ import annotations

import datetime as dt
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .candidate_filter import CandidatePool, cloud_fraction
from .errors import BackgroundError, SelectionError, SignatureError, RasterError
from .ingest import ManifestRecord, load_record_scene
from .matched_filter import DEFAULT_EPSILON, background_stats, detect
from .raster import AnnualMask, DetectionMap, Method, Scene, class_masks, mangrove_fraction
from .signature import ReferenceSet, SignatureConfig, reference_pixels, target_spectrum
from .spectral_index import BandRoles, mvi_map

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    SCORED = "Scored"
    INSUFFICIENT_BACKGROUND = "InvalidInsufficientBackground"
    SIGNATURE_UNOBSERVABLE = "InvalidSignatureUnobservable"
    NEGATIVE_PATH = "NegativePath"


class Rule(str, enum.Enum):
    ARGMAX_J = "ArgmaxJ"
    CLOUD_MIN = "CloudMin"


@dataclass(frozen=True)
class ClassStats:
    mu_m: float
    mu_b: float
    var_m: float
    var_b: float
    n_m: int
    n_b: int
    # mu_m - mu_b formed before the means are rounded; None means take it from them
    gap: float | None = None

    def to_json(self) -> dict:
        return {
            "mu_m": self.mu_m, "mu_b": self.mu_b,
            "var_m": self.var_m, "var_b": self.var_b,
            "n_m": self.n_m, "n_b": self.n_b,
        }


def _values(grid: np.ndarray, where) -> np.ndarray:
    where = np.asarray(where)
    if where.dtype == bool:
        vals = grid[where]
    else:
        where = where.reshape(-1, 2)
        vals = grid[where[:, 0], where[:, 1]]
    return vals[np.isfinite(vals)]


def class_stats(dmap: DetectionMap | np.ndarray, mangrove, background) -> ClassStats:
    """Population mean/variance of the map over each pixel set.

    ``mangrove`` / ``background`` are either boolean grids or ``(n, 2)``
    coordinate arrays.  Undefined (non-finite) responses are skipped.
    """
    grid = dmap.grid if isinstance(dmap, DetectionMap) else np.asarray(dmap, dtype=np.float64)
    m = _values(grid, mangrove)
    b = _values(grid, background)
    if m.size == 0 or b.size == 0:
        raise SignatureError("empty class after excluding undefined responses")
    # moments about a shared pivot, so a large common offset does not swamp the gap
    pivot = float(b.mean())
    dm, db = m - pivot, b - pivot
    mm, mb = float(dm.mean()), float(db.mean())
    return ClassStats(
        pivot + mm, pivot + mb, float(dm.var()), float(db.var()), int(m.size), int(b.size), gap=mm - mb
    )


def fdr(stats: ClassStats) -> float:
    gap = (stats.mu_m - stats.mu_b if stats.gap is None else stats.gap) ** 2
    spread = stats.var_m + stats.var_b
    if spread == 0.0:
        return 0.0 if gap == 0.0 else math.inf
    return gap / spread


@dataclass
class CandidateScore:
    region_id: str
    sensing_date: dt.date
    method: Method
    status: Status
    stats: ClassStats | None = None
    j_value: float | None = None
    cloud_fraction: float | None = None
    detail: str | None = None

    def to_json(self, chosen: bool = False) -> dict:
        j = self.j_value
        if j is not None and math.isinf(j):
            j = "inf"
        return {
            "sensing_date": self.sensing_date.isoformat(),
            "status": self.status.value,
            "j_value": j,
            "stats": None if self.stats is None else self.stats.to_json(),
            "cloud_fraction": self.cloud_fraction,
            "detail": self.detail,
            "chosen": chosen,
        }


@dataclass
class SelectionResult:
    region_id: str
    chosen_date: dt.date
    method: Method
    selection_rule: Rule
    all_scores: list[CandidateScore]
    reference: ReferenceSet | None = None
    chosen_record: ManifestRecord | None = None
    mask_fraction: float | None = None
    country_iso3: str | None = None
    detection: DetectionMap | None = field(default=None, repr=False)

    @property
    def chosen_score(self) -> CandidateScore:
        return next(s for s in self.all_scores if s.sensing_date == self.chosen_date)

    def to_json(self) -> dict:
        from .stratify import categorize

        rec = self.chosen_record
        out = {
            "region_id": self.region_id,
            "country_iso3": self.country_iso3,
            "method": self.method.value,
            "selection_rule": self.selection_rule.value,
            "chosen_date": self.chosen_date.isoformat(),
            "candidates": [s.to_json(s.sensing_date == self.chosen_date) for s in self.all_scores],
            "reference": None if self.reference is None else self.reference.to_json(),
        }
        if self.mask_fraction is not None:
            out["mangrove_fraction"] = self.mask_fraction
            out["category"] = categorize(self.mask_fraction).value
        if rec is not None:
            out["image_path"] = rec.image_path
            out["mask_path"] = rec.mask_path
            out["validity_path"] = rec.validity_path
        return out


def _sort_key(score: CandidateScore):
    return (-score.j_value, score.sensing_date)


def pick_argmax(scores: Iterable[CandidateScore]) -> CandidateScore | None:
    """Highest J among scored candidates; ties go to the earliest date."""
    scored = [s for s in scores if s.status is Status.SCORED]
    return min(scored, key=_sort_key) if scored else None


def pick_cloud_min(scores: Iterable[CandidateScore]) -> CandidateScore:
    return min(scores, key=lambda s: (s.cloud_fraction, s.sensing_date))


def score_candidate(
    scene: Scene,
    mask: AnnualMask,
    refs: ReferenceSet | None,
    method: Method,
    *,
    epsilon: float = DEFAULT_EPSILON,
    roles: BandRoles = BandRoles(),
    exclusion_radius: int = 0,
) -> tuple[CandidateScore, DetectionMap | None]:
    """Detection map, class statistics and Fisher ratio for one candidate."""
    if scene.shape != mask.shape:
        raise RasterError(f"scene {scene.shape} and mask {mask.shape} sizes differ")
    base = dict(region_id=scene.region_id, sensing_date=scene.sensing_date, method=method)
    try:
        if method is Method.MATCHED_FILTER:
            s = target_spectrum(scene, refs)
            stats = background_stats(scene, mask, epsilon=epsilon, exclusion_radius=exclusion_radius)
            dmap = detect(scene, stats, s)
        else:
            dmap = mvi_map(scene, roles)
        m, b = class_masks(mask, scene.valid)
        cs = class_stats(dmap, m, b)
    except BackgroundError as exc:
        return CandidateScore(status=Status.INSUFFICIENT_BACKGROUND, detail=str(exc), **base), None
    except SignatureError as exc:
        return CandidateScore(status=Status.SIGNATURE_UNOBSERVABLE, detail=str(exc), **base), None
    return CandidateScore(status=Status.SCORED, stats=cs, j_value=fdr(cs), **base), dmap


def select_best(
    pool: CandidatePool,
    mask: AnnualMask,
    method: Method | str = Method.MATCHED_FILTER,
    *,
    load_scene: Callable[[ManifestRecord], Scene] = load_record_scene,
    signature: SignatureConfig = SignatureConfig(),
    epsilon: float = DEFAULT_EPSILON,
    roles: BandRoles = BandRoles(),
    exclusion_radius: int = 0,
    on_detection: Callable[[ManifestRecord, DetectionMap], None] | None = None,
) -> SelectionResult:
    """Choose one acquisition for a region.

    Positive tiles take the candidate with the largest Fisher ratio; if none
    could be scored, or the tile has no mangrove at all, the least cloudy
    candidate wins.  Ties always resolve to the earliest date.
    """
    method = Method(method)
    if pool.empty:
        raise SelectionError(f"region {pool.region_id}: no candidates")
    region = pool.region_id
    positive = mask.has_target
    refs = reference_pixels(mask, signature, region) if positive else None

    scores: list[CandidateScore] = []
    by_date: dict[dt.date, ManifestRecord] = {}
    best: tuple | None = None  # (score, dmap)
    for rec in pool.candidates:
        by_date[rec.sensing_date] = rec
        scene = None
        if positive:
            scene = load_scene(rec)
            score, dmap = score_candidate(
                scene, mask, refs, method,
                epsilon=epsilon, roles=roles, exclusion_radius=exclusion_radius,
            )
            score.region_id, score.sensing_date = region, rec.sensing_date
            if dmap is not None and on_detection is not None:
                on_detection(rec, dmap)
            if score.status is Status.SCORED and (best is None or _sort_key(score) < _sort_key(best[0])):
                best = (score, dmap)
        else:
            score = CandidateScore(region, rec.sensing_date, method, Status.NEGATIVE_PATH)
        cf = rec.cloud_fraction
        if cf is None:
            scene = scene if scene is not None else load_scene(rec)
            cf = cloud_fraction(scene)
        score.cloud_fraction = cf
        scores.append(score)

    if best is not None:
        chosen, rule, dmap = best[0], Rule.ARGMAX_J, best[1]
    else:
        if positive:
            log.warning("region %s: no candidate could be scored, falling back to lowest cloud", region)
        chosen, rule, dmap = pick_cloud_min(scores), Rule.CLOUD_MIN, None

    first = pool.candidates[0]
    return SelectionResult(
        region_id=region,
        chosen_date=chosen.sensing_date,
        method=method,
        selection_rule=rule,
        all_scores=scores,
        reference=refs,
        chosen_record=by_date[chosen.sensing_date],
        mask_fraction=mangrove_fraction(mask),
        country_iso3=first.country_iso3,
        detection=dmap,
    )


NEGATIVE_RULE_NOTE = (
    "tiles without mangrove pixels cannot be ranked by class separability; "
    "they take the candidate with the lowest cloud fraction (CloudMin)"
)


def rank_report(results: Iterable[SelectionResult], provenance: dict | None = None, failures: list | None = None) -> list[dict]:
    """Report lines: a provenance header, one object per region (sorted), and a failures trailer."""
    header = dict(provenance or {})
    header.setdefault("negative_selection_rule", NEGATIVE_RULE_NOTE)
    lines: list[dict] = [{"_provenance": header}]
    lines.extend(r.to_json() for r in sorted(results, key=lambda r: r.region_id))
    lines.append({"_failures": sorted(failures or [], key=lambda f: f["region_id"])})
    return lines
